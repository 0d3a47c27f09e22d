#include "tcontrol/common.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>

namespace tcontrol {

std::string format_exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& text) {
  if (text.empty()) throw DataError("empty numeric field");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size() || errno == ERANGE) {
    throw DataError("not a number: '" + text + "'");
  }
  return v;
}

long long parse_integer(const std::string& text) {
  if (text.empty()) throw DataError("empty integer field");
  errno = 0;
  char* end = nullptr;
  const long long v = std::strtoll(text.c_str(), &end, 10);
  if (end != text.c_str() + text.size() || errno == ERANGE) {
    throw DataError("not an integer: '" + text + "'");
  }
  return v;
}

}  // namespace tcontrol
