#pragma once

#include <istream>
#include <string>
#include <vector>

namespace tcontrol::csv {

/// Splits one CSV record. Handles double-quoted fields with "" escapes and
/// strips a trailing '\r'. Embedded newlines inside quotes are not supported.
std::vector<std::string> split_line(const std::string& line);

/// Reads the next non-empty line; returns false at end of stream.
bool next_line(std::istream& in, std::string& line);

/// Quotes a field if it contains a comma, quote or leading/trailing space.
std::string escape(const std::string& field);

}  // namespace tcontrol::csv
