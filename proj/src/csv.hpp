#pragma once

#include <string>
#include <vector>

namespace hepar::csv {

/// Quotes a field when it holds a comma, quote or line break.
std::string field(const std::string& s);

/// Splits one RFC 4180 record (no embedded line breaks); Validation error
/// on malformed quoting.
std::vector<std::string> split(const std::string& line, std::size_t line_no, const std::string& what);

}  // namespace hepar::csv
