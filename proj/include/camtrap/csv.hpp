#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace camtrap::csv {

using Row = std::vector<std::string>;

/// Quotes a field per RFC 4180 when it contains a comma, quote, CR or LF.
std::string escape(std::string_view field);

/// Joins escaped fields with commas and terminates with LF.
std::string format_row(const Row& fields);

/// Parses an RFC 4180 document. Accepts LF or CRLF record terminators and a UTF-8
/// byte-order mark. A trailing newline does not produce an empty record.
/// Throws ParseError (with line number) on an unterminated quoted field.
std::vector<Row> parse(std::string_view text);

}  // namespace camtrap::csv
