#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace ppm::csv {

using Row = std::vector<std::string>;

/// Reads RFC 4180 style CSV: comma separated, `"` quoting with `""` escapes,
/// LF or CRLF line ends. Quoted fields may span lines.
std::vector<Row> read(std::istream& in);
std::vector<Row> read_file(const std::string& path);

/// Quotes a field only when it contains a comma, quote or line break.
std::string escape(std::string_view field);
void write_row(std::ostream& out, const Row& row);

}  // namespace ppm::csv
