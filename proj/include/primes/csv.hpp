#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace primes::csv {

using Row = std::vector<std::string>;

struct Table {
    Row header;
    /// Data rows in file order; each carries its 1-based physical record number.
    std::vector<Row> rows;
    std::vector<std::size_t> record_numbers;
};

/// RFC 4180 reader: quoted cells may contain commas, quotes ("") and newlines.
/// Throws ValidationError on an unterminated quote or a missing header.
Table parse(std::string_view text);

/// Quotes a cell only when needed (comma, quote, CR or LF, or leading/trailing space).
std::string escape(std::string_view cell);

std::string format_row(const Row& row);

/// Header plus rows, LF line endings, trailing newline.
std::string format(const Row& header, const std::vector<Row>& rows);

} // namespace primes::csv
