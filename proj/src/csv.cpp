#include "primes/csv.hpp"

#include "primes/error.hpp"

namespace primes::csv {

namespace {

std::vector<Row> parse_records(std::string_view text) {
    std::vector<Row> records;
    Row current;
    std::string cell;
    bool in_quotes = false;
    bool cell_was_quoted = false;
    bool record_has_content = false;

    auto end_cell = [&] {
        current.push_back(std::move(cell));
        cell.clear();
        cell_was_quoted = false;
    };
    auto end_record = [&] {
        end_cell();
        records.push_back(std::move(current));
        current.clear();
        record_has_content = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    cell.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                cell.push_back(c);
            }
            continue;
        }
        switch (c) {
        case '"':
            if (cell.empty() && !cell_was_quoted) {
                in_quotes = true;
                cell_was_quoted = true;
            } else {
                cell.push_back(c);
            }
            record_has_content = true;
            break;
        case ',':
            end_cell();
            record_has_content = true;
            break;
        case '\r':
            if (i + 1 < text.size() && text[i + 1] == '\n') {
                ++i;
            }
            [[fallthrough]];
        case '\n':
            if (record_has_content || !cell.empty() || !current.empty()) {
                end_record();
            }
            break;
        default:
            cell.push_back(c);
            record_has_content = true;
        }
    }
    if (in_quotes) {
        throw ValidationError("csv: unterminated quoted cell");
    }
    if (record_has_content || !cell.empty() || !current.empty()) {
        end_record();
    }
    return records;
}

} // namespace

Table parse(std::string_view text) {
    if (text.substr(0, 3) == "\xEF\xBB\xBF") {
        text.remove_prefix(3);
    }
    auto records = parse_records(text);
    if (records.empty()) {
        throw ValidationError("csv: missing header row");
    }
    Table table;
    table.header = std::move(records.front());
    for (std::size_t i = 1; i < records.size(); ++i) {
        table.rows.push_back(std::move(records[i]));
        table.record_numbers.push_back(i + 1);
    }
    return table;
}

std::string escape(std::string_view cell) {
    const bool needs_quotes = cell.find_first_of(",\"\r\n") != std::string_view::npos ||
                              (!cell.empty() && (cell.front() == ' ' || cell.back() == ' '));
    if (!needs_quotes) {
        return std::string(cell);
    }
    std::string out = "\"";
    for (const char c : cell) {
        if (c == '"') {
            out.push_back('"');
        }
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string format_row(const Row& row) {
    std::string out;
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i != 0) {
            out.push_back(',');
        }
        out += escape(row[i]);
    }
    if (row.size() == 1 && row[0].empty()) {
        out = "\"\"";
    }
    return out;
}

std::string format(const Row& header, const std::vector<Row>& rows) {
    std::string out = format_row(header);
    out.push_back('\n');
    for (const auto& row : rows) {
        out += format_row(row);
        out.push_back('\n');
    }
    return out;
}

} // namespace primes::csv
