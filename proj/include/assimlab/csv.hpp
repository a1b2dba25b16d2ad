#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace assimlab::csv {

using Row = std::vector<std::string>;

struct Table {
    Row header;
    std::vector<Row> rows;

    // Throws ParseError when the column is absent.
    std::size_t column(const std::string& name) const;
    bool has_column(const std::string& name) const;
    const std::string& at(std::size_t row, const std::string& name) const;
};

// RFC 4180: quoted fields may hold commas, quotes ("") and newlines; CRLF
// and LF line ends are both accepted. The first record is the header.
Table parse(const std::string& text, const std::string& source = "<csv>");
Table read(const std::filesystem::path& path);

std::string format_row(const Row& row);
std::string format(const Table& table);

// Fixed formatting for numeric cells so reruns produce identical files.
std::string number(double v);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace assimlab::csv
