#include "assimlab/csv.hpp"

#include "assimlab/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>

namespace assimlab::csv {

std::size_t Table::column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ParseError("CSV lacks column '" + name + "'");
    return std::size_t(it - header.begin());
}

bool Table::has_column(const std::string& name) const {
    return std::find(header.begin(), header.end(), name) != header.end();
}

const std::string& Table::at(std::size_t row, const std::string& name) const {
    return rows.at(row).at(column(name));
}

Table parse(const std::string& text, const std::string& source) {
    std::vector<Row> records;
    Row row;
    std::string field;
    bool quoted = false, field_started = false;
    std::size_t line = 1;
    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        if (!(row.size() == 1 && row[0].empty())) records.push_back(std::move(row));
        row.clear();
    };
    std::size_t i = 0;
    if (text.rfind("\xEF\xBB\xBF", 0) == 0) i = 3;
    for (; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
        } else if (c == '"') {
            if (field_started) throw ParseError(source + ":" + std::to_string(line) + ": stray quote inside field");
            quoted = field_started = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\r') {
            if (i + 1 < text.size() && text[i + 1] == '\n') continue;
            end_record();
            ++line;
        } else if (c == '\n') {
            end_record();
            ++line;
        } else {
            field.push_back(c);
            field_started = true;
        }
    }
    if (quoted) throw ParseError(source + ": unterminated quoted field");
    if (!field.empty() || !row.empty()) end_record();

    Table t;
    if (records.empty()) throw ParseError(source + ": empty CSV");
    t.header = std::move(records.front());
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != t.header.size()) {
            throw ParseError(source + ": record " + std::to_string(r + 1) + " has " + std::to_string(records[r].size()) +
                             " fields, header has " + std::to_string(t.header.size()));
        }
        t.rows.push_back(std::move(records[r]));
    }
    return t;
}

Table read(const std::filesystem::path& path) { return parse(read_text(path), path.string()); }

std::string format_row(const Row& row) {
    std::string out;
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out.push_back(',');
        const auto& f = row[i];
        if (f.find_first_of(",\"\r\n") == std::string::npos) {
            out += f;
        } else {
            out.push_back('"');
            for (char c : f) {
                if (c == '"') out.push_back('"');
                out.push_back(c);
            }
            out.push_back('"');
        }
    }
    out.push_back('\n');
    return out;
}

std::string format(const Table& table) {
    std::string out = format_row(table.header);
    for (const auto& r : table.rows) out += format_row(r);
    return out;
}

std::string number(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v == 0.0 ? 0.0 : v);
    return buf;
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write " + path.string());
    out << text;
    if (!out) throw LoadError("failed writing " + path.string());
}

}  // namespace assimlab::csv
