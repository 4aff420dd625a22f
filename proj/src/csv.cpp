#include "qgfbsde/csv.hpp"

#include "qgfbsde/error.hpp"

#include <charconv>
#include <istream>

namespace qgfbsde {

double parse_double(std::string_view s) {
    double v = 0.0;
    const char* end = s.data() + s.size();
    const auto res = std::from_chars(s.data(), end, v);
    if (s.empty() || res.ec != std::errc() || res.ptr != end)
        throw ConfigError("not a number: '" + std::string(s) + "'");
    return v;
}

long long parse_integer(std::string_view s) {
    long long v = 0;
    const char* end = s.data() + s.size();
    const auto res = std::from_chars(s.data(), end, v);
    if (s.empty() || res.ec != std::errc() || res.ptr != end)
        throw ConfigError("not an integer: '" + std::string(s) + "'");
    return v;
}

std::vector<std::string_view> split_row(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

PathsTable read_paths_csv(std::istream& is) {
    PathsTable t;
    std::string line;
    if (!std::getline(is, line)) throw ConfigError("paths CSV: empty input");
    for (auto f : split_row(line)) t.header.emplace_back(f);
    if (t.header.size() < 6 || t.header[0] != "path") throw ConfigError("paths CSV: unexpected header '" + line + "'");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto fields = split_row(line);
        if (fields.size() != t.header.size()) throw ConfigError("paths CSV: row width mismatch '" + line + "'");
        auto& row = t.rows.emplace_back();
        for (auto f : fields) row.push_back(f.empty() ? std::nullopt : std::optional<double>(parse_double(f)));
    }
    return t;
}

} // namespace qgfbsde
