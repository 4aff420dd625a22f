#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace qgfbsde {

/// Full-string decimal parse; throws ConfigError on trailing garbage or empty input.
double parse_double(std::string_view s);
long long parse_integer(std::string_view s);

std::vector<std::string_view> split_row(std::string_view line, char sep = ',');

/// Contents of a paths CSV; blank fields become nullopt.
struct PathsTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::optional<double>>> rows;
};

PathsTable read_paths_csv(std::istream& is);

} // namespace qgfbsde
