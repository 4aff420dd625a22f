#pragma once

#include "qgfbsde/mc.hpp"
#include "qgfbsde/model.hpp"
#include "qgfbsde/pde.hpp"

#include <optional>
#include <string>
#include <string_view>

namespace qgfbsde {

/// Grid settings from a `[pde]` section; unset fields fall back to default_grid.
struct GridOverrides {
    std::optional<double> x_min, x_max;
    std::optional<int> nx, nt;

    Grid resolve(const Model& m) const;
};

/// A parsed model file:
///
///   [forward]   b = ..., sigma = e1, e2, ..., x0 = ...
///   [backward]  f = ..., g = ...
///   [time]      T = ...
///   [pde]       x_min, x_max, nx, nt
///   [mc]        paths, steps, seed, bins, z_clip
///
/// `#` starts a comment. [forward] and [backward] are required, the rest is optional.
struct ModelConfig {
    ModelSpec spec;
    GridOverrides grid;
    McConfig mc;
};

/// Throws ConfigError (with the line number) or ParseError from expression values.
ModelConfig parse_model_config(std::string_view text);

/// Reads and parses a file; a missing file is a ConfigError.
ModelConfig load_model_config(const std::string& path);

/// Canonical text of a config; parse_model_config(format_model_config(c)) reproduces c.
std::string format_model_config(const ModelConfig& c);

} // namespace qgfbsde
