#pragma once

#include <string>

#include "mfg/model.hpp"

namespace mfg {

/// Reads a model document: `key: value` lines with `#` comments, matrices as
/// bracketed row-major literals ([[a, b], [c, d]]), vectors as [a, b].
/// n, n1, n2 and K are required; every other key defaults to the value in
/// ModelParams::zeros. Unknown keys are Parse errors. The result is not
/// validated.
ModelParams parse_model(const std::string& text, const std::string& source = "<model>");

/// Throws Io naming the path when the file cannot be read.
ModelParams read_model_file(const std::string& path);

/// Every key in canonical order with 17 significant digits, so
/// parse_model(format_model(p)) reproduces p exactly.
std::string format_model(const ModelParams& p);

void write_model_file(const std::string& path, const ModelParams& p);

}  // namespace mfg
