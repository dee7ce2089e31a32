#pragma once

// Parameter-file handling and formatting shared by the CLI and tests:
// strict JSON round-trip for ModelParams, key=value overrides, and
// shortest-round-trip decimal formatting for numeric output.

#include <stdexcept>
#include <string>
#include <vector>

#include "fqrt/model.hpp"

namespace fqrt {

inline constexpr const char* kToolVersion = "0.1.0";

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shortest decimal string that parses back to exactly the same double.
[[nodiscard]] std::string format_shortest(double v);

// Strict parse: every parameter key must be present, j and k must be
// integers, unknown keys are rejected.
[[nodiscard]] ModelParams params_from_json_text(const std::string& text);
[[nodiscard]] std::string params_json_text(const ModelParams& p);

[[nodiscard]] ModelParams read_params_file(const std::string& path);

// Apply "key=value" assignments (the --set flag) on top of loaded params.
void apply_overrides(ModelParams& p, const std::vector<std::string>& assignments);

[[nodiscard]] std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace fqrt
