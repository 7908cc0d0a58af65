#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "dvi/mlp.hpp"

namespace dvi {

using Json = nlohmann::json;

/// {"layer_sizes": [...], "activations": [...]}
Json mlp_shape_to_json(const Mlp& mlp);
/// Zero-initialized network of the described shape.
Mlp mlp_from_shape_json(const Json& shape);

Json read_json_file(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline; deterministic for identical input.
void write_json_file(const std::filesystem::path& path, const Json& json);

/// Fetches a required member, raising FormatError naming `where` when absent.
const Json& require_member(const Json& object, const std::string& key, const std::string& where);

}  // namespace dvi
