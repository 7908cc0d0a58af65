#include "dvi/json_io.hpp"

#include "dvi/binary_io.hpp"

namespace dvi {

Json mlp_shape_to_json(const Mlp& mlp) {
  Json activations = Json::array();
  for (Activation a : mlp.activations) activations.push_back(to_string(a));
  return Json{{"layer_sizes", mlp.layer_sizes()}, {"activations", activations}};
}

Mlp mlp_from_shape_json(const Json& shape) {
  try {
    const auto sizes = require_member(shape, "layer_sizes", "network shape")
                           .get<std::vector<std::size_t>>();
    const auto& acts = require_member(shape, "activations", "network shape");
    if (sizes.size() < 2 || acts.size() + 1 != sizes.size()) {
      throw FormatError("network shape: activations do not match layer sizes");
    }
    Mlp mlp = zero_mlp<float>(sizes, Activation::identity, Activation::identity);
    for (std::size_t l = 0; l < acts.size(); ++l) {
      mlp.activations[l] = activation_from_string(acts[l].get<std::string>());
    }
    return mlp;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("network shape: ") + e.what());
  }
}

Json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw FormatError("malformed JSON in '" + path.string() + "': " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const Json& json) {
  write_text_file(path, json.dump(2) + "\n");
}

const Json& require_member(const Json& object, const std::string& key, const std::string& where) {
  if (!object.is_object() || !object.contains(key)) {
    throw FormatError(where + ": missing '" + key + "'");
  }
  return object.at(key);
}

}  // namespace dvi
