#pragma once

#include "dvi/config.hpp"
#include "dvi/json_io.hpp"

namespace dvi::testing {

/// A pipeline small enough for unit tests: 150 blob points, 3 subject epochs,
/// 2 optimizer epochs per visualizer.
inline Json tiny_config_json() {
  return Json{
      {"version", 1},
      {"seed", 5},
      {"dataset", {{"kind", "blobs"}, {"train_count", 150}, {"test_count", 40}}},
      {"subject", {{"epochs", 3}, {"hidden", {16}}, {"rep_dim", 8}}},
      {"complex", {{"k", 5}}},
      {"visualizer", {{"epochs", 2}, {"batch_positives", 128}, {"variants", {"DVI", "UMAP-T"}}}},
      {"evaluation", {{"ks", {5}}}},
      {"render", {{"width", 60}, {"height", 50}}},
  };
}

inline PipelineConfig tiny_config() { return config_from_json(tiny_config_json()); }

}  // namespace dvi::testing
