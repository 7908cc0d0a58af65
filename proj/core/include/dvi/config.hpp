#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dvi/boundary.hpp"
#include "dvi/dataset.hpp"
#include "dvi/json_io.hpp"
#include "dvi/landscape.hpp"
#include "dvi/subject.hpp"
#include "dvi/visualizer.hpp"

namespace dvi {

inline constexpr int kConfigVersion = 1;

struct DatasetConfig {
  std::string kind = "blobs";  ///< "blobs" or "idx"
  BlobsSpec blobs;
  std::filesystem::path train_images;
  std::filesystem::path train_labels;
  std::filesystem::path test_images;
  std::filesystem::path test_labels;
  std::size_t train_limit = 1000;
  std::size_t test_limit = 200;
  int classes = 10;
};

struct SubjectConfig {
  std::string source = "train";  ///< "train" or "dump"
  std::filesystem::path manifest;
  SubjectTrainingParams training;
};

struct ComplexConfig {
  std::size_t k = 15;
  std::size_t negative_rate = 5;
  std::string metric = "euclidean";
};

struct EvaluationConfig {
  std::vector<std::size_t> ks = {10, 15, 20};
  bool pca_baseline = true;
};

struct RenderConfig {
  std::size_t width = 300;
  std::size_t height = 300;
  Shading shading = Shading::softmax;
  /// Empty selects the evenly spaced default palette.
  std::vector<Rgb> palette;
};

struct PipelineConfig {
  std::uint64_t seed = 42;
  std::filesystem::path output_dir = "runs/default";
  DatasetConfig dataset;
  SubjectConfig subject;
  BoundaryParams boundary;
  ComplexConfig complex;
  VisualizerParams visualizer;
  /// First entry is the primary variant whose epochs become bundles.
  std::vector<Variant> variants = {Variant::dvi};
  EvaluationConfig evaluation;
  RenderConfig render;
};

/// Parses a versioned config document. Missing keys take their defaults;
/// unknown keys and out-of-range values raise ConfigError naming the key.
/// Relative paths resolve against `base_dir`.
PipelineConfig config_from_json(const Json& json, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);
/// Full document with every key spelled out (the run directory snapshot).
Json config_to_json(const PipelineConfig& config);

}  // namespace dvi
