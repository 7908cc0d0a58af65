#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dvi/boundary.hpp"
#include "dvi/complex.hpp"
#include "dvi/config.hpp"
#include "dvi/dataset.hpp"
#include "dvi/error.hpp"
#include "dvi/metrics.hpp"
#include "dvi/subject.hpp"
#include "dvi/visualizer.hpp"

namespace dvi {

/// A pipeline stage failed. Carries the stage name and the original error kind.
class StageError : public Error {
 public:
  StageError(std::string stage, std::string kind, const std::string& message)
      : Error(stage + ": " + message), stage_(std::move(stage)), kind_(std::move(kind)) {}
  const std::string& stage() const noexcept { return stage_; }
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string stage_;
  std::string kind_;
};

/// File layout of a run directory.
struct RunLayout {
  std::filesystem::path root;

  std::filesystem::path config() const { return root / "config.json"; }
  std::filesystem::path log() const { return root / "run.log"; }
  std::filesystem::path stages() const { return root / "stages"; }
  std::filesystem::path marker(const std::string& stage) const { return stages() / (stage + ".done"); }
  std::filesystem::path subject_dir() const { return root / "subject"; }
  std::filesystem::path boundary_stem(int epoch) const;
  std::filesystem::path complex_file(int epoch) const;
  std::filesystem::path model_stem(Variant v, int epoch) const;
  std::filesystem::path bundles_dir() const { return root / "bundles"; }
  std::filesystem::path bundle_dir(int epoch) const;
  std::filesystem::path render_file(int epoch) const;
  std::filesystem::path metrics_json() const { return root / "metrics.json"; }
  std::filesystem::path metrics_txt() const { return root / "metrics.txt"; }
};

/// "epoch_003"
std::string epoch_tag(int epoch);

/// Bundle epochs present under `run_dir`/bundles, ascending.
std::vector<int> list_bundle_epochs(const std::filesystem::path& run_dir);

/// Stage-by-stage pipeline over one run directory. Each stage writes its
/// artifacts, then a completion marker; completed stages are skipped unless
/// `force` is set. Running a stage clears the markers downstream of it.
class Workbench {
 public:
  /// Opens (or creates) the run directory. An existing config snapshot that
  /// differs from `config` is a ConfigError unless `force` is set.
  Workbench(PipelineConfig config, std::filesystem::path run_dir, bool force = false);

  const PipelineConfig& config() const noexcept { return config_; }
  const RunLayout& layout() const noexcept { return layout_; }

  void train_subject();
  void synthesize();
  void build_complexes();
  void fit_variant(Variant v);
  void fit();
  void evaluate();
  void export_bundles();
  void render();
  void run();

  bool done(const std::string& stage) const;

  /// Artifacts, loaded on first use.
  const Dataset& train_data();
  const Dataset& test_data();
  const std::vector<SubjectCheckpoint>& checkpoints();
  const BoundarySet& boundary(int epoch);
  const Matrix& train_reps(int epoch);
  const Matrix& test_reps(int epoch);
  VisualizationModel model(Variant v, int epoch) const;
  MetricsReport metrics_report() const;

  void log(const std::string& stage, const std::string& message);

 private:
  template <typename F>
  void stage(const std::string& name, F&& body);
  void load_data();
  void invalidate_after(const std::string& stage);
  MethodMetrics measure_variant(Variant v);
  MethodMetrics measure_pca();
  void refresh_bundle_metrics(const MetricsReport& report);

  PipelineConfig config_;
  RunLayout layout_;
  bool force_;
  /// Stages already run or skipped by this instance; --force applies once each.
  std::set<std::string> ran_;
  std::ofstream log_;
  std::optional<Dataset> train_;
  std::optional<Dataset> test_;
  std::optional<std::vector<SubjectCheckpoint>> checkpoints_;
  std::map<int, BoundarySet> boundary_;
  std::map<int, Matrix> train_reps_;
  std::map<int, Matrix> test_reps_;
};

/// Ordered stage names, upstream first.
const std::vector<std::string>& stage_names();

}  // namespace dvi
