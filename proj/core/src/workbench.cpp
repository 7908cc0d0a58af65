#include "dvi/workbench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

#include "dvi/binary_io.hpp"
#include "dvi/json_io.hpp"
#include "dvi/landscape.hpp"

namespace dvi {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVariantStages[] = {"visualizer.DVI", "visualizer.DVI-T", "visualizer.UMAP-T"};

std::string variant_stage(Variant v) { return "visualizer." + to_string(v); }

std::vector<std::string> downstream_of(const std::string& stage) {
  std::vector<std::string> out;
  const auto add_visualizers = [&] {
    for (const char* s : kVariantStages) out.emplace_back(s);
  };
  if (stage == "subject") {
    out = {"boundary", "complex"};
    add_visualizers();
    out.insert(out.end(), {"metrics", "bundles", "renders"});
  } else if (stage == "boundary") {
    out = {"complex"};
    add_visualizers();
    out.insert(out.end(), {"metrics", "bundles", "renders"});
  } else if (stage == "complex") {
    add_visualizers();
    out.insert(out.end(), {"metrics", "bundles", "renders"});
  } else if (stage.starts_with("visualizer.")) {
    out = {"metrics", "bundles", "renders"};
  } else if (stage == "bundles") {
    out = {"renders"};
  }
  return out;
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
  if (dynamic_cast<const FormatError*>(&e)) return "FormatError";
  if (dynamic_cast<const SynthesisError*>(&e)) return "SynthesisError";
  if (dynamic_cast<const TrainingError*>(&e)) return "TrainingError";
  if (dynamic_cast<const ToleranceError*>(&e)) return "ToleranceError";
  if (dynamic_cast<const RenderError*>(&e)) return "RenderError";
  if (dynamic_cast<const OptimizationError*>(&e)) return "OptimizationError";
  if (dynamic_cast<const DegenerateInputError*>(&e)) return "DegenerateInputError";
  if (dynamic_cast<const DimensionError*>(&e)) return "DimensionError";
  if (dynamic_cast<const ContractError*>(&e)) return "ContractError";
  if (dynamic_cast<const NotFoundError*>(&e)) return "NotFoundError";
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return "IOError";
  return "Error";
}

Json without_output_dir(Json j) {
  j.erase("output_dir");
  return j;
}

double safe_temporal_pv(const Matrix& prev_reps, const Matrix& reps, const Matrix& prev_low, const Matrix& low,
                        std::size_t k) {
  try {
    return temporal_pv(eval_sem(prev_reps, reps, k), displacement(prev_low, low));
  } catch (const DegenerateInputError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace

std::string epoch_tag(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03d", epoch);
  return buf;
}

fs::path RunLayout::boundary_stem(int epoch) const { return root / "boundary" / epoch_tag(epoch); }
fs::path RunLayout::complex_file(int epoch) const { return root / "complex" / (epoch_tag(epoch) + ".jsonl"); }
fs::path RunLayout::model_stem(Variant v, int epoch) const {
  return root / "visualizer" / to_string(v) / epoch_tag(epoch);
}
fs::path RunLayout::bundle_dir(int epoch) const { return bundles_dir() / epoch_tag(epoch); }
fs::path RunLayout::render_file(int epoch) const { return root / "renders" / (epoch_tag(epoch) + ".png"); }

std::vector<int> list_bundle_epochs(const fs::path& run_dir) {
  std::vector<int> out;
  const fs::path dir = run_dir / "bundles";
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (!entry.is_directory() || !name.starts_with("epoch_") || name.size() <= 6) continue;
    const std::string digits = name.substr(6);
    if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) continue;
    if (!fs::exists(entry.path() / "bundle.json")) continue;
    out.push_back(std::stoi(digits));
  }
  std::sort(out.begin(), out.end());
  return out;
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"subject",        "boundary",         "complex",
                                                 "visualizer.DVI", "visualizer.DVI-T", "visualizer.UMAP-T",
                                                 "metrics",        "bundles",          "renders"};
  return names;
}

Workbench::Workbench(PipelineConfig config, fs::path run_dir, bool force)
    : config_(std::move(config)), layout_{std::move(run_dir)}, force_(force) {
  fs::create_directories(layout_.stages());
  const Json snapshot = config_to_json(config_);
  if (fs::exists(layout_.config())) {
    const Json existing = read_json_file(layout_.config());
    if (without_output_dir(existing) != without_output_dir(snapshot)) {
      if (!force_) {
        throw ConfigError("run directory '" + layout_.root.string() +
                          "' holds a different configuration; pass --force to overwrite it");
      }
      for (const auto& s : stage_names()) fs::remove(layout_.marker(s));
    }
  }
  write_json_file(layout_.config(), snapshot);
  log_.open(layout_.log(), std::ios::app);
}

void Workbench::log(const std::string& stage, const std::string& message) {
  if (log_) log_ << "[" << stage << "] " << message << "\n" << std::flush;
}

bool Workbench::done(const std::string& stage) const { return fs::exists(layout_.marker(stage)); }

void Workbench::invalidate_after(const std::string& stage) {
  for (const auto& s : downstream_of(stage)) fs::remove(layout_.marker(s));
}

template <typename F>
void Workbench::stage(const std::string& name, F&& body) {
  if (ran_.contains(name)) return;
  if (done(name) && !force_) {
    log(name, "skipped (complete)");
    ran_.insert(name);
    return;
  }
  fs::remove(layout_.marker(name));
  invalidate_after(name);
  log(name, "started");
  const auto start = std::chrono::steady_clock::now();
  try {
    body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    log(name, std::string("failed: ") + e.what());
    throw StageError(name, error_kind(e), e.what());
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_text_file(layout_.marker(name), name + "\n");
  ran_.insert(name);
  char buf[64];
  std::snprintf(buf, sizeof buf, "complete in %.2f s", seconds);
  log(name, buf);
}

void Workbench::load_data() {
  if (train_) return;
  const DatasetConfig& d = config_.dataset;
  if (d.kind == "blobs") {
    auto [train, test] = make_blobs(d.blobs);
    train_ = std::move(train);
    test_ = std::move(test);
  } else {
    train_ = load_idx_dataset(d.train_images, d.train_labels, d.train_limit, d.classes, Split::train, 0);
    test_ = load_idx_dataset(d.test_images, d.test_labels, d.test_limit, d.classes, Split::test,
                             static_cast<std::int64_t>(train_->size()));
  }
}

const Dataset& Workbench::train_data() {
  load_data();
  return *train_;
}

const Dataset& Workbench::test_data() {
  load_data();
  return *test_;
}

const std::vector<SubjectCheckpoint>& Workbench::checkpoints() {
  if (!checkpoints_) {
    train_subject();
    checkpoints_ = ingest_checkpoint_dump(layout_.subject_dir() / "manifest.json");
  }
  return *checkpoints_;
}

const BoundarySet& Workbench::boundary(int epoch) {
  auto it = boundary_.find(epoch);
  if (it == boundary_.end()) {
    synthesize();
    it = boundary_.emplace(epoch, load_boundary_set(layout_.boundary_stem(epoch))).first;
  }
  return it->second;
}

const Matrix& Workbench::train_reps(int epoch) {
  auto it = train_reps_.find(epoch);
  if (it == train_reps_.end()) {
    const auto& ckpts = checkpoints();
    it = train_reps_.emplace(epoch, features(ckpts.at(static_cast<std::size_t>(epoch - ckpts.front().epoch)),
                                             train_data().inputs))
             .first;
  }
  return it->second;
}

const Matrix& Workbench::test_reps(int epoch) {
  auto it = test_reps_.find(epoch);
  if (it == test_reps_.end()) {
    const auto& ckpts = checkpoints();
    it = test_reps_.emplace(epoch, features(ckpts.at(static_cast<std::size_t>(epoch - ckpts.front().epoch)),
                                            test_data().inputs))
             .first;
  }
  return it->second;
}

VisualizationModel Workbench::model(Variant v, int epoch) const {
  return load_visualization_model(layout_.model_stem(v, epoch));
}

MetricsReport Workbench::metrics_report() const {
  if (!done("metrics")) throw NotFoundError("metrics have not been computed for this run");
  return metrics_from_json(read_json_file(layout_.metrics_json()));
}

void Workbench::train_subject() {
  stage("subject", [&] {
    checkpoints_.reset();
    train_reps_.clear();
    test_reps_.clear();
    std::vector<SubjectCheckpoint> ckpts;
    if (config_.subject.source == "dump") {
      ckpts = ingest_checkpoint_dump(config_.subject.manifest);
      if (ckpts.front().input_dim() != train_data().dim()) {
        throw DimensionError("checkpoint input width " + std::to_string(ckpts.front().input_dim()) +
                             " differs from dataset width " + std::to_string(train_data().dim()));
      }
    } else {
      ckpts = dvi::train_subject(train_data(), config_.subject.training);
    }
    fs::create_directories(layout_.subject_dir());
    write_checkpoints(layout_.subject_dir(), ckpts);
    for (const auto& c : ckpts) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "epoch %d train accuracy %.4f", c.epoch, accuracy(c, train_data()));
      log("subject", buf);
    }
  });
}

void Workbench::synthesize() {
  const auto& ckpts = checkpoints();
  stage("boundary", [&] {
    boundary_.clear();
    fs::create_directories(layout_.root / "boundary");
    const std::size_t n = train_data().size();
    const auto target = static_cast<std::size_t>(std::ceil(config_.boundary.target_fraction * static_cast<double>(n)));
    for (const auto& ckpt : ckpts) {
      const std::uint64_t seed = config_.seed + 0x632BE59BD9B4E019ULL * static_cast<std::uint64_t>(ckpt.epoch);
      BoundarySet set = synthesize_boundary_set(ckpt, train_data(), target, config_.boundary, seed);
      save_boundary_set(layout_.boundary_stem(ckpt.epoch), set);
      log("boundary", "epoch " + std::to_string(ckpt.epoch) + ": " + std::to_string(set.size()) + " points from " +
                          std::to_string(set.attempts) + " attempts");
      boundary_.emplace(ckpt.epoch, std::move(set));
    }
  });
}

void Workbench::build_complexes() {
  const auto& ckpts = checkpoints();
  synthesize();
  stage("complex", [&] {
    fs::create_directories(layout_.root / "complex");
    for (const auto& ckpt : ckpts) {
      const BavrComplex c = build_weighted_complex(train_reps(ckpt.epoch), boundary(ckpt.epoch).points,
                                                   config_.complex.k);
      export_complex_jsonl(layout_.complex_file(ckpt.epoch), c);
      log("complex", "epoch " + std::to_string(ckpt.epoch) + ": " + std::to_string(c.edges.size()) + " edges");
    }
  });
}

void Workbench::fit_variant(Variant v) {
  const auto& ckpts = checkpoints();
  build_complexes();
  stage(variant_stage(v), [&] {
    const VisualizerParams params = apply_variant(config_.visualizer, v);
    std::vector<BavrComplex> complexes;
    complexes.reserve(ckpts.size());
    std::vector<SequenceEpoch> seq;
    for (const auto& ckpt : ckpts) {
      SequenceEpoch e;
      e.ckpt = &ckpt;
      e.data = train_reps(ckpt.epoch);
      e.boundary = boundary(ckpt.epoch).points;
      if (!params.no_boundary) {
        complexes.push_back(import_complex_jsonl(layout_.complex_file(ckpt.epoch)));
        e.complex = &complexes.back();
      }
      seq.push_back(std::move(e));
    }
    const std::vector<FitResult> results = fit_sequence(seq, params, config_.seed);
    fs::create_directories(layout_.model_stem(v, 1).parent_path());
    for (const FitResult& r : results) {
      save_visualization_model(layout_.model_stem(v, r.model.epoch), r.model);
      char buf[128];
      std::snprintf(buf, sizeof buf, "epoch %d loss %.6f -> %.6f", r.model.epoch, r.initial_loss, r.final_loss);
      log(variant_stage(v), buf);
    }
  });
}

void Workbench::fit() {
  for (Variant v : config_.variants) fit_variant(v);
  export_bundles();
}

MethodMetrics Workbench::measure_variant(Variant v) {
  MethodMetrics m;
  m.method = to_string(v);
  const auto& ks = config_.evaluation.ks;
  std::map<int, Matrix> low_train;
  std::map<int, Matrix> low_test;
  for (const auto& ckpt : checkpoints()) {
    const int t = ckpt.epoch;
    const VisualizationModel vm = model(v, t);
    const Matrix& b = boundary(t).points;
    const Matrix b_low = project(vm, b);
    EpochMetrics em;
    em.epoch = t;
    Matrix y = project(vm, train_reps(t));
    em.train = measure_split(ckpt, train_reps(t), y, inverse_project(vm, y), b, b_low, ks);
    low_train.emplace(t, std::move(y));
    y = project(vm, test_reps(t));
    em.test = measure_split(ckpt, test_reps(t), y, inverse_project(vm, y), b, b_low, ks);
    low_test.emplace(t, std::move(y));
    m.epochs.push_back(std::move(em));
  }
  for (std::size_t i = 1; i < m.epochs.size(); ++i) {
    const int from = m.epochs[i - 1].epoch;
    const int to = m.epochs[i].epoch;
    TemporalPair pair{from, to, {}, {}};
    for (std::size_t k : ks) {
      pair.train[k] = safe_temporal_pv(train_reps(from), train_reps(to), low_train.at(from), low_train.at(to), k);
      pair.test[k] = safe_temporal_pv(test_reps(from), test_reps(to), low_test.at(from), low_test.at(to), k);
    }
    m.temporal.push_back(std::move(pair));
  }
  return m;
}

MethodMetrics Workbench::measure_pca() {
  MethodMetrics m;
  m.method = "PCA";
  const auto& ks = config_.evaluation.ks;
  std::map<int, Matrix> low_train;
  std::map<int, Matrix> low_test;
  for (const auto& ckpt : checkpoints()) {
    const int t = ckpt.epoch;
    const PcaBaseline pca = pca_fit(train_reps(t));
    const Matrix& b = boundary(t).points;
    const Matrix b_low = pca_project(pca, b);
    EpochMetrics em;
    em.epoch = t;
    Matrix y = pca_project(pca, train_reps(t));
    em.train = measure_split(ckpt, train_reps(t), y, pca_reconstruct(pca, y), b, b_low, ks);
    low_train.emplace(t, std::move(y));
    y = pca_project(pca, test_reps(t));
    em.test = measure_split(ckpt, test_reps(t), y, pca_reconstruct(pca, y), b, b_low, ks);
    low_test.emplace(t, std::move(y));
    m.epochs.push_back(std::move(em));
  }
  for (std::size_t i = 1; i < m.epochs.size(); ++i) {
    const int from = m.epochs[i - 1].epoch;
    const int to = m.epochs[i].epoch;
    TemporalPair pair{from, to, {}, {}};
    for (std::size_t k : ks) {
      pair.train[k] = safe_temporal_pv(train_reps(from), train_reps(to), low_train.at(from), low_train.at(to), k);
      pair.test[k] = safe_temporal_pv(test_reps(from), test_reps(to), low_test.at(from), low_test.at(to), k);
    }
    m.temporal.push_back(std::move(pair));
  }
  return m;
}

void Workbench::refresh_bundle_metrics(const MetricsReport& report) {
  for (int epoch : list_bundle_epochs(layout_.root)) {
    const fs::path path = layout_.bundle_dir(epoch) / "bundle.json";
    Json meta = read_json_file(path);
    meta["metrics"] = epoch_slice(report, epoch);
    write_json_file(path, meta);
  }
}

void Workbench::evaluate() {
  for (Variant v : config_.variants) fit_variant(v);
  stage("metrics", [&] {
    MetricsReport report;
    report.ks = config_.evaluation.ks;
    for (Variant v : config_.variants) report.methods.push_back(measure_variant(v));
    if (config_.evaluation.pca_baseline) report.methods.push_back(measure_pca());
    write_json_file(layout_.metrics_json(), to_json(report));
    write_text_file(layout_.metrics_txt(), render_table(report));
    if (done("bundles")) refresh_bundle_metrics(report);
    for (const auto& m : report.methods) {
      const std::size_t k = std::find(report.ks.begin(), report.ks.end(), std::size_t{15}) != report.ks.end()
                                ? 15
                                : report.ks.front();
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s: mean temporal_pv(k=%zu) train %.4f test %.4f", m.method.c_str(), k,
                    m.mean_temporal(k, false), m.mean_temporal(k, true));
      log("metrics", buf);
    }
  });
}

void Workbench::export_bundles() {
  const Variant primary = config_.variants.front();
  fit_variant(primary);
  stage("bundles", [&] {
    const std::size_t classes = checkpoints().front().class_count();
    const std::vector<Rgb> palette = config_.render.palette.empty() ? make_palette(classes) : config_.render.palette;
    std::optional<MetricsReport> report;
    if (done("metrics")) report = metrics_report();
    RenderParams rp;
    rp.width = config_.render.width;
    rp.height = config_.render.height;
    rp.delta = config_.boundary.delta;
    rp.shading = config_.render.shading;
    fs::remove_all(layout_.bundles_dir());
    for (const auto& ckpt : checkpoints()) {
      const int t = ckpt.epoch;
      const VisualizationModel vm = model(primary, t);
      EpochBundle b;
      b.epoch = t;
      b.variant = to_string(primary);
      b.shading = rp.shading;
      b.palette = palette;
      b.embeddings = embed_records(vm, ckpt, train_data(), train_reps(t));
      const auto test = embed_records(vm, ckpt, test_data(), test_reps(t));
      b.embeddings.insert(b.embeddings.end(), test.begin(), test.end());
      b.raster = render_landscape(vm, ckpt, embedding_extent(project(vm, train_reps(t))), rp);
      if (report) b.metrics = epoch_slice(*report, t);
      const fs::path dir = layout_.bundle_dir(t);
      fs::create_directories(dir);
      export_bundle(b, dir);
      std::size_t flagged = 0;
      for (std::uint8_t f : b.raster.boundary) flagged += f;
      log("bundles", "epoch " + std::to_string(t) + ": " + std::to_string(flagged) + " boundary pixels");
    }
  });
}

void Workbench::render() {
  export_bundles();
  stage("renders", [&] {
    fs::create_directories(layout_.root / "renders");
    for (int t : list_bundle_epochs(layout_.root)) {
      const EpochBundle b = load_bundle(layout_.bundle_dir(t));
      RgbImage image = colorize(b.raster, b.palette, b.shading);
      std::vector<ScatterPoint> points;
      for (const auto& r : b.embeddings) {
        if (r.split == Split::train) points.push_back({r.x, r.y, r.label});
      }
      overlay_scatter(image, b.raster, points, b.palette);
      write_png(layout_.render_file(t), image);
    }
  });
}

void Workbench::run() {
  for (Variant v : config_.variants) fit_variant(v);
  evaluate();
  export_bundles();
  render();
}

}  // namespace dvi
