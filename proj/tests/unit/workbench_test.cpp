#include <doctest.h>

#include <filesystem>

#include "dvi/binary_io.hpp"
#include "dvi/png.hpp"
#include "dvi/workbench.hpp"
#include "test_support.hpp"
#include "tiny_pipeline.hpp"

using namespace dvi;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) { return read_text_file(p); }

std::size_t count_lines_with(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_SUITE("workbench") {

TEST_CASE("full run, skip on rerun, deterministic forced rerun") {
  testing::TempDir dir;
  const fs::path run = dir / "run";
  {
    Workbench wb(testing::tiny_config(), run);
    wb.run();
  }
  const RunLayout layout{run};
  for (const std::string s : {"subject", "boundary", "complex", "visualizer.DVI", "visualizer.UMAP-T", "metrics",
                              "bundles", "renders"}) {
    CHECK(fs::exists(layout.marker(s)));
  }
  CHECK_FALSE(fs::exists(layout.marker("visualizer.DVI-T")));
  CHECK(list_bundle_epochs(run) == std::vector<int>{1, 2, 3});
  CHECK(read_png(layout.render_file(3)).width == 60);
  CHECK(fs::exists(layout.subject_dir() / "manifest.json"));
  CHECK(fs::exists(layout.complex_file(2)));

  const MetricsReport report = metrics_from_json(read_json_file(layout.metrics_json()));
  CHECK(report.methods.size() == 3);
  CHECK(report.method("PCA").epochs.size() == 3);
  CHECK(report.method("DVI").temporal.size() == 2);
  const EpochBundle b3 = load_bundle(layout.bundle_dir(3));
  CHECK(b3.variant == "DVI");
  CHECK(b3.embeddings.size() == 190);
  CHECK(b3.metrics.contains("methods"));

  const std::string metrics_before = slurp(layout.metrics_json());
  const auto bundle_before = read_binary_file(layout.bundle_dir(2) / "bundle.json");
  const auto raster_before = read_binary_file(layout.bundle_dir(2) / "raster.dvir");

  {
    Workbench wb(testing::tiny_config(), run);
    wb.run();
  }
  const std::string log = slurp(layout.log());
  CHECK(count_lines_with(log, "[subject] skipped") == 1);
  CHECK(count_lines_with(log, "[renders] skipped") == 1);

  {
    Workbench wb(testing::tiny_config(), run, true);
    wb.run();
  }
  CHECK(count_lines_with(slurp(layout.log()), "[subject] started") == 2);
  CHECK(slurp(layout.metrics_json()) == metrics_before);
  CHECK(read_binary_file(layout.bundle_dir(2) / "bundle.json") == bundle_before);
  CHECK(read_binary_file(layout.bundle_dir(2) / "raster.dvir") == raster_before);
}

TEST_CASE("rerunning a stage invalidates everything downstream") {
  testing::TempDir dir;
  const fs::path run = dir / "run";
  PipelineConfig cfg = testing::tiny_config();
  cfg.variants = {Variant::umap_t};
  {
    Workbench wb(cfg, run);
    wb.build_complexes();
  }
  const RunLayout layout{run};
  CHECK(fs::exists(layout.marker("complex")));
  {
    Workbench wb(cfg, run, true);
    wb.synthesize();
    CHECK(wb.done("subject"));
    CHECK(wb.done("boundary"));
    CHECK_FALSE(wb.done("complex"));
    CHECK_FALSE(wb.done("metrics"));
  }
  {
    Workbench wb(cfg, run);
    wb.build_complexes();
    CHECK(wb.done("complex"));
  }
}

TEST_CASE("config snapshots guard the run directory") {
  testing::TempDir dir;
  const fs::path run = dir / "run";
  PipelineConfig cfg = testing::tiny_config();
  { Workbench wb(cfg, run); }
  { CHECK_NOTHROW(Workbench(cfg, run)); }

  PipelineConfig moved = cfg;
  moved.output_dir = "elsewhere";
  CHECK_NOTHROW(Workbench(moved, run));

  PipelineConfig changed = cfg;
  changed.boundary.delta = 0.2;
  CHECK_THROWS_AS(Workbench(changed, run), ConfigError);
  CHECK_NOTHROW(Workbench(changed, run, true));
  CHECK(read_json_file(RunLayout{run}.config())["boundary"]["delta"] == 0.2);
}

TEST_CASE("stage failures carry the stage and the error kind") {
  testing::TempDir dir;
  PipelineConfig cfg = testing::tiny_config();
  cfg.subject.source = "dump";
  cfg.subject.manifest = dir / "missing" / "manifest.json";
  Workbench wb(cfg, dir / "run");
  try {
    wb.run();
    FAIL("expected StageError");
  } catch (const StageError& e) {
    CHECK(e.stage() == "subject");
    CHECK(e.kind() == "FormatError");
  }
  CHECK_FALSE(wb.done("subject"));
}

TEST_CASE("checkpoint dumps feed the pipeline") {
  testing::TempDir dir;
  PipelineConfig cfg = testing::tiny_config();
  const auto [train, test] = make_blobs(cfg.dataset.blobs);
  write_checkpoints(dir / "dump", dvi::train_subject(train, cfg.subject.training));
  cfg.subject.source = "dump";
  cfg.subject.manifest = dir / "dump" / "manifest.json";
  cfg.variants = {Variant::umap_t};
  Workbench wb(cfg, dir / "run");
  wb.synthesize();
  CHECK(wb.checkpoints().size() == 3);
  CHECK(wb.boundary(3).size() >= 15);

  // Checkpoints trained on 10-D inputs cannot read 6-D blobs.
  PipelineConfig wrong = cfg;
  wrong.dataset.blobs.dim = 6;
  Workbench bad(wrong, dir / "run2");
  CHECK_THROWS_AS(bad.train_subject(), StageError);
}

}  // TEST_SUITE
