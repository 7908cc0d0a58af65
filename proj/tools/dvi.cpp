#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "dvi/binary_io.hpp"
#include "dvi/config.hpp"
#include "dvi/error.hpp"
#include "dvi/server.hpp"
#include "dvi/workbench.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kUsageError = 2;
constexpr int kDefaultPort = 8080;

struct PipelineArgs {
  std::string config;
  std::string out;
  bool force = false;
};

dvi::ApiServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

void report_error(const std::string& stage, const std::string& kind, const std::string& message) {
  const dvi::Json err{{"error", {{"stage", stage}, {"kind", kind}, {"message", message}}}};
  std::cerr << err.dump() << "\n";
}

void add_pipeline_args(CLI::App* cmd, PipelineArgs& args) {
  cmd->add_option("config", args.config, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", args.out, "Run directory (overrides output_dir)");
  cmd->add_flag("--force", args.force, "Re-run stages even when complete");
}

int run_pipeline(const std::string& command, const PipelineArgs& args) {
  dvi::PipelineConfig config;
  try {
    config = dvi::load_config(args.config);
  } catch (const dvi::Error& e) {
    report_error("config", "ConfigError", e.what());
    return 1;
  }
  const fs::path run_dir = args.out.empty() ? config.output_dir : fs::path(args.out);
  try {
    dvi::Workbench wb(config, run_dir, args.force);
    if (command == "train-subject") {
      wb.train_subject();
    } else if (command == "synthesize") {
      wb.synthesize();
    } else if (command == "fit") {
      wb.fit();
    } else if (command == "evaluate") {
      wb.evaluate();
      std::cout << dvi::read_text_file(wb.layout().metrics_txt());
    } else if (command == "render") {
      wb.render();
    } else {
      wb.run();
      std::cout << dvi::read_text_file(wb.layout().metrics_txt());
    }
  } catch (const dvi::StageError& e) {
    report_error(e.stage(), e.kind(), e.what());
    return 1;
  } catch (const dvi::ConfigError& e) {
    report_error("config", "ConfigError", e.what());
    return 1;
  } catch (const std::exception& e) {
    report_error(command, "Error", e.what());
    return 1;
  }
  std::cout << command << " complete: " << run_dir.string() << "\n";
  return 0;
}

int serve(const std::string& run_dir, const std::string& host, int port) {
  try {
    dvi::ApiServer server(run_dir);
    const int bound = server.bind(host, port);
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "serving " << run_dir << " on http://" << host << ":" << bound << std::endl;
    server.listen();
    g_server = nullptr;
  } catch (const std::exception& e) {
    report_error("serve", "Error", e.what());
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep debugging visualization workbench"};
  app.require_subcommand(1);

  PipelineArgs args;
  const char* commands[][2] = {
      {"train-subject", "Train (or ingest) the subject classifier checkpoints"},
      {"synthesize", "Synthesize boundary points for every epoch"},
      {"fit", "Fit visualization models and export epoch bundles"},
      {"evaluate", "Compute the metrics report, including the PCA baseline"},
      {"render", "Write landscape PNGs with the sample scatter"},
      {"run", "Run the full pipeline"},
  };
  for (const auto& [name, help] : commands) add_pipeline_args(app.add_subcommand(name, help), args);

  std::string run_dir;
  std::string host = "127.0.0.1";
  int port = kDefaultPort;
  CLI::App* serve_cmd = app.add_subcommand("serve", "Serve a run directory over the read-only HTTP API");
  serve_cmd->add_option("run-dir", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  serve_cmd->add_option("--port", port, "Port (0 picks a free one)")
      ->envname("DVI_PORT")
      ->check(CLI::Range(0, 65535))
      ->capture_default_str();
  serve_cmd->add_option("--host", host, "Bind address")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  if (serve_cmd->parsed()) return serve(run_dir, host, port);
  for (const auto& [name, help] : commands) {
    if (app.got_subcommand(name)) return run_pipeline(name, args);
  }
  return kUsageError;
}
