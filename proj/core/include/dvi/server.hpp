#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <shared_mutex>
#include <string>
#include <vector>

#include "dvi/json_io.hpp"
#include "dvi/landscape.hpp"

namespace dvi {

/// Read-only view over the bundles of a run directory. Bundles load lazily,
/// once per epoch, under a single-writer/many-reader lock.
class RunCatalog {
 public:
  /// Throws FormatError when the directory holds no bundles.
  explicit RunCatalog(std::filesystem::path run_dir);

  const std::filesystem::path& root() const noexcept { return root_; }
  const std::vector<int>& epochs() const noexcept { return epochs_; }
  bool has_epoch(int epoch) const;

  /// Throws NotFoundError for an epoch without a bundle.
  std::shared_ptr<const EpochBundle> bundle(int epoch);
  std::shared_ptr<const std::string> landscape_png(int epoch);

  Json meta();

 private:
  struct Entry {
    std::shared_ptr<const EpochBundle> bundle;
    std::shared_ptr<const std::string> png;
  };
  const Entry& entry(int epoch);

  std::filesystem::path root_;
  std::vector<int> epochs_;
  Json config_;
  std::shared_mutex mutex_;
  std::map<int, Entry> cache_;
};

struct ApiResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Routes one GET request. Unknown epochs and samples give 404, malformed
/// path segments or query values 400.
ApiResponse handle_api_request(RunCatalog& catalog, const std::string& path,
                               const std::multimap<std::string, std::string>& query);

/// HTTP/1.1 front end for handle_api_request.
class ApiServer {
 public:
  explicit ApiServer(std::filesystem::path run_dir);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Binds `host`:`port` (0 picks a free port) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); requires a prior bind().
  void listen();
  /// Blocks until a concurrent listen() accepts connections.
  void wait_until_ready() const;
  void stop();

  RunCatalog& catalog();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace dvi
