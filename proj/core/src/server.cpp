#include "dvi/server.hpp"

#include <httplib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <mutex>

#include "dvi/binary_io.hpp"
#include "dvi/error.hpp"
#include "dvi/workbench.hpp"

namespace dvi {

namespace fs = std::filesystem;

namespace {

class BadRequest : public Error {
 public:
  using Error::Error;
};

template <typename T>
T parse_number(const std::string& text, const std::string& what) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end) throw BadRequest("malformed " + what + " '" + text + "'");
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) throw BadRequest(what + " must be finite");
  }
  return value;
}

const std::string* query_value(const std::multimap<std::string, std::string>& query, const std::string& key) {
  const auto it = query.find(key);
  return it == query.end() ? nullptr : &it->second;
}

ApiResponse json_response(int status, const Json& body) { return {status, "application/json", body.dump()}; }

ApiResponse error_response(int status, const std::string& message) {
  return json_response(status, Json{{"error", message}, {"status", status}});
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (start <= path.size()) {
    const std::size_t slash = path.find('/', start);
    const std::size_t end = slash == std::string::npos ? path.size() : slash;
    if (end > start) parts.push_back(path.substr(start, end - start));
    if (slash == std::string::npos) break;
    start = slash + 1;
  }
  return parts;
}

Json neighbors(const EpochBundle& b, double x, double y, std::size_t k) {
  struct Hit {
    double distance;
    std::size_t index;
  };
  std::vector<Hit> hits;
  hits.reserve(b.embeddings.size());
  for (std::size_t i = 0; i < b.embeddings.size(); ++i) {
    const double dx = static_cast<double>(b.embeddings[i].x) - x;
    const double dy = static_cast<double>(b.embeddings[i].y) - y;
    hits.push_back({std::sqrt(dx * dx + dy * dy), i});
  }
  k = std::min(k, hits.size());
  const auto closer = [&](const Hit& a, const Hit& c) {
    if (a.distance != c.distance) return a.distance < c.distance;
    return b.embeddings[a.index].id < b.embeddings[c.index].id;
  };
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(), closer);
  Json out = Json::array();
  for (std::size_t i = 0; i < k; ++i) {
    const EmbeddingRecord& r = b.embeddings[hits[i].index];
    Json rec = embeddings_to_json(std::span<const EmbeddingRecord>(&r, 1)).at(0);
    rec["distance"] = hits[i].distance;
    out.push_back(std::move(rec));
  }
  return out;
}

ApiResponse route(RunCatalog& catalog, const std::string& path, const std::multimap<std::string, std::string>& query) {
  const std::vector<std::string> parts = split_path(path);
  if (parts.size() < 2 || parts[0] != "api") return error_response(404, "no such endpoint");

  if (parts.size() == 2 && parts[1] == "meta") return json_response(200, catalog.meta());

  if (parts.size() == 4 && parts[1] == "sample" && parts[3] == "trajectory") {
    const auto id = parse_number<std::int64_t>(parts[2], "sample id");
    Json points = Json::array();
    const EmbeddingRecord* found = nullptr;
    for (int t : catalog.epochs()) {
      const auto b = catalog.bundle(t);
      const auto it = std::find_if(b->embeddings.begin(), b->embeddings.end(),
                                   [id](const EmbeddingRecord& r) { return r.id == id; });
      if (it == b->embeddings.end()) throw NotFoundError("unknown sample " + std::to_string(id));
      points.push_back({{"epoch", t}, {"x", it->x}, {"y", it->y}, {"predicted", it->predicted},
                        {"confidence", it->confidence}});
      // Bundles stay cached for the catalog's lifetime.
      if (!found) found = &*it;
    }
    return json_response(200, Json{{"id", id},
                                   {"label", found->label},
                                   {"split", to_string(found->split)},
                                   {"trajectory", points}});
  }

  if (parts.size() == 4 && parts[1] == "epoch") {
    const int epoch = parse_number<int>(parts[2], "epoch");
    const std::string& what = parts[3];
    if (what != "embeddings" && what != "landscape.png" && what != "metrics" && what != "neighbors") {
      return error_response(404, "no such endpoint");
    }
    if (!catalog.has_epoch(epoch)) return error_response(404, "unknown epoch " + std::to_string(epoch));
    if (what == "landscape.png") return {200, "image/png", *catalog.landscape_png(epoch)};
    const auto bundle = catalog.bundle(epoch);
    if (what == "embeddings") {
      return json_response(200, Json{{"epoch", epoch}, {"embeddings", embeddings_to_json(bundle->embeddings)}});
    }
    if (what == "metrics") return json_response(200, Json{{"epoch", epoch}, {"metrics", bundle->metrics}});

    const std::string* xs = query_value(query, "x");
    const std::string* ys = query_value(query, "y");
    if (!xs || !ys) throw BadRequest("neighbors needs x and y");
    const double x = parse_number<double>(*xs, "x");
    const double y = parse_number<double>(*ys, "y");
    long k = 5;
    if (const std::string* ks = query_value(query, "k")) k = parse_number<long>(*ks, "k");
    if (k < 1 || k > 10000) throw BadRequest("k must be in [1, 10000]");
    return json_response(200, Json{{"epoch", epoch}, {"x", x}, {"y", y},
                                   {"neighbors", neighbors(*bundle, x, y, static_cast<std::size_t>(k))}});
  }
  return error_response(404, "no such endpoint");
}

}  // namespace

RunCatalog::RunCatalog(fs::path run_dir) : root_(std::move(run_dir)), epochs_(list_bundle_epochs(root_)) {
  if (epochs_.empty()) throw FormatError("run directory '" + root_.string() + "' holds no epoch bundles");
  if (fs::exists(root_ / "config.json")) config_ = read_json_file(root_ / "config.json");
}

bool RunCatalog::has_epoch(int epoch) const { return std::binary_search(epochs_.begin(), epochs_.end(), epoch); }

const RunCatalog::Entry& RunCatalog::entry(int epoch) {
  if (!has_epoch(epoch)) throw NotFoundError("unknown epoch " + std::to_string(epoch));
  {
    std::shared_lock lock(mutex_);
    const auto it = cache_.find(epoch);
    if (it != cache_.end()) return it->second;
  }
  std::unique_lock lock(mutex_);
  const auto it = cache_.find(epoch);
  if (it != cache_.end()) return it->second;
  const fs::path dir = root_ / "bundles" / epoch_tag(epoch);
  Entry e;
  e.bundle = std::make_shared<const EpochBundle>(load_bundle(dir));
  const auto bytes = read_binary_file(dir / "landscape.png");
  e.png = std::make_shared<const std::string>(bytes.begin(), bytes.end());
  // std::map nodes are stable, so the reference outlives the lock.
  return cache_.emplace(epoch, std::move(e)).first->second;
}

std::shared_ptr<const EpochBundle> RunCatalog::bundle(int epoch) { return entry(epoch).bundle; }

std::shared_ptr<const std::string> RunCatalog::landscape_png(int epoch) { return entry(epoch).png; }

Json RunCatalog::meta() {
  const auto first = bundle(epochs_.front());
  std::size_t train = 0;
  std::size_t test = 0;
  for (const auto& r : first->embeddings) (r.split == Split::train ? train : test) += 1;
  Json dataset{{"train_count", train}, {"test_count", test}};
  std::size_t classes = first->palette.size();
  if (config_.contains("dataset")) {
    const Json& d = config_.at("dataset");
    dataset["kind"] = d.value("kind", "unknown");
    if (d.contains("dim")) dataset["dim"] = d["dim"];
    if (d.contains("classes")) classes = d["classes"].get<std::size_t>();
    if (d.contains("idx_classes")) classes = d["idx_classes"].get<std::size_t>();
  }
  const LandscapeRaster& r = first->raster;
  return Json{{"epochs", epochs_},
              {"classes", classes},
              {"palette", palette_to_json(first->palette)},
              {"variant", first->variant},
              {"resolution", {r.width, r.height}},
              {"dataset", dataset}};
}

ApiResponse handle_api_request(RunCatalog& catalog, const std::string& path,
                               const std::multimap<std::string, std::string>& query) {
  try {
    return route(catalog, path, query);
  } catch (const BadRequest& e) {
    return error_response(400, e.what());
  } catch (const NotFoundError& e) {
    return error_response(404, e.what());
  } catch (const std::exception& e) {
    return error_response(500, e.what());
  }
}

struct ApiServer::Impl {
  explicit Impl(fs::path run_dir) : catalog(std::move(run_dir)) {}
  RunCatalog catalog;
  httplib::Server server;
  bool bound = false;
};

ApiServer::ApiServer(fs::path run_dir) : impl_(std::make_unique<Impl>(std::move(run_dir))) {
  Impl* impl = impl_.get();
  const auto handler = [impl](const httplib::Request& req, httplib::Response& res) {
    const ApiResponse r = handle_api_request(impl->catalog, req.path, req.params);
    res.status = r.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(r.body, r.content_type);
  };
  impl_->server.Get(R"(/.*)", handler);
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const std::string& host, int port) {
  int bound = -1;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (impl_->server.bind_to_port(host, port)) {
    bound = port;
  }
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  impl_->bound = true;
  return bound;
}

void ApiServer::listen() {
  if (!impl_->bound) throw ContractError("ApiServer::listen: bind first");
  impl_->server.listen_after_bind();
}

void ApiServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

void ApiServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

RunCatalog& ApiServer::catalog() { return impl_->catalog; }

}  // namespace dvi
