#include "dvi/config.hpp"

#include <cmath>
#include <set>

#include "dvi/error.hpp"

namespace dvi {

namespace {

/// Walks one JSON object, remembering which keys were consumed so leftovers
/// can be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const Json& json, std::string where) : json_(json), where_(std::move(where)) {
    if (!json_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  const Json* find(const std::string& key) {
    seen_.insert(key);
    auto it = json_.find(key);
    return it == json_.end() ? nullptr : &*it;
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  template <typename T>
  void read(const std::string& key, T& out) {
    const Json* v = find(key);
    if (!v) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v->is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v->is_number_integer()) throw ConfigError("");
        if constexpr (std::is_unsigned_v<T>) {
          if (v->is_number_integer() && !v->is_number_unsigned() && v->get<long long>() < 0) throw ConfigError("");
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v->is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v->is_string()) throw ConfigError("");
      }
      out = v->get<T>();
    } catch (const std::exception&) {
      throw ConfigError(path(key) + ": wrong type (" + std::string(v->type_name()) + ")");
    }
  }

  void read_path(const std::string& key, std::filesystem::path& out, const std::filesystem::path& base) {
    std::string s;
    const Json* v = find(key);
    if (!v) return;
    if (!v->is_string()) throw ConfigError(path(key) + ": expected a string");
    s = v->get<std::string>();
    std::filesystem::path p(s);
    out = (p.is_relative() && !base.empty()) ? base / p : p;
  }

  ObjectReader child(const std::string& key) {
    const Json* v = find(key);
    static const Json empty = Json::object();
    return ObjectReader(v ? *v : empty, path(key));
  }

  void finish() const {
    for (auto it = json_.begin(); it != json_.end(); ++it) {
      if (!seen_.contains(it.key())) throw ConfigError(path(it.key()) + ": unknown key");
    }
  }

 private:
  const Json& json_;
  std::string where_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key + ": " + what);
}

void read_dataset(ObjectReader r, DatasetConfig& d, const std::filesystem::path& base) {
  r.read("kind", d.kind);
  require(d.kind == "blobs" || d.kind == "idx", r.path("kind"), "must be \"blobs\" or \"idx\"");
  r.read("dim", d.blobs.dim);
  r.read("classes", d.blobs.classes);
  r.read("train_count", d.blobs.train_count);
  r.read("test_count", d.blobs.test_count);
  r.read("separation", d.blobs.separation);
  r.read("sigma", d.blobs.sigma);
  r.read_path("train_images", d.train_images, base);
  r.read_path("train_labels", d.train_labels, base);
  r.read_path("test_images", d.test_images, base);
  r.read_path("test_labels", d.test_labels, base);
  r.read("train_limit", d.train_limit);
  r.read("test_limit", d.test_limit);
  r.read("idx_classes", d.classes);
  r.finish();
  if (d.kind == "blobs") {
    require(d.blobs.classes >= 2, r.path("classes"), "need at least 2");
    require(static_cast<std::size_t>(d.blobs.classes) <= d.blobs.dim, r.path("classes"), "must not exceed dim");
    require(d.blobs.train_count > 0 && d.blobs.test_count > 0, r.path("train_count"), "must be positive");
    require(d.blobs.sigma > 0.0 && d.blobs.separation > 0.0, r.path("sigma"), "sigma and separation must be positive");
  } else {
    require(!d.train_images.empty() && !d.train_labels.empty() && !d.test_images.empty() &&
                !d.test_labels.empty(),
            r.path("train_images"), "idx datasets need all four file paths");
    require(d.classes >= 2 && d.classes <= 255, r.path("idx_classes"), "must be in [2, 255]");
  }
}

void read_subject(ObjectReader r, SubjectConfig& s, const std::filesystem::path& base) {
  r.read("source", s.source);
  require(s.source == "train" || s.source == "dump", r.path("source"), "must be \"train\" or \"dump\"");
  r.read_path("manifest", s.manifest, base);
  r.read("epochs", s.training.epochs);
  r.read("hidden", s.training.hidden);
  r.read("rep_dim", s.training.rep_dim);
  r.read("batch_size", s.training.batch_size);
  r.read("learning_rate", s.training.learning_rate);
  r.read("momentum", s.training.momentum);
  r.finish();
  if (s.source == "dump") require(!s.manifest.empty(), r.path("manifest"), "required when source is \"dump\"");
  require(s.training.epochs >= 2, r.path("epochs"), "need at least 2");
  require(s.training.rep_dim >= 2, r.path("rep_dim"), "need at least 2");
  require(s.training.batch_size > 0, r.path("batch_size"), "must be positive");
  require(s.training.learning_rate > 0.0, r.path("learning_rate"), "must be positive");
}

void read_boundary(ObjectReader r, BoundaryParams& b) {
  r.read("delta", b.delta);
  r.read("lambda_max", b.lambda_max);
  r.read("max_rounds", b.max_rounds);
  r.read("alpha", b.alpha);
  r.read("target_fraction", b.target_fraction);
  r.read("symmetric_lambda_cap", b.symmetric_lambda_cap);
  r.finish();
  require(b.delta > 0.0 && b.delta < 1.0, r.path("delta"), "must be in (0, 1)");
  require(b.lambda_max > 0.0 && b.lambda_max <= 0.5, r.path("lambda_max"), "must be in (0, 0.5]");
  require(b.max_rounds >= 1, r.path("max_rounds"), "must be positive");
  require(b.alpha >= 0.0 && b.alpha <= 1.0, r.path("alpha"), "must be in [0, 1]");
  require(b.target_fraction > 0.0 && b.target_fraction <= 1.0, r.path("target_fraction"), "must be in (0, 1]");
}

void read_complex(ObjectReader r, ComplexConfig& c) {
  r.read("k", c.k);
  r.read("negative_rate", c.negative_rate);
  r.read("metric", c.metric);
  r.finish();
  require(c.k >= 2, r.path("k"), "need at least 2");
  require(c.metric == "euclidean", r.path("metric"), "only \"euclidean\" is supported");
}

void read_visualizer(ObjectReader r, VisualizerParams& v, std::vector<Variant>& variants) {
  r.read("lambda_projection", v.weights.projection);
  r.read("lambda_reconstruction", v.weights.reconstruction);
  r.read("lambda_temporal", v.weights.temporal);
  r.read("beta", v.weights.beta);
  r.read("temporal_k", v.weights.k);
  r.read("a", v.curve.a);
  r.read("b", v.curve.b);
  r.read("learning_rate", v.schedule.initial);
  r.read("lr_decay_every", v.schedule.decay_every);
  r.read("lr_decay_factor", v.schedule.decay_factor);
  r.read("momentum", v.momentum);
  r.read("epochs", v.epochs);
  r.read("batch_positives", v.batch_positives);
  r.read("no_temporal", v.no_temporal);
  r.read("no_boundary", v.no_boundary);
  r.read("no_reconstruction", v.no_reconstruction);
  r.read("reconstruct_boundary", v.reconstruct_boundary);
  r.read("transfer", v.transfer);
  std::vector<std::string> names;
  r.read("variants", names);
  r.finish();
  if (r.find("variants") && !names.empty()) {
    variants.clear();
    for (const auto& n : names) {
      try {
        variants.push_back(variant_from_string(n));
      } catch (const Error&) {
        throw ConfigError(r.path("variants") + ": unknown variant \"" + n + "\"");
      }
    }
    for (std::size_t i = 0; i < variants.size(); ++i) {
      for (std::size_t j = i + 1; j < variants.size(); ++j) {
        require(variants[i] != variants[j], r.path("variants"), "duplicate variant");
      }
    }
  } else if (r.find("variants")) {
    throw ConfigError(r.path("variants") + ": must not be empty");
  }
  require(v.weights.projection >= 0.0 && v.weights.reconstruction >= 0.0 && v.weights.temporal >= 0.0,
          r.path("lambda_projection"), "loss weights must be non-negative");
  require(v.curve.a > 0.0 && v.curve.b > 0.0, r.path("a"), "curve parameters must be positive");
  require(v.schedule.initial > 0.0, r.path("learning_rate"), "must be positive");
  require(v.schedule.decay_every >= 1, r.path("lr_decay_every"), "must be positive");
  require(v.schedule.decay_factor > 0.0 && v.schedule.decay_factor <= 1.0, r.path("lr_decay_factor"),
          "must be in (0, 1]");
  require(v.momentum >= 0.0 && v.momentum < 1.0, r.path("momentum"), "must be in [0, 1)");
  require(v.epochs >= 1, r.path("epochs"), "must be positive");
  require(v.batch_positives >= 1, r.path("batch_positives"), "must be positive");
  require(v.weights.k >= 1, r.path("temporal_k"), "must be positive");
}

void read_evaluation(ObjectReader r, EvaluationConfig& e) {
  r.read("ks", e.ks);
  r.read("pca_baseline", e.pca_baseline);
  r.finish();
  require(!e.ks.empty(), r.path("ks"), "must not be empty");
  for (std::size_t k : e.ks) require(k >= 1, r.path("ks"), "entries must be positive");
}

void read_render(ObjectReader r, RenderConfig& c) {
  r.read("width", c.width);
  r.read("height", c.height);
  std::string shading = to_string(c.shading);
  r.read("shading", shading);
  if (const Json* p = r.find("palette"); p && !p->is_null()) {
    if (!p->is_array()) throw ConfigError(r.path("palette") + ": expected an array of [r, g, b]");
    c.palette.clear();
    for (const auto& e : *p) {
      if (!e.is_array() || e.size() != 3) throw ConfigError(r.path("palette") + ": expected [r, g, b] entries");
      std::uint8_t rgb[3];
      for (std::size_t i = 0; i < 3; ++i) {
        if (!e[i].is_number_integer() || e[i].get<long long>() < 0 || e[i].get<long long>() > 255) {
          throw ConfigError(r.path("palette") + ": channels must be integers in [0, 255]");
        }
        rgb[i] = static_cast<std::uint8_t>(e[i].get<int>());
      }
      const Rgb color{rgb[0], rgb[1], rgb[2]};
      require(!(color == kWhite), r.path("palette"), "white is reserved for boundary pixels");
      c.palette.push_back(color);
    }
  }
  r.finish();
  try {
    c.shading = shading_from_string(shading);
  } catch (const Error&) {
    throw ConfigError(r.path("shading") + ": must be \"softmax\" or \"margin\"");
  }
  require(c.width >= 2 && c.height >= 2 && c.width <= 4096 && c.height <= 4096, r.path("width"),
          "resolution must be within [2, 4096]");
}

}  // namespace

PipelineConfig config_from_json(const Json& json, const std::filesystem::path& base_dir) {
  PipelineConfig c;
  ObjectReader root(json, "config");
  int version = 0;
  if (!root.find("version")) throw ConfigError("config.version: required");
  root.read("version", version);
  if (version != kConfigVersion) {
    throw ConfigError("config.version: unsupported version " + std::to_string(version));
  }
  root.read("seed", c.seed);
  root.read_path("output_dir", c.output_dir, base_dir);
  read_dataset(root.child("dataset"), c.dataset, base_dir);
  read_subject(root.child("subject"), c.subject, base_dir);
  read_boundary(root.child("boundary"), c.boundary);
  read_complex(root.child("complex"), c.complex);
  read_visualizer(root.child("visualizer"), c.visualizer, c.variants);
  read_evaluation(root.child("evaluation"), c.evaluation);
  read_render(root.child("render"), c.render);
  root.finish();

  c.dataset.blobs.seed = c.seed;
  c.subject.training.seed = c.seed;
  c.visualizer.k = c.complex.k;
  c.visualizer.negative_rate = c.complex.negative_rate;
  const int classes = c.dataset.kind == "blobs" ? c.dataset.blobs.classes : c.dataset.classes;
  if (!c.render.palette.empty() && c.render.palette.size() < static_cast<std::size_t>(classes)) {
    throw ConfigError("config.render.palette: needs one color per class");
  }
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  Json json;
  try {
    json = read_json_file(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(json, path.parent_path());
}

Json config_to_json(const PipelineConfig& c) {
  Json j;
  j["version"] = kConfigVersion;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir.generic_string();
  Json d;
  d["kind"] = c.dataset.kind;
  if (c.dataset.kind == "blobs") {
    d["dim"] = c.dataset.blobs.dim;
    d["classes"] = c.dataset.blobs.classes;
    d["train_count"] = c.dataset.blobs.train_count;
    d["test_count"] = c.dataset.blobs.test_count;
    d["separation"] = c.dataset.blobs.separation;
    d["sigma"] = c.dataset.blobs.sigma;
  } else {
    d["train_images"] = c.dataset.train_images.generic_string();
    d["train_labels"] = c.dataset.train_labels.generic_string();
    d["test_images"] = c.dataset.test_images.generic_string();
    d["test_labels"] = c.dataset.test_labels.generic_string();
    d["train_limit"] = c.dataset.train_limit;
    d["test_limit"] = c.dataset.test_limit;
    d["idx_classes"] = c.dataset.classes;
  }
  j["dataset"] = d;
  const auto& t = c.subject.training;
  Json s = {{"source", c.subject.source}, {"epochs", t.epochs}, {"hidden", t.hidden},
            {"rep_dim", t.rep_dim}, {"batch_size", t.batch_size}, {"learning_rate", t.learning_rate},
            {"momentum", t.momentum}};
  if (c.subject.source == "dump") s["manifest"] = c.subject.manifest.generic_string();
  j["subject"] = s;
  const auto& b = c.boundary;
  j["boundary"] = {{"delta", b.delta}, {"lambda_max", b.lambda_max}, {"max_rounds", b.max_rounds},
                   {"alpha", b.alpha}, {"target_fraction", b.target_fraction},
                   {"symmetric_lambda_cap", b.symmetric_lambda_cap}};
  j["complex"] = {{"k", c.complex.k}, {"negative_rate", c.complex.negative_rate}, {"metric", c.complex.metric}};
  const auto& v = c.visualizer;
  Json names = Json::array();
  for (Variant var : c.variants) names.push_back(to_string(var));
  j["visualizer"] = {{"lambda_projection", v.weights.projection},
                     {"lambda_reconstruction", v.weights.reconstruction},
                     {"lambda_temporal", v.weights.temporal},
                     {"beta", v.weights.beta},
                     {"temporal_k", v.weights.k},
                     {"a", v.curve.a},
                     {"b", v.curve.b},
                     {"learning_rate", v.schedule.initial},
                     {"lr_decay_every", v.schedule.decay_every},
                     {"lr_decay_factor", v.schedule.decay_factor},
                     {"momentum", v.momentum},
                     {"epochs", v.epochs},
                     {"batch_positives", v.batch_positives},
                     {"no_temporal", v.no_temporal},
                     {"no_boundary", v.no_boundary},
                     {"no_reconstruction", v.no_reconstruction},
                     {"reconstruct_boundary", v.reconstruct_boundary},
                     {"transfer", v.transfer},
                     {"variants", names}};
  j["evaluation"] = {{"ks", c.evaluation.ks}, {"pca_baseline", c.evaluation.pca_baseline}};
  Json palette = Json::array();
  for (const Rgb& p : c.render.palette) palette.push_back({p.r, p.g, p.b});
  j["render"] = {{"width", c.render.width}, {"height", c.render.height},
                 {"shading", to_string(c.render.shading)},
                 {"palette", c.render.palette.empty() ? Json(nullptr) : palette}};
  return j;
}

}  // namespace dvi
