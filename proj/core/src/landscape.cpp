#include "dvi/landscape.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <exception>
#include <map>
#include <thread>

#include "dvi/binary_io.hpp"
#include "dvi/boundary.hpp"
#include "dvi/transforms.hpp"

namespace dvi {

namespace {

constexpr std::uint32_t kRasterVersion = 1;
constexpr std::uint32_t kBundleVersion = 1;
constexpr double kTint = 0.12;

Rgb hsv(double hue, double s, double v) {
  const double c = v * s;
  const double hp = std::fmod(hue, 360.0) / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) r = c, g = x;
  else if (hp < 2) r = x, g = c;
  else if (hp < 3) g = c, b = x;
  else if (hp < 4) g = x, b = c;
  else if (hp < 5) r = x, b = c;
  else r = c, b = x;
  const double m = v - c;
  auto byte = [](double u) { return static_cast<std::uint8_t>(std::lround(std::clamp(u, 0.0, 1.0) * 255.0)); };
  return {byte(r + m), byte(g + m), byte(b + m)};
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[at + i]) << (8 * i);
  return v;
}

void put_f32_plane(std::vector<std::uint8_t>& out, const std::vector<float>& plane) {
  for (float f : plane) put_u32(out, std::bit_cast<std::uint32_t>(f));
}

}  // namespace

std::vector<Rgb> make_palette(std::size_t classes) {
  if (classes == 0) throw ContractError("palette: need at least one class");
  std::vector<Rgb> out;
  for (std::size_t i = 0; i < classes; ++i) {
    out.push_back(hsv(360.0 * static_cast<double>(i) / static_cast<double>(classes), 0.7, 0.85));
  }
  return out;
}

std::string to_string(Shading s) { return s == Shading::margin ? "margin" : "softmax"; }

Shading shading_from_string(const std::string& name) {
  if (name == "softmax") return Shading::softmax;
  if (name == "margin") return Shading::margin;
  throw ContractError("unknown shading '" + name + "'");
}

Rgb shade(Rgb base, double strength, std::size_t classes) {
  const double floor = classes > 1 ? 1.0 / static_cast<double>(classes) : 0.0;
  const double t = std::clamp((strength - floor) / (1.0 - floor), 0.0, 1.0);
  auto mix = [&](std::uint8_t c) {
    const double tint = 255.0 - kTint * (255.0 - c);
    return static_cast<std::uint8_t>(std::lround(tint + t * (c - tint)));
  };
  return {mix(base.r), mix(base.g), mix(base.b)};
}

Extent embedding_extent(const Matrix& points, double margin) {
  if (points.rows() == 0 || points.cols() != 2) throw ContractError("extent: need a non-empty N x 2 matrix");
  Extent e{points(0, 0), points(0, 0), points(0, 1), points(0, 1)};
  for (std::size_t i = 0; i < points.rows(); ++i) {
    e.x_min = std::min<double>(e.x_min, points(i, 0));
    e.x_max = std::max<double>(e.x_max, points(i, 0));
    e.y_min = std::min<double>(e.y_min, points(i, 1));
    e.y_max = std::max<double>(e.y_max, points(i, 1));
  }
  // A degenerate axis still gets a unit-sized window.
  const double w = e.x_max - e.x_min > 0.0 ? e.x_max - e.x_min : 1.0;
  const double h = e.y_max - e.y_min > 0.0 ? e.y_max - e.y_min : 1.0;
  return {e.x_min - margin * w, e.x_max + margin * w, e.y_min - margin * h, e.y_max + margin * h};
}

std::pair<double, double> LandscapeRaster::pixel_center(std::size_t px, std::size_t py) const {
  const double x = extent.x_min + (static_cast<double>(px) + 0.5) * (extent.x_max - extent.x_min) / width;
  const double y = extent.y_max - (static_cast<double>(py) + 0.5) * (extent.y_max - extent.y_min) / height;
  return {x, y};
}

std::pair<std::size_t, std::size_t> LandscapeRaster::pixel_of(double x, double y) const {
  const double fx = (x - extent.x_min) / (extent.x_max - extent.x_min) * width;
  const double fy = (extent.y_max - y) / (extent.y_max - extent.y_min) * height;
  auto clampi = [](double v, std::size_t n) {
    if (!(v >= 0.0)) return std::size_t{0};
    return std::min(static_cast<std::size_t>(v), n - 1);
  };
  return {clampi(fx, width), clampi(fy, height)};
}

PixelVerdict classify_logits(std::span<const float> logits, double delta) {
  PixelVerdict v;
  const TopTwo top = top_two(logits);
  v.cls = static_cast<int>(top.first);
  const std::vector<float> p = softmax(logits);
  v.confidence = p[top.first];
  try {
    v.boundary = on_delta_boundary(logits, delta);
    const std::vector<float> scaled = minmax_rescale(logits);
    v.margin = scaled[top.first] - scaled[top.second];
  } catch (const DegenerateInputError&) {
    v.boundary = true;
    v.margin = 0.0f;
  }
  return v;
}

LandscapeRaster render_landscape(const VisualizationModel& model, const SubjectCheckpoint& ckpt,
                                 const Extent& extent, const RenderParams& params) {
  if (params.width < 50 || params.height < 50) throw ContractError("render: resolution must be at least 50x50");
  if (!(extent.x_max > extent.x_min) || !(extent.y_max > extent.y_min)) throw ContractError("render: empty extent");
  if (ckpt.class_count() > 255) throw ContractError("render: at most 255 classes");
  if (model.rep_dim() != ckpt.rep_dim()) throw DimensionError("render: model and checkpoint widths differ");
  if (params.block == 0) throw ContractError("render: zero block size");

  LandscapeRaster r;
  r.width = params.width;
  r.height = params.height;
  r.extent = extent;
  const std::size_t total = r.pixel_count();
  r.classes.assign(total, 0);
  r.boundary.assign(total, 0);
  r.confidence.assign(total, 0.0f);
  r.margin.assign(total, 0.0f);

  const std::size_t blocks = (total + params.block - 1) / params.block;
  std::vector<std::exception_ptr> errors(blocks);
  auto render_block = [&](std::size_t b) {
    const std::size_t start = b * params.block;
    const std::size_t stop = std::min(total, start + params.block);
    Matrix centers(stop - start, 2);
    for (std::size_t p = start; p < stop; ++p) {
      const auto [x, y] = r.pixel_center(p % r.width, p / r.width);
      centers(p - start, 0) = static_cast<float>(x);
      centers(p - start, 1) = static_cast<float>(y);
    }
    const Matrix reps = inverse_project(model, centers);
    for (std::size_t i = 0; i < reps.rows(); ++i) {
      for (float v : reps.row(i)) {
        if (!std::isfinite(v)) {
          throw RenderError("render: decoder output is not finite at pixel " + std::to_string(start + i),
                            start + i);
        }
      }
    }
    const Matrix logits = forward(ckpt.head, reps);
    for (std::size_t i = 0; i < logits.rows(); ++i) {
      const PixelVerdict v = classify_logits(logits.row(i), params.delta);
      r.classes[start + i] = static_cast<std::uint8_t>(v.cls);
      r.boundary[start + i] = v.boundary ? 1 : 0;
      r.confidence[start + i] = v.confidence;
      r.margin[start + i] = v.margin;
    }
  };

  std::size_t workers = params.threads ? params.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, blocks);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t b = next++; b < blocks; b = next++) {
      try {
        render_block(b);
      } catch (...) {
        errors[b] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  // Report the lowest failing block so the error does not depend on scheduling.
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return r;
}

RgbImage colorize(const LandscapeRaster& raster, std::span<const Rgb> palette, Shading shading) {
  RgbImage img(raster.width, raster.height);
  const std::size_t classes = palette.size();
  for (std::size_t p = 0; p < raster.pixel_count(); ++p) {
    Rgb c = kWhite;
    if (!raster.boundary[p]) {
      if (raster.classes[p] >= classes) throw ContractError("colorize: palette does not cover every class");
      const double floor = 1.0 / static_cast<double>(classes);
      const double strength =
          shading == Shading::softmax ? raster.confidence[p] : floor + raster.margin[p] * (1.0 - floor);
      c = shade(palette[raster.classes[p]], strength, classes);
    }
    std::uint8_t* px = img.at(p % raster.width, p / raster.width);
    px[0] = c.r;
    px[1] = c.g;
    px[2] = c.b;
  }
  return img;
}

void overlay_scatter(RgbImage& image, const LandscapeRaster& raster, std::span<const ScatterPoint> points,
                     std::span<const Rgb> palette) {
  constexpr int kRadius = 2;
  const Rgb outline{40, 40, 40};
  for (const ScatterPoint& pt : points) {
    if (pt.label < 0 || static_cast<std::size_t>(pt.label) >= palette.size()) continue;
    const auto [cx, cy] = raster.pixel_of(pt.x, pt.y);
    for (int dy = -kRadius - 1; dy <= kRadius + 1; ++dy) {
      for (int dx = -kRadius - 1; dx <= kRadius + 1; ++dx) {
        const long x = static_cast<long>(cx) + dx;
        const long y = static_cast<long>(cy) + dy;
        if (x < 0 || y < 0 || x >= static_cast<long>(image.width) || y >= static_cast<long>(image.height)) continue;
        const int d2 = dx * dx + dy * dy;
        if (d2 > (kRadius + 1) * (kRadius + 1)) continue;
        const Rgb c = d2 > kRadius * kRadius ? outline : palette[static_cast<std::size_t>(pt.label)];
        std::uint8_t* px = image.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
        px[0] = c.r;
        px[1] = c.g;
        px[2] = c.b;
      }
    }
  }
}

std::vector<std::uint8_t> encode_raster(const LandscapeRaster& raster) {
  const std::size_t n = raster.pixel_count();
  if (raster.classes.size() != n || raster.boundary.size() != n || raster.confidence.size() != n ||
      raster.margin.size() != n) {
    throw ContractError("encode_raster: plane sizes do not match the resolution");
  }
  std::vector<std::uint8_t> out{'D', 'V', 'I', 'R'};
  put_u32(out, kRasterVersion);
  put_u32(out, static_cast<std::uint32_t>(raster.width));
  put_u32(out, static_cast<std::uint32_t>(raster.height));
  out.insert(out.end(), raster.classes.begin(), raster.classes.end());
  out.insert(out.end(), raster.boundary.begin(), raster.boundary.end());
  put_f32_plane(out, raster.confidence);
  put_f32_plane(out, raster.margin);
  return out;
}

LandscapeRaster decode_raster(std::span<const std::uint8_t> bytes, const Extent& extent) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "DVIR", 4) != 0) throw FormatError("raster: bad magic");
  if (get_u32(bytes, 4) != kRasterVersion) {
    throw FormatError("raster: unsupported version " + std::to_string(get_u32(bytes, 4)));
  }
  LandscapeRaster r;
  r.width = get_u32(bytes, 8);
  r.height = get_u32(bytes, 12);
  r.extent = extent;
  const std::size_t n = r.pixel_count();
  if (bytes.size() != 16 + n * 10) throw FormatError("raster: payload size does not match the header");
  std::size_t at = 16;
  r.classes.assign(bytes.begin() + static_cast<long>(at), bytes.begin() + static_cast<long>(at + n));
  at += n;
  r.boundary.assign(bytes.begin() + static_cast<long>(at), bytes.begin() + static_cast<long>(at + n));
  at += n;
  for (auto* plane : {&r.confidence, &r.margin}) {
    plane->resize(n);
    for (std::size_t i = 0; i < n; ++i, at += 4) (*plane)[i] = std::bit_cast<float>(get_u32(bytes, at));
  }
  for (std::uint8_t f : r.boundary)
    if (f > 1) throw FormatError("raster: corrupt boundary plane");
  return r;
}

std::vector<EmbeddingRecord> embed_records(const VisualizationModel& model, const SubjectCheckpoint& ckpt,
                                           const Dataset& data, const Matrix& reps) {
  if (reps.rows() != data.size()) throw DimensionError("embed_records: representation rows differ from dataset");
  const Matrix y = project(model, reps);
  const Prediction pred = predict(ckpt, reps);
  std::vector<EmbeddingRecord> out(data.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::vector<float> p = softmax(pred.logits.row(i));
    out[i] = {data.ids[i], y(i, 0), y(i, 1), data.labels[i], pred.top1[i],
              p[static_cast<std::size_t>(pred.top1[i])], data.split};
  }
  return out;
}

Json embeddings_to_json(std::span<const EmbeddingRecord> records) {
  Json out = Json::array();
  for (const EmbeddingRecord& r : records) {
    out.push_back({{"id", r.id},
                   {"x", r.x},
                   {"y", r.y},
                   {"label", r.label},
                   {"predicted", r.predicted},
                   {"confidence", r.confidence},
                   {"split", to_string(r.split)}});
  }
  return out;
}

Json palette_to_json(std::span<const Rgb> palette) {
  Json out = Json::array();
  for (const Rgb& c : palette) out.push_back({c.r, c.g, c.b});
  return out;
}

void export_bundle(const EpochBundle& bundle, const std::filesystem::path& dir) {
  const LandscapeRaster& r = bundle.raster;
  write_binary_file(dir / "raster.dvir", encode_raster(r));
  write_png(dir / "landscape.png", colorize(r, bundle.palette, bundle.shading));
  const Json meta{{"format", "dvi-epoch-bundle"},
                  {"version", kBundleVersion},
                  {"epoch", bundle.epoch},
                  {"variant", bundle.variant},
                  {"shading", to_string(bundle.shading)},
                  {"extent", {{"x_min", r.extent.x_min}, {"x_max", r.extent.x_max},
                              {"y_min", r.extent.y_min}, {"y_max", r.extent.y_max}}},
                  {"width", r.width},
                  {"height", r.height},
                  {"raster", "raster.dvir"},
                  {"image", "landscape.png"},
                  {"palette", palette_to_json(bundle.palette)},
                  {"metrics", bundle.metrics},
                  {"embeddings", embeddings_to_json(bundle.embeddings)}};
  write_json_file(dir / "bundle.json", meta);
}

EpochBundle load_bundle(const std::filesystem::path& dir) {
  const std::filesystem::path meta_path = dir / "bundle.json";
  if (!std::filesystem::exists(meta_path)) throw FormatError("bundle '" + dir.string() + "': missing bundle.json");
  const Json meta = read_json_file(meta_path);
  const std::string where = "bundle '" + meta_path.string() + "'";
  EpochBundle b;
  try {
    if (require_member(meta, "version", where).get<std::uint32_t>() != kBundleVersion) {
      throw FormatError(where + ": unsupported version");
    }
    b.epoch = require_member(meta, "epoch", where).get<int>();
    b.variant = require_member(meta, "variant", where).get<std::string>();
    b.shading = shading_from_string(require_member(meta, "shading", where).get<std::string>());
    const Json& e = require_member(meta, "extent", where);
    const Extent extent{e.at("x_min").get<double>(), e.at("x_max").get<double>(), e.at("y_min").get<double>(),
                        e.at("y_max").get<double>()};
    for (const Json& c : require_member(meta, "palette", where))
      b.palette.push_back({c.at(0).get<std::uint8_t>(), c.at(1).get<std::uint8_t>(), c.at(2).get<std::uint8_t>()});
    b.metrics = require_member(meta, "metrics", where);
    for (const Json& rec : require_member(meta, "embeddings", where)) {
      const std::string split = rec.at("split").get<std::string>();
      b.embeddings.push_back({rec.at("id").get<std::int64_t>(), rec.at("x").get<float>(), rec.at("y").get<float>(),
                              rec.at("label").get<int>(), rec.at("predicted").get<int>(),
                              rec.at("confidence").get<float>(), split == "test" ? Split::test : Split::train});
    }
    const auto bytes = read_binary_file(dir / require_member(meta, "raster", where).get<std::string>());
    b.raster = decode_raster(bytes, extent);
    if (b.raster.width != meta.at("width").get<std::size_t>() || b.raster.height != meta.at("height").get<std::size_t>()) {
      throw FormatError(where + ": raster resolution disagrees with metadata");
    }
  } catch (const Json::exception& ex) {
    throw FormatError(where + ": " + ex.what());
  } catch (const ContractError& ex) {
    throw FormatError(where + ": " + ex.what());
  }
  return b;
}

std::vector<TrajectoryPoint> sample_trajectory(std::span<const EpochBundle> bundles, std::int64_t id) {
  std::map<int, TrajectoryPoint> by_epoch;
  for (const EpochBundle& b : bundles) {
    const auto it = std::find_if(b.embeddings.begin(), b.embeddings.end(),
                                 [id](const EmbeddingRecord& r) { return r.id == id; });
    if (it == b.embeddings.end()) {
      throw NotFoundError("sample " + std::to_string(id) + " missing from epoch " + std::to_string(b.epoch));
    }
    by_epoch[b.epoch] = {b.epoch, it->x, it->y, it->predicted, it->confidence};
  }
  std::vector<TrajectoryPoint> out;
  for (const auto& [epoch, point] : by_epoch) out.push_back(point);
  return out;
}

}  // namespace dvi
