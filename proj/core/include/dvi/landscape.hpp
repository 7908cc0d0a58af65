#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dvi/dataset.hpp"
#include "dvi/json_io.hpp"
#include "dvi/matrix.hpp"
#include "dvi/png.hpp"
#include "dvi/subject.hpp"
#include "dvi/visualizer.hpp"

namespace dvi {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  bool operator==(const Rgb&) const = default;
};

inline constexpr Rgb kWhite{255, 255, 255};

/// `classes` evenly spaced hues at fixed saturation and value; never white.
std::vector<Rgb> make_palette(std::size_t classes);

enum class Shading : std::uint8_t { softmax, margin };

std::string to_string(Shading s);
Shading shading_from_string(const std::string& name);

/// Linear sRGB blend from a near-white tint of `base` at strength 1/C to
/// `base` at strength 1. Lightness strictly decreases as strength grows.
Rgb shade(Rgb base, double strength, std::size_t classes);

struct Extent {
  double x_min = 0.0;
  double x_max = 1.0;
  double y_min = 0.0;
  double y_max = 1.0;
  bool operator==(const Extent&) const = default;
};

/// Bounding box of `points` grown by `margin` of its size on each side.
Extent embedding_extent(const Matrix& points, double margin = 0.05);

struct LandscapeRaster {
  std::size_t width = 0;
  std::size_t height = 0;
  Extent extent;
  std::vector<std::uint8_t> classes;   ///< argmax g(psi(y)) per pixel
  std::vector<std::uint8_t> boundary;  ///< 1 where the delta test holds
  std::vector<float> confidence;       ///< softmax top-1 per pixel
  std::vector<float> margin;           ///< rescaled top1 - top2 gap per pixel

  std::size_t pixel_count() const noexcept { return width * height; }
  std::size_t index(std::size_t px, std::size_t py) const noexcept { return py * width + px; }
  /// Embedding coordinates of a pixel center; row 0 is the top (y_max) edge.
  std::pair<double, double> pixel_center(std::size_t px, std::size_t py) const;
  /// Pixel containing an embedding point, clamped to the raster.
  std::pair<std::size_t, std::size_t> pixel_of(double x, double y) const;
};

struct RenderParams {
  std::size_t width = 300;
  std::size_t height = 300;
  double delta = 0.1;
  Shading shading = Shading::softmax;
  /// Pixels decoded per forward pass.
  std::size_t block = 4096;
  /// Worker threads for pixel blocks; 0 picks the hardware concurrency.
  std::size_t threads = 0;
};

struct PixelVerdict {
  int cls = 0;
  bool boundary = false;
  float confidence = 0.0f;
  float margin = 0.0f;
};

/// Decision for decoded representations: class, delta flag, softmax top-1 and
/// rescaled margin. Constant logits count as boundary.
PixelVerdict classify_logits(std::span<const float> logits, double delta);

/// Evaluates g(psi(y)) at every pixel center of `extent`.
/// Throws RenderError naming the pixel when the decoder output is not finite.
LandscapeRaster render_landscape(const VisualizationModel& model, const SubjectCheckpoint& ckpt,
                                 const Extent& extent, const RenderParams& params);

/// Colors per pixel: white on boundary, else the shaded class color.
RgbImage colorize(const LandscapeRaster& raster, std::span<const Rgb> palette, Shading shading);

struct ScatterPoint {
  double x = 0.0;
  double y = 0.0;
  int label = 0;
};

/// Draws small dark-outlined dots in their label colors over `image`.
void overlay_scatter(RgbImage& image, const LandscapeRaster& raster, std::span<const ScatterPoint> points,
                     std::span<const Rgb> palette);

/// 16-byte header ("DVIR", version, width, height as little-endian u32), then
/// class bytes, flag bytes, and little-endian f32 confidence and margin planes.
std::vector<std::uint8_t> encode_raster(const LandscapeRaster& raster);
LandscapeRaster decode_raster(std::span<const std::uint8_t> bytes, const Extent& extent);

struct EmbeddingRecord {
  std::int64_t id = 0;
  float x = 0.0f;
  float y = 0.0f;
  int label = 0;
  int predicted = 0;
  float confidence = 0.0f;
  Split split = Split::train;
  bool operator==(const EmbeddingRecord&) const = default;
};

struct EpochBundle {
  int epoch = 1;
  std::string variant = "DVI";
  std::vector<EmbeddingRecord> embeddings;
  LandscapeRaster raster;
  Shading shading = Shading::softmax;
  Json metrics = Json::object();
  std::vector<Rgb> palette;
};

/// Records for one split: positions from the encoder, predictions from the subject.
std::vector<EmbeddingRecord> embed_records(const VisualizationModel& model, const SubjectCheckpoint& ckpt,
                                           const Dataset& data, const Matrix& reps);

/// Writes bundle.json, raster.dvir and landscape.png into `dir`.
void export_bundle(const EpochBundle& bundle, const std::filesystem::path& dir);
EpochBundle load_bundle(const std::filesystem::path& dir);
Json embeddings_to_json(std::span<const EmbeddingRecord> records);
Json palette_to_json(std::span<const Rgb> palette);

struct TrajectoryPoint {
  int epoch = 0;
  float x = 0.0f;
  float y = 0.0f;
  int predicted = 0;
  float confidence = 0.0f;
};

/// One entry per bundle in epoch order. Throws NotFoundError when a bundle lacks `id`.
std::vector<TrajectoryPoint> sample_trajectory(std::span<const EpochBundle> bundles, std::int64_t id);

}  // namespace dvi
