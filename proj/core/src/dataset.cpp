#include "dvi/dataset.hpp"

#include <cmath>
#include <random>
#include <unordered_set>

#include "dvi/binary_io.hpp"

namespace dvi {

std::string to_string(Split split) { return split == Split::train ? "train" : "test"; }

void Dataset::validate() const {
  if (inputs.rows() == 0 || inputs.cols() == 0) throw ContractError("dataset: empty inputs");
  if (labels.size() != inputs.rows() || ids.size() != inputs.rows()) {
    throw ContractError("dataset: labels/ids not aligned with inputs");
  }
  if (class_count < 2) throw ContractError("dataset: need at least two classes");
  for (int label : labels) {
    if (label < 0 || label >= class_count) throw ContractError("dataset: label out of range");
  }
  std::unordered_set<std::int64_t> seen(ids.begin(), ids.end());
  if (seen.size() != ids.size()) throw ContractError("dataset: duplicate sample ids");
}

namespace {

Dataset sample_blobs(const BlobsSpec& spec, std::size_t count, std::uint64_t seed, Split split,
                     std::int64_t id_offset) {
  Dataset ds;
  ds.class_count = spec.classes;
  ds.split = split;
  ds.inputs = Matrix(count, spec.dim);
  ds.labels.resize(count);
  ds.ids.resize(count);
  const double offset = spec.separation * spec.sigma / std::sqrt(2.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, spec.sigma);
  for (std::size_t i = 0; i < count; ++i) {
    const int label = static_cast<int>(i % static_cast<std::size_t>(spec.classes));
    ds.labels[i] = label;
    ds.ids[i] = id_offset + static_cast<std::int64_t>(i);
    auto row = ds.inputs.row(i);
    for (std::size_t j = 0; j < spec.dim; ++j) {
      const double center = j == static_cast<std::size_t>(label) ? offset : 0.0;
      row[j] = static_cast<float>(center + noise(rng));
    }
  }
  return ds;
}

}  // namespace

std::pair<Dataset, Dataset> make_blobs(const BlobsSpec& spec) {
  if (spec.classes < 2) throw ContractError("blobs: need at least two classes");
  if (static_cast<std::size_t>(spec.classes) > spec.dim) {
    throw ContractError("blobs: class count may not exceed dimension");
  }
  if (spec.train_count == 0) throw ContractError("blobs: empty training split");
  Dataset train = sample_blobs(spec, spec.train_count, spec.seed, Split::train, 0);
  Dataset test = sample_blobs(spec, spec.test_count, spec.seed ^ 0x9E3779B97F4A7C15ull,
                              Split::test, static_cast<std::int64_t>(spec.train_count));
  return {std::move(train), std::move(test)};
}

IdxImages read_idx_images(const std::filesystem::path& path) {
  const auto bytes = read_binary_file(path);
  if (bytes.size() < 16) throw FormatError("idx: truncated header in '" + path.string() + "'");
  const std::span<const std::uint8_t> view(bytes);
  if (read_be32(view.subspan(0, 4)) != 0x00000803u) {
    throw FormatError("idx: bad image magic in '" + path.string() + "'");
  }
  IdxImages images;
  images.count = read_be32(view.subspan(4, 4));
  images.rows = read_be32(view.subspan(8, 4));
  images.cols = read_be32(view.subspan(12, 4));
  const std::size_t payload = images.count * images.rows * images.cols;
  if (bytes.size() - 16 < payload) throw FormatError("idx: truncated image payload");
  images.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(payload));
  return images;
}

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
  const auto bytes = read_binary_file(path);
  if (bytes.size() < 8) throw FormatError("idx: truncated header in '" + path.string() + "'");
  const std::span<const std::uint8_t> view(bytes);
  if (read_be32(view.subspan(0, 4)) != 0x00000801u) {
    throw FormatError("idx: bad label magic in '" + path.string() + "'");
  }
  const std::size_t count = read_be32(view.subspan(4, 4));
  if (bytes.size() - 8 < count) throw FormatError("idx: truncated label payload");
  return {bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(count)};
}

namespace {

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace

void write_idx_images(const std::filesystem::path& path, const IdxImages& images) {
  std::vector<std::uint8_t> out;
  put_be32(out, 0x00000803u);
  put_be32(out, static_cast<std::uint32_t>(images.count));
  put_be32(out, static_cast<std::uint32_t>(images.rows));
  put_be32(out, static_cast<std::uint32_t>(images.cols));
  out.insert(out.end(), images.pixels.begin(), images.pixels.end());
  write_binary_file(path, out);
}

void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> out;
  put_be32(out, 0x00000801u);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  write_binary_file(path, out);
}

Dataset load_idx_dataset(const std::filesystem::path& images_path,
                         const std::filesystem::path& labels_path, std::size_t limit,
                         int class_count, Split split, std::int64_t id_offset) {
  const IdxImages images = read_idx_images(images_path);
  const auto labels = read_idx_labels(labels_path);
  if (labels.size() != images.count) throw FormatError("idx: image/label count mismatch");
  const std::size_t n = limit == 0 ? images.count : std::min(limit, images.count);
  const std::size_t dim = images.rows * images.cols;
  Dataset ds;
  ds.class_count = class_count;
  ds.split = split;
  ds.inputs = Matrix(n, dim);
  ds.labels.resize(n);
  ds.ids.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = ds.inputs.row(i);
    for (std::size_t j = 0; j < dim; ++j) {
      row[j] = static_cast<float>(images.pixels[i * dim + j]) / 255.0f;
    }
    ds.labels[i] = labels[i];
    ds.ids[i] = id_offset + static_cast<std::int64_t>(i);
  }
  ds.validate();
  return ds;
}

}  // namespace dvi
