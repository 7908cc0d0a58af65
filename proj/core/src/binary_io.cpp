#include "dvi/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace dvi {

namespace {

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
}

}  // namespace

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

void write_binary_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to '" + path.string() + "'");
}

void write_f32_file(const std::filesystem::path& path, std::span<const float> values) {
  std::vector<std::uint8_t> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint32_t le = to_le(std::bit_cast<std::uint32_t>(values[i]));
    std::memcpy(bytes.data() + 4 * i, &le, 4);
  }
  write_binary_file(path, bytes);
}

std::vector<float> read_f32_file(const std::filesystem::path& path) {
  const auto bytes = read_binary_file(path);
  if (bytes.size() % 4 != 0) throw FormatError("'" + path.string() + "' is not an f32 array");
  std::vector<float> values(bytes.size() / 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t le = 0;
    std::memcpy(&le, bytes.data() + 4 * i, 4);
    values[i] = std::bit_cast<float>(to_le(le));
  }
  return values;
}

void write_matrix_f32(const std::filesystem::path& path, const Matrix& m) {
  write_f32_file(path, m.values());
}

Matrix read_matrix_f32(const std::filesystem::path& path, std::size_t rows, std::size_t cols) {
  auto values = read_f32_file(path);
  if (values.size() != rows * cols) {
    throw FormatError("'" + path.string() + "' holds " + std::to_string(values.size()) +
                      " values, expected " + std::to_string(rows * cols));
  }
  return Matrix(rows, cols, std::move(values));
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  write_binary_file(path, std::span<const std::uint8_t>(
                              reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint32_t read_be32(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw FormatError("truncated big-endian word");
  return (std::uint32_t{bytes[0]} << 24) | (std::uint32_t{bytes[1]} << 16) |
         (std::uint32_t{bytes[2]} << 8) | std::uint32_t{bytes[3]};
}

}  // namespace dvi
