#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dvi/matrix.hpp"

namespace dvi {

/// Little-endian float32 array, no header.
void write_f32_file(const std::filesystem::path& path, std::span<const float> values);
std::vector<float> read_f32_file(const std::filesystem::path& path);

/// Matrix payload as a flat f32 array; the shape lives in a sidecar.
void write_matrix_f32(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix_f32(const std::filesystem::path& path, std::size_t rows, std::size_t cols);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

std::uint32_t read_be32(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path);
void write_binary_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace dvi
