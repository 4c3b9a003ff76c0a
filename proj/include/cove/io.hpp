#pragma once
// Raw tensor files (little-endian float32) and small filesystem helpers.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cove/mat.hpp"

namespace cove::io {

void write_f32(const std::filesystem::path& path, const float* data, std::size_t n);
std::vector<float> read_f32(const std::filesystem::path& path);

void write_matrix(const std::filesystem::path& path, const Matrix<float>& m);
// Shape comes from the caller; the file carries only raw values.
void read_matrix(const std::filesystem::path& path, Matrix<float>& m);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& content);

}  // namespace cove::io
