#include "cove/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cove::io {
namespace {

void byte_swap_all(std::vector<uint32_t>& words) {
    for (auto& w : words) {
        w = ((w & 0x000000ffu) << 24) | ((w & 0x0000ff00u) << 8) |
            ((w & 0x00ff0000u) >> 8) | ((w & 0xff000000u) >> 24);
    }
}

}  // namespace

void write_f32(const std::filesystem::path& path, const float* data, std::size_t n) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for write: " + path.string());
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 4));
    } else {
        std::vector<uint32_t> words(n);
        std::memcpy(words.data(), data, n * 4);
        byte_swap_all(words);
        out.write(reinterpret_cast<const char*>(words.data()), static_cast<std::streamsize>(n * 4));
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<float> read_f32(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("cannot open for read: " + path.string());
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes % 4 != 0) throw std::runtime_error("truncated f32 file: " + path.string());
    in.seekg(0);
    std::vector<float> values(bytes / 4);
    if constexpr (std::endian::native == std::endian::little) {
        in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));
    } else {
        std::vector<uint32_t> words(bytes / 4);
        in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(bytes));
        byte_swap_all(words);
        std::memcpy(values.data(), words.data(), bytes);
    }
    if (!in) throw std::runtime_error("read failed: " + path.string());
    return values;
}

void write_matrix(const std::filesystem::path& path, const Matrix<float>& m) {
    write_f32(path, m.data(), m.size());
}

void read_matrix(const std::filesystem::path& path, Matrix<float>& m) {
    const auto values = read_f32(path);
    if (values.size() != m.size())
        throw std::runtime_error("tensor size mismatch in " + path.string() + ": expected " +
                                 std::to_string(m.size()) + " values, found " +
                                 std::to_string(values.size()));
    std::memcpy(m.data(), values.data(), values.size() * 4);
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for read: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for write: " + path.string());
    out << content;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace cove::io
