#pragma once

// Binary container shared by motion (.ldm), feature (.ldf), primitive dump
// and checkpoint files:
//
//   16-byte magic | u32 LE version | u32 LE header length | UTF-8 JSON header
//   | payload: L x channels little-endian floats (f32 or f64), row-major
//   | u32 LE CRC32 of the payload bytes
//
// The header always carries "kind", "L", "channels" and "dtype"; the payload
// size is derived from those three.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lodge/tensor.hpp"

namespace lodge::io {

inline constexpr std::uint32_t kFormatVersion = 1;

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
// Bad magic, version, JSON or inconsistent header fields (including empty files).
class HeaderError : public FormatError {
public:
    using FormatError::FormatError;
};
// Payload or trailer shorter than the header promises.
class TruncatedError : public FormatError {
public:
    using FormatError::FormatError;
};
class ChecksumError : public FormatError {
public:
    using FormatError::FormatError;
};

enum class Dtype { f32, f64 };

struct Container {
    nlohmann::json header;
    Dtype dtype = Dtype::f32;
    std::vector<double> values;  // decoded payload, L * channels
};

std::uint32_t crc32(const std::uint8_t* data, std::size_t size);

std::vector<std::uint8_t> encode(nlohmann::json header, const std::vector<double>& values, Dtype dtype);
Container decode(const std::vector<std::uint8_t>& bytes);

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

// header must already contain "kind"; L/channels/dtype are filled from the matrix.
void write_matrix(const std::filesystem::path& path, nlohmann::json header, const Mat& m, Dtype dtype);
Container read_container(const std::filesystem::path& path);
Mat container_matrix(const Container& c);

}  // namespace lodge::io
