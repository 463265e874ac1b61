#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace duskill::nn {

/// A named float tensor as stored on disk.
struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<float> data;
};

/// Binary tensor file: u32 count, then per tensor
/// {u32 name_len, name bytes, u32 ndim, u32 dims[ndim], f32 data[prod(dims)]}.
/// All integers and floats little-endian.
void write_tensor_file(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensor_file(const std::filesystem::path& path);

/// Little-endian primitive helpers shared by the binary formats.
void append_u32(std::string& out, std::uint32_t v);
void append_f32(std::string& out, float v);
std::uint32_t read_u32(const std::string& in, std::size_t& pos);
float read_f32(const std::string& in, std::size_t& pos);

std::string read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::string& bytes);

}  // namespace duskill::nn
