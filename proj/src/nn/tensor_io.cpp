#include "duskill/nn/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "duskill/error.hpp"

namespace duskill::nn {

void append_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void append_f32(std::string& out, float v) { append_u32(out, std::bit_cast<std::uint32_t>(v)); }

std::uint32_t read_u32(const std::string& in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw FileError("truncated binary data");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 4;
  return v;
}

float read_f32(const std::string& in, std::size_t& pos) { return std::bit_cast<float>(read_u32(in, pos)); }

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FileError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FileError("cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FileError("write failed for " + path.string());
}

void write_tensor_file(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::string out;
  append_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    std::size_t n = 1;
    for (auto d : t.shape) n *= d;
    if (n != t.data.size()) throw ContractError("tensor '" + t.name + "' shape does not match data length");
    append_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    append_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) append_u32(out, d);
    for (float v : t.data) append_f32(out, v);
  }
  write_file_bytes(path, out);
}

std::vector<NamedTensor> read_tensor_file(const std::filesystem::path& path) {
  const std::string in = read_file_bytes(path);
  std::size_t pos = 0;
  const auto count = read_u32(in, pos);
  // Each tensor takes at least 8 header bytes; reject counts the file cannot hold.
  if (count > (in.size() - pos) / 8) throw FileError("corrupt tensor count in " + path.string());
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto len = read_u32(in, pos);
    if (pos + len > in.size()) throw FileError("truncated tensor name in " + path.string());
    t.name = in.substr(pos, len);
    pos += len;
    const auto ndim = read_u32(in, pos);
    if (ndim > (in.size() - pos) / 4) throw FileError("corrupt tensor rank in " + path.string());
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      t.shape.push_back(read_u32(in, pos));
      if (t.shape.back() != 0 && n > (in.size() - pos) / 4 / t.shape.back())
        throw FileError("tensor '" + t.name + "' exceeds file size in " + path.string());
      n *= t.shape.back();
    }
    t.data.resize(n);
    for (std::size_t k = 0; k < n; ++k) t.data[k] = read_f32(in, pos);
    out.push_back(std::move(t));
  }
  if (pos != in.size()) throw FileError("trailing bytes in tensor file " + path.string());
  return out;
}

}  // namespace duskill::nn
