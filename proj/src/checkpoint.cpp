#include "maxent/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace maxent {

static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

const torch::Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [key, value] : tensors)
    if (key == name) return &value;
  return nullptr;
}

namespace {

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_string(std::ofstream& out, const std::string& s) {
  put<uint32_t>(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw std::runtime_error("checkpoint is truncated");
  return v;
}

std::string get_string(std::ifstream& in) {
  const auto n = get<uint32_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw std::runtime_error("checkpoint is truncated");
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(Checkpoint::kMagic, 4);
  put<uint32_t>(out, Checkpoint::kVersion);
  put<uint32_t>(out, static_cast<uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    put_string(out, k);
    put_string(out, v);
  }
  put<uint32_t>(out, static_cast<uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, tensor] : ckpt.tensors) {
    put_string(out, name);
    auto t = tensor.detach().to(torch::kFloat32).contiguous();
    put<uint32_t>(out, static_cast<uint32_t>(t.dim()));
    for (auto d : t.sizes()) put<uint64_t>(out, static_cast<uint64_t>(d));
    out.write(reinterpret_cast<const char*>(t.data_ptr<float>()), static_cast<std::streamsize>(t.numel() * 4));
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, Checkpoint::kMagic, 4) != 0) throw std::runtime_error("not a checkpoint: bad magic");
  const auto version = get<uint32_t>(in);
  if (version != Checkpoint::kVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  const auto n_meta = get<uint32_t>(in);
  for (uint32_t i = 0; i < n_meta; ++i) {
    auto k = get_string(in);
    ckpt.metadata[k] = get_string(in);
  }
  const auto n_tensors = get<uint32_t>(in);
  for (uint32_t i = 0; i < n_tensors; ++i) {
    auto name = get_string(in);
    const auto ndim = get<uint32_t>(in);
    std::vector<int64_t> shape(ndim);
    for (auto& d : shape) d = static_cast<int64_t>(get<uint64_t>(in));
    auto t = torch::empty(shape, torch::kFloat32);
    in.read(reinterpret_cast<char*>(t.data_ptr<float>()), static_cast<std::streamsize>(t.numel() * 4));
    if (!in) throw std::runtime_error("checkpoint is truncated");
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

}  // namespace maxent
