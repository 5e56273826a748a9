#include "kbnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace kbnet {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

namespace {
constexpr char kMagic[4] = {'K', 'B', 'N', 'T'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}
}  // namespace

void save_arrays(const std::string& path,
                 const std::vector<std::pair<std::string, Tensor>>& arrays) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out.write(kMagic, 4);
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::uint64_t>(arrays.size()));
  std::uint64_t offset = 0;
  for (const auto& [name, t] : arrays) {
    write_pod(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Shape4 s = t.shape();
    write_pod(out, static_cast<std::int32_t>(s.n));
    write_pod(out, static_cast<std::int32_t>(s.c));
    write_pod(out, static_cast<std::int32_t>(s.h));
    write_pod(out, static_cast<std::int32_t>(s.w));
    write_pod(out, offset);
    offset += static_cast<std::uint64_t>(t.numel()) * sizeof(double);
  }
  for (const auto& [name, t] : arrays) {
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

std::vector<std::pair<std::string, Tensor>> load_arrays(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path);
  }
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = read_pod<std::uint64_t>(in);
  struct Entry {
    std::string name;
    Shape4 shape;
    std::uint64_t offset;
  };
  std::vector<Entry> index;
  for (std::uint64_t i = 0; i < count; ++i) {
    Entry e;
    const auto len = read_pod<std::uint32_t>(in);
    e.name.resize(len);
    in.read(e.name.data(), len);
    e.shape.n = read_pod<std::int32_t>(in);
    e.shape.c = read_pod<std::int32_t>(in);
    e.shape.h = read_pod<std::int32_t>(in);
    e.shape.w = read_pod<std::int32_t>(in);
    e.offset = read_pod<std::uint64_t>(in);
    index.push_back(std::move(e));
  }
  const std::streampos payload = in.tellg();
  std::vector<std::pair<std::string, Tensor>> out;
  for (const Entry& e : index) {
    Tensor t = Tensor::zeros(e.shape);
    in.seekg(payload + static_cast<std::streamoff>(e.offset));
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated payload in " + path);
    out.emplace_back(e.name, t);
  }
  return out;
}

void load_model_params(ModelParams& params, const std::string& path) {
  const auto arrays = load_arrays(path);
  auto named = params.named_parameters();
  for (auto& [name, dst] : named) {
    const Tensor* src = nullptr;
    for (const auto& [aname, t] : arrays) {
      if (aname == name) {
        src = &t;
        break;
      }
    }
    if (!src) throw std::runtime_error("checkpoint missing parameter '" + name + "'");
    if (!(src->shape() == dst.shape())) {
      throw std::runtime_error("checkpoint parameter '" + name + "' has shape " +
                               src->shape().str() + ", expected " + dst.shape().str());
    }
    dst.values() = src->values();
  }
}

}  // namespace kbnet
