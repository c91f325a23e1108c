#include "layerinfo/model/safetensors.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "layerinfo/error.hpp"

namespace layerinfo::model {
namespace {

float half_to_float(std::uint16_t h) {
  const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
  std::uint32_t exp = (h >> 10) & 0x1fu;
  std::uint32_t mant = h & 0x3ffu;
  std::uint32_t bits;
  if (exp == 0) {
    if (mant == 0) {
      bits = sign;
    } else {
      // subnormal: renormalise
      exp = 127 - 15 + 1;
      while ((mant & 0x400u) == 0) {
        mant <<= 1;
        --exp;
      }
      mant &= 0x3ffu;
      bits = sign | (exp << 23) | (mant << 13);
    }
  } else if (exp == 0x1f) {
    bits = sign | 0x7f800000u | (mant << 13);
  } else {
    bits = sign | ((exp + 127 - 15) << 23) | (mant << 13);
  }
  return std::bit_cast<float>(bits);
}

float bf16_to_float(std::uint16_t h) {
  return std::bit_cast<float>(static_cast<std::uint32_t>(h) << 16);
}

std::size_t dtype_size(const std::string& dtype) {
  if (dtype == "F32") return 4;
  if (dtype == "F16" || dtype == "BF16") return 2;
  if (dtype == "F64") return 8;
  return 0;
}

}  // namespace

SafetensorsFile::SafetensorsFile(const std::filesystem::path& path) : path_(path) {
  const int fd = ::open(path.c_str(), O_RDONLY);
  if (fd < 0) throw LoadError("cannot open " + path.string());
  struct stat st {};
  if (::fstat(fd, &st) != 0 || st.st_size < 8) {
    ::close(fd);
    throw LoadError("not a safetensors file: " + path.string());
  }
  map_size_ = static_cast<std::size_t>(st.st_size);
  map_ = ::mmap(nullptr, map_size_, PROT_READ, MAP_PRIVATE, fd, 0);
  ::close(fd);
  if (map_ == MAP_FAILED) {
    map_ = nullptr;
    throw LoadError("mmap failed for " + path.string());
  }

  const auto* bytes = static_cast<const unsigned char*>(map_);
  std::uint64_t header_len = 0;
  for (int i = 7; i >= 0; --i) header_len = (header_len << 8) | bytes[i];
  if (header_len > map_size_ - 8) throw LoadError("corrupt safetensors header: " + path.string());
  data_offset_ = 8 + header_len;

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes + 8, bytes + 8 + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("corrupt safetensors header in " + path.string() + ": " + e.what());
  }
  for (const auto& [name, info] : header.items()) {
    if (name == "__metadata__") continue;
    Entry entry;
    entry.dtype = info.at("dtype").get<std::string>();
    entry.shape = info.at("shape").get<std::vector<std::int64_t>>();
    const auto offsets = info.at("data_offsets").get<std::vector<std::size_t>>();
    entry.begin = offsets.at(0);
    entry.end = offsets.at(1);
    if (data_offset_ + entry.end > map_size_ || entry.begin > entry.end) {
      throw LoadError("tensor " + name + " out of bounds in " + path.string());
    }
    entries_.emplace(name, std::move(entry));
  }
}

SafetensorsFile::~SafetensorsFile() {
  if (map_ != nullptr) ::munmap(map_, map_size_);
}

bool SafetensorsFile::contains(const std::string& name) const { return entries_.count(name) > 0; }

std::vector<std::string> SafetensorsFile::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

Tensor SafetensorsFile::load(const std::string& name) const {
  const auto it = entries_.find(name);
  if (it == entries_.end()) throw LoadError("tensor not found: " + name);
  const Entry& e = it->second;
  const std::size_t width = dtype_size(e.dtype);
  if (width == 0) throw LoadError("unsupported dtype " + e.dtype + " for tensor " + name);

  std::size_t count = 1;
  for (auto d : e.shape) count *= static_cast<std::size_t>(d);
  if (count * width != e.end - e.begin) throw LoadError("size mismatch for tensor " + name);

  Tensor t;
  t.shape = e.shape;
  t.data.resize(count);
  const auto* src = static_cast<const unsigned char*>(map_) + data_offset_ + e.begin;
  // safetensors is little-endian; so is every platform we build on.
  if (e.dtype == "F32") {
    std::memcpy(t.data.data(), src, count * 4);
  } else if (e.dtype == "F64") {
    for (std::size_t i = 0; i < count; ++i) {
      double v;
      std::memcpy(&v, src + 8 * i, 8);
      t.data[i] = static_cast<float>(v);
    }
  } else {
    const bool is_bf16 = e.dtype == "BF16";
    for (std::size_t i = 0; i < count; ++i) {
      std::uint16_t h;
      std::memcpy(&h, src + 2 * i, 2);
      t.data[i] = is_bf16 ? bf16_to_float(h) : half_to_float(h);
    }
  }
  return t;
}

TensorStore TensorStore::open_directory(const std::filesystem::path& dir) {
  TensorStore store;
  const auto single = dir / "model.safetensors";
  const auto index = dir / "model.safetensors.index.json";
  if (std::filesystem::exists(single)) {
    store.files_.push_back(std::make_shared<SafetensorsFile>(single));
  } else if (std::filesystem::exists(index)) {
    std::ifstream in(index);
    const auto doc = nlohmann::json::parse(in);
    std::map<std::string, std::size_t> shard_ids;
    for (const auto& [name, shard] : doc.at("weight_map").items()) {
      const auto file = shard.get<std::string>();
      if (!shard_ids.count(file)) {
        shard_ids[file] = store.files_.size();
        store.files_.push_back(std::make_shared<SafetensorsFile>(dir / file));
      }
    }
  } else {
    throw LoadError("no safetensors weights in " + dir.string());
  }
  for (std::size_t i = 0; i < store.files_.size(); ++i) {
    for (const auto& name : store.files_[i]->names()) store.index_[name] = i;
  }
  return store;
}

bool TensorStore::contains(const std::string& name) const { return index_.count(name) > 0; }

Tensor TensorStore::load(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw LoadError("tensor not found: " + name);
  return files_[it->second]->load(name);
}

std::vector<std::string> TensorStore::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : index_) out.push_back(name);
  return out;
}

}  // namespace layerinfo::model
