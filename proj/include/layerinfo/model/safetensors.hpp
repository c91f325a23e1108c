#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace layerinfo::model {

// A dense row-major tensor widened to float32.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<float> data;

  std::int64_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t numel() const { return data.size(); }
};

// Read-only view of one .safetensors file. The file is memory-mapped; tensors
// are converted (F32/F16/BF16/F64 -> F32) only when requested.
class SafetensorsFile {
 public:
  explicit SafetensorsFile(const std::filesystem::path& path);
  ~SafetensorsFile();
  SafetensorsFile(const SafetensorsFile&) = delete;
  SafetensorsFile& operator=(const SafetensorsFile&) = delete;

  bool contains(const std::string& name) const;
  std::vector<std::string> names() const;
  Tensor load(const std::string& name) const;

 private:
  struct Entry {
    std::string dtype;
    std::vector<std::int64_t> shape;
    std::size_t begin = 0;
    std::size_t end = 0;
  };

  std::filesystem::path path_;
  void* map_ = nullptr;
  std::size_t map_size_ = 0;
  std::size_t data_offset_ = 0;
  std::map<std::string, Entry> entries_;
};

// All tensors of a checkpoint directory: either a single model.safetensors or
// shards listed in model.safetensors.index.json.
class TensorStore {
 public:
  static TensorStore open_directory(const std::filesystem::path& dir);

  bool contains(const std::string& name) const;
  Tensor load(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  std::vector<std::shared_ptr<SafetensorsFile>> files_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace layerinfo::model
