#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace blockmerge {

/// One named dense f32 tensor, row-major.
struct Tensor {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<float> data;

  std::uint64_t element_count() const;
  bool operator==(const Tensor&) const = default;
};

/// Ordered collection of tensors making up one model. Entry order is the file
/// order and is preserved through load/save.
class TensorMap {
 public:
  TensorMap() = default;

  /// Appends a tensor; throws ShapeError if the data length does not match
  /// the shape or FormatError if the name is already present.
  void add(Tensor tensor);

  const std::vector<Tensor>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  const Tensor* find(const std::string& name) const;
  const Tensor& at(const std::string& name) const;
  Tensor& mutable_at(const std::string& name);

  std::map<std::string, std::string>& metadata() noexcept { return metadata_; }
  const std::map<std::string, std::string>& metadata() const noexcept { return metadata_; }

  bool operator==(const TensorMap& other) const;

 private:
  std::vector<Tensor> entries_;
  std::unordered_map<std::string, std::size_t> by_name_;
  std::map<std::string, std::string> metadata_;
};

/// Throws ShapeError unless `other` has the same tensor names with the same
/// shapes as `reference` (order may differ).
void require_compatible(const TensorMap& reference, const TensorMap& other,
                        const std::string& what);

/// Serialize to the container byte layout:
///   u64 LE header length N | N bytes JSON header | payload (f32 LE, row-major)
std::vector<std::uint8_t> encode_tensor_map(const TensorMap& map);
TensorMap decode_tensor_map(const std::vector<std::uint8_t>& bytes);

void save_tensor_map(const TensorMap& map, const std::filesystem::path& path);
TensorMap load_tensor_map(const std::filesystem::path& path);

/// Maps tensor names to layer indices 0..L-1 plus boundary (embedding/head)
/// tensors.
struct LayerGroup {
  int layer_id = 0;
  std::vector<std::string> tensor_names;
};

struct LayerIndex {
  std::vector<LayerGroup> layer_groups;
  std::vector<std::string> embedding_names;
  std::vector<std::string> head_names;

  int layer_count() const noexcept { return static_cast<int>(layer_groups.size()); }
};

/// Groups tensors by the integer captured at `{n}` in `layer_pattern`
/// (e.g. "layers.{n}."). The pattern is matched as a substring of each name.
/// Unmatched names ahead of the first layer tensor are embedding tensors;
/// those after the last one are head tensors.
LayerIndex infer_layer_index(const TensorMap& map, const std::string& layer_pattern);

}  // namespace blockmerge
