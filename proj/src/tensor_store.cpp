#include "blockmerge/tensor_store.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <regex>
#include <set>

#include <json.hpp>

#include "blockmerge/errors.hpp"

namespace blockmerge {

using ordered_json = nlohmann::ordered_json;

std::uint64_t Tensor::element_count() const {
  std::uint64_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

void TensorMap::add(Tensor tensor) {
  if (tensor.element_count() != tensor.data.size()) {
    throw ShapeError("tensor '" + tensor.name + "' has " + std::to_string(tensor.data.size()) +
                     " values but its shape holds " + std::to_string(tensor.element_count()));
  }
  for (auto s : tensor.shape) {
    if (s == 0) throw ShapeError("tensor '" + tensor.name + "' has a zero-sized dimension");
  }
  if (by_name_.count(tensor.name)) throw FormatError("duplicate tensor name '" + tensor.name + "'");
  by_name_.emplace(tensor.name, entries_.size());
  entries_.push_back(std::move(tensor));
}

const Tensor* TensorMap::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : &entries_[it->second];
}

const Tensor& TensorMap::at(const std::string& name) const {
  const Tensor* t = find(name);
  if (!t) throw ShapeError("missing tensor '" + name + "'");
  return *t;
}

Tensor& TensorMap::mutable_at(const std::string& name) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw ShapeError("missing tensor '" + name + "'");
  return entries_[it->second];
}

bool TensorMap::operator==(const TensorMap& other) const {
  if (metadata_ != other.metadata_ || entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const Tensor& a = entries_[i];
    const Tensor& b = other.entries_[i];
    if (a.name != b.name || a.shape != b.shape || a.data.size() != b.data.size()) return false;
    // bitwise, so NaN payloads and signed zeros compare exactly
    if (!a.data.empty() &&
        std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) != 0) {
      return false;
    }
  }
  return true;
}

void require_compatible(const TensorMap& reference, const TensorMap& other,
                        const std::string& what) {
  if (reference.size() != other.size()) {
    throw ShapeError(what + ": tensor count " + std::to_string(other.size()) + " differs from " +
                     std::to_string(reference.size()));
  }
  for (const Tensor& t : reference.entries()) {
    const Tensor* o = other.find(t.name);
    if (!o) throw ShapeError(what + ": missing tensor '" + t.name + "'");
    if (o->shape != t.shape) throw ShapeError(what + ": shape mismatch for '" + t.name + "'");
  }
}

namespace {

void put_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void append_f32_le(std::vector<std::uint8_t>& out, const std::vector<float>& data) {
  const std::size_t start = out.size();
  out.resize(start + data.size() * 4);
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(out.data() + start, data.data(), data.size() * 4);
  } else {
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(data[i]);
      for (int b = 0; b < 4; ++b) out[start + 4 * i + b] = static_cast<std::uint8_t>(bits >> (8 * b));
    }
  }
}

void read_f32_le(const std::uint8_t* src, std::vector<float>& data) {
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(data.data(), src, data.size() * 4);
  } else {
    for (std::size_t i = 0; i < data.size(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(src[4 * i + b]) << (8 * b);
      data[i] = std::bit_cast<float>(bits);
    }
  }
}

}  // namespace

std::vector<std::uint8_t> encode_tensor_map(const TensorMap& map) {
  ordered_json header;
  header["tensors"] = ordered_json::array();
  std::uint64_t offset = 0;
  for (const Tensor& t : map.entries()) {
    const std::uint64_t nbytes = t.data.size() * 4;
    ordered_json entry;
    entry["name"] = t.name;
    entry["shape"] = t.shape;
    entry["dtype"] = "f32";
    entry["offset"] = offset;
    entry["nbytes"] = nbytes;
    header["tensors"].push_back(std::move(entry));
    offset += nbytes;
  }
  header["metadata"] = ordered_json::object();
  for (const auto& [k, v] : map.metadata()) header["metadata"][k] = v;

  const std::string text = header.dump();
  std::vector<std::uint8_t> out;
  out.reserve(8 + text.size() + offset);
  put_u64_le(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const Tensor& t : map.entries()) append_f32_le(out, t.data);
  return out;
}

TensorMap decode_tensor_map(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8) throw FormatError("file shorter than the 8-byte header length");
  const std::uint64_t header_len = get_u64_le(bytes.data());
  if (header_len > bytes.size() - 8) throw FormatError("header length exceeds file size");

  ordered_json header;
  try {
    header = ordered_json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("header is not valid JSON: ") + e.what());
  }
  if (!header.is_object() || !header.contains("tensors") || !header["tensors"].is_array()) {
    throw FormatError("header lacks a 'tensors' array");
  }

  TensorMap map;
  const std::uint8_t* payload = bytes.data() + 8 + header_len;
  const std::uint64_t payload_len = bytes.size() - 8 - header_len;
  std::uint64_t expected_offset = 0;
  try {
    for (const auto& entry : header["tensors"]) {
      Tensor t;
      t.name = entry.at("name").get<std::string>();
      t.shape = entry.at("shape").get<std::vector<std::uint64_t>>();
      if (entry.at("dtype").get<std::string>() != "f32") {
        throw FormatError("tensor '" + t.name + "' has unsupported dtype");
      }
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto nbytes = entry.at("nbytes").get<std::uint64_t>();
      if (nbytes != t.element_count() * 4) {
        throw CorruptPayload("tensor '" + t.name + "' declares " + std::to_string(nbytes) +
                             " bytes but its shape needs " + std::to_string(t.element_count() * 4));
      }
      if (offset != expected_offset) {
        throw FormatError("tensor '" + t.name + "' is not contiguous with its predecessor");
      }
      if (offset + nbytes > payload_len) {
        throw CorruptPayload("payload truncated inside tensor '" + t.name + "'");
      }
      t.data.resize(t.element_count());
      read_f32_le(payload + offset, t.data);
      expected_offset += nbytes;
      map.add(std::move(t));
    }
    if (header.contains("metadata")) {
      for (const auto& [k, v] : header["metadata"].items()) map.metadata()[k] = v.get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed tensor header: ") + e.what());
  }
  if (expected_offset != payload_len) {
    throw CorruptPayload("payload has " + std::to_string(payload_len) + " bytes, header declares " +
                         std::to_string(expected_offset));
  }
  return map;
}

void save_tensor_map(const TensorMap& map, const std::filesystem::path& path) {
  const auto bytes = encode_tensor_map(map);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

TensorMap load_tensor_map(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_tensor_map(bytes);
}

namespace {

std::regex pattern_to_regex(const std::string& layer_pattern) {
  const auto pos = layer_pattern.find("{n}");
  if (pos == std::string::npos) throw PatternError("layer pattern lacks the '{n}' placeholder");
  auto escape = [](const std::string& s) {
    static const std::string special = R"(\^$.|?*+()[]{})";
    std::string out;
    for (char c : s) {
      if (special.find(c) != std::string::npos) out.push_back('\\');
      out.push_back(c);
    }
    return out;
  };
  return std::regex(escape(layer_pattern.substr(0, pos)) + "([0-9]+)" +
                    escape(layer_pattern.substr(pos + 3)));
}

}  // namespace

LayerIndex infer_layer_index(const TensorMap& map, const std::string& layer_pattern) {
  const std::regex re = pattern_to_regex(layer_pattern);

  std::vector<long> captured(map.size(), -1);
  std::size_t first = map.size();
  std::size_t last = 0;
  std::map<long, std::vector<std::string>> groups;
  for (std::size_t i = 0; i < map.size(); ++i) {
    const std::string& name = map.entries()[i].name;
    std::smatch m;
    if (std::regex_search(name, m, re)) {
      captured[i] = std::stol(m[1].str());
      groups[captured[i]].push_back(name);
      first = std::min(first, i);
      last = i;
    }
  }
  if (groups.empty()) throw PatternError("pattern '" + layer_pattern + "' matches no tensor");

  long expected = 0;
  for (const auto& [id, names] : groups) {
    if (id != expected) {
      throw IndexGapError("layer ids are not contiguous from 0: expected " +
                          std::to_string(expected) + ", found " + std::to_string(id));
    }
    ++expected;
  }

  LayerIndex index;
  for (auto& [id, names] : groups) index.layer_groups.push_back({static_cast<int>(id), std::move(names)});
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (captured[i] >= 0) continue;
    const std::string& name = map.entries()[i].name;
    if (i < first) {
      index.embedding_names.push_back(name);
    } else if (i > last) {
      index.head_names.push_back(name);
    } else {
      throw PatternError("tensor '" + name + "' sits between layer tensors but matches no layer");
    }
  }
  return index;
}

}  // namespace blockmerge
