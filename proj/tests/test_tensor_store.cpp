#include <cstring>
#include <fstream>

#include <doctest.h>
#include <json.hpp>

#include "blockmerge/errors.hpp"
#include "blockmerge/tensor_store.hpp"
#include "support.hpp"

using namespace blockmerge;
using testing::fixture_model;
using testing::scratch_dir;

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

// Builds a container by hand from a header string and raw payload.
std::vector<std::uint8_t> handmade(const std::string& header, const std::vector<float>& payload) {
  std::vector<std::uint8_t> out(8);
  const std::uint64_t n = header.size();
  for (int i = 0; i < 8; ++i) out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(n >> (8 * i));
  out.insert(out.end(), header.begin(), header.end());
  for (float f : payload) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  return out;
}

TensorMap names_only(const std::vector<std::string>& names) {
  TensorMap m;
  for (const auto& n : names) m.add({n, {1}, {0.0f}});
  return m;
}

}  // namespace

TEST_SUITE("tensor-store") {

TEST_CASE("save then load is bit-identical and keeps order") {
  const auto dir = scratch_dir("ts");
  TensorMap m;
  m.add({"b.second", {2}, {1.5f, -0.0f}});
  m.add({"a.first", {1, 3}, {std::numeric_limits<float>::denorm_min(), 3.0e38f, -7.25f}});
  m.metadata()["origin"] = "unit";
  save_tensor_map(m, dir / "m.btc");
  const TensorMap back = load_tensor_map(dir / "m.btc");
  CHECK(back == m);
  CHECK(testing::bit_equal(back, m));
  CHECK(back.entries()[0].name == "b.second");
  CHECK(back.metadata().at("origin") == "unit");

  save_tensor_map(back, dir / "again.btc");
  CHECK(read_bytes(dir / "m.btc") == read_bytes(dir / "again.btc"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("file size is 8 + header + payload") {
  const auto dir = scratch_dir("ts");
  const TensorMap m = fixture_model(3, 7);
  save_tensor_map(m, dir / "m.btc");
  const auto bytes = read_bytes(dir / "m.btc");
  std::uint64_t header_len = 0;
  for (int i = 0; i < 8; ++i) header_len |= static_cast<std::uint64_t>(bytes[static_cast<std::size_t>(i)]) << (8 * i);
  std::uint64_t payload = 0;
  for (const auto& t : m.entries()) payload += 4 * t.data.size();
  CHECK(bytes.size() == 8 + header_len + payload);
  std::filesystem::remove_all(dir);
}

TEST_CASE("hand-built container loads with declared shape") {
  const auto dir = scratch_dir("ts");
  const std::string header =
      R"({"tensors":[{"name":"layers.0.w","shape":[2,3],"dtype":"f32","offset":0,"nbytes":24}],"metadata":{}})";
  write_bytes(dir / "h.btc", handmade(header, {1, 2, 3, 4, 5, 6}));
  const TensorMap m = load_tensor_map(dir / "h.btc");
  REQUIRE(m.size() == 1);
  CHECK(m.entries()[0].name == "layers.0.w");
  CHECK(m.entries()[0].shape == std::vector<std::uint64_t>{2, 3});
  CHECK(m.entries()[0].data == std::vector<float>{1, 2, 3, 4, 5, 6});
  std::filesystem::remove_all(dir);
}

TEST_CASE("truncated payload is CorruptPayload") {
  const auto dir = scratch_dir("ts");
  save_tensor_map(fixture_model(2, 1), dir / "m.btc");
  auto bytes = read_bytes(dir / "m.btc");
  bytes.resize(bytes.size() - 5);
  write_bytes(dir / "t.btc", bytes);
  CHECK_THROWS_AS(load_tensor_map(dir / "t.btc"), CorruptPayload);
  std::filesystem::remove_all(dir);
}

TEST_CASE("declared nbytes disagreeing with shape is CorruptPayload") {
  const std::string header =
      R"({"tensors":[{"name":"w","shape":[2],"dtype":"f32","offset":0,"nbytes":12}],"metadata":{}})";
  CHECK_THROWS_AS(decode_tensor_map(handmade(header, {1, 2, 3})), CorruptPayload);
}

TEST_CASE("malformed headers are FormatError") {
  CHECK_THROWS_AS(decode_tensor_map(handmade("{not json", {})), FormatError);
  CHECK_THROWS_AS(decode_tensor_map(handmade(R"({"tensors":[{"name":"w"}]})", {})), FormatError);
  const std::string wrong_dtype =
      R"({"tensors":[{"name":"w","shape":[1],"dtype":"f16","offset":0,"nbytes":4}],"metadata":{}})";
  CHECK_THROWS_AS(decode_tensor_map(handmade(wrong_dtype, {1})), FormatError);
  auto huge = handmade("{}", {});
  huge[6] = 0xff;
  CHECK_THROWS_AS(decode_tensor_map(huge), FormatError);
}

TEST_CASE("missing file is IoError") {
  CHECK_THROWS_AS(load_tensor_map("/nonexistent/dir/model.btc"), IoError);
}

TEST_CASE("duplicate names and bad shapes are rejected") {
  TensorMap m;
  m.add({"w", {2}, {1, 2}});
  CHECK_THROWS_AS(m.add({"w", {1}, {1}}), FormatError);
  CHECK_THROWS_AS(m.add({"v", {3}, {1, 2}}), ShapeError);
}

TEST_CASE("layer index groups, embedding and head") {
  const TensorMap m = names_only({"emb", "layers.0.a", "layers.1.a", "head"});
  const LayerIndex idx = infer_layer_index(m, "layers.{n}.");
  CHECK(idx.layer_count() == 2);
  CHECK(idx.embedding_names == std::vector<std::string>{"emb"});
  CHECK(idx.head_names == std::vector<std::string>{"head"});
  CHECK(idx.layer_groups[1].tensor_names == std::vector<std::string>{"layers.1.a"});
}

TEST_CASE("layer ids group across file order") {
  const TensorMap m = names_only({"layers.1.a", "layers.0.a", "layers.0.b", "layers.1.b"});
  const LayerIndex idx = infer_layer_index(m, "layers.{n}.");
  REQUIRE(idx.layer_count() == 2);
  CHECK(idx.layer_groups[0].layer_id == 0);
  CHECK(idx.layer_groups[0].tensor_names == std::vector<std::string>{"layers.0.a", "layers.0.b"});
}

TEST_CASE("multi-digit ids are not confused with prefixes") {
  std::vector<std::string> names;
  for (int l = 0; l < 12; ++l) names.push_back("layers." + std::to_string(l) + ".w");
  const LayerIndex idx = infer_layer_index(names_only(names), "layers.{n}.");
  CHECK(idx.layer_count() == 12);
  CHECK(idx.layer_groups[11].tensor_names == std::vector<std::string>{"layers.11.w"});
}

TEST_CASE("gap in layer ids is IndexGapError") {
  CHECK_THROWS_AS(infer_layer_index(names_only({"layers.0.a", "layers.2.a"}), "layers.{n}."), IndexGapError);
  CHECK_THROWS_AS(infer_layer_index(names_only({"layers.1.a"}), "layers.{n}."), IndexGapError);
}

TEST_CASE("pattern without matches is PatternError") {
  CHECK_THROWS_AS(infer_layer_index(names_only({"a", "b"}), "layers.{n}."), PatternError);
  CHECK_THROWS_AS(infer_layer_index(names_only({"layers.0.a"}), "layers."), PatternError);
}

TEST_CASE("single layer model has empty boundary lists") {
  const LayerIndex idx = infer_layer_index(names_only({"layers.0.a", "layers.0.b"}), "layers.{n}.");
  CHECK(idx.layer_count() == 1);
  CHECK(idx.embedding_names.empty());
  CHECK(idx.head_names.empty());
}

TEST_CASE("every tensor lands in exactly one group") {
  const TensorMap m = fixture_model(5, 3);
  const LayerIndex idx = infer_layer_index(m, "layers.{n}.");
  std::vector<std::string> seen = idx.embedding_names;
  for (const auto& g : idx.layer_groups) seen.insert(seen.end(), g.tensor_names.begin(), g.tensor_names.end());
  seen.insert(seen.end(), idx.head_names.begin(), idx.head_names.end());
  std::sort(seen.begin(), seen.end());
  CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());
  CHECK(seen.size() == m.size());
  CHECK(idx.head_names == std::vector<std::string>{"norm.weight", "head.weight"});
}

}
