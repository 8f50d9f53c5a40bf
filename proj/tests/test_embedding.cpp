#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "doctest.h"

#include "camtrap/embedding.hpp"
#include "camtrap/error.hpp"
#include "camtrap/fileio.hpp"
#include "camtrap/onnx_provider.hpp"
#include "camtrap/random.hpp"
#include "support.hpp"

using namespace camtrap;
namespace fs = std::filesystem;

namespace {

// Hand-rolled EMB1 encoder used as the byte-level oracle.
void le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::string emb1(std::uint32_t d, const std::vector<std::pair<std::string, std::vector<float>>>& rows,
                 const std::string& tag) {
  std::string out = "EMB1";
  le(out, d, 4);
  le(out, rows.size(), 4);
  for (const auto& [id, values] : rows) {
    le(out, id.size(), 2);
    out += id;
    for (float f : values) {
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      le(out, bits, 4);
    }
  }
  le(out, tag.size(), 2);
  out += tag;
  return out;
}

CropRecord crop(const std::string& id, const std::string& path) {
  CropRecord c;
  c.crop_id = id;
  c.source_image = "img.jpg";
  c.rect = {0, 0, 4, 4};
  c.crop_path = path;
  return c;
}

void write_png(const fs::path& path, int seed) {
  cv::Mat img(6, 6, CV_8UC3);
  cv::RNG(static_cast<std::uint64_t>(seed)).fill(img, cv::RNG::UNIFORM, 0, 256);
  fs::create_directories(path.parent_path());
  REQUIRE(cv::imwrite(path.string(), img));
}

}  // namespace

TEST_CASE("serialization matches the hand-encoded layout") {
  EmbeddingStore store(2, "test/v1");
  store.insert("b", {3.0f, -1.5f});
  store.insert("a", {0.25f, 1e-3f});
  const std::string expected = emb1(2, {{"a", {0.25f, 1e-3f}}, {"b", {3.0f, -1.5f}}}, "test/v1");
  CHECK(serialize_store(store) == expected);
  CHECK(parse_store(expected) == store);
}

TEST_CASE("save then load is exact and canonical files re-save byte-identically") {
  testing::TempDir dir;
  Rng rng(8);
  EmbeddingStore store(5, "synthetic-d5");
  for (int i = 0; i < 100; ++i) {
    std::vector<float> v(5);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    store.insert("id-" + std::to_string(i), v);
  }
  save_store(store, dir / "a.emb1");
  const auto loaded = load_precomputed(dir / "a.emb1");
  CHECK(loaded == store);
  save_store(loaded, dir / "b.emb1");
  CHECK(read_file(dir / "a.emb1") == read_file(dir / "b.emb1"));
}

TEST_CASE("header-only file is a valid empty store") {
  const auto store = parse_store(emb1(4, {}, "empty"));
  CHECK(store.empty());
  CHECK(store.dimension() == 4);
  CHECK(store.provider_tag() == "empty");
}

TEST_CASE("a row longer than the declared dimension is named") {
  // Header says d=4 but the second row carries five values.
  std::string bytes = "EMB1";
  le(bytes, 4, 4);
  le(bytes, 2, 4);
  const auto put_row = [&](const std::string& id, int n) {
    le(bytes, id.size(), 2);
    bytes += id;
    for (int i = 0; i < n; ++i) {
      const float f = 1.0f;
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      le(bytes, bits, 4);
    }
  };
  put_row("first", 4);
  put_row("second", 5);
  le(bytes, 3, 2);
  bytes += "tag";
  try {
    parse_store(bytes);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    const std::string what = e.what();
    CHECK(what.find("second") != std::string::npos);
    CHECK(what.find("row 1") != std::string::npos);
  }
}

TEST_CASE("malformed stores are rejected") {
  CHECK_THROWS_AS(parse_store("EMB2"), ParseError);
  CHECK_THROWS_AS(parse_store(emb1(2, {{"a", {1.0f, 2.0f}}}, "t").substr(0, 20)), ParseError);
  CHECK_THROWS_AS(parse_store(emb1(2, {{"a", {1.0f, 2.0f}}}, "t") + "x"), ParseError);
  // Duplicate ids and an empty tag violate store invariants.
  CHECK_THROWS_AS(parse_store(emb1(1, {{"a", {1.0f}}, {"a", {2.0f}}}, "t")), Error);
  CHECK_THROWS_AS(parse_store(emb1(1, {{"a", {1.0f}}}, "")), Error);
}

TEST_CASE("store invariants") {
  EmbeddingStore store(2, "t");
  store.insert("a", {1.0f, 2.0f});
  CHECK_THROWS_AS(store.insert("a", {1.0f, 2.0f}), ValidationError);
  CHECK_THROWS_AS(store.insert("b", {1.0f}), ValidationError);
  CHECK_THROWS_AS(store.insert("c", {1.0f, NAN}), ValidationError);
  CHECK_THROWS_AS(EmbeddingStore(2, ""), ValidationError);
}

TEST_CASE("l2_normalize examples") {
  const std::vector<double> v{3.0, 4.0};
  const auto n = l2_normalize(std::span<const double>(v));
  CHECK(n[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(n[1] == doctest::Approx(0.8).epsilon(1e-15));
  const std::vector<double> unit{0.0, 1.0, 0.0};
  const auto same = l2_normalize(std::span<const double>(unit));
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(same[i] - unit[i]) < 1e-12);
  const std::vector<double> zero{0.0, 0.0};
  CHECK_THROWS_AS(l2_normalize(std::span<const double>(zero)), Error);
}

TEST_CASE("property: l2_normalize gives unit norm and preserves direction") {
  Rng rng(2024);
  for (int trial = 0; trial < 100000; ++trial) {
    std::vector<double> v(1 + rng.below(64));
    const double scale = std::pow(10.0, static_cast<double>(rng.below(40)) - 20.0);
    for (auto& x : v) x = rng.normal() * scale;
    const auto n = l2_normalize(std::span<const double>(v));
    double norm = 0.0, dot = 0.0, vv = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      norm += n[i] * n[i];
      dot += n[i] * v[i];
      vv += v[i] * v[i];
    }
    REQUIRE(std::abs(std::sqrt(norm) - 1.0) < 1e-9);
    if (vv > 0 && std::isfinite(vv)) REQUIRE(dot > 0.0);
  }
}

TEST_CASE("synthetic provider: reproducible, content-keyed, configured dimension") {
  testing::TempDir dir;
  write_png(dir / "crops/a.png", 1);
  write_png(dir / "crops/b.png", 2);
  fs::copy_file(dir / "crops/a.png", dir / "crops/a_copy.png");
  const std::vector<CropRecord> crops{crop("a", "crops/a.png"), crop("b", "crops/b.png"),
                                      crop("c", "crops/a_copy.png")};
  const SyntheticProvider provider(32, 7);
  const auto first = embed_batch(provider, crops, dir.path());
  const auto second = embed_batch(provider, crops, dir.path());
  CHECK(first.skipped.empty());
  CHECK(first.store == second.store);
  CHECK(first.store.digest() == second.store.digest());
  CHECK(first.store.dimension() == 32);
  CHECK(first.store.at("a") == first.store.at("c"));
  CHECK(first.store.at("a") != first.store.at("b"));
  CHECK(first.store.provider_tag() == provider.tag());

  const auto other_seed = embed_batch(SyntheticProvider(32, 8), crops, dir.path());
  CHECK(other_seed.store.at("a") != first.store.at("a"));
}

TEST_CASE("normalization is recorded in the tag") {
  testing::TempDir dir;
  write_png(dir / "crops/a.png", 1);
  const std::vector<CropRecord> crops{crop("a", "crops/a.png")};
  const auto result = embed_batch(SyntheticProvider(16, 0), crops, dir.path(), {true});
  CHECK(result.store.provider_tag().ends_with("+l2"));
  double norm = 0;
  for (float f : result.store.at("a")) norm += double(f) * f;
  CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-6);
}

TEST_CASE("unreadable crops are skipped and reported") {
  testing::TempDir dir;
  write_png(dir / "crops/a.png", 1);
  const std::vector<CropRecord> crops{crop("a", "crops/a.png"), crop("gone", "crops/gone.png")};
  const auto result = embed_batch(SyntheticProvider(), crops, dir.path());
  CHECK(result.store.size() == 1);
  REQUIRE(result.skipped.size() == 1);
  CHECK(result.skipped[0].crop_id == "gone");
}

TEST_CASE("precomputed provider: missing id reported, others loaded") {
  EmbeddingStore source(3, "resnet50-ft");
  source.insert("a", {1, 2, 3});
  source.insert("b", {4, 5, 6});
  const PrecomputedProvider provider(source);
  const std::vector<CropRecord> crops{crop("a", ""), crop("b", ""), crop("zz", "")};
  const auto result = embed_batch(provider, crops, ".");
  CHECK(result.store.size() == 2);
  CHECK(result.store.at("b") == std::vector<float>{4, 5, 6});
  REQUIRE(result.skipped.size() == 1);
  CHECK(result.skipped[0].crop_id == "zz");
  CHECK(result.store.provider_tag() == "resnet50-ft");
}

namespace {
class WrongDimension final : public EmbeddingProvider {
 public:
  std::string tag() const override { return "broken"; }
  std::size_t dimension() const override { return 4; }
  std::vector<float> embed(const CropRecord&, const fs::path&) const override { return {1, 2, 3}; }
};
}  // namespace

TEST_CASE("a provider returning the wrong dimension is fatal") {
  const std::vector<CropRecord> crops{crop("a", "")};
  CHECK_THROWS_AS(embed_batch(WrongDimension(), crops, "."), Error);
}

TEST_CASE("onnx backbone matches the reference framework's output") {
  if (!onnx_provider_available()) {
    MESSAGE("built without OpenCV dnn; skipping");
    return;
  }
  const fs::path fixtures(CAMTRAP_FIXTURES);
  OnnxConfig config;
  config.model_path = fixtures / "tiny_backbone.onnx";
  config.input_size = 32;
  const auto provider = make_onnx_provider(config);
  const std::vector<CropRecord> crops{crop("tiny", "tiny_crop.png")};
  const auto result = embed_batch(*provider, crops, fixtures);
  REQUIRE(result.skipped.empty());
  const auto& v = result.store.at("tiny");

  std::stringstream ss(read_file(fixtures / "tiny_backbone_expected.txt"));
  std::vector<double> expected;
  for (std::string field; std::getline(ss, field, ',');) expected.push_back(std::stod(field));
  REQUIRE(v.size() == expected.size());
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(v[i] - expected[i]) < 1e-4);

  config.model_path = fixtures / "missing.onnx";
  CHECK_THROWS_AS(make_onnx_provider(config), Error);
}
