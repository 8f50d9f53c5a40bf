#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "camtrap/detection.hpp"
#include "camtrap/error.hpp"

namespace camtrap {

/// Feature vectors of a fixed dimension keyed by crop id, all from one provider.
///
/// Entries are kept sorted by crop id, which is also the on-disk order of a
/// canonical store file.
class EmbeddingStore {
 public:
  EmbeddingStore(std::size_t dimension, std::string provider_tag);

  std::size_t dimension() const noexcept { return dimension_; }
  const std::string& provider_tag() const noexcept { return provider_tag_; }
  std::size_t size() const noexcept { return vectors_.size(); }
  bool empty() const noexcept { return vectors_.empty(); }

  /// Throws ValidationError on a duplicate id, wrong dimension or non-finite value.
  void insert(std::string crop_id, std::vector<float> values);

  bool contains(std::string_view crop_id) const;
  /// nullptr when absent.
  const std::vector<float>* find(std::string_view crop_id) const;
  const std::vector<float>& at(std::string_view crop_id) const;

  std::vector<std::string> ids() const;
  const std::map<std::string, std::vector<float>, std::less<>>& entries() const noexcept {
    return vectors_;
  }

  /// Hex BLAKE2b-128 of the canonical serialization.
  std::string digest() const;

  friend bool operator==(const EmbeddingStore&, const EmbeddingStore&) = default;

 private:
  std::size_t dimension_;
  std::string provider_tag_;
  std::map<std::string, std::vector<float>, std::less<>> vectors_;
};

/// Binary "EMB1" encoding: magic, u32 d, u32 count, then per entry a u16-prefixed
/// UTF-8 id and d float32 values, then the u16-prefixed provider tag. Little-endian.
std::string serialize_store(const EmbeddingStore& store);
EmbeddingStore parse_store(std::string_view bytes);

void save_store(const EmbeddingStore& store, const std::filesystem::path& path);
EmbeddingStore load_precomputed(const std::filesystem::path& path);

/// Unit L2 norm, computed in double. Throws Error("degenerate embedding") for a zero
/// vector or non-finite input.
std::vector<double> l2_normalize(std::span<const double> v);
std::vector<float> l2_normalize(std::span<const float> v);

/// Raised by a provider when a single crop cannot be embedded; embed_batch skips it.
class CropUnavailable : public Error {
 public:
  using Error::Error;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  /// Identifies the provider and its version; stored in every EmbeddingStore it builds.
  virtual std::string tag() const = 0;
  virtual std::size_t dimension() const = 0;

  /// `crop_root` resolves relative CropRecord::crop_path values.
  virtual std::vector<float> embed(const CropRecord& crop,
                                   const std::filesystem::path& crop_root) const = 0;
};

/// Test provider: a seeded standard-normal vector keyed by the BLAKE2b digest of the
/// crop file bytes. Byte-identical crops embed identically.
class SyntheticProvider final : public EmbeddingProvider {
 public:
  explicit SyntheticProvider(std::size_t dimension = 32, std::uint64_t seed = 0);

  std::string tag() const override;
  std::size_t dimension() const override { return dimension_; }
  std::vector<float> embed(const CropRecord& crop,
                           const std::filesystem::path& crop_root) const override;

 private:
  std::size_t dimension_;
  std::uint64_t seed_;
};

/// Serves vectors computed offline by any backbone, looked up by crop id.
class PrecomputedProvider final : public EmbeddingProvider {
 public:
  explicit PrecomputedProvider(EmbeddingStore store);

  std::string tag() const override { return store_.provider_tag(); }
  std::size_t dimension() const override { return store_.dimension(); }
  std::vector<float> embed(const CropRecord& crop,
                           const std::filesystem::path& crop_root) const override;

 private:
  EmbeddingStore store_;
};

struct SkippedCrop {
  std::string crop_id;
  std::string reason;
};

struct EmbedResult {
  EmbeddingStore store;
  std::vector<SkippedCrop> skipped;
};

struct EmbedOptions {
  bool normalize = false;  // recorded in the tag as "+l2"
};

/// One vector per readable crop. Unreadable crops are skipped and reported; a vector
/// whose length differs from provider.dimension() throws Error.
EmbedResult embed_batch(const EmbeddingProvider& provider, std::span<const CropRecord> crops,
                        const std::filesystem::path& crop_root, const EmbedOptions& options = {});

}  // namespace camtrap
