#include "camtrap/embedding.hpp"

#include <cmath>
#include <limits>

#include "camtrap/binary_io.hpp"
#include "camtrap/fileio.hpp"
#include "camtrap/hashing.hpp"
#include "camtrap/random.hpp"
#include "parallel.hpp"

namespace camtrap {

namespace {
constexpr std::string_view kStoreMagic = "EMB1";
}

EmbeddingStore::EmbeddingStore(std::size_t dimension, std::string provider_tag)
    : dimension_(dimension), provider_tag_(std::move(provider_tag)) {
  if (dimension_ == 0) throw ValidationError("embedding dimension must be positive");
  if (provider_tag_.empty()) throw ValidationError("embedding provider tag must be nonempty");
}

void EmbeddingStore::insert(std::string crop_id, std::vector<float> values) {
  if (values.size() != dimension_) {
    throw ValidationError("embedding for " + crop_id + " has dimension " +
                          std::to_string(values.size()) + ", store expects " +
                          std::to_string(dimension_));
  }
  for (float v : values) {
    if (!std::isfinite(v)) throw ValidationError("embedding for " + crop_id + " is not finite");
  }
  auto [it, inserted] = vectors_.try_emplace(std::move(crop_id), std::move(values));
  if (!inserted) throw ValidationError("duplicate embedding id " + it->first);
}

bool EmbeddingStore::contains(std::string_view crop_id) const {
  return vectors_.find(crop_id) != vectors_.end();
}

const std::vector<float>* EmbeddingStore::find(std::string_view crop_id) const {
  const auto it = vectors_.find(crop_id);
  return it == vectors_.end() ? nullptr : &it->second;
}

const std::vector<float>& EmbeddingStore::at(std::string_view crop_id) const {
  const auto* v = find(crop_id);
  if (v == nullptr) throw ValidationError("no embedding for " + std::string(crop_id));
  return *v;
}

std::vector<std::string> EmbeddingStore::ids() const {
  std::vector<std::string> out;
  out.reserve(vectors_.size());
  for (const auto& [id, v] : vectors_) out.push_back(id);
  return out;
}

std::string EmbeddingStore::digest() const { return to_hex(hash128(serialize_store(*this))); }

std::string serialize_store(const EmbeddingStore& store) {
  if (store.dimension() > std::numeric_limits<std::uint32_t>::max() ||
      store.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw Error("embedding store too large for the EMB1 format");
  }
  binary::Writer w;
  w.bytes(kStoreMagic);
  w.put(static_cast<std::uint32_t>(store.dimension()));
  w.put(static_cast<std::uint32_t>(store.size()));
  for (const auto& [id, values] : store.entries()) {
    w.short_string(id);
    for (float v : values) w.put(v);
  }
  w.short_string(store.provider_tag());
  return w.release();
}

namespace {

bool plausible_text(std::string_view s) {
  if (s.empty()) return false;
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 0;
    if (len == 0 || i + len > s.size() || (len == 1 && c < 0x20)) return false;
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(s[i + k]) >> 6) != 0x2) return false;
    }
    i += len;
  }
  return true;
}

// Whether a well-formed entry (or, for the last row, exactly the trailing tag) starts at
// `pos`. Used to locate the row whose value count disagrees with the header.
bool aligned_at(std::string_view bytes, std::size_t pos, std::size_t dim, bool last) {
  if (pos + 2 > bytes.size()) return false;
  const std::size_t len = static_cast<unsigned char>(bytes[pos]) |
                          (static_cast<std::size_t>(static_cast<unsigned char>(bytes[pos + 1])) << 8);
  if (pos + 2 + len > bytes.size()) return false;
  if (!plausible_text(bytes.substr(pos + 2, len))) return false;
  if (last) return pos + 2 + len == bytes.size();
  return pos + 2 + len + dim * 4 <= bytes.size();
}

}  // namespace

EmbeddingStore parse_store(std::string_view bytes) {
  binary::Reader r(bytes);
  if (r.bytes(kStoreMagic.size(), "magic") != kStoreMagic) {
    throw ParseError("not an EMB1 embedding store (bad magic)", 0);
  }
  const auto dim = r.get<std::uint32_t>("dimension");
  const auto count = r.get<std::uint32_t>("entry count");
  if (dim == 0) throw ParseError("embedding store declares dimension 0", 4);

  struct Entry {
    std::string id;
    std::vector<float> values;
  };
  std::vector<Entry> entries;
  entries.reserve(std::min<std::size_t>(count, r.remaining() / (std::size_t{dim} * 4 + 2) + 1));
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    e.id = r.short_string("entry id");
    const auto row_error = [&](const std::string& what) {
      return ParseError("embedding store row " + std::to_string(i) + " (id \"" + e.id + "\"): " +
                            what,
                        r.position());
    };
    if (r.remaining() < std::size_t{dim} * 4) {
      throw row_error("holds fewer than the declared " + std::to_string(dim) + " values");
    }
    e.values.resize(dim);
    for (auto& v : e.values) v = r.get<float>("value");

    const bool last = i + 1 == count;
    if (!aligned_at(bytes, r.position(), dim, last)) {
      const auto pos = static_cast<std::ptrdiff_t>(r.position());
      for (std::ptrdiff_t extra = 1 - static_cast<std::ptrdiff_t>(dim); extra <= 64; ++extra) {
        const std::ptrdiff_t probe = pos + 4 * extra;
        if (extra == 0 || probe < 0) continue;
        if (aligned_at(bytes, static_cast<std::size_t>(probe), dim, last)) {
          throw row_error("holds " + std::to_string(static_cast<std::ptrdiff_t>(dim) + extra) +
                          " values but the header declares d=" + std::to_string(dim));
        }
      }
      throw row_error("payload length disagrees with the header dimension d=" +
                      std::to_string(dim));
    }
    entries.push_back(std::move(e));
  }
  const std::string tag = r.short_string("provider tag");
  if (tag.empty() || !r.at_end()) {
    throw ParseError("embedding store: payload length disagrees with header (d=" +
                         std::to_string(dim) + ", count=" + std::to_string(count) + ")",
                     r.position());
  }

  EmbeddingStore store(dim, tag);
  for (auto& e : entries) {
    try {
      store.insert(std::move(e.id), std::move(e.values));
    } catch (const ValidationError& err) {
      throw ParseError(std::string("embedding store: ") + err.what());
    }
  }
  return store;
}

void save_store(const EmbeddingStore& store, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_store(store));
}

EmbeddingStore load_precomputed(const std::filesystem::path& path) {
  return parse_store(read_file(path));
}

std::vector<double> l2_normalize(std::span<const double> v) {
  double max_abs = 0.0;
  for (double x : v) {
    if (!std::isfinite(x)) throw Error("degenerate embedding (non-finite entry)");
    max_abs = std::max(max_abs, std::abs(x));
  }
  if (max_abs == 0.0) throw Error("degenerate embedding (zero vector)");
  // Scale first so the sum of squares neither overflows nor underflows.
  double sum = 0.0;
  for (double x : v) sum += (x / max_abs) * (x / max_abs);
  const double norm = std::sqrt(sum);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] / max_abs) / norm;
  return out;
}

std::vector<float> l2_normalize(std::span<const float> v) {
  const std::vector<double> wide(v.begin(), v.end());
  const auto unit = l2_normalize(std::span<const double>(wide));
  return std::vector<float>(unit.begin(), unit.end());
}

SyntheticProvider::SyntheticProvider(std::size_t dimension, std::uint64_t seed)
    : dimension_(dimension), seed_(seed) {
  if (dimension_ == 0) throw ValidationError("synthetic provider dimension must be positive");
}

std::string SyntheticProvider::tag() const {
  return "synthetic/v1 d=" + std::to_string(dimension_) + " seed=" + std::to_string(seed_);
}

std::vector<float> SyntheticProvider::embed(const CropRecord& crop,
                                            const std::filesystem::path& crop_root) const {
  std::string bytes;
  try {
    bytes = read_file(crop_root / crop.crop_path);
  } catch (const Error& e) {
    throw CropUnavailable(e.what());
  }
  Rng rng(mix_seed(seed_, digest_seed(hash128(bytes))));
  std::vector<float> out(dimension_);
  for (auto& v : out) v = static_cast<float>(rng.normal());
  return out;
}

PrecomputedProvider::PrecomputedProvider(EmbeddingStore store) : store_(std::move(store)) {}

std::vector<float> PrecomputedProvider::embed(const CropRecord& crop,
                                              const std::filesystem::path&) const {
  const auto* v = store_.find(crop.crop_id);
  if (v == nullptr) throw CropUnavailable("missing from precomputed store");
  return *v;
}

EmbedResult embed_batch(const EmbeddingProvider& provider, std::span<const CropRecord> crops,
                        const std::filesystem::path& crop_root, const EmbedOptions& options) {
  struct Slot {
    std::vector<float> values;
    std::string error;
  };
  std::vector<Slot> slots(crops.size());
  detail::parallel_for(crops.size(), [&](std::size_t i) {
    try {
      slots[i].values = provider.embed(crops[i], crop_root);
      if (options.normalize && slots[i].values.size() == provider.dimension()) {
        slots[i].values = l2_normalize(std::span<const float>(slots[i].values));
      }
    } catch (const CropUnavailable& e) {
      slots[i].error = e.what();
    } catch (const Error& e) {
      // l2_normalize on a zero vector: the crop cannot be represented.
      slots[i].error = e.what();
    }
  });

  std::string tag = provider.tag();
  if (options.normalize) tag += "+l2";
  EmbedResult result{EmbeddingStore(provider.dimension(), tag), {}};
  for (std::size_t i = 0; i < crops.size(); ++i) {
    if (!slots[i].error.empty()) {
      result.skipped.push_back({crops[i].crop_id, slots[i].error});
      continue;
    }
    if (slots[i].values.size() != provider.dimension()) {
      throw Error("provider " + provider.tag() + " returned " +
                  std::to_string(slots[i].values.size()) + " values for " + crops[i].crop_id +
                  ", expected " + std::to_string(provider.dimension()));
    }
    if (result.store.contains(crops[i].crop_id)) continue;  // same crop listed twice
    result.store.insert(crops[i].crop_id, std::move(slots[i].values));
  }
  return result;
}

}  // namespace camtrap
