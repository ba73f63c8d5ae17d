#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "crosscog/dense.hpp"
#include "crosscog/profiles.hpp"

namespace crosscog {

/// A point in the language space (dimension d_l); float32, matching the
/// on-disk cache precision so cold and warm runs are bit-identical.
using LanguageVector = VecF;

/// Profile texts longer than this are embedded truncated (with a warning).
inline constexpr std::size_t kMaxEmbedChars = 8192;

/// A text-embedding module: any function from strings to fixed-length
/// vectors. Implementations must be deterministic per id or remote-backed.
class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  virtual const std::string& id() const = 0;  // tem_id: model name + version
  virtual int dim() const = 0;                // d_l

  /// Validates (non-empty), truncates at kMaxEmbedChars, delegates.
  std::vector<LanguageVector> embed_batch(std::span<const std::string> texts);
  LanguageVector embed_text(const std::string& text);

 protected:
  virtual std::vector<LanguageVector> embed_impl(
      std::span<const std::string> texts) = 0;
};

/// Signed feature-hashing bag of tokens: lowercase, split on
/// non-alphanumeric, each token hashed to a bucket and a sign, counts
/// accumulated, then L2-normalized. Deterministic per (dim, seed); texts
/// sharing tokens produce correlated vectors, which is the one property the
/// pipeline needs from an offline stand-in.
class LocalHashEmbedder final : public TextEmbedder {
 public:
  LocalHashEmbedder(int dim, std::uint64_t seed);

  const std::string& id() const override { return id_; }
  int dim() const override { return dim_; }

 protected:
  std::vector<LanguageVector> embed_impl(
      std::span<const std::string> texts) override;

 private:
  int dim_;
  std::uint64_t seed_;
  std::string id_;
};

LanguageVector local_hash_embed(const std::string& text, int dim,
                                std::uint64_t seed);

/// File-backed (tem_id, sha256(text)) -> vector map. Append-only records of
/// little-endian f32 values; the in-memory index is rebuilt on open. One
/// writer at a time (advisory flock), readers within the process share it.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(const std::string& path);
  ~EmbeddingCache();

  EmbeddingCache(const EmbeddingCache&) = delete;
  EmbeddingCache& operator=(const EmbeddingCache&) = delete;

  std::optional<LanguageVector> get(const std::string& tem_id,
                                    const std::string& text);
  void put(const std::string& tem_id, const std::string& text,
           const LanguageVector& values);

  std::size_t size() const { return index_.size(); }

 private:
  void load_index();

  std::string path_;
  int fd_ = -1;
  std::unordered_map<std::string, std::vector<float>> index_;
  std::mutex mutex_;
};

/// Serves embeddings from the cache, falling back to the backend and
/// persisting anything newly computed. Writes are serialized.
class CachingEmbedder final : public TextEmbedder {
 public:
  CachingEmbedder(TextEmbedder& backend, EmbeddingCache& cache)
      : backend_(backend), cache_(cache) {}

  const std::string& id() const override { return backend_.id(); }
  int dim() const override { return backend_.dim(); }

 protected:
  std::vector<LanguageVector> embed_impl(
      std::span<const std::string> texts) override;

 private:
  TextEmbedder& backend_;
  EmbeddingCache& cache_;
};

struct RemoteTemConfig {
  std::string endpoint;  // e.g. http://host:8080/v1/embeddings
  std::string model;
  int dim = 0;
  int batch_size = 64;
  int max_inflight = 8;
  int max_retries = 3;
  std::string auth_token;  // read from env by the CLI
};

std::unique_ptr<TextEmbedder> make_remote_embedder(RemoteTemConfig config);

/// Arithmetic mean of interaction embeddings (order-invariant); the
/// student's position in the language space.
VecD mean_pool(std::span<const LanguageVector> vectors);

VecD student_language_vector(TextEmbedder& tem,
                             std::span<const InteractionProfile> interactions);

/// Language vectors of every entity in a domain, columns by dense index.
/// Student columns are pooled from the cached interaction embeddings.
struct DomainVectors {
  std::string tem_id;
  MatD students;   // d_l x S
  MatD exercises;  // d_l x E
  MatD concepts;   // d_l x K
};

DomainVectors embed_domain(TextEmbedder& tem, const Domain& domain,
                           const DomainProfiles& profiles);

}  // namespace crosscog
