#include "crosscog/embed.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <unordered_map>

#include "crosscog/digest.hpp"
#include "crosscog/errors.hpp"
#include "crosscog/rng.hpp"

namespace crosscog {
namespace {

constexpr std::uint32_t kCacheMagic = 0x31454343;  // "CCE1"

std::string cache_key(const std::string& tem_id,
                      const std::array<unsigned char, 32>& digest) {
  std::string key;
  key.reserve(tem_id.size() + 1 + digest.size());
  key += tem_id;
  key += '\x1f';
  key.append(reinterpret_cast<const char*>(digest.data()), digest.size());
  return key;
}

}  // namespace

std::vector<LanguageVector> TextEmbedder::embed_batch(
    std::span<const std::string> texts) {
  std::vector<std::string> prepared;
  prepared.reserve(texts.size());
  for (const auto& t : texts) {
    if (t.empty()) throw Error(ErrorCode::EmptyText, "cannot embed empty text");
    if (t.size() > kMaxEmbedChars) {
      std::fprintf(stderr,
                   "warning: truncating %zu-char text to %zu chars before embedding\n",
                   t.size(), kMaxEmbedChars);
      prepared.push_back(t.substr(0, kMaxEmbedChars));
    } else {
      prepared.push_back(t);
    }
  }
  auto out = embed_impl(prepared);
  for (const auto& v : out) {
    if (v.size() != dim() || !v.allFinite())
      throw Error(ErrorCode::BackendUnavailable,
                  "embedder '" + id() + "' returned an invalid vector");
  }
  return out;
}

LanguageVector TextEmbedder::embed_text(const std::string& text) {
  return embed_batch(std::span<const std::string>(&text, 1)).front();
}

// ---------------------------------------------------------------------------
// Local feature-hashing embedder

LocalHashEmbedder::LocalHashEmbedder(int dim, std::uint64_t seed)
    : dim_(dim), seed_(seed) {
  if (dim < 8) throw Error(ErrorCode::ConfigError, "local-hash dim must be >= 8");
  id_ = "local-hash-v1-d" + std::to_string(dim) + "-s" + std::to_string(seed);
}

LanguageVector local_hash_embed(const std::string& text, int dim,
                                std::uint64_t seed) {
  if (dim < 8) throw Error(ErrorCode::ConfigError, "local-hash dim must be >= 8");
  const std::uint64_t bucket_seed = derive_seed(seed, 1);
  const std::uint64_t sign_seed = derive_seed(seed, 2);

  VecD acc = VecD::Zero(dim);
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    const auto bucket =
        static_cast<int>(fnv1a64(token, bucket_seed) % static_cast<std::uint64_t>(dim));
    const double sign = (fnv1a64(token, sign_seed) & 1) ? 1.0 : -1.0;
    acc[bucket] += sign;
    token.clear();
  };
  for (char ch : text) {
    if (std::isalnum(static_cast<unsigned char>(ch)))
      token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    else
      flush();
  }
  flush();

  const double norm = acc.norm();
  if (norm > 0.0) acc /= norm;
  return acc.cast<float>();
}

std::vector<LanguageVector> LocalHashEmbedder::embed_impl(
    std::span<const std::string> texts) {
  std::vector<LanguageVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(local_hash_embed(t, dim_, seed_));
  return out;
}

// ---------------------------------------------------------------------------
// File-backed cache

EmbeddingCache::EmbeddingCache(const std::string& path) : path_(path) {
  fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_APPEND, 0644);
  if (fd_ < 0) throw Error(ErrorCode::IoError, "cannot open cache " + path);
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    throw Error(ErrorCode::IoError, "cache " + path + " is locked by another writer");
  }
  load_index();
}

EmbeddingCache::~EmbeddingCache() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

void EmbeddingCache::load_index() {
  std::FILE* f = std::fopen(path_.c_str(), "rb");
  if (!f) return;
  while (true) {
    std::uint32_t magic = 0;
    if (std::fread(&magic, sizeof magic, 1, f) != 1) break;
    std::uint16_t id_len = 0;
    std::array<unsigned char, 32> digest{};
    std::uint32_t d_l = 0;
    bool ok = magic == kCacheMagic && std::fread(&id_len, sizeof id_len, 1, f) == 1;
    std::string tem_id(ok ? id_len : 0, '\0');
    ok = ok && (id_len == 0 || std::fread(tem_id.data(), 1, id_len, f) == id_len);
    ok = ok && std::fread(digest.data(), 1, 32, f) == 32;
    ok = ok && std::fread(&d_l, sizeof d_l, 1, f) == 1 && d_l > 0 && d_l < (1u << 20);
    std::vector<float> values(ok ? d_l : 0);
    ok = ok && std::fread(values.data(), sizeof(float), d_l, f) == d_l;
    if (!ok) {
      std::fprintf(stderr, "warning: cache %s has a corrupt tail; ignoring it\n",
                   path_.c_str());
      break;
    }
    index_[cache_key(tem_id, digest)] = std::move(values);
  }
  std::fclose(f);
}

std::optional<LanguageVector> EmbeddingCache::get(const std::string& tem_id,
                                                  const std::string& text) {
  const auto digest = sha256(text.data(), text.size());
  std::lock_guard lock(mutex_);
  auto it = index_.find(cache_key(tem_id, digest));
  if (it == index_.end()) return std::nullopt;
  return Eigen::Map<const VecF>(it->second.data(),
                                static_cast<Eigen::Index>(it->second.size()));
}

void EmbeddingCache::put(const std::string& tem_id, const std::string& text,
                         const LanguageVector& values) {
  const auto digest = sha256(text.data(), text.size());
  const auto id_len = static_cast<std::uint16_t>(tem_id.size());
  const auto d_l = static_cast<std::uint32_t>(values.size());

  std::string buf;
  buf.reserve(sizeof kCacheMagic + sizeof id_len + tem_id.size() + 32 +
              sizeof d_l + values.size() * sizeof(float));
  buf.append(reinterpret_cast<const char*>(&kCacheMagic), sizeof kCacheMagic);
  buf.append(reinterpret_cast<const char*>(&id_len), sizeof id_len);
  buf.append(tem_id);
  buf.append(reinterpret_cast<const char*>(digest.data()), 32);
  buf.append(reinterpret_cast<const char*>(&d_l), sizeof d_l);
  buf.append(reinterpret_cast<const char*>(values.data()),
             values.size() * sizeof(float));

  std::lock_guard lock(mutex_);
  if (::write(fd_, buf.data(), buf.size()) != static_cast<ssize_t>(buf.size()))
    throw Error(ErrorCode::IoError, "short write to cache " + path_);
  index_[cache_key(tem_id, digest)] =
      std::vector<float>(values.data(), values.data() + values.size());
}

// ---------------------------------------------------------------------------
// Cache-through embedder

std::vector<LanguageVector> CachingEmbedder::embed_impl(
    std::span<const std::string> texts) {
  std::vector<LanguageVector> out(texts.size());
  std::vector<char> resolved(texts.size(), 0);

  // Distinct missing texts, in first-appearance order.
  std::vector<std::string> missing;
  std::unordered_map<std::string, std::size_t> missing_index;
  std::vector<std::size_t> miss_of(texts.size());

  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (auto hit = cache_.get(id(), texts[i])) {
      if (hit->size() == dim()) {
        out[i] = std::move(*hit);
        resolved[i] = 1;
        continue;
      }
      std::fprintf(stderr, "warning: CorruptCacheEntry for tem '%s' (%d values, want %d); recomputing\n",
                   id().c_str(), static_cast<int>(hit->size()), dim());
    }
    auto [it, inserted] = missing_index.emplace(texts[i], missing.size());
    if (inserted) missing.push_back(texts[i]);
    miss_of[i] = it->second;
  }

  if (!missing.empty()) {
    auto fresh = backend_.embed_batch(missing);
    for (std::size_t m = 0; m < missing.size(); ++m)
      cache_.put(id(), missing[m], fresh[m]);
    for (std::size_t i = 0; i < texts.size(); ++i)
      if (!resolved[i]) out[i] = fresh[miss_of[i]];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pooling and per-domain embedding

VecD mean_pool(std::span<const LanguageVector> vectors) {
  if (vectors.empty())
    throw Error(ErrorCode::NoInteractions, "mean pool of zero vectors");
  VecD acc = VecD::Zero(vectors.front().size());
  for (const auto& v : vectors) {
    if (v.size() != acc.size())
      throw Error(ErrorCode::DimMismatch, "pooled vectors differ in length");
    acc += v.cast<double>();
  }
  return acc / static_cast<double>(vectors.size());
}

VecD student_language_vector(TextEmbedder& tem,
                             std::span<const InteractionProfile> interactions) {
  if (interactions.empty())
    throw Error(ErrorCode::NoInteractions, "student has no interactions to pool");
  std::vector<std::string> texts;
  texts.reserve(interactions.size());
  for (const auto& ip : interactions) texts.push_back(ip.text);
  auto vectors = tem.embed_batch(texts);
  return mean_pool(vectors);
}

DomainVectors embed_domain(TextEmbedder& tem, const Domain& domain,
                           const DomainProfiles& profiles) {
  DomainVectors out;
  out.tem_id = tem.id();
  const int d_l = tem.dim();

  auto to_matrix = [d_l](const std::vector<LanguageVector>& cols) {
    MatD m(d_l, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i)
      m.col(static_cast<Eigen::Index>(i)) = cols[i].cast<double>();
    return m;
  };

  out.concepts = to_matrix(tem.embed_batch(profiles.concept_texts));
  out.exercises = to_matrix(tem.embed_batch(profiles.exercise_texts));

  // All interactions embed in one pass; students pool their own slice.
  std::vector<std::string> texts;
  std::vector<std::size_t> offsets{0};
  for (const auto& sp : profiles.students) {
    for (const auto& ip : sp.interactions) texts.push_back(ip.text);
    offsets.push_back(texts.size());
  }
  auto vectors = tem.embed_batch(texts);

  out.students.resize(d_l, domain.n_students());
  for (int s = 0; s < domain.n_students(); ++s) {
    std::span<const LanguageVector> slice(vectors.data() + offsets[s],
                                          offsets[s + 1] - offsets[s]);
    out.students.col(s) = mean_pool(slice);
  }
  return out;
}

}  // namespace crosscog
