#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dmv/ingest.hpp"
#include "dmv/matrix.hpp"

namespace dmv {

struct EmbeddingVector {
  std::vector<double> values;
  std::string provider_id;
  std::string model_id;
};

enum class ProviderKind : std::uint8_t { kLocal, kRemote };

std::string_view to_string(ProviderKind kind);
ProviderKind parse_provider_kind(std::string_view text);

struct ProviderConfig {
  ProviderKind kind = ProviderKind::kLocal;
  std::string endpoint;  // remote: http(s)://host[:port]/path
  std::string model_id;  // remote model name; derived for local
  std::size_t dimension = 256;
  std::size_t batch_size = 32;
  std::size_t max_retries = 3;
  double timeout_seconds = 30.0;
  std::string api_key_env = "DMV_EMBED_API_KEY";
  std::uint64_t seed = 42;
  std::size_t concurrency = 1;
  double backoff_base_seconds = 1.0;

  void validate() const;
  std::string provider_id() const;
  // Local models are named after their hashing parameters so cache keys
  // change when dimension or seed do.
  std::string effective_model_id() const;
};

// topic, question, class and the stratification columns present in the
// schema, in schema order.
std::vector<std::string> default_text_columns(const ColumnSchema& schema);

// `name: value` pairs joined by " | ", missing values as `<missing>`.
std::string build_text(const RawTable& table, std::size_t row, std::span<const std::string> text_columns);

// Signed feature hashing of lower-cased word unigrams and bigrams into
// `dimension` buckets, then L2-normalized. Empty text gives the zero vector.
EmbeddingVector embed_local(std::string_view text, std::size_t dimension, std::uint64_t seed);

std::string sha256_hex(std::string_view data);

// File-backed map from sha256(provider | model | text) to a vector. Each put
// appends `<hex> TAB <D> TAB <floats>` to the file. Safe for concurrent use.
class EmbeddingCache {
 public:
  EmbeddingCache() = default;  // in-memory only
  explicit EmbeddingCache(std::filesystem::path path);

  static std::string key(std::string_view provider_id, std::string_view model_id, std::string_view text);

  std::optional<std::vector<double>> get(const std::string& key) const;
  void put(const std::string& key, const std::vector<double>& values);
  std::size_t size() const;

 private:
  std::filesystem::path path_;
  std::map<std::string, std::vector<double>> entries_;
  mutable std::shared_mutex mu_;
};

// Batched JSON POSTs of `{"model": ..., "input": [...]}` to the endpoint,
// expecting `{"data": [{"embedding": [...]}, ...]}`. Cache hits are not sent.
// 429, 5xx and transport failures retry with jittered exponential backoff.
std::vector<EmbeddingVector> embed_remote(std::span<const std::string> texts, const ProviderConfig& config,
                                          EmbeddingCache& cache);

// Dispatches on config.kind; local results are cached too.
std::vector<EmbeddingVector> embed_texts(std::span<const std::string> texts, const ProviderConfig& config,
                                         EmbeddingCache& cache);

// One embedding per table row; identical texts are embedded once.
EmbeddingTable embed_table(const RawTable& table, std::span<const std::string> text_columns,
                           const ProviderConfig& config, EmbeddingCache& cache);

// Rebuilds the row-aligned table purely from cache entries; throws
// MissingArtifact if any row's text is absent.
EmbeddingTable embeddings_from_cache(const RawTable& table, std::span<const std::string> text_columns,
                                     const ProviderConfig& config, const EmbeddingCache& cache);

}  // namespace dmv
