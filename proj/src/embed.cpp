#include "dmv/embed.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>
#include <unordered_map>

#include "dmv/error.hpp"
#include "dmv/io.hpp"
#include "dmv/rng.hpp"

#include "httplib.h"
#include "json.hpp"

namespace dmv {

std::string_view to_string(ProviderKind kind) { return kind == ProviderKind::kLocal ? "local" : "remote"; }

ProviderKind parse_provider_kind(std::string_view text) {
  if (text == "local") return ProviderKind::kLocal;
  if (text == "remote") return ProviderKind::kRemote;
  throw Error(Errc::kInvalidConfig, "provider must be local|remote, got '" + std::string(text) + "'");
}

void ProviderConfig::validate() const {
  if (batch_size < 1) throw Error(Errc::kInvalidConfig, "embed batch_size must be >= 1");
  if (concurrency < 1) throw Error(Errc::kInvalidConfig, "embed concurrency must be >= 1");
  if (kind == ProviderKind::kLocal && dimension < 8) {
    throw Error(Errc::kInvalidConfig, "local embedding dimension must be >= 8");
  }
  if (kind == ProviderKind::kRemote) {
    if (endpoint.empty()) throw Error(Errc::kInvalidConfig, "remote provider needs an endpoint");
    if (model_id.empty()) throw Error(Errc::kInvalidConfig, "remote provider needs a model id");
  }
}

std::string ProviderConfig::provider_id() const { return std::string(to_string(kind)); }

std::string ProviderConfig::effective_model_id() const {
  if (kind == ProviderKind::kRemote) return model_id;
  return "feature-hash-v1/d" + std::to_string(dimension) + "/s" + std::to_string(seed);
}

std::vector<std::string> default_text_columns(const ColumnSchema& schema) {
  static const std::set<std::string> wanted{"topic",           "question",
                                            "class",           "stratificationcategory1",
                                            "stratification1", "stratificationcategory2",
                                            "stratification2"};
  std::vector<std::string> out;
  for (const auto& c : schema.columns()) {
    if (wanted.contains(c.name)) out.push_back(c.name);
  }
  return out;
}

std::string build_text(const RawTable& table, std::size_t row, std::span<const std::string> text_columns) {
  std::string out;
  for (std::size_t i = 0; i < text_columns.size(); ++i) {
    if (i) out += " | ";
    const auto& cell = table.rows.at(row)[table.schema.index_of(text_columns[i])];
    out += text_columns[i];
    out += ": ";
    out += cell ? *cell : std::string("<missing>");
  }
  return out;
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

}  // namespace

EmbeddingVector embed_local(std::string_view text, std::size_t dimension, std::uint64_t seed) {
  if (dimension < 8) throw Error(Errc::kInvalidConfig, "local embedding dimension must be >= 8");
  EmbeddingVector v;
  v.values.assign(dimension, 0.0);
  v.provider_id = "local";
  v.model_id = "feature-hash-v1/d" + std::to_string(dimension) + "/s" + std::to_string(seed);

  const auto tokens = tokenize(text);
  auto add = [&](std::string_view feature) {
    const std::uint64_t h = mix64(fnv1a(feature) ^ seed);
    const double sign = (h >> 63) ? -1.0 : 1.0;
    v.values[h % dimension] += sign;
  };
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    add(tokens[i]);
    if (i + 1 < tokens.size()) add(tokens[i] + " " + tokens[i + 1]);
  }
  double norm = 0.0;
  for (double x : v.values) norm += x * x;
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (double& x : v.values) x /= norm;
  }
  return v;
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(Errc::kIoFailure, "sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

EmbeddingCache::EmbeddingCache(std::filesystem::path path) : path_(std::move(path)) {
  std::error_code ec;
  if (!std::filesystem::exists(path_, ec)) return;
  const auto text = io::read_file(path_);
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    // A line without its newline is an interrupted append; cut it off so the
    // next put starts on a fresh line.
    if (nl == std::string::npos) {
      std::filesystem::resize_file(path_, pos);
      break;
    }
    ++line_no;
    std::string_view line(text.data() + pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string_view::npos) {
      throw Error(Errc::kIoFailure, path_.string() + ":" + std::to_string(line_no) + ": malformed cache line");
    }
    const std::string key(line.substr(0, t1));
    double dim_d = 0.0;
    if (!io::parse_double(line.substr(t1 + 1, t2 - t1 - 1), dim_d) || dim_d < 0) {
      throw Error(Errc::kIoFailure, path_.string() + ":" + std::to_string(line_no) + ": bad dimension");
    }
    std::vector<double> values;
    auto rest = line.substr(t2 + 1);
    while (!rest.empty()) {
      const auto sp = rest.find(' ');
      double v = 0.0;
      if (!io::parse_double(rest.substr(0, sp), v)) {
        throw Error(Errc::kIoFailure, path_.string() + ":" + std::to_string(line_no) + ": bad float");
      }
      values.push_back(v);
      rest = sp == std::string_view::npos ? std::string_view{} : rest.substr(sp + 1);
    }
    if (values.size() != static_cast<std::size_t>(dim_d)) {
      throw Error(Errc::kIoFailure, path_.string() + ":" + std::to_string(line_no) + ": dimension mismatch");
    }
    entries_[key] = std::move(values);
  }
}

std::string EmbeddingCache::key(std::string_view provider_id, std::string_view model_id, std::string_view text) {
  std::string material;
  material.reserve(provider_id.size() + model_id.size() + text.size() + 2);
  material.append(provider_id).append("|").append(model_id).append("|").append(text);
  return sha256_hex(material);
}

std::optional<std::vector<double>> EmbeddingCache::get(const std::string& key) const {
  std::shared_lock lock(mu_);
  if (auto it = entries_.find(key); it != entries_.end()) return it->second;
  return std::nullopt;
}

void EmbeddingCache::put(const std::string& key, const std::vector<double>& values) {
  std::unique_lock lock(mu_);
  if (entries_.contains(key)) return;
  if (!path_.empty()) {
    std::string line = key;
    line += '\t';
    line += std::to_string(values.size());
    line += '\t';
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) line += ' ';
      line += io::format_double(values[i]);
    }
    line += '\n';
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    out << line;
    out.flush();
    if (!out) throw Error(Errc::kIoFailure, "cannot append to " + path_.string());
  }
  entries_.emplace(key, values);
}

std::size_t EmbeddingCache::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

namespace {

struct Endpoint {
  std::string scheme_host_port;
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(Errc::kInvalidConfig, "endpoint needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

bool retryable(int status) { return status == 429 || (status >= 500 && status <= 599); }

std::vector<std::vector<double>> post_batch(const ProviderConfig& config, const Endpoint& ep,
                                            const std::string& api_key, std::span<const std::string> batch,
                                            std::uint64_t batch_index) {
  nlohmann::json body;
  body["model"] = config.model_id;
  body["input"] = std::vector<std::string>(batch.begin(), batch.end());
  const std::string payload = body.dump();

  SplitMix64 jitter(config.seed ^ mix64(batch_index + 1));
  const auto timeout = std::chrono::duration<double>(config.timeout_seconds);
  const auto timeout_us = std::chrono::duration_cast<std::chrono::microseconds>(timeout);
  int last_status = 0;
  std::string last_body;

  for (std::size_t attempt = 0; attempt <= config.max_retries; ++attempt) {
    if (attempt > 0) {
      const double delay = config.backoff_base_seconds * std::ldexp(1.0, static_cast<int>(attempt - 1)) *
                           (1.0 + 0.25 * jitter.uniform());
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }
    httplib::Client client(ep.scheme_host_port);
    client.set_connection_timeout(timeout_us);
    client.set_read_timeout(timeout_us);
    client.set_write_timeout(timeout_us);
    httplib::Headers headers{{"Authorization", "Bearer " + api_key}};
    auto res = client.Post(ep.path, headers, payload, "application/json");
    if (!res) {
      last_status = 0;
      last_body = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (retryable(res->status)) {
      last_status = res->status;
      last_body = res->body;
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw Error(Errc::kProviderError, "status " + std::to_string(res->status) + ": " + res->body);
    }

    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::kProviderError, "status 200 with unparseable body: " + std::string(e.what()));
    }
    if (!parsed.contains("data") || !parsed["data"].is_array() || parsed["data"].size() != batch.size()) {
      throw Error(Errc::kProviderError, "response does not carry one embedding per input");
    }
    std::vector<std::vector<double>> out(batch.size());
    std::vector<bool> filled(batch.size(), false);
    std::size_t position = 0;
    for (const auto& item : parsed["data"]) {
      std::size_t slot = position++;
      if (item.contains("index") && item["index"].is_number_unsigned()) slot = item["index"].get<std::size_t>();
      if (slot >= batch.size() || filled[slot] || !item.contains("embedding") || !item["embedding"].is_array()) {
        throw Error(Errc::kProviderError, "malformed embedding item in response");
      }
      for (const auto& x : item["embedding"]) {
        if (!x.is_number()) throw Error(Errc::kProviderError, "non-numeric embedding entry");
        const double v = x.get<double>();
        if (!std::isfinite(v)) throw Error(Errc::kProviderError, "non-finite embedding entry");
        out[slot].push_back(v);
      }
      filled[slot] = true;
    }
    return out;
  }
  throw Error(Errc::kProviderError, "status " + std::to_string(last_status) + " after " +
                                        std::to_string(config.max_retries + 1) + " attempts: " + last_body);
}

}  // namespace

std::vector<EmbeddingVector> embed_remote(std::span<const std::string> texts, const ProviderConfig& config,
                                          EmbeddingCache& cache) {
  config.validate();
  const char* key_env = std::getenv(config.api_key_env.c_str());
  if (key_env == nullptr || *key_env == '\0') {
    throw Error(Errc::kAuthMissing, "environment variable " + config.api_key_env + " is not set");
  }
  const std::string api_key(key_env);
  const auto provider = config.provider_id();
  const auto model = config.effective_model_id();

  std::vector<std::string> keys(texts.size());
  std::vector<std::string> misses;
  std::set<std::string> queued;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    keys[i] = EmbeddingCache::key(provider, model, texts[i]);
    if (!cache.get(keys[i]) && queued.insert(keys[i]).second) misses.push_back(texts[i]);
  }

  if (!misses.empty()) {
    const Endpoint ep = split_endpoint(config.endpoint);
    const std::size_t n_batches = (misses.size() + config.batch_size - 1) / config.batch_size;
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&] {
      for (std::size_t b = next++; b < n_batches; b = next++) {
        {
          std::lock_guard lock(failure_mu);
          if (failure) return;
        }
        try {
          const auto begin = b * config.batch_size;
          const auto len = std::min(config.batch_size, misses.size() - begin);
          const std::span<const std::string> batch(misses.data() + begin, len);
          const auto vectors = post_batch(config, ep, api_key, batch, b);
          for (std::size_t i = 0; i < len; ++i) {
            cache.put(EmbeddingCache::key(provider, model, batch[i]), vectors[i]);
          }
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    };
    const std::size_t threads = std::min(config.concurrency, n_batches);
    if (threads <= 1) {
      worker();
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
  }

  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& k : keys) {
    auto v = cache.get(k);
    if (!v) throw Error(Errc::kProviderError, "embedding missing after fetch");
    out.push_back({std::move(*v), provider, model});
  }
  for (const auto& v : out) {
    if (v.values.size() != out.front().values.size()) {
      throw Error(Errc::kDimensionMismatch, "provider returned embeddings of unequal length");
    }
  }
  return out;
}

std::vector<EmbeddingVector> embed_texts(std::span<const std::string> texts, const ProviderConfig& config,
                                         EmbeddingCache& cache) {
  if (config.kind == ProviderKind::kRemote) return embed_remote(texts, config, cache);
  config.validate();
  const auto provider = config.provider_id();
  const auto model = config.effective_model_id();
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    const auto key = EmbeddingCache::key(provider, model, t);
    if (auto hit = cache.get(key)) {
      out.push_back({std::move(*hit), provider, model});
      continue;
    }
    auto v = embed_local(t, config.dimension, config.seed);
    cache.put(key, v.values);
    out.push_back(std::move(v));
  }
  return out;
}

namespace {

struct UniqueTexts {
  std::vector<std::string> texts;
  std::vector<std::size_t> index_of_row;
};

UniqueTexts unique_texts(const RawTable& table, std::span<const std::string> text_columns) {
  UniqueTexts u;
  std::unordered_map<std::string, std::size_t> seen;
  u.index_of_row.reserve(table.row_count());
  for (std::size_t r = 0; r < table.row_count(); ++r) {
    auto text = build_text(table, r, text_columns);
    auto [it, inserted] = seen.try_emplace(text, u.texts.size());
    if (inserted) u.texts.push_back(std::move(text));
    u.index_of_row.push_back(it->second);
  }
  return u;
}

EmbeddingTable expand(const UniqueTexts& u, const std::vector<std::vector<double>>& vectors) {
  EmbeddingTable t;
  t.dim = vectors.empty() ? 0 : vectors.front().size();
  t.values.reserve(u.index_of_row.size() * t.dim);
  for (auto i : u.index_of_row) {
    if (vectors[i].size() != t.dim) throw Error(Errc::kDimensionMismatch, "embeddings of unequal length");
    t.values.insert(t.values.end(), vectors[i].begin(), vectors[i].end());
  }
  return t;
}

}  // namespace

EmbeddingTable embed_table(const RawTable& table, std::span<const std::string> text_columns,
                           const ProviderConfig& config, EmbeddingCache& cache) {
  const auto u = unique_texts(table, text_columns);
  const auto embedded = embed_texts(u.texts, config, cache);
  std::vector<std::vector<double>> vectors;
  vectors.reserve(embedded.size());
  for (const auto& e : embedded) vectors.push_back(e.values);
  return expand(u, vectors);
}

EmbeddingTable embeddings_from_cache(const RawTable& table, std::span<const std::string> text_columns,
                                     const ProviderConfig& config, const EmbeddingCache& cache) {
  const auto u = unique_texts(table, text_columns);
  const auto provider = config.provider_id();
  const auto model = config.effective_model_id();
  std::vector<std::vector<double>> vectors;
  vectors.reserve(u.texts.size());
  for (const auto& t : u.texts) {
    auto hit = cache.get(EmbeddingCache::key(provider, model, t));
    if (!hit) {
      throw Error(Errc::kMissingArtifact, "embeddings.cache has no " + provider + " embedding for \"" + t +
                                              "\"; run the embed stage");
    }
    vectors.push_back(std::move(*hit));
  }
  return expand(u, vectors);
}

}  // namespace dmv
