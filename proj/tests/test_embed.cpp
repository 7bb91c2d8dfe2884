#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <functional>
#include <mutex>
#include <thread>

#include "dmv/embed.hpp"
#include "dmv/error.hpp"
#include "dmv/io.hpp"
#include "dmv/synth.hpp"
#include "httplib.h"
#include "json.hpp"
#include "support/oracles.hpp"
#include "support/util.hpp"

using namespace dmv;
using nlohmann::json;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return Errc::kEmpty;
}

// Written out from the FNV-1a and splitmix64 definitions.
std::uint64_t oracle_fnv(std::string_view s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
  return h;
}

std::uint64_t oracle_mix(std::uint64_t x) {
  oracle::SplitMix m{x - 0x9E3779B97F4A7C15ULL};
  return m.next();
}

std::vector<double> oracle_hash_embedding(const std::vector<std::string>& features, std::size_t dim,
                                          std::uint64_t seed) {
  std::vector<double> v(dim, 0.0);
  for (const auto& f : features) {
    const auto h = oracle_mix(oracle_fnv(f) ^ seed);
    v[h % dim] += (h >> 63) ? -1.0 : 1.0;
  }
  double n = 0;
  for (double x : v) n += x * x;
  for (double& x : v) x /= std::sqrt(n);
  return v;
}

// Deterministic fake embedding: [len(text), first byte, dim-2 zeros].
std::vector<double> fake_vector(const std::string& text, std::size_t dim) {
  std::vector<double> v(dim, 0.0);
  v[0] = static_cast<double>(text.size());
  if (!text.empty() && dim > 1) v[1] = static_cast<unsigned char>(text[0]);
  return v;
}

// Local HTTP server answering embedding requests. `plan` decides the status
// of the n-th request (0-based); 200 answers carry fake vectors.
class StubServer {
 public:
  std::function<int(std::size_t)> plan = [](std::size_t) { return 200; };
  std::size_t dim = 4;
  bool reverse_order = false;
  bool ragged = false;

  StubServer() {
    server_.Post("/v1/embeddings", [this](const httplib::Request& req, httplib::Response& res) {
      const auto n = requests_++;
      {
        std::lock_guard lock(mu_);
        auth_.push_back(req.get_header_value("Authorization"));
        const auto body = json::parse(req.body);
        model_ = body["model"].get<std::string>();
        batch_sizes_.push_back(body["input"].size());
        for (const auto& t : body["input"]) sent_.push_back(t.get<std::string>());
      }
      const int status = plan(n);
      if (status != 200) {
        res.status = status;
        res.set_content("{\"error\":\"nope\"}", "application/json");
        return;
      }
      const auto body = json::parse(req.body);
      json data = json::array();
      for (std::size_t i = 0; i < body["input"].size(); ++i) {
        const auto text = body["input"][i].get<std::string>();
        const std::size_t d = ragged && i == 1 ? dim + 1 : dim;
        data.push_back({{"index", i}, {"embedding", fake_vector(text, d)}});
      }
      if (reverse_order) std::reverse(data.begin(), data.end());
      res.set_content(json{{"data", data}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/embeddings"; }
  std::size_t requests() const { return requests_; }
  std::vector<std::string> sent() {
    std::lock_guard lock(mu_);
    return sent_;
  }
  std::vector<std::size_t> batch_sizes() {
    std::lock_guard lock(mu_);
    return batch_sizes_;
  }
  std::vector<std::string> auth() {
    std::lock_guard lock(mu_);
    return auth_;
  }
  std::string model() {
    std::lock_guard lock(mu_);
    return model_;
  }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<std::size_t> requests_{0};
  std::mutex mu_;
  std::vector<std::string> sent_;
  std::vector<std::size_t> batch_sizes_;
  std::vector<std::string> auth_;
  std::string model_;
};

ProviderConfig remote_config(const StubServer& s) {
  ProviderConfig c;
  c.kind = ProviderKind::kRemote;
  c.endpoint = s.endpoint();
  c.model_id = "stub-model";
  c.batch_size = 4;
  c.max_retries = 2;
  c.timeout_seconds = 5;
  c.backoff_base_seconds = 0.001;
  c.api_key_env = "DMV_TEST_EMBED_KEY";
  return c;
}

std::vector<std::string> texts(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("text number " + std::to_string(i));
  return out;
}

struct KeyEnv {
  KeyEnv() { ::setenv("DMV_TEST_EMBED_KEY", "secret-token", 1); }
  ~KeyEnv() { ::unsetenv("DMV_TEST_EMBED_KEY"); }
};

}  // namespace

TEST_CASE("sha256 matches the standard test vectors") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("local embedding equals signed feature hashing of unigrams and bigrams") {
  const auto v = embed_local("Hello, World! again", 64, 7);
  CHECK(v.values == oracle_hash_embedding({"hello", "hello world", "world", "world again", "again"}, 64, 7));
  CHECK(v.provider_id == "local");
  CHECK(v.model_id == "feature-hash-v1/d64/s7");
  CHECK(oracle_fnv("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("local embedding properties") {
  oracle::SplitMix rng{4};
  for (int t = 0; t < 100; ++t) {
    std::string text;
    const auto words = 1 + rng.next() % 12;
    for (std::uint64_t w = 0; w < words; ++w) text += "w" + std::to_string(rng.next() % 30) + " ";
    const auto dim = 8 + rng.next() % 300;
    const auto a = embed_local(text, dim, 42);
    CHECK(a.values.size() == dim);
    double n = 0;
    for (double x : a.values) n += x * x;
    CHECK(n == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(embed_local(text, dim, 42).values == a.values);
  }
  CHECK(embed_local("Cat SAT", 32, 1).values == embed_local("cat sat", 32, 1).values);
  CHECK(embed_local("cat sat", 256, 1).values != embed_local("sat cat", 256, 1).values);
  CHECK(embed_local("cat sat", 256, 1).values != embed_local("cat sat", 256, 2).values);
  const auto empty = embed_local("  ,, ", 16, 1);
  CHECK(empty.values == std::vector<double>(16, 0.0));
  CHECK(code_of([] { embed_local("x", 4, 1); }) == Errc::kInvalidConfig);
}

TEST_CASE("text construction") {
  const auto t = synthesize_cdc(5, 1);
  const auto cols = default_text_columns(t.schema);
  CHECK(std::find(cols.begin(), cols.end(), "question") != cols.end());
  CHECK(std::find(cols.begin(), cols.end(), "topic") != cols.end());
  CHECK(std::find(cols.begin(), cols.end(), "data_value") == cols.end());

  RawTable small{ColumnSchema::parse("topic = categorical\nquestion = categorical\ng = geolocation\ny = target\n"),
                 {{std::string("Diabetes"), std::nullopt, std::string("(1, 1)"), std::string("1")}}};
  const std::vector<std::string> c{"topic", "question"};
  CHECK(build_text(small, 0, c) == "topic: Diabetes | question: <missing>");
}

TEST_CASE("cache persists, ignores an interrupted line and rejects garbage") {
  const auto dir = testutil::scratch_dir("embed_cache");
  const auto path = dir / "e.cache";
  const auto k1 = EmbeddingCache::key("local", "m", "alpha");
  const auto k2 = EmbeddingCache::key("local", "m", "beta");
  CHECK(k1 != k2);
  CHECK(EmbeddingCache::key("local", "m2", "alpha") != k1);
  CHECK(EmbeddingCache::key("remote", "m", "alpha") != k1);
  {
    EmbeddingCache c(path);
    CHECK(c.size() == 0);
    c.put(k1, {0.1, -2.5, 1e-300});
    c.put(k2, {3.0, 4.0, 5.0});
    c.put(k1, {9.0, 9.0, 9.0});
    CHECK(c.get(k1) == std::vector<double>{0.1, -2.5, 1e-300});
  }
  EmbeddingCache back(path);
  CHECK(back.size() == 2);
  CHECK(back.get(k1) == std::vector<double>{0.1, -2.5, 1e-300});
  CHECK_FALSE(back.get("nope").has_value());

  {
    std::ofstream out(path, std::ios::app);
    out << "deadbeef\t3\t1 2";
  }
  CHECK(EmbeddingCache(path).size() == 2);
  {
    EmbeddingCache resumed(path);
    resumed.put(EmbeddingCache::key("local", "m", "gamma"), {1.0, 2.0, 3.0});
  }
  CHECK(EmbeddingCache(path).size() == 3);

  io::write_file_atomic(dir / "bad.cache", "abc\t2\t1 x\n");
  CHECK(code_of([&] { EmbeddingCache c(dir / "bad.cache"); }) == Errc::kIoFailure);
  io::write_file_atomic(dir / "short.cache", "abc\t3\t1 2\n");
  CHECK(code_of([&] { EmbeddingCache c(dir / "short.cache"); }) == Errc::kIoFailure);
}

TEST_CASE("embed_table embeds each distinct text once and rebuilds from the cache") {
  const auto t = synthesize_cdc(120, 2);
  const auto cols = default_text_columns(t.schema);
  ProviderConfig c;
  c.dimension = 32;
  EmbeddingCache cache;
  const auto e = embed_table(t, cols, c, cache);
  CHECK(e.dim == 32);
  CHECK(e.rows() == t.row_count());
  std::set<std::string> distinct;
  for (std::size_t r = 0; r < t.row_count(); ++r) {
    const auto text = build_text(t, r, cols);
    distinct.insert(text);
    const auto want = embed_local(text, 32, c.seed).values;
    CHECK(std::equal(want.begin(), want.end(), e.row(r).begin()));
  }
  CHECK(cache.size() == distinct.size());
  const auto again = embeddings_from_cache(t, cols, c, cache);
  CHECK(again.values == e.values);

  ProviderConfig other = c;
  other.seed = 43;
  CHECK(code_of([&] { embeddings_from_cache(t, cols, other, cache); }) == Errc::kMissingArtifact);
}

TEST_CASE("remote provider batches, dedupes and caches") {
  KeyEnv key;
  StubServer s;
  const auto cfg = remote_config(s);
  auto in = texts(10);
  in.push_back("text number 3");
  EmbeddingCache cache;
  const auto out = embed_remote(in, cfg, cache);
  REQUIRE(out.size() == 11);
  for (std::size_t i = 0; i < in.size(); ++i) CHECK(out[i].values == fake_vector(in[i], 4));
  CHECK(out[0].provider_id == "remote");
  CHECK(out[0].model_id == "stub-model");
  CHECK(s.requests() == 3);
  auto sizes = s.batch_sizes();
  std::sort(sizes.begin(), sizes.end());
  CHECK(sizes == std::vector<std::size_t>{2, 4, 4});
  CHECK(s.sent().size() == 10);
  CHECK(s.model() == "stub-model");
  for (const auto& a : s.auth()) CHECK(a == "Bearer secret-token");

  const auto again = embed_remote(in, cfg, cache);
  CHECK(s.requests() == 3);
  for (std::size_t i = 0; i < in.size(); ++i) CHECK(again[i].values == out[i].values);
}

TEST_CASE("remote provider honours response indices and concurrency") {
  KeyEnv key;
  StubServer s;
  s.reverse_order = true;
  auto cfg = remote_config(s);
  cfg.concurrency = 3;
  EmbeddingCache cache;
  const auto in = texts(25);
  const auto out = embed_remote(in, cfg, cache);
  for (std::size_t i = 0; i < in.size(); ++i) CHECK(out[i].values == fake_vector(in[i], 4));
  CHECK(s.requests() == 7);
}

TEST_CASE("remote provider retries throttling and server errors") {
  KeyEnv key;
  SUBCASE("429 then success") {
    StubServer s;
    s.plan = [](std::size_t n) { return n == 0 ? 429 : 200; };
    EmbeddingCache cache;
    const auto out = embed_remote(texts(3), remote_config(s), cache);
    CHECK(out.size() == 3);
    CHECK(s.requests() == 2);
  }
  SUBCASE("persistent 503 gives up after the retry budget") {
    StubServer s;
    s.plan = [](std::size_t) { return 503; };
    EmbeddingCache cache;
    CHECK(code_of([&] { embed_remote(texts(3), remote_config(s), cache); }) == Errc::kProviderError);
    CHECK(s.requests() == 3);
    CHECK(cache.size() == 0);
  }
  SUBCASE("client errors are not retried") {
    StubServer s;
    s.plan = [](std::size_t) { return 400; };
    EmbeddingCache cache;
    CHECK(code_of([&] { embed_remote(texts(3), remote_config(s), cache); }) == Errc::kProviderError);
    CHECK(s.requests() == 1);
  }
  SUBCASE("unreachable endpoint is a provider error") {
    ProviderConfig c;
    c.kind = ProviderKind::kRemote;
    c.endpoint = "http://127.0.0.1:1/v1/embeddings";
    c.model_id = "m";
    c.max_retries = 1;
    c.backoff_base_seconds = 0.001;
    c.timeout_seconds = 1;
    c.api_key_env = "DMV_TEST_EMBED_KEY";
    EmbeddingCache cache;
    CHECK(code_of([&] { embed_remote(texts(1), c, cache); }) == Errc::kProviderError);
  }
}

TEST_CASE("remote provider rejects ragged vectors and a missing key") {
  {
    KeyEnv key;
    StubServer s;
    s.ragged = true;
    EmbeddingCache cache;
    CHECK(code_of([&] { embed_remote(texts(3), remote_config(s), cache); }) == Errc::kDimensionMismatch);
  }
  StubServer s;
  EmbeddingCache cache;
  CHECK(code_of([&] { embed_remote(texts(2), remote_config(s), cache); }) == Errc::kAuthMissing);
  CHECK(s.requests() == 0);
}

TEST_CASE("provider configuration validation") {
  ProviderConfig c;
  c.batch_size = 0;
  CHECK(code_of([&] { c.validate(); }) == Errc::kInvalidConfig);
  c = {};
  c.kind = ProviderKind::kRemote;
  CHECK(code_of([&] { c.validate(); }) == Errc::kInvalidConfig);
  c.endpoint = "http://x/y";
  c.model_id = "m";
  CHECK_NOTHROW(c.validate());
  CHECK(parse_provider_kind("remote") == ProviderKind::kRemote);
  CHECK(code_of([] { parse_provider_kind("cloud"); }) == Errc::kInvalidConfig);
}
