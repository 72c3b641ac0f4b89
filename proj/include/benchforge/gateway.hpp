#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "benchforge/detail/sha256.hpp"
#include "benchforge/errors.hpp"
#include "benchforge/io.hpp"
#include "benchforge/text.hpp"

namespace benchforge {

using LogSink = std::function<void(const std::string&)>;

// ---------------------------------------------------------------------------
// Prompt templates. Placeholders are written {{name}}; the reserved slot
// {{demonstrations}} is filled from the template's own few-shot blocks.

struct PromptTemplate {
  std::string name;
  std::string body;
  std::vector<std::string> demonstrations;

  // Templates are versioned by content hash.
  std::string content_hash() const {
    detail::Sha256 h;
    h.update(body);
    for (const auto& d : demonstrations) {
      h.update("\x00", 1);
      h.update(d);
    }
    return detail::to_hex(h.finish());
  }
};

inline std::string render_prompt(const PromptTemplate& tmpl,
                                 const std::map<std::string, std::string>& bindings) {
  std::string out;
  out.reserve(tmpl.body.size());
  const std::string& body = tmpl.body;
  std::size_t i = 0;
  while (i < body.size()) {
    std::size_t open = body.find("{{", i);
    if (open == std::string::npos) {
      out.append(body, i, std::string::npos);
      break;
    }
    out.append(body, i, open - i);
    std::size_t close = body.find("}}", open + 2);
    if (close == std::string::npos)
      throw ValidationError("template " + tmpl.name + ": unterminated placeholder");
    std::string key = trim(body.substr(open + 2, close - open - 2));
    if (key == "demonstrations") {
      out += join(tmpl.demonstrations, "\n\n");
    } else {
      auto it = bindings.find(key);
      if (it == bindings.end()) throw ValidationError("unbound: " + key);
      out += it->second;
    }
    i = close + 2;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Requests / responses.

struct ChatRequest {
  std::string model_id;
  std::string rendered_prompt;
  double temperature = 0.0;
  int max_tokens = 1024;
  std::uint64_t seed_hint = 0;
};

struct ChatResponse {
  std::string text;
  std::string finish_reason;
  long usage_tokens = 0;
  bool cache_hit = false;
};

struct EmbeddingVector {
  std::vector<double> values;
  std::string model_id;
};

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ValidationError("cosine: dimension mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// ---------------------------------------------------------------------------
// Provider interface.

struct ProviderReply {
  std::string text;
  std::string finish_reason = "stop";
  long usage_tokens = 0;
};

class Provider {
 public:
  virtual ~Provider() = default;
  virtual ProviderReply chat(const std::string& model_id, const std::string& prompt,
                             double temperature, int max_tokens, std::uint64_t seed_hint) = 0;
  virtual std::vector<std::vector<double>> embed(const std::string& model_id,
                                                 const std::vector<std::string>& texts) = 0;
};

// ---------------------------------------------------------------------------
// Scripted mock provider. Every LLM-touching test runs against this; rules
// match on (optional model id, prompt substring), first match wins.

class MockProvider : public Provider {
 public:
  struct Rule {
    std::string model;  // empty matches any model
    std::string match;  // substring of the prompt; empty matches any prompt
    std::string reply;
    std::string finish_reason = "stop";
    int error_status = 0;  // nonzero: throw ProviderError(status) instead
  };

  void add_rule(Rule rule) {
    std::lock_guard lock(mu_);
    rules_.push_back(std::move(rule));
  }

  void add_reply(const std::string& match, const std::string& reply) {
    add_rule({"", match, reply, "stop", 0});
  }

  void add_model_reply(const std::string& model, const std::string& match,
                       const std::string& reply) {
    add_rule({model, match, reply, "stop", 0});
  }

  void set_default_reply(const std::string& reply) {
    std::lock_guard lock(mu_);
    default_reply_ = reply;
  }

  // Scripted replies file: JSONL of {"match", "reply", "model"?, "finish_reason"?}.
  void load_script(const fs::path& path) {
    for (const auto& rec : read_jsonl(path)) {
      Rule rule;
      rule.model = rec.value.value("model", std::string{});
      rule.match = rec.value.value("match", std::string{});
      rule.reply = rec.value.at("reply").get<std::string>();
      rule.finish_reason = rec.value.value("finish_reason", std::string{"stop"});
      add_rule(std::move(rule));
    }
  }

  void set_embedding(const std::string& text, std::vector<double> vec) {
    std::lock_guard lock(mu_);
    embedding_overrides_[text] = std::move(vec);
  }

  void set_embedding_dim(std::size_t dim) {
    std::lock_guard lock(mu_);
    embed_dim_ = dim;
  }

  void set_call_delay(std::chrono::milliseconds delay) { delay_ = delay; }

  ProviderReply chat(const std::string& model_id, const std::string& prompt, double temperature,
                     int max_tokens, std::uint64_t seed_hint) override {
    (void)temperature;
    (void)max_tokens;
    (void)seed_hint;
    ConcurrencyGuard guard(*this);
    if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
    std::lock_guard lock(mu_);
    calls_.push_back({model_id, prompt});
    for (const auto& rule : rules_) {
      if (!rule.model.empty() && rule.model != model_id) continue;
      if (!rule.match.empty() && prompt.find(rule.match) == std::string::npos) continue;
      if (rule.error_status != 0)
        throw ProviderError("scripted provider failure", rule.error_status);
      return {rule.reply, rule.finish_reason, static_cast<long>(prompt.size() / 4)};
    }
    if (default_reply_) return {*default_reply_, "stop", 0};
    throw ProviderError("mock provider: no rule matches prompt: " + prompt.substr(0, 120));
  }

  std::vector<std::vector<double>> embed(const std::string& model_id,
                                         const std::vector<std::string>& texts) override {
    ConcurrencyGuard guard(*this);
    std::lock_guard lock(mu_);
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
      auto it = embedding_overrides_.find(text);
      if (it != embedding_overrides_.end()) {
        out.push_back(it->second);
      } else {
        out.push_back(pseudo_embedding(model_id, text, embed_dim_));
      }
    }
    return out;
  }

  // Deterministic unit vector derived from the text digest. Identical text
  // maps to an identical vector; distinct texts to near-orthogonal ones.
  static std::vector<double> pseudo_embedding(const std::string& model_id, const std::string& text,
                                              std::size_t dim) {
    std::vector<double> v(dim);
    std::string material = model_id + "\x1f" + text;
    std::size_t produced = 0;
    int round = 0;
    while (produced < dim) {
      detail::Sha256 h;
      h.update(material);
      std::string r = std::to_string(round++);
      h.update(r);
      auto digest = h.finish();
      for (std::size_t i = 0; i + 4 <= digest.size() && produced < dim; i += 4) {
        std::uint32_t word = (std::uint32_t(digest[i]) << 24) | (std::uint32_t(digest[i + 1]) << 16) |
                             (std::uint32_t(digest[i + 2]) << 8) | std::uint32_t(digest[i + 3]);
        v[produced++] = (static_cast<double>(word) / 4294967295.0) * 2.0 - 1.0;
      }
    }
    double norm = 0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0) {
      for (double& x : v) x /= norm;
    }
    return v;
  }

  std::size_t call_count() const {
    std::lock_guard lock(mu_);
    return calls_.size();
  }

  std::vector<std::pair<std::string, std::string>> calls() const {
    std::lock_guard lock(mu_);
    return calls_;
  }

  int max_observed_concurrency() const { return max_concurrent_.load(); }

 private:
  struct ConcurrencyGuard {
    explicit ConcurrencyGuard(MockProvider& p) : provider(p) {
      int now = ++provider.concurrent_;
      int prev = provider.max_concurrent_.load();
      while (now > prev && !provider.max_concurrent_.compare_exchange_weak(prev, now)) {
      }
    }
    ~ConcurrencyGuard() { --provider.concurrent_; }
    MockProvider& provider;
  };

  mutable std::mutex mu_;
  std::vector<Rule> rules_;
  std::optional<std::string> default_reply_;
  std::map<std::string, std::vector<double>> embedding_overrides_;
  std::size_t embed_dim_ = 16;
  std::vector<std::pair<std::string, std::string>> calls_;
  std::atomic<int> concurrent_{0};
  std::atomic<int> max_concurrent_{0};
  std::chrono::milliseconds delay_{0};
};

// ---------------------------------------------------------------------------
// Response cache: a directory of files named by the hex digest of the cache
// key, each holding the raw response plus request metadata.

class ResponseCache {
 public:
  ResponseCache() : state_(std::make_shared<State>()) {}  // in-memory only
  explicit ResponseCache(fs::path dir) : state_(std::make_shared<State>()) {
    state_->dir = std::move(dir);
    if (!state_->dir.empty()) fs::create_directories(state_->dir);
  }

  std::optional<nlohmann::json> get(const std::string& key_hex) const {
    {
      std::lock_guard lock(state_->mu);
      auto it = state_->memory.find(key_hex);
      if (it != state_->memory.end()) return it->second;
    }
    if (state_->dir.empty()) return std::nullopt;
    fs::path file = state_->dir / (key_hex + ".json");
    if (!fs::exists(file)) return std::nullopt;
    nlohmann::json j = nlohmann::json::parse(read_file(file), nullptr, false);
    if (j.is_discarded()) return std::nullopt;
    {
      std::lock_guard lock(state_->mu);
      state_->memory[key_hex] = j;
    }
    return j;
  }

  void put(const std::string& key_hex, const nlohmann::json& value) {
    {
      std::lock_guard lock(state_->mu);
      state_->memory[key_hex] = value;
    }
    if (!state_->dir.empty()) atomic_write_file(state_->dir / (key_hex + ".json"), value.dump());
  }

  const fs::path& dir() const { return state_->dir; }

 private:
  struct State {
    fs::path dir;
    std::mutex mu;
    std::map<std::string, nlohmann::json> memory;
  };
  std::shared_ptr<State> state_;
};

// ---------------------------------------------------------------------------
// Behavioral in-flight bound shared by all workers of a gateway.

class InFlightLimiter {
 public:
  explicit InFlightLimiter(int max_in_flight) : max_(max_in_flight < 1 ? 1 : max_in_flight) {}

  class Permit {
   public:
    explicit Permit(InFlightLimiter& limiter) : limiter_(&limiter) {
      std::unique_lock lock(limiter_->mu_);
      limiter_->cv_.wait(lock, [&] { return limiter_->active_ < limiter_->max_; });
      ++limiter_->active_;
    }
    ~Permit() {
      {
        std::lock_guard lock(limiter_->mu_);
        --limiter_->active_;
      }
      limiter_->cv_.notify_one();
    }
    Permit(const Permit&) = delete;
    Permit& operator=(const Permit&) = delete;

   private:
    InFlightLimiter* limiter_;
  };

 private:
  friend class Permit;
  int max_;
  int active_ = 0;
  std::mutex mu_;
  std::condition_variable cv_;
};

// ---------------------------------------------------------------------------
// Gateway configuration and stats.

struct RetryPolicy {
  int max_retries = 3;
  std::vector<std::chrono::milliseconds> backoff = {std::chrono::milliseconds(1000),
                                                    std::chrono::milliseconds(2000),
                                                    std::chrono::milliseconds(4000)};

  bool retryable(int status) const { return status == 0 || status == 429 || status >= 500; }

  std::chrono::milliseconds delay(int retry_index) const {
    if (backoff.empty()) return std::chrono::milliseconds(0);
    std::size_t i = std::min<std::size_t>(retry_index, backoff.size() - 1);
    return backoff[i];
  }
};

struct GatewayStats {
  std::atomic<long> chat_hits{0};
  std::atomic<long> chat_misses{0};
  std::atomic<long> embed_hits{0};
  std::atomic<long> embed_misses{0};
  std::atomic<long> provider_calls{0};
  std::atomic<long> retries{0};

  nlohmann::json to_json() const {
    return {{"chat_hits", chat_hits.load()},     {"chat_misses", chat_misses.load()},
            {"embed_hits", embed_hits.load()},   {"embed_misses", embed_misses.load()},
            {"provider_calls", provider_calls.load()}, {"retries", retries.load()}};
  }
};

class LlmGateway {
 public:
  LlmGateway(std::shared_ptr<Provider> provider, ResponseCache cache, int max_in_flight = 4,
             RetryPolicy retry = {})
      : provider_(std::move(provider)),
        cache_(std::move(cache)),
        limiter_(max_in_flight),
        retry_(retry) {}

  // Cache key covers exactly (model_id, rendered_prompt, temperature,
  // max_tokens); a hit returns the stored text without a provider call.
  static std::string cache_key(const ChatRequest& request) {
    char temp[32];
    std::snprintf(temp, sizeof temp, "%.6g", request.temperature);
    return detail::sha256_hex_fields({"chat", request.model_id, request.rendered_prompt, temp,
                                      std::to_string(request.max_tokens)});
  }

  ChatResponse chat(const ChatRequest& request) {
    const std::string key = cache_key(request);
    if (auto cached = cache_.get(key)) {
      ++stats_.chat_hits;
      return {cached->at("response").at("text").get<std::string>(),
              cached->at("response").value("finish_reason", std::string{"stop"}),
              cached->at("response").value("usage_tokens", 0L), true};
    }
    ++stats_.chat_misses;
    ProviderReply reply = call_with_retries([&] {
      return provider_->chat(request.model_id, request.rendered_prompt, request.temperature,
                             request.max_tokens, request.seed_hint);
    });
    nlohmann::json entry{{"request",
                          {{"model_id", request.model_id},
                           {"rendered_prompt", request.rendered_prompt},
                           {"temperature", request.temperature},
                           {"max_tokens", request.max_tokens}}},
                         {"response",
                          {{"text", reply.text},
                           {"finish_reason", reply.finish_reason},
                           {"usage_tokens", reply.usage_tokens}}}};
    cache_.put(key, entry);
    return {reply.text, reply.finish_reason, reply.usage_tokens, false};
  }

  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts,
                                     const std::string& model_id) {
    if (texts.empty()) throw ValidationError("empty batch");
    std::vector<EmbeddingVector> out(texts.size());
    std::vector<std::size_t> miss_indices;
    std::vector<std::string> miss_texts;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      const std::string key = detail::sha256_hex_fields({"embed", model_id, texts[i]});
      if (auto cached = cache_.get(key)) {
        ++stats_.embed_hits;
        out[i] = {cached->at("values").get<std::vector<double>>(), model_id};
      } else {
        miss_indices.push_back(i);
        miss_texts.push_back(texts[i]);
      }
    }
    if (!miss_indices.empty()) {
      stats_.embed_misses += static_cast<long>(miss_indices.size());
      auto vectors = call_with_retries([&] { return provider_->embed(model_id, miss_texts); });
      if (vectors.size() != miss_texts.size())
        throw ProviderError("embedding count mismatch: got " + std::to_string(vectors.size()) +
                            " for " + std::to_string(miss_texts.size()) + " texts");
      for (std::size_t k = 0; k < miss_indices.size(); ++k) {
        for (double x : vectors[k]) {
          if (!std::isfinite(x)) throw ValidationError("non-finite embedding value");
        }
        out[miss_indices[k]] = {vectors[k], model_id};
        cache_.put(detail::sha256_hex_fields({"embed", model_id, miss_texts[k]}),
                   nlohmann::json{{"model_id", model_id},
                                  {"text", miss_texts[k]},
                                  {"values", vectors[k]}});
      }
    }
    const std::size_t dim = out.front().values.size();
    for (const auto& v : out) {
      if (v.values.size() != dim)
        throw ValidationError("dimension mismatch across batch: " + std::to_string(v.values.size()) +
                              " vs " + std::to_string(dim));
    }
    return out;
  }

  const GatewayStats& stats() const { return stats_; }
  const ResponseCache& cache() const { return cache_; }

 private:
  template <typename Fn>
  auto call_with_retries(Fn&& fn) -> decltype(fn()) {
    int retry = 0;
    for (;;) {
      InFlightLimiter::Permit permit(limiter_);
      ++stats_.provider_calls;
      try {
        return fn();
      } catch (const ProviderError& e) {
        if (!retry_.retryable(e.status()) || retry >= retry_.max_retries) throw;
        ++stats_.retries;
        std::this_thread::sleep_for(retry_.delay(retry));
        ++retry;
      }
    }
  }

  std::shared_ptr<Provider> provider_;
  ResponseCache cache_;
  InFlightLimiter limiter_;
  RetryPolicy retry_;
  GatewayStats stats_;
};

// Temperature defaults: diverse sampling for candidate generation,
// deterministic calls for extraction and verification.
inline constexpr double kGenerationTemperature = 0.7;
inline constexpr double kVerificationTemperature = 0.0;

inline constexpr const char* kApiKeyEnvVar = "STRUCTEVAL_API_KEY";

}  // namespace benchforge
