#pragma once

#include <atomic>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "benchforge/bloom.hpp"
#include "benchforge/concept_map.hpp"
#include "benchforge/corpus.hpp"
#include "benchforge/evalkit.hpp"
#include "benchforge/gateway.hpp"
#include "benchforge/retrieval.hpp"
#include "benchforge/templates.hpp"

namespace benchforge {

// ---------------------------------------------------------------------------
// Flat-key configuration: "key = value" lines, '#' comments. Every key has a
// CLI override; precedence is CLI > file > default.

class PipelineConfig {
 public:
  static PipelineConfig from_file(const fs::path& path) {
    PipelineConfig config;
    std::size_t lineno = 0;
    for (const auto& line : split_lines(read_file(path))) {
      ++lineno;
      std::string t = trim(line);
      if (t.empty() || t.front() == '#') continue;
      auto eq = t.find('=');
      if (eq == std::string::npos)
        throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                              ": expected key = value");
      config.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return config;
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get(const std::string& key, const std::string& fallback = {}) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  long get_int(const std::string& key, long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      return std::stol(it->second);
    } catch (const std::exception&) {
      throw ValidationError("config key " + key + " is not an integer: " + it->second);
    }
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      return std::stod(it->second);
    } catch (const std::exception&) {
      throw ValidationError("config key " + key + " is not a number: " + it->second);
    }
  }

  std::vector<std::string> get_list(const std::string& key) const {
    std::vector<std::string> out;
    for (const auto& part : split_on(get(key), ',')) {
      std::string t = trim(part);
      if (!t.empty()) out.push_back(t);
    }
    return out;
  }

  // Typed views with documented defaults.
  RetrievalConfig retrieval() const {
    RetrievalConfig r;
    r.window = static_cast<int>(get_int("retrieval.window", 256));
    r.overlap = static_cast<int>(get_int("retrieval.overlap", 32));
    r.bm25.k1 = get_double("retrieval.k1", 1.5);
    r.bm25.b = get_double("retrieval.b", 0.75);
    r.top_n = static_cast<std::size_t>(get_int("retrieval.top_n", 5));
    r.top_m = static_cast<std::size_t>(get_int("retrieval.top_m", 4));
    r.embed_model = get("provider.embed_model", "bge-small");
    return r;
  }

  BloomConfig bloom() const {
    BloomConfig b;
    b.generator_model = get("provider.model", "generator");
    b.pool.model_ids = get_list("pool.models");
    b.keep_per_level = static_cast<int>(get_int("bloom.keep_per_level", 1));
    b.candidates_per_level = static_cast<int>(get_int("bloom.candidates_per_level", 5));
    return b;
  }

  ConceptConfig concept_config() const {
    ConceptConfig c;
    c.generator_model = get("provider.model", "generator");
    c.max_triples = static_cast<std::size_t>(get_int("kg.max_triples", 50));
    c.rng_seed = rng_seed();
    return c;
  }

  std::uint64_t rng_seed() const {
    return static_cast<std::uint64_t>(get_int("rng_seed", 0));
  }
  int max_in_flight() const { return static_cast<int>(get_int("provider.max_in_flight", 4)); }
  int workers() const { return static_cast<int>(get_int("workers", 4)); }
  std::string cache_dir() const { return get("cache.dir"); }

  void validate() const {
    const auto r = retrieval();
    if (r.overlap < 0 || r.window <= r.overlap)
      throw ValidationError("retrieval.window must exceed retrieval.overlap >= 0");
    if (r.bm25.k1 <= 0) throw ValidationError("retrieval.k1 must be positive");
    if (r.bm25.b < 0 || r.bm25.b > 1) throw ValidationError("retrieval.b must be in [0, 1]");
    if (r.top_n < 1 || r.top_m < 1) throw ValidationError("retrieval.top_n/top_m must be >= 1");
    if (get_int("bloom.keep_per_level", 1) < 1)
      throw ValidationError("bloom.keep_per_level must be >= 1");
    if (max_in_flight() < 1) throw ValidationError("provider.max_in_flight must be >= 1");
    if (workers() < 1) throw ValidationError("workers must be >= 1");
    for (const std::string key : {"corpus.dir", "templates.dir", "blacklist.path"}) {
      if (has(key) && !fs::exists(get(key)))
        throw ValidationError("config path does not exist: " + key + " = " + get(key));
    }
    const std::string kg = get("kg");
    if (kg.rfind("fixture:", 0) == 0 && !fs::exists(kg.substr(8)))
      throw ValidationError("kg fixture path does not exist: " + kg.substr(8));
  }

  std::string config_hash() const {
    detail::Sha256 h;
    for (const auto& [key, value] : values_) {
      h.update(key);
      h.update("=", 1);
      h.update(value);
      h.update("\n", 1);
    }
    return detail::to_hex(h.finish());
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Run orchestration.

enum class RunMode { kBloom, kConcept, kBoth };

inline std::string to_string(RunMode mode) {
  switch (mode) {
    case RunMode::kBloom: return "bloom";
    case RunMode::kConcept: return "concept";
    case RunMode::kBoth: return "both";
  }
  throw ValidationError("unknown run mode");
}

struct PipelineOutcome {
  enum class Status { kComplete, kPartial };
  Status status = Status::kComplete;
  std::string error;
  std::size_t seeds_total = 0;
  std::size_t seeds_processed = 0;        // this run
  std::size_t seeds_from_checkpoint = 0;  // served from a previous run
  nlohmann::json manifest;
};

// Bundles the live collaborators for one run. Tests inject a MockProvider
// via the gateway; the CLI assembles this from config.
struct PipelineContext {
  PipelineConfig config;
  std::shared_ptr<LlmGateway> gateway;
  TemplateSet templates = TemplateSet::builtin();
  std::shared_ptr<EvidenceRetriever> retriever;  // required for bloom modes
  std::shared_ptr<KgClient> kg;                  // required for concept modes
  Blacklist blacklist = Blacklist::defaults();
  LogSink log;
};

namespace detail_pipeline {

struct SeedOutput {
  bool emitted = false;
  StructuredItem item;
  std::vector<GeneratedInstance> sidecar;  // rejected + accepted overflow
  std::string skip_reason;                 // empty when emitted
  std::size_t candidates_generated = 0;
  std::size_t parse_drops = 0;
  std::map<std::string, std::size_t> rejection_counts;
  std::size_t gaps = 0;
  std::size_t concept_dropped = 0;
};

inline SeedOutput process_seed(const PipelineContext& ctx, const SeedInstance& seed,
                               RunMode mode) {
  SeedOutput out;
  out.item.seed = seed;
  out.item.objective.seed_id = seed.id;

  if (mode == RunMode::kBloom || mode == RunMode::kBoth) {
    if (!ctx.retriever) throw ValidationError("bloom mode requires a corpus (corpus.dir)");
    BloomBuilder builder(*ctx.gateway, ctx.templates, ctx.config.bloom(), ctx.blacklist, ctx.log);
    BloomSeedResult bloom = builder.build_bloom_set(seed, *ctx.retriever);
    out.candidates_generated += bloom.candidates_generated;
    out.parse_drops += bloom.parse_drops;
    for (const auto& [reason, count] : bloom.rejection_counts)
      out.rejection_counts[reason] += count;
    out.gaps += bloom.gaps.size();
    if (bloom.seed_malformed) {
      out.skip_reason = "malformed";
      return out;
    }
    if (bloom.no_evidence) {
      out.skip_reason = "no_evidence";
      return out;
    }
    out.item.objective = *bloom.objective;
    out.item.bloom = std::move(bloom.accepted);
    out.sidecar = std::move(bloom.not_retained);
  }

  if (mode == RunMode::kConcept || mode == RunMode::kBoth) {
    if (!ctx.kg) throw ValidationError("concept mode requires a knowledge graph (kg)");
    ConceptBuilder builder(*ctx.gateway, ctx.templates, *ctx.kg, ctx.config.concept_config(),
                           ctx.log);
    ConceptSeedResult result = builder.build_concept_set(seed);
    out.concept_dropped += result.dropped_instances;
    if (result.skipped_no_concepts && mode == RunMode::kConcept) {
      out.skip_reason = "no_concepts";
      return out;
    }
    out.item.concept_instances = std::move(result.instances);
  }

  out.emitted = true;
  return out;
}

struct CheckpointEntry {
  std::string seed_id;
  std::string skip_reason;
};

inline std::vector<CheckpointEntry> load_checkpoint(const fs::path& path) {
  std::vector<CheckpointEntry> out;
  if (!fs::exists(path)) return out;
  for (const auto& rec : read_jsonl(path)) {
    out.push_back({rec.value.at("seed_id").get<std::string>(),
                   rec.value.value("skip_reason", std::string{})});
  }
  return out;
}

}  // namespace detail_pipeline

// Executes the full pipeline over the seeds: a worker pool processes seeds
// in parallel, results commit to the output file in input order, and each
// committed seed id is appended to a checkpoint so an interrupted run can
// resume without repeating work. The manifest is recomputed from the output
// files at the end, so it stays accurate across resumed runs.
inline PipelineOutcome run_pipeline(const PipelineContext& ctx,
                                    const std::vector<SeedInstance>& seeds,
                                    const fs::path& out_path, RunMode mode) {
  ctx.config.validate();
  PipelineOutcome outcome;
  outcome.seeds_total = seeds.size();
  const fs::path checkpoint_path = out_path.string() + ".checkpoint";
  const fs::path rejects_path = out_path.string() + ".rejects.jsonl";
  const fs::path manifest_path = out_path.string() + ".manifest.json";

  // Resume support: keep only records belonging to checkpointed seeds.
  auto checkpoint = detail_pipeline::load_checkpoint(checkpoint_path);
  std::set<std::string> done;
  std::map<std::string, std::size_t> prior_skips;
  for (const auto& entry : checkpoint) {
    done.insert(entry.seed_id);
    if (!entry.skip_reason.empty()) ++prior_skips[entry.skip_reason];
  }
  if (!done.empty()) {
    for (const fs::path& path : {out_path, rejects_path}) {
      if (!fs::exists(path)) continue;
      std::vector<nlohmann::json> kept;
      for (const auto& rec : read_jsonl(path)) {
        const std::string seed_id = path == out_path
                                        ? rec.value.at("seed").at("id").get<std::string>()
                                        : rec.value.at("parent_seed_id").get<std::string>();
        if (done.count(seed_id)) kept.push_back(rec.value);
      }
      write_jsonl(path, kept);
    }
  } else {
    atomic_write_file(out_path, "");
    atomic_write_file(rejects_path, "");
    fs::remove(checkpoint_path);
  }

  std::vector<const SeedInstance*> pending;
  for (const auto& seed : seeds) {
    if (!done.count(seed.id)) pending.push_back(&seed);
  }
  outcome.seeds_from_checkpoint = seeds.size() - pending.size();

  std::ofstream items_out(out_path, std::ios::app);
  std::ofstream rejects_out(rejects_path, std::ios::app);
  std::ofstream checkpoint_out(checkpoint_path, std::ios::app);
  if (!items_out || !rejects_out || !checkpoint_out)
    throw IoError("cannot open output files under " + out_path.parent_path().string());

  std::vector<std::optional<detail_pipeline::SeedOutput>> results(pending.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex commit_mu;
  std::size_t committed = 0;
  std::string first_error;
  std::mutex error_mu;

  auto commit_ready = [&] {
    std::lock_guard lock(commit_mu);
    while (committed < results.size() && results[committed].has_value()) {
      const auto& out = *results[committed];
      if (out.emitted) {
        items_out << to_json(out.item).dump() << "\n";
        items_out.flush();
      }
      for (const auto& inst : out.sidecar) {
        rejects_out << to_json(inst).dump() << "\n";
      }
      rejects_out.flush();
      nlohmann::json entry{{"seed_id", pending[committed]->id}};
      if (!out.skip_reason.empty()) entry["skip_reason"] = out.skip_reason;
      checkpoint_out << entry.dump() << "\n";
      checkpoint_out.flush();
      ++committed;
    }
  };

  const int worker_count =
      std::max(1, std::min<int>(ctx.config.workers(), static_cast<int>(pending.size())));
  std::vector<std::thread> workers;
  for (int w = 0; w < worker_count; ++w) {
    workers.emplace_back([&] {
      for (;;) {
        if (failed.load()) return;
        std::size_t index = next.fetch_add(1);
        if (index >= pending.size()) return;
        try {
          results[index] = detail_pipeline::process_seed(ctx, *pending[index], mode);
          commit_ready();
        } catch (const std::exception& e) {
          {
            std::lock_guard lock(error_mu);
            if (first_error.empty()) first_error = e.what();
          }
          failed.store(true);
          return;
        }
      }
    });
  }
  for (auto& thread : workers) thread.join();
  commit_ready();
  outcome.seeds_processed = committed;

  // Aggregate manifest counts. File-derived numbers survive resumes; the
  // per-run numbers cover this run only.
  std::map<std::string, std::size_t> skip_counts = prior_skips;
  std::size_t candidates_generated = 0, parse_drops = 0, gaps = 0, concept_dropped = 0;
  for (std::size_t i = 0; i < committed; ++i) {
    const auto& out = *results[i];
    if (!out.skip_reason.empty()) ++skip_counts[out.skip_reason];
    candidates_generated += out.candidates_generated;
    parse_drops += out.parse_drops;
    gaps += out.gaps;
    concept_dropped += out.concept_dropped;
  }

  std::vector<StructuredItem> emitted = load_items(out_path);
  StatsReport stats = structure_stats(emitted);
  std::map<std::string, std::size_t> rejection_counts;
  std::size_t overflow_accepted = 0;
  for (const auto& rec : read_jsonl(rejects_path)) {
    GeneratedInstance inst = instance_from_json(rec.value);
    if (inst.status == InstanceStatus::kRejected) {
      ++rejection_counts[to_string(*inst.reject_reason)];
    } else {
      ++overflow_accepted;
    }
  }

  nlohmann::json manifest{
      {"schema_version", kSchemaVersion},
      {"mode", to_string(mode)},
      {"config_hash", ctx.config.config_hash()},
      {"template_hashes", ctx.templates.hashes()},
      {"rng_seed", ctx.config.rng_seed()},
      {"seeds_total", seeds.size()},
      {"items_emitted", emitted.size()},
      {"seeds_skipped", skip_counts},
      {"stats", to_json(stats)},
      {"rejection_counts", rejection_counts},
      {"accepted_overflow", overflow_accepted},
      {"bloom_gaps", gaps},
      {"concept_instances_dropped", concept_dropped},
      {"this_run",
       {{"seeds_processed", committed},
        {"seeds_from_checkpoint", outcome.seeds_from_checkpoint},
        {"candidates_generated", candidates_generated},
        {"parse_drops", parse_drops}}},
      {"cache_stats", ctx.gateway->stats().to_json()}};
  atomic_write_file(manifest_path, manifest.dump(2) + "\n");
  outcome.manifest = manifest;

  if (failed.load() || committed < pending.size()) {
    outcome.status = PipelineOutcome::Status::kPartial;
    outcome.error = first_error.empty() ? "run interrupted" : first_error;
  } else {
    fs::remove(checkpoint_path);
  }
  return outcome;
}

// ---------------------------------------------------------------------------
// Customized construction: a topic proposer and a concept proposer list the
// axes for a target domain, which then feed the standard pipeline with
// synthesized source=custom seeds.

struct CustomAxes {
  std::vector<TestObjective> objectives;
  std::vector<ConceptNode> concepts;
};

inline std::vector<TestObjective> parse_objective_lines(const std::string& reply) {
  std::vector<TestObjective> out;
  for (const auto& raw : split_lines(reply)) {
    std::string line = trim(raw);
    if (line.empty()) continue;
    // Tolerate a leading "N." enumeration.
    if (std::isdigit(static_cast<unsigned char>(line[0]))) {
      std::size_t i = 0;
      while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
      if (i < line.size() && (line[i] == '.' || line[i] == ')')) line = trim(line.substr(i + 1));
    }
    std::string lower = to_lower(line);
    if (lower.rfind("test objective:", 0) != 0) continue;
    line = trim(line.substr(15));
    std::string name = line, description;
    if (auto bar = line.find('|'); bar != std::string::npos) {
      name = trim(line.substr(0, bar));
      description = trim(line.substr(bar + 1));
      std::string dlower = to_lower(description);
      if (dlower.rfind("description:", 0) == 0) description = trim(description.substr(12));
    }
    if (name.empty() || name.size() > 120) continue;
    out.push_back({name, description, ""});
  }
  return out;
}

inline CustomAxes propose_custom_axes(LlmGateway& gateway, const TemplateSet& templates,
                                      const std::string& model_id, const std::string& target,
                                      std::size_t n_objectives, std::size_t n_concepts,
                                      int reasks = 1) {
  CustomAxes axes;
  auto ask = [&](const std::string& template_name, const std::string& count,
                 int attempt) {
    std::string prompt = render_prompt(templates.get(template_name),
                                       {{"target", target}, {"count", count}});
    if (attempt > 0)
      prompt += "\n\n(Format reminder " + std::to_string(attempt) +
                ": respond again using exactly the required format.)";
    return gateway.chat({model_id, prompt, kGenerationTemperature, 1024, 0}).text;
  };

  if (n_objectives > 0) {
    for (int attempt = 0; attempt <= reasks && axes.objectives.empty(); ++attempt) {
      axes.objectives =
          parse_objective_lines(ask("topic_proposer", std::to_string(n_objectives), attempt));
    }
    if (axes.objectives.empty())
      throw ValidationError("topic proposer reply unparseable after re-ask");
    if (axes.objectives.size() > n_objectives) axes.objectives.resize(n_objectives);
  }
  if (n_concepts > 0) {
    std::vector<ConceptNode> concepts;
    for (int attempt = 0; attempt <= reasks && concepts.empty(); ++attempt) {
      concepts = parse_concept_reply(ask("concept_proposer", std::to_string(n_concepts), attempt),
                                     "");
    }
    if (concepts.empty())
      throw ValidationError("concept proposer reply unparseable after re-ask");
    if (concepts.size() > n_concepts) concepts.resize(n_concepts);
    axes.concepts = std::move(concepts);
  }
  return axes;
}

// Placeholder seed carrying a proposed objective through the pipeline.
inline SeedInstance synthesize_custom_seed(const std::string& target, const TestObjective& objective,
                                           std::size_t index) {
  SeedInstance seed;
  seed.id = "custom:" + std::to_string(index);
  seed.subject = target;
  seed.question = "Which option best describes " + objective.name + "?";
  seed.options = {objective.description.empty() ? objective.name : objective.description,
                  "an unrelated topic"};
  seed.answer_index = 0;
  seed.source = SeedSource::kCustom;
  return seed;
}

struct CustomRunResult {
  CustomAxes axes;
  std::vector<StructuredItem> items;
  nlohmann::json manifest;
};

// Full customized-benchmark flow: proposers list the axes for the target,
// objectives run through the bloom module, concepts through the knowledge
// graph module, and everything lands in one structured items file.
inline CustomRunResult run_custom(const PipelineContext& ctx, const std::string& target,
                                  std::size_t n_objectives, std::size_t n_concepts,
                                  const fs::path& out_path) {
  ctx.config.validate();
  if (n_objectives > 0 && !ctx.retriever)
    throw ValidationError("custom objectives require a corpus (corpus.dir)");
  if (n_concepts > 0 && !ctx.kg)
    throw ValidationError("custom concepts require a knowledge graph (kg)");

  CustomRunResult result;
  const std::string model = ctx.config.get("provider.model", "generator");
  result.axes = propose_custom_axes(*ctx.gateway, ctx.templates, model, target, n_objectives,
                                    n_concepts);

  std::size_t skipped = 0;
  if (!result.axes.objectives.empty()) {
    BloomBuilder builder(*ctx.gateway, ctx.templates, ctx.config.bloom(), ctx.blacklist, ctx.log);
    std::size_t index = 0;
    for (const auto& objective : result.axes.objectives) {
      SeedInstance seed = synthesize_custom_seed(target, objective, index++);
      BloomSeedResult bloom = builder.build_with_objective(seed, objective, *ctx.retriever);
      if (bloom.no_evidence) {
        ++skipped;
        continue;
      }
      StructuredItem item;
      item.seed = seed;
      item.objective = *bloom.objective;
      item.bloom = std::move(bloom.accepted);
      result.items.push_back(std::move(item));
    }
  }
  if (!result.axes.concepts.empty()) {
    SeedInstance seed;
    seed.id = "custom:concepts";
    seed.subject = target;
    seed.question = "Which option best describes " + target + "?";
    seed.options = {target, "an unrelated topic"};
    seed.answer_index = 0;
    seed.source = SeedSource::kCustom;
    ConceptBuilder builder(*ctx.gateway, ctx.templates, *ctx.kg, ctx.config.concept_config(),
                           ctx.log);
    ConceptSeedResult concepts = builder.build_from_concepts(seed, result.axes.concepts);
    StructuredItem item;
    item.seed = seed;
    item.objective = {target, "custom assessment target", seed.id};
    item.concept_instances = std::move(concepts.instances);
    result.items.push_back(std::move(item));
  }

  persist_items(result.items, out_path);
  StatsReport stats = structure_stats(result.items);
  result.manifest = {{"schema_version", kSchemaVersion},
                     {"mode", "custom"},
                     {"target", target},
                     {"config_hash", ctx.config.config_hash()},
                     {"template_hashes", ctx.templates.hashes()},
                     {"objectives_proposed", result.axes.objectives.size()},
                     {"concepts_proposed", result.axes.concepts.size()},
                     {"objectives_skipped", skipped},
                     {"stats", to_json(stats)},
                     {"cache_stats", ctx.gateway->stats().to_json()}};
  atomic_write_file(out_path.string() + ".manifest.json", result.manifest.dump(2) + "\n");
  return result;
}

}  // namespace benchforge
