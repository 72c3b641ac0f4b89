#pragma once

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "benchforge/evalkit.hpp"
#include "benchforge/gateway.hpp"
#include "benchforge/retrieval.hpp"
#include "benchforge/templates.hpp"
#include "benchforge/types.hpp"

namespace benchforge {

// ---------------------------------------------------------------------------
// Model pool used for the difficulty screen. "Diverse" means at least two
// distinct model ids.

struct ModelPool {
  std::vector<std::string> model_ids;

  void validate() const {
    if (model_ids.empty()) throw ValidationError("model pool is empty");
  }
  bool diverse() const {
    std::set<std::string> distinct(model_ids.begin(), model_ids.end());
    return distinct.size() >= 2;
  }
};

// ---------------------------------------------------------------------------
// Context-dependence blacklist: user-extensible plain text, one phrase per
// line, case-insensitive substring match.

class Blacklist {
 public:
  static Blacklist defaults() {
    Blacklist b;
    b.phrases_ = {
        "according to the provided document", "according to the document",
        "according to the text",              "according to the passage",
        "based on the provided document",     "based on the document",
        "based on the passage",               "in the provided document",
        "mentioned in the document",          "mentioned in the text",
        "are highlighted",                    "is highlighted",
        "described in the document",          "from the document",
        "the author of the passage",
    };
    return b;
  }

  static Blacklist from_file(const fs::path& path) {
    Blacklist b;
    std::ifstream in(path);
    if (!in) throw IoError("cannot open blacklist: " + path.string());
    std::string line;
    while (std::getline(in, line)) {
      std::string t = trim(line);
      if (!t.empty() && t.front() != '#') b.phrases_.push_back(to_lower(t));
    }
    return b;
  }

  std::optional<std::string> match(const std::string& question) const {
    for (const auto& phrase : phrases_) {
      if (icontains(question, phrase)) return phrase;
    }
    return std::nullopt;
  }

  const std::vector<std::string>& phrases() const { return phrases_; }

 private:
  std::vector<std::string> phrases_;
};

// Weaker signals that alone do not prove context dependence; questions
// carrying one get the LLM confirmation call.
inline const std::vector<std::string>& borderline_markers() {
  static const std::vector<std::string> markers = {
      "the document", "the text",    "the passage", "the excerpt",
      "the article",  "provided",    "highlighted", "according to",
      "mentioned",    "the author",
  };
  return markers;
}

// ---------------------------------------------------------------------------
// Reply parsing helpers (pure, so they test without a gateway).

inline std::optional<TestObjective> parse_objective_reply(const std::string& reply,
                                                          const std::string& seed_id) {
  auto lines = split_lines(reply);
  std::string name;
  std::string description;
  bool in_description = false;
  for (const auto& raw : lines) {
    std::string line = trim(raw);
    if (line.empty()) {
      in_description = false;
      continue;
    }
    std::string lower = to_lower(line);
    if (lower.rfind("test objective:", 0) == 0) {
      name = trim(line.substr(15));
      in_description = false;
    } else if (lower.rfind("description:", 0) == 0) {
      description = trim(line.substr(12));
      in_description = true;
    } else if (in_description) {
      description += " " + line;
    } else if (name.empty() && description.empty()) {
      // The prompt ends with the "Test Objective:" cue, so a reply may start
      // with the bare objective name.
      name = line;
    }
  }
  if (name.empty() || description.empty()) return std::nullopt;
  if (name.size() > 120) return std::nullopt;
  return TestObjective{name, description, seed_id};
}

struct ParsedCandidate {
  std::string question;
  std::vector<std::string> options;
  int answer_index = 0;
};

namespace detail_bloom {

inline std::optional<int> option_line_letter(const std::string& line) {
  std::string t = trim(line);
  if (t.size() < 3) return std::nullopt;
  auto idx = letter_to_index(t[0]);
  if (!idx) return std::nullopt;
  if (t[1] != '.' && t[1] != ')') return std::nullopt;
  return idx;
}

inline std::optional<int> answer_line_letter(const std::string& line,
                                             std::size_t num_options) {
  std::string lower = to_lower(trim(line));
  std::size_t pos = lower.find("correct answer:");
  std::size_t skip = 15;
  if (pos == std::string::npos) {
    pos = lower.find("answer:");
    skip = 7;
  }
  if (pos == std::string::npos) return std::nullopt;
  std::string rest = trim(line.substr(pos + skip));
  if (rest.empty()) return std::nullopt;
  // Lenient on "Correct Answer: A. text".
  auto idx = letter_to_index(rest[0]);
  if (!idx || *idx >= static_cast<int>(num_options)) return std::nullopt;
  if (rest.size() > 1 && std::isalnum(static_cast<unsigned char>(rest[1]))) return std::nullopt;
  return idx;
}

}  // namespace detail_bloom

// Block grammar: blocks separated by blank lines; question line(s), then
// option lines "A. ..".."D. ..", then a final "Correct Answer: <letter>".
// Unparseable blocks are dropped and counted.
struct CandidateParse {
  std::vector<ParsedCandidate> candidates;
  std::size_t dropped_blocks = 0;
};

inline CandidateParse parse_candidate_blocks(const std::string& reply, std::size_t max_instances = 5) {
  CandidateParse out;
  std::vector<std::vector<std::string>> blocks;
  std::vector<std::string> current;
  for (const auto& line : split_lines(reply)) {
    if (trim(line).empty()) {
      if (!current.empty()) blocks.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(line);
    }
  }
  if (!current.empty()) blocks.push_back(std::move(current));

  for (const auto& block : blocks) {
    ParsedCandidate cand;
    std::vector<std::string> question_lines;
    bool saw_answer = false;
    bool broken = false;
    for (const auto& line : block) {
      if (auto idx = detail_bloom::option_line_letter(line)) {
        if (*idx != static_cast<int>(cand.options.size())) {
          broken = true;  // options must run A, B, C ... in order
          break;
        }
        std::string t = trim(line);
        cand.options.push_back(trim(t.substr(2)));
      } else if (auto ans = detail_bloom::answer_line_letter(line, cand.options.size())) {
        cand.answer_index = *ans;
        saw_answer = true;
        break;
      } else if (cand.options.empty()) {
        question_lines.push_back(trim(line));
      } else {
        broken = true;
        break;
      }
    }
    cand.question = join(question_lines, " ");
    if (broken || !saw_answer ||
        !check_mcq_invariants(cand.question, cand.options, cand.answer_index, "candidate").empty()) {
      // A stray header block (e.g. a lead-in line with no options) is noise,
      // not a broken candidate.
      if (!cand.options.empty() || saw_answer) ++out.dropped_blocks;
      continue;
    }
    if (out.candidates.size() < max_instances) out.candidates.push_back(std::move(cand));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Builder configuration and per-seed results.

struct BloomConfig {
  std::string generator_model = "generator";
  ModelPool pool;
  int keep_per_level = 1;
  int candidates_per_level = 5;
  int objective_reasks = 2;
  int rag_reasks = 1;
  int generation_max_tokens = 1536;
  int verification_max_tokens = 64;
  double pool_failure_abort_fraction = 0.10;
};

struct FilterPartition {
  std::vector<GeneratedInstance> kept;
  std::vector<GeneratedInstance> rejected;
};

struct BloomSeedResult {
  std::optional<TestObjective> objective;
  std::map<BloomLevel, std::vector<GeneratedInstance>> accepted;  // retained per level
  std::vector<GeneratedInstance> not_retained;  // rejected + accepted overflow
  std::vector<BloomLevel> gaps;
  std::size_t candidates_generated = 0;
  std::size_t parse_drops = 0;
  std::map<std::string, std::size_t> rejection_counts;
  bool seed_malformed = false;
  bool no_evidence = false;

  std::size_t accepted_count() const {
    std::size_t n = 0;
    for (const auto& [level, list] : accepted) n += list.size();
    for (const auto& inst : not_retained) {
      if (inst.status == InstanceStatus::kAccepted) ++n;
    }
    return n;
  }

  std::size_t rejected_count() const {
    std::size_t n = 0;
    for (const auto& [reason, count] : rejection_counts) n += count;
    return n;
  }
};

class BloomBuilder {
 public:
  BloomBuilder(LlmGateway& gateway, const TemplateSet& templates, BloomConfig config,
               Blacklist blacklist = Blacklist::defaults(), LogSink log = nullptr)
      : gateway_(gateway),
        templates_(templates),
        config_(std::move(config)),
        blacklist_(std::move(blacklist)),
        log_(std::move(log)) {
    config_.pool.validate();
  }

  // --- objective extraction -------------------------------------------------

  std::optional<TestObjective> extract_objective(const SeedInstance& seed) {
    const PromptTemplate& tmpl = templates_.get("objective_extraction");
    std::string prompt = render_prompt(tmpl, {{"question", seed.question},
                                              {"options", format_options(seed.options)},
                                              {"answer", answer_text(seed)}});
    for (int attempt = 0; attempt <= config_.objective_reasks; ++attempt) {
      ChatResponse response = gateway_.chat(
          {config_.generator_model, with_reask(prompt, attempt), kVerificationTemperature,
           config_.verification_max_tokens, 0});
      if (auto objective = parse_objective_reply(response.text, seed.id)) return objective;
      log("objective reply unparseable for seed " + seed.id + ", attempt " +
          std::to_string(attempt + 1));
    }
    return std::nullopt;
  }

  // --- candidate generation -------------------------------------------------

  struct GenerationOutcome {
    std::vector<GeneratedInstance> candidates;
    std::size_t dropped_blocks = 0;
  };

  GenerationOutcome generate_candidates(const TestObjective& objective,
                                        const std::vector<DocumentChunk>& evidence,
                                        BloomLevel level) {
    if (evidence.empty()) throw ValidationError("generate_candidates: empty evidence");
    const PromptTemplate& tmpl = templates_.bloom_generation(level);
    std::vector<std::string> texts;
    texts.reserve(evidence.size());
    for (const auto& chunk : evidence) texts.push_back(chunk.text);
    std::string prompt = render_prompt(
        tmpl, {{"objective", objective.name}, {"documents", join(texts, "\n\n")}});
    ChatResponse response = gateway_.chat({config_.generator_model, prompt,
                                           kGenerationTemperature, config_.generation_max_tokens,
                                           0});
    if (response.finish_reason == "length")
      log("generation truncated at level " + to_string(level) + " for seed " +
          objective.seed_id);
    CandidateParse parse = parse_candidate_blocks(
        response.text, static_cast<std::size_t>(config_.candidates_per_level));
    GenerationOutcome out;
    out.dropped_blocks = parse.dropped_blocks;
    for (std::size_t i = 0; i < parse.dropped_blocks; ++i)
      log("dropped unparseable candidate block at level " + to_string(level) + " for seed " +
          objective.seed_id);
    std::vector<std::string> chunk_ids;
    for (const auto& chunk : evidence) chunk_ids.push_back(chunk.ref());
    const std::string prompt_hash = detail::sha256_hex(prompt);
    for (std::size_t i = 0; i < parse.candidates.size(); ++i) {
      GeneratedInstance inst;
      inst.id = objective.seed_id + ":" + to_string(level) + ":c" + std::to_string(i);
      inst.parent_seed_id = objective.seed_id;
      inst.origin = Origin::bloom(level);
      inst.question = parse.candidates[i].question;
      inst.options = parse.candidates[i].options;
      inst.answer_index = parse.candidates[i].answer_index;
      inst.evidence_chunk_ids = chunk_ids;
      inst.gen_meta = {config_.generator_model, prompt_hash, 0};
      inst.status = InstanceStatus::kCandidate;
      out.candidates.push_back(std::move(inst));
    }
    return out;
  }

  // --- stage 1: context dependence -------------------------------------------

  FilterPartition filter_context_dependent(std::vector<GeneratedInstance> candidates) {
    FilterPartition out;
    for (auto& inst : candidates) {
      if (auto phrase = blacklist_.match(inst.question)) {
        reject(inst, RejectReason::kContextDependent);
        log("context blacklist '" + *phrase + "' hit by " + inst.id);
        out.rejected.push_back(std::move(inst));
        continue;
      }
      bool borderline = false;
      for (const auto& marker : borderline_markers()) {
        if (icontains(inst.question, marker)) {
          borderline = true;
          break;
        }
      }
      if (borderline && !confirm_self_contained(inst)) {
        reject(inst, RejectReason::kContextDependent);
        out.rejected.push_back(std::move(inst));
        continue;
      }
      out.kept.push_back(std::move(inst));
    }
    return out;
  }

  // --- stage 2: RAG verification ---------------------------------------------

  enum class RagOutcome { kAccept, kCannotAnswer, kMismatch };

  RagOutcome verify_with_rag(const GeneratedInstance& candidate, const std::string& subject,
                             const std::string& evidence_text) {
    const PromptTemplate& tmpl = templates_.get("rag_verification");
    std::string prompt = render_prompt(tmpl, {{"subject", subject},
                                              {"document", evidence_text},
                                              {"question", candidate.question},
                                              {"choices", format_options(candidate.options)}});
    for (int attempt = 0; attempt <= config_.rag_reasks; ++attempt) {
      ChatResponse response = gateway_.chat(
          {config_.generator_model, with_reask(prompt, attempt), kVerificationTemperature,
           config_.verification_max_tokens, 0});
      if (icontains(response.text, "cannot answer")) return RagOutcome::kCannotAnswer;
      auto choice = extract_choice(response.text, static_cast<int>(candidate.options.size()));
      if (choice) {
        return *choice == candidate.answer_index ? RagOutcome::kAccept : RagOutcome::kMismatch;
      }
      log("rag reply unparseable for " + candidate.id + ", attempt " + std::to_string(attempt + 1));
    }
    return RagOutcome::kCannotAnswer;
  }

  FilterPartition filter_by_rag(std::vector<GeneratedInstance> candidates,
                                const std::string& subject,
                                const std::vector<DocumentChunk>& evidence) {
    std::vector<std::string> texts;
    for (const auto& chunk : evidence) texts.push_back(chunk.text);
    const std::string evidence_text = join(texts, "\n\n");
    FilterPartition out;
    for (auto& inst : candidates) {
      switch (verify_with_rag(inst, subject, evidence_text)) {
        case RagOutcome::kAccept:
          out.kept.push_back(std::move(inst));
          break;
        case RagOutcome::kCannotAnswer:
          reject(inst, RejectReason::kRagCannotAnswer);
          out.rejected.push_back(std::move(inst));
          break;
        case RagOutcome::kMismatch:
          reject(inst, RejectReason::kRagMismatch);
          out.rejected.push_back(std::move(inst));
          break;
      }
    }
    return out;
  }

  // --- stage 3: model pool difficulty screen ----------------------------------

  struct PoolPartition {
    std::vector<GeneratedInstance> kept;
    std::vector<GeneratedInstance> rejected;
    std::map<std::string, double> pool_accuracy;  // candidate id -> fraction correct
  };

  PoolPartition filter_by_model_pool(std::vector<GeneratedInstance> candidates) {
    config_.pool.validate();
    PoolPartition out;
    std::map<std::string, long> failures;
    std::map<std::string, long> calls;
    for (auto& inst : candidates) {
      int correct_models = 0;
      for (const auto& model : config_.pool.model_ids) {
        EvalItem item = to_eval_item(inst, "");
        ++calls[model];
        std::optional<int> choice;
        try {
          ChatResponse response = gateway_.chat({model, build_eval_prompt(item),
                                                 kVerificationTemperature,
                                                 config_.verification_max_tokens, 0});
          choice = extract_choice(response.text, static_cast<int>(inst.options.size()));
        } catch (const ProviderError& e) {
          ++failures[model];
          if (static_cast<double>(failures[model]) >
              config_.pool_failure_abort_fraction * static_cast<double>(calls[model])) {
            throw ProviderError("pool model " + model + " failed on " +
                                    std::to_string(failures[model]) + "/" +
                                    std::to_string(calls[model]) +
                                    " calls, aborting difficulty screen: " + e.what(),
                                e.status());
          }
          continue;
        }
        if (choice && *choice == inst.answer_index) ++correct_models;
      }
      const double accuracy = static_cast<double>(correct_models) /
                              static_cast<double>(config_.pool.model_ids.size());
      out.pool_accuracy[inst.id] = accuracy;
      if (correct_models == static_cast<int>(config_.pool.model_ids.size())) {
        reject(inst, RejectReason::kTooEasy);
        out.rejected.push_back(std::move(inst));
      } else {
        out.kept.push_back(std::move(inst));
      }
    }
    return out;
  }

  // --- full per-seed pipeline --------------------------------------------------

  BloomSeedResult build_bloom_set(const SeedInstance& seed, const EvidenceRetriever& retriever) {
    BloomSeedResult result;
    result.objective = extract_objective(seed);
    if (!result.objective) {
      result.seed_malformed = true;
      log("seed " + seed.id + " rejected: objective extraction malformed");
      return result;
    }
    expand_objective(result, seed, retriever);
    return result;
  }

  // Custom construction path: the objective is already known.
  BloomSeedResult build_with_objective(const SeedInstance& seed, TestObjective objective,
                                       const EvidenceRetriever& retriever) {
    BloomSeedResult result;
    objective.seed_id = seed.id;
    result.objective = std::move(objective);
    expand_objective(result, seed, retriever);
    return result;
  }

  const BloomConfig& config() const { return config_; }

 private:
  void expand_objective(BloomSeedResult& result, const SeedInstance& seed,
                        const EvidenceRetriever& retriever) {
    std::vector<DocumentChunk> evidence;
    try {
      evidence = retriever.retrieve_for_objective(*result.objective, seed);
    } catch (const ValidationError& e) {
      result.no_evidence = true;
      log("seed " + seed.id + " skipped: " + e.what());
      return;
    }

    for (BloomLevel level : kBloomLevels) {
      GenerationOutcome generation = generate_candidates(*result.objective, evidence, level);
      result.candidates_generated += generation.candidates.size();
      result.parse_drops += generation.dropped_blocks;

      FilterPartition context = filter_context_dependent(std::move(generation.candidates));
      for (auto& inst : context.rejected) record_reject(result, std::move(inst));

      FilterPartition rag = filter_by_rag(std::move(context.kept), seed.subject, evidence);
      for (auto& inst : rag.rejected) record_reject(result, std::move(inst));

      PoolPartition pool = filter_by_model_pool(std::move(rag.kept));
      for (auto& inst : pool.rejected) record_reject(result, std::move(inst));

      // Hardest first: lowest pool accuracy, then insertion order.
      std::stable_sort(pool.kept.begin(), pool.kept.end(),
                       [&](const GeneratedInstance& a, const GeneratedInstance& b) {
                         return pool.pool_accuracy.at(a.id) < pool.pool_accuracy.at(b.id);
                       });
      std::vector<GeneratedInstance> retained;
      for (auto& inst : pool.kept) {
        inst.status = InstanceStatus::kAccepted;
        if (retained.size() < static_cast<std::size_t>(config_.keep_per_level)) {
          retained.push_back(std::move(inst));
        } else {
          result.not_retained.push_back(std::move(inst));
        }
      }
      if (retained.empty()) {
        result.gaps.push_back(level);
        log("seed " + seed.id + ": no accepted instance at level " + to_string(level));
      } else {
        result.accepted[level] = std::move(retained);
      }
    }
  }

  static std::string format_options(const std::vector<std::string>& options) {
    std::string out;
    for (std::size_t i = 0; i < options.size(); ++i) {
      if (i > 0) out += "\n";
      out += index_to_letter(static_cast<int>(i));
      out += ". ";
      out += options[i];
    }
    return out;
  }

  static std::string answer_text(const SeedInstance& seed) {
    return std::string(1, index_to_letter(seed.answer_index)) + ". " +
           seed.options[static_cast<std::size_t>(seed.answer_index)];
  }

  // Re-asks carry an attempt-numbered reminder so they are distinct cache
  // entries rather than replays of the first reply.
  static std::string with_reask(const std::string& prompt, int attempt) {
    if (attempt == 0) return prompt;
    return prompt + "\n\n(Format reminder " + std::to_string(attempt) +
           ": your previous reply did not follow the required format. Respond again using "
           "exactly the required format.)";
  }

  bool confirm_self_contained(const GeneratedInstance& inst) {
    const PromptTemplate& tmpl = templates_.get("context_check");
    std::string prompt = render_prompt(tmpl, {{"question", inst.question}});
    ChatResponse response = gateway_.chat({config_.generator_model, prompt,
                                           kVerificationTemperature,
                                           config_.verification_max_tokens, 0});
    std::string first = to_lower(trim(response.text));
    if (first.rfind("no", 0) == 0) return false;
    if (first.rfind("yes", 0) == 0) return true;
    log("context check reply unparseable for " + inst.id + ", keeping candidate");
    return true;
  }

  static void reject(GeneratedInstance& inst, RejectReason reason) {
    inst.status = InstanceStatus::kRejected;
    inst.reject_reason = reason;
  }

  void record_reject(BloomSeedResult& result, GeneratedInstance inst) {
    ++result.rejection_counts[to_string(*inst.reject_reason)];
    result.not_retained.push_back(std::move(inst));
  }

  void log(const std::string& message) {
    if (log_) log_(message);
  }

  LlmGateway& gateway_;
  const TemplateSet& templates_;
  BloomConfig config_;
  Blacklist blacklist_;
  LogSink log_;
};

}  // namespace benchforge
