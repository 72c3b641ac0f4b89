#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "benchforge/errors.hpp"
#include "benchforge/text.hpp"

namespace benchforge {

inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Bloom's taxonomy cognitive levels, in fixed order.

enum class BloomLevel { kRemember, kUnderstand, kApply, kAnalyze, kEvaluate, kCreate };

inline constexpr std::array<BloomLevel, 6> kBloomLevels = {
    BloomLevel::kRemember, BloomLevel::kUnderstand, BloomLevel::kApply,
    BloomLevel::kAnalyze,  BloomLevel::kEvaluate,   BloomLevel::kCreate};

// Canonical tokens used in files and CLI flags.
inline std::string to_string(BloomLevel level) {
  switch (level) {
    case BloomLevel::kRemember: return "remember";
    case BloomLevel::kUnderstand: return "understand";
    case BloomLevel::kApply: return "apply";
    case BloomLevel::kAnalyze: return "analyze";
    case BloomLevel::kEvaluate: return "evaluate";
    case BloomLevel::kCreate: return "create";
  }
  throw ValidationError("unknown bloom level");
}

// Gerund form used inside prompt text ("5 instances of applying level ...").
inline std::string bloom_prompt_style(BloomLevel level) {
  switch (level) {
    case BloomLevel::kRemember: return "remembering";
    case BloomLevel::kUnderstand: return "understanding";
    case BloomLevel::kApply: return "applying";
    case BloomLevel::kAnalyze: return "analyzing";
    case BloomLevel::kEvaluate: return "evaluating";
    case BloomLevel::kCreate: return "creating";
  }
  throw ValidationError("unknown bloom level");
}

// Accepts canonical tokens, the gerund prompt forms, and "analysis".
inline BloomLevel parse_bloom_level(std::string_view token) {
  std::string t = to_lower(trim(token));
  for (BloomLevel level : kBloomLevels) {
    if (t == to_string(level) || t == bloom_prompt_style(level)) return level;
  }
  if (t == "analysis") return BloomLevel::kAnalyze;
  throw ValidationError("unknown bloom level: " + t);
}

// ---------------------------------------------------------------------------
// Seed benchmark sources.

enum class SeedSource { kMmlu, kArcEasy, kArcChallenge, kOpenbookqa, kCustom };

inline std::string to_string(SeedSource s) {
  switch (s) {
    case SeedSource::kMmlu: return "mmlu";
    case SeedSource::kArcEasy: return "arc_easy";
    case SeedSource::kArcChallenge: return "arc_challenge";
    case SeedSource::kOpenbookqa: return "openbookqa";
    case SeedSource::kCustom: return "custom";
  }
  throw ValidationError("unknown seed source");
}

inline SeedSource parse_seed_source(std::string_view token) {
  std::string t = to_lower(trim(token));
  if (t == "mmlu") return SeedSource::kMmlu;
  if (t == "arc_easy" || t == "arc-easy") return SeedSource::kArcEasy;
  if (t == "arc_challenge" || t == "arc-challenge") return SeedSource::kArcChallenge;
  if (t == "openbookqa" || t == "obqa") return SeedSource::kOpenbookqa;
  if (t == "custom") return SeedSource::kCustom;
  throw ValidationError("unknown seed source: " + t);
}

// ---------------------------------------------------------------------------
// Core instance records.

struct SeedInstance {
  std::string id;
  std::string subject;
  std::string question;
  std::vector<std::string> options;
  int answer_index = 0;
  SeedSource source = SeedSource::kCustom;

  bool operator==(const SeedInstance&) const = default;
};

// Checks the shared option/answer invariants; returns an error message or
// empty string. `where` names the record in messages.
inline std::string check_mcq_invariants(const std::string& question,
                                        const std::vector<std::string>& options,
                                        int answer_index, const std::string& where) {
  if (trim(question).empty()) return where + ": question empty";
  if (options.size() < 2 || options.size() > 8)
    return where + ": options count " + std::to_string(options.size()) + " outside 2..8";
  if (answer_index < 0 || answer_index >= static_cast<int>(options.size()))
    return where + ": answer index " + std::to_string(answer_index) + " out of range";
  for (std::size_t i = 0; i < options.size(); ++i) {
    for (std::size_t j = i + 1; j < options.size(); ++j) {
      if (normalize_whitespace(options[i]) == normalize_whitespace(options[j]))
        return where + ": duplicate options " + std::to_string(i) + "/" + std::to_string(j);
    }
  }
  return {};
}

inline void validate(const SeedInstance& seed) {
  std::string err = check_mcq_invariants(seed.question, seed.options, seed.answer_index,
                                         "seed " + seed.id);
  if (!err.empty()) throw ValidationError(err);
}

struct TestObjective {
  std::string name;
  std::string description;
  std::string seed_id;

  bool operator==(const TestObjective&) const = default;
};

inline void validate(const TestObjective& objective) {
  if (trim(objective.name).empty()) throw ValidationError("objective name empty");
  if (objective.name.size() > 120)
    throw ValidationError("objective name longer than 120 chars: " + objective.name);
}

enum class OriginKind { kBloom, kConcept };

struct Origin {
  OriginKind kind = OriginKind::kBloom;
  BloomLevel level = BloomLevel::kRemember;  // valid when kind == kBloom
  std::string entity_id;                     // valid when kind == kConcept

  static Origin bloom(BloomLevel level) { return {OriginKind::kBloom, level, {}}; }
  static Origin concept_entity(std::string entity_id) {
    return {OriginKind::kConcept, BloomLevel::kRemember, std::move(entity_id)};
  }
  bool operator==(const Origin&) const = default;
};

enum class RejectReason { kContextDependent, kRagCannotAnswer, kRagMismatch, kTooEasy, kMalformed };

inline std::string to_string(RejectReason r) {
  switch (r) {
    case RejectReason::kContextDependent: return "context_dependent";
    case RejectReason::kRagCannotAnswer: return "rag_cannot_answer";
    case RejectReason::kRagMismatch: return "rag_mismatch";
    case RejectReason::kTooEasy: return "too_easy";
    case RejectReason::kMalformed: return "malformed";
  }
  throw ValidationError("unknown reject reason");
}

inline RejectReason parse_reject_reason(std::string_view token) {
  std::string t = to_lower(trim(token));
  if (t == "context_dependent") return RejectReason::kContextDependent;
  if (t == "rag_cannot_answer") return RejectReason::kRagCannotAnswer;
  if (t == "rag_mismatch") return RejectReason::kRagMismatch;
  if (t == "too_easy") return RejectReason::kTooEasy;
  if (t == "malformed") return RejectReason::kMalformed;
  throw ValidationError("unknown reject reason: " + t);
}

enum class InstanceStatus { kCandidate, kAccepted, kRejected };

inline std::string to_string(InstanceStatus s) {
  switch (s) {
    case InstanceStatus::kCandidate: return "candidate";
    case InstanceStatus::kAccepted: return "accepted";
    case InstanceStatus::kRejected: return "rejected";
  }
  throw ValidationError("unknown status");
}

inline InstanceStatus parse_instance_status(std::string_view token) {
  std::string t = to_lower(trim(token));
  if (t == "candidate") return InstanceStatus::kCandidate;
  if (t == "accepted") return InstanceStatus::kAccepted;
  if (t == "rejected") return InstanceStatus::kRejected;
  throw ValidationError("unknown status: " + t);
}

struct GenMeta {
  std::string model_id;
  std::string prompt_hash;
  std::uint64_t rng_seed = 0;

  bool operator==(const GenMeta&) const = default;
};

struct GeneratedInstance {
  std::string id;
  std::string parent_seed_id;
  Origin origin;
  std::string question;
  std::vector<std::string> options;
  int answer_index = 0;
  std::vector<std::string> evidence_chunk_ids;
  GenMeta gen_meta;
  InstanceStatus status = InstanceStatus::kCandidate;
  std::optional<RejectReason> reject_reason;

  bool operator==(const GeneratedInstance&) const = default;
};

inline void validate(const GeneratedInstance& inst) {
  std::string err = check_mcq_invariants(inst.question, inst.options, inst.answer_index,
                                         "instance " + inst.id);
  if (!err.empty()) throw ValidationError(err);
  if (inst.status == InstanceStatus::kRejected && !inst.reject_reason)
    throw ValidationError("instance " + inst.id + ": rejected without a reason");
  if (inst.status != InstanceStatus::kRejected && inst.reject_reason)
    throw ValidationError("instance " + inst.id + ": reason on non-rejected instance");
  if (inst.status == InstanceStatus::kAccepted && inst.origin.kind == OriginKind::kBloom &&
      inst.evidence_chunk_ids.empty())
    throw ValidationError("instance " + inst.id + ": accepted bloom instance without evidence");
}

struct StructuredItem {
  SeedInstance seed;
  TestObjective objective;
  std::map<BloomLevel, std::vector<GeneratedInstance>> bloom;
  std::vector<GeneratedInstance> concept_instances;

  bool operator==(const StructuredItem&) const = default;
};

inline void validate(const StructuredItem& item) {
  validate(item.seed);
  for (const auto& [level, list] : item.bloom) {
    for (const auto& inst : list) {
      validate(inst);
      if (inst.parent_seed_id != item.seed.id)
        throw ValidationError("instance " + inst.id + " parent " + inst.parent_seed_id +
                              " does not match seed " + item.seed.id);
    }
  }
  for (const auto& inst : item.concept_instances) {
    validate(inst);
    if (inst.parent_seed_id != item.seed.id)
      throw ValidationError("instance " + inst.id + " parent " + inst.parent_seed_id +
                            " does not match seed " + item.seed.id);
  }
}

// ---------------------------------------------------------------------------
// JSON serialization. Field names are part of the on-disk contract.

inline nlohmann::json to_json(const SeedInstance& seed, bool with_version = true) {
  nlohmann::json j{{"id", seed.id},
                   {"subject", seed.subject},
                   {"question", seed.question},
                   {"options", seed.options},
                   {"answer_index", seed.answer_index},
                   {"source", to_string(seed.source)}};
  if (with_version) j["schema_version"] = kSchemaVersion;
  return j;
}

inline void require_schema_version(const nlohmann::json& j, const std::string& where) {
  if (!j.contains("schema_version"))
    throw ValidationError(where + ": missing schema_version, expected " +
                          std::to_string(kSchemaVersion));
  int found = j.at("schema_version").get<int>();
  if (found != kSchemaVersion)
    throw ValidationError(where + ": schema_version " + std::to_string(found) + ", expected " +
                          std::to_string(kSchemaVersion));
}

inline SeedInstance seed_from_json(const nlohmann::json& j) {
  SeedInstance seed;
  seed.id = j.at("id").get<std::string>();
  seed.subject = j.value("subject", std::string{});
  seed.question = j.at("question").get<std::string>();
  seed.options = j.at("options").get<std::vector<std::string>>();
  seed.answer_index = j.at("answer_index").get<int>();
  seed.source = parse_seed_source(j.value("source", std::string{"custom"}));
  return seed;
}

inline nlohmann::json to_json(const TestObjective& objective) {
  return {{"name", objective.name},
          {"description", objective.description},
          {"seed_id", objective.seed_id}};
}

inline TestObjective objective_from_json(const nlohmann::json& j) {
  return {j.at("name").get<std::string>(), j.value("description", std::string{}),
          j.value("seed_id", std::string{})};
}

inline nlohmann::json to_json(const Origin& origin) {
  if (origin.kind == OriginKind::kBloom)
    return {{"kind", "bloom"}, {"level", to_string(origin.level)}};
  return {{"kind", "concept"}, {"entity_id", origin.entity_id}};
}

inline Origin origin_from_json(const nlohmann::json& j) {
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "bloom") return Origin::bloom(parse_bloom_level(j.at("level").get<std::string>()));
  if (kind == "concept") return Origin::concept_entity(j.at("entity_id").get<std::string>());
  throw ValidationError("unknown origin kind: " + kind);
}

inline nlohmann::json to_json(const GeneratedInstance& inst) {
  nlohmann::json j{{"id", inst.id},
                   {"parent_seed_id", inst.parent_seed_id},
                   {"origin", to_json(inst.origin)},
                   {"question", inst.question},
                   {"options", inst.options},
                   {"answer_index", inst.answer_index},
                   {"evidence_chunk_ids", inst.evidence_chunk_ids},
                   {"gen_meta",
                    {{"model_id", inst.gen_meta.model_id},
                     {"prompt_hash", inst.gen_meta.prompt_hash},
                     {"rng_seed", inst.gen_meta.rng_seed}}},
                   {"status", to_string(inst.status)}};
  if (inst.reject_reason) j["reject_reason"] = to_string(*inst.reject_reason);
  return j;
}

inline GeneratedInstance instance_from_json(const nlohmann::json& j) {
  GeneratedInstance inst;
  inst.id = j.at("id").get<std::string>();
  inst.parent_seed_id = j.at("parent_seed_id").get<std::string>();
  inst.origin = origin_from_json(j.at("origin"));
  inst.question = j.at("question").get<std::string>();
  inst.options = j.at("options").get<std::vector<std::string>>();
  inst.answer_index = j.at("answer_index").get<int>();
  inst.evidence_chunk_ids = j.value("evidence_chunk_ids", std::vector<std::string>{});
  if (j.contains("gen_meta")) {
    const auto& m = j.at("gen_meta");
    inst.gen_meta.model_id = m.value("model_id", std::string{});
    inst.gen_meta.prompt_hash = m.value("prompt_hash", std::string{});
    inst.gen_meta.rng_seed = m.value("rng_seed", std::uint64_t{0});
  }
  inst.status = parse_instance_status(j.value("status", std::string{"candidate"}));
  if (j.contains("reject_reason"))
    inst.reject_reason = parse_reject_reason(j.at("reject_reason").get<std::string>());
  return inst;
}

inline nlohmann::json to_json(const StructuredItem& item) {
  nlohmann::json bloom = nlohmann::json::object();
  for (BloomLevel level : kBloomLevels) {
    nlohmann::json list = nlohmann::json::array();
    auto it = item.bloom.find(level);
    if (it != item.bloom.end()) {
      for (const auto& inst : it->second) list.push_back(to_json(inst));
    }
    bloom[to_string(level)] = std::move(list);
  }
  nlohmann::json concept_list = nlohmann::json::array();
  for (const auto& inst : item.concept_instances) concept_list.push_back(to_json(inst));
  return {{"schema_version", kSchemaVersion},
          {"seed", to_json(item.seed, /*with_version=*/false)},
          {"objective", to_json(item.objective)},
          {"bloom", bloom},
          {"concept", concept_list}};
}

inline StructuredItem item_from_json(const nlohmann::json& j, const std::string& where) {
  require_schema_version(j, where);
  StructuredItem item;
  item.seed = seed_from_json(j.at("seed"));
  item.objective = objective_from_json(j.at("objective"));
  const auto& bloom = j.at("bloom");
  for (auto it = bloom.begin(); it != bloom.end(); ++it) {
    BloomLevel level = parse_bloom_level(it.key());
    std::vector<GeneratedInstance> list;
    for (const auto& inst : it.value()) list.push_back(instance_from_json(inst));
    if (!list.empty()) item.bloom[level] = std::move(list);
  }
  for (const auto& inst : j.at("concept")) {
    item.concept_instances.push_back(instance_from_json(inst));
  }
  return item;
}

}  // namespace benchforge
