#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "benchforge/gateway.hpp"
#include "benchforge/io.hpp"
#include "benchforge/rng.hpp"
#include "benchforge/types.hpp"

namespace benchforge {

// ---------------------------------------------------------------------------
// A scoreable multiple-choice item, independent of where it came from.

struct EvalItem {
  std::string id;
  std::string subject;
  std::string question;
  std::vector<std::string> options;
  int answer_index = 0;
};

inline EvalItem to_eval_item(const SeedInstance& seed) {
  return {seed.id, seed.subject, seed.question, seed.options, seed.answer_index};
}

inline EvalItem to_eval_item(const GeneratedInstance& inst, const std::string& subject) {
  return {inst.id, subject, inst.question, inst.options, inst.answer_index};
}

// Accepted instances of a structured item, bloom levels first in level order.
inline std::vector<EvalItem> flatten_accepted(const StructuredItem& item) {
  std::vector<EvalItem> out;
  for (BloomLevel level : kBloomLevels) {
    auto it = item.bloom.find(level);
    if (it == item.bloom.end()) continue;
    for (const auto& inst : it->second) {
      if (inst.status == InstanceStatus::kAccepted) out.push_back(to_eval_item(inst, item.seed.subject));
    }
  }
  for (const auto& inst : item.concept_instances) {
    if (inst.status == InstanceStatus::kAccepted) out.push_back(to_eval_item(inst, item.seed.subject));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Zero-shot evaluation prompt: question, lettered options, trailing cue.

inline std::string build_eval_prompt(const EvalItem& item) {
  std::string out = item.question;
  out += "\n";
  for (std::size_t i = 0; i < item.options.size(); ++i) {
    out += index_to_letter(static_cast<int>(i));
    out += ". ";
    out += item.options[i];
    out += "\n";
  }
  out += "Answer:";
  return out;
}

// ---------------------------------------------------------------------------
// Free-text reply parsing. Parse order: (1) first standalone uppercase
// letter A-H within range; (2) "answer is <letter>"; (3) a parenthesized
// letter, case-insensitive. No parse is a value, not an error.

namespace detail_eval {

inline bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

inline std::optional<int> first_standalone_letter(const std::string& reply, int num_options) {
  for (std::size_t i = 0; i < reply.size(); ++i) {
    char c = reply[i];
    if (c < 'A' || c > 'H') continue;
    bool left_ok = i == 0 || !is_word_char(reply[i - 1]);
    bool right_ok = i + 1 >= reply.size() || !is_word_char(reply[i + 1]);
    if (!left_ok || !right_ok) continue;
    int idx = c - 'A';
    if (idx < num_options) return idx;
  }
  return std::nullopt;
}

inline std::optional<int> answer_is_pattern(const std::string& reply, int num_options) {
  const std::string lower = to_lower(reply);
  std::size_t pos = 0;
  while ((pos = lower.find("answer is", pos)) != std::string::npos) {
    std::size_t i = pos + 9;
    while (i < lower.size() && (lower[i] == ' ' || lower[i] == ':' || lower[i] == '\t')) ++i;
    if (i < lower.size() && lower[i] == '(') ++i;
    if (i < lower.size()) {
      if (auto idx = letter_to_index(lower[i]);
          idx && *idx < num_options &&
          (i + 1 >= lower.size() || !is_word_char(lower[i + 1]))) {
        return idx;
      }
    }
    pos += 9;
  }
  return std::nullopt;
}

inline std::optional<int> parenthesized_letter(const std::string& reply, int num_options) {
  for (std::size_t i = 0; i + 2 < reply.size(); ++i) {
    if (reply[i] != '(' || reply[i + 2] != ')') continue;
    if (auto idx = letter_to_index(reply[i + 1]); idx && *idx < num_options) return idx;
  }
  return std::nullopt;
}

}  // namespace detail_eval

inline std::optional<int> extract_choice(const std::string& reply, int num_options) {
  if (num_options < 2 || num_options > 8)
    throw ValidationError("extract_choice: num_options outside 2..8");
  if (auto idx = detail_eval::first_standalone_letter(reply, num_options)) return idx;
  if (auto idx = detail_eval::answer_is_pattern(reply, num_options)) return idx;
  if (auto idx = detail_eval::parenthesized_letter(reply, num_options)) return idx;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Score matrix: model x instance correctness records.

struct ScoreRecord {
  int chosen_index = -1;  // -1 sentinel for unparseable replies
  bool correct = false;
};

struct ScoreMatrix {
  std::vector<std::string> models;
  std::map<std::pair<std::string, std::string>, ScoreRecord> records;
  std::map<std::string, std::string> subject_of;

  void add(const std::string& model, const std::string& instance_id, const std::string& subject,
           int chosen_index, bool correct) {
    auto key = std::make_pair(model, instance_id);
    if (records.count(key))
      throw ValidationError("duplicate score record for " + model + "/" + instance_id);
    records[key] = {chosen_index, correct};
    subject_of[instance_id] = subject;
    if (std::find(models.begin(), models.end(), model) == models.end()) models.push_back(model);
  }

  double accuracy(const std::string& model) const {
    long total = 0, correct = 0;
    for (const auto& [key, rec] : records) {
      if (key.first != model) continue;
      ++total;
      if (rec.correct) ++correct;
    }
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
  }

  std::vector<std::string> subjects_sorted() const {
    std::set<std::string> subjects;
    for (const auto& [id, subject] : subject_of) subjects.insert(subject);
    return {subjects.begin(), subjects.end()};
  }

  // accuracy[model][subject], plus per-subject instance counts.
  std::pair<std::vector<std::vector<double>>, std::vector<long>> per_subject_table() const {
    auto subjects = subjects_sorted();
    std::map<std::string, std::size_t> subject_pos;
    for (std::size_t i = 0; i < subjects.size(); ++i) subject_pos[subjects[i]] = i;
    std::map<std::string, std::size_t> model_pos;
    for (std::size_t i = 0; i < models.size(); ++i) model_pos[models[i]] = i;
    std::vector<std::vector<long>> correct(models.size(), std::vector<long>(subjects.size(), 0));
    std::vector<std::vector<long>> total(models.size(), std::vector<long>(subjects.size(), 0));
    for (const auto& [key, rec] : records) {
      std::size_t m = model_pos.at(key.first);
      std::size_t s = subject_pos.at(subject_of.at(key.second));
      ++total[m][s];
      if (rec.correct) ++correct[m][s];
    }
    std::vector<std::vector<double>> acc(models.size(), std::vector<double>(subjects.size(), 0.0));
    std::vector<long> counts(subjects.size(), 0);
    for (std::size_t s = 0; s < subjects.size(); ++s) {
      for (std::size_t m = 0; m < models.size(); ++m) {
        acc[m][s] = total[m][s] == 0 ? 0.0
                                     : static_cast<double>(correct[m][s]) /
                                           static_cast<double>(total[m][s]);
      }
      counts[s] = total.empty() ? 0 : total[0][s];
    }
    return {acc, counts};
  }

  nlohmann::json to_json() const {
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& [key, rec] : records) {
      recs.push_back({{"model", key.first},
                      {"instance_id", key.second},
                      {"subject", subject_of.at(key.second)},
                      {"chosen_index", rec.chosen_index},
                      {"correct", rec.correct}});
    }
    return recs;
  }

  static ScoreMatrix from_jsonl(const fs::path& path) {
    ScoreMatrix m;
    for (const auto& rec : read_jsonl(path)) {
      m.add(rec.value.at("model").get<std::string>(),
            rec.value.at("instance_id").get<std::string>(),
            rec.value.at("subject").get<std::string>(), rec.value.at("chosen_index").get<int>(),
            rec.value.at("correct").get<bool>());
    }
    return m;
  }
};

// One chat call per (model, instance) at temperature 0. A provider failure
// aborts the run but first preserves the partial results at `partial_path`.
inline ScoreMatrix score(LlmGateway& gateway, const std::vector<std::string>& models,
                         const std::vector<EvalItem>& items,
                         const fs::path& partial_path = {}) {
  ScoreMatrix matrix;
  try {
    for (const auto& model : models) {
      for (const auto& item : items) {
        ChatRequest request{model, build_eval_prompt(item), kVerificationTemperature, 64, 0};
        ChatResponse response = gateway.chat(request);
        auto choice = extract_choice(response.text, static_cast<int>(item.options.size()));
        int chosen = choice.value_or(-1);
        matrix.add(model, item.id, item.subject, chosen,
                   choice.has_value() && chosen == item.answer_index);
      }
    }
  } catch (const ProviderError&) {
    if (!partial_path.empty()) {
      std::vector<nlohmann::json> records;
      for (const auto& j : matrix.to_json()) records.push_back(j);
      write_jsonl(partial_path, records);
    }
    throw;
  }
  return matrix;
}

// ---------------------------------------------------------------------------
// Rank consistency over resampled subject subsets.

struct RankConsistencyReport {
  int k = 0;
  std::uint64_t num_samples = 0;
  std::uint64_t rng_seed = 0;
  struct PerModel {
    int modal_rank = 0;  // 1-based
    double frequency_pct = 0.0;
  };
  std::map<std::string, PerModel> per_model;
  std::vector<std::string> overall_modal_ranking;
  double overall_frequency_pct = 0.0;

  nlohmann::json to_json() const {
    nlohmann::json pm = nlohmann::json::object();
    for (const auto& [model, entry] : per_model) {
      pm[model] = {{"modal_rank", entry.modal_rank}, {"frequency_pct", entry.frequency_pct}};
    }
    return {{"k", k},
            {"num_samples", num_samples},
            {"rng_seed", rng_seed},
            {"per_model", pm},
            {"overall",
             {{"modal_ranking", overall_modal_ranking},
              {"frequency_pct", overall_frequency_pct}}}};
  }
};

namespace detail_eval {

// Models ranked by subset accuracy descending; ties broken by model_id
// ascending. Returns, per model position in `models`, its 1-based rank.
inline std::vector<int> rank_models(const std::vector<std::string>& models,
                                    const std::vector<double>& accuracy) {
  std::vector<std::size_t> order(models.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (accuracy[a] != accuracy[b]) return accuracy[a] > accuracy[b];
    return models[a] < models[b];
  });
  std::vector<int> rank_of(models.size(), 0);
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    rank_of[order[pos]] = static_cast<int>(pos) + 1;
  }
  return rank_of;
}

struct RankTallies {
  std::vector<std::map<int, std::uint64_t>> rank_counts;       // per model
  std::map<std::vector<int>, std::uint64_t> ranking_counts;    // full permutation
  std::uint64_t draws = 0;

  explicit RankTallies(std::size_t num_models) : rank_counts(num_models) {}

  void record(const std::vector<int>& rank_of) {
    ++draws;
    for (std::size_t m = 0; m < rank_of.size(); ++m) ++rank_counts[m][rank_of[m]];
    ++ranking_counts[rank_of];
  }

  RankConsistencyReport report(const std::vector<std::string>& models) const {
    RankConsistencyReport out;
    out.num_samples = draws;
    for (std::size_t m = 0; m < models.size(); ++m) {
      int best_rank = 0;
      std::uint64_t best_count = 0;
      for (const auto& [rank, count] : rank_counts[m]) {
        if (count > best_count) {  // map order makes ties resolve to smallest rank
          best_count = count;
          best_rank = rank;
        }
      }
      out.per_model[models[m]] = {best_rank,
                                  100.0 * static_cast<double>(best_count) /
                                      static_cast<double>(draws)};
    }
    std::vector<int> best_perm;
    std::uint64_t best_count = 0;
    for (const auto& [perm, count] : ranking_counts) {
      if (count > best_count) {  // ties resolve to lexicographically smallest
        best_count = count;
        best_perm = perm;
      }
    }
    // Present the modal ranking as model ids in rank order.
    out.overall_modal_ranking.resize(models.size());
    for (std::size_t m = 0; m < models.size(); ++m) {
      out.overall_modal_ranking[static_cast<std::size_t>(best_perm[m]) - 1] = models[m];
    }
    out.overall_frequency_pct =
        100.0 * static_cast<double>(best_count) / static_cast<double>(draws);
    return out;
  }
};

inline std::vector<double> subset_accuracy(const std::vector<std::vector<double>>& acc,
                                           const std::vector<long>& counts,
                                           const std::vector<std::size_t>& subjects,
                                           bool pooled) {
  std::vector<double> out(acc.size(), 0.0);
  for (std::size_t m = 0; m < acc.size(); ++m) {
    if (pooled) {
      double correct = 0, total = 0;
      for (std::size_t s : subjects) {
        correct += acc[m][s] * static_cast<double>(counts[s]);
        total += static_cast<double>(counts[s]);
      }
      out[m] = total == 0 ? 0.0 : correct / total;
    } else {
      double sum = 0;
      for (std::size_t s : subjects) sum += acc[m][s];
      out[m] = subjects.empty() ? 0.0 : sum / static_cast<double>(subjects.size());
    }
  }
  return out;
}

}  // namespace detail_eval

// Each draw samples K distinct subjects (seeded by rng_seed + draw index, so
// results do not depend on execution order), ranks models by mean accuracy
// over those subjects, and tallies rank positions and full rankings.
inline RankConsistencyReport rank_consistency(const ScoreMatrix& matrix, int k,
                                              std::uint64_t num_samples, std::uint64_t rng_seed,
                                              bool pooled = false) {
  if (matrix.models.size() < 2) throw ValidationError("rank consistency needs at least 2 models");
  auto subjects = matrix.subjects_sorted();
  if (k <= 0 || static_cast<std::size_t>(k) > subjects.size())
    throw ValidationError("K=" + std::to_string(k) + " exceeds subject count " +
                          std::to_string(subjects.size()));
  auto [acc, counts] = matrix.per_subject_table();
  detail_eval::RankTallies tallies(matrix.models.size());
  for (std::uint64_t draw = 0; draw < num_samples; ++draw) {
    Rng rng(rng_seed + draw);
    auto chosen = rng.sample_indices(subjects.size(), static_cast<std::size_t>(k));
    auto subset_acc = detail_eval::subset_accuracy(acc, counts, chosen, pooled);
    tallies.record(detail_eval::rank_models(matrix.models, subset_acc));
  }
  RankConsistencyReport report = tallies.report(matrix.models);
  report.k = k;
  report.rng_seed = rng_seed;
  return report;
}

// Exhaustive oracle: every K-subset exactly once, same ranking rules. The
// sampling estimator must converge to this as num_samples grows.
inline RankConsistencyReport rank_consistency_exhaustive(const ScoreMatrix& matrix, int k,
                                                         bool pooled = false) {
  if (matrix.models.size() < 2) throw ValidationError("rank consistency needs at least 2 models");
  auto subjects = matrix.subjects_sorted();
  const std::size_t n = subjects.size();
  if (k <= 0 || static_cast<std::size_t>(k) > n)
    throw ValidationError("K=" + std::to_string(k) + " exceeds subject count " +
                          std::to_string(n));
  double combinations = 1.0;
  for (int i = 0; i < k; ++i) {
    combinations *= static_cast<double>(n - i) / static_cast<double>(i + 1);
  }
  if (combinations > 1e6)
    throw ValidationError("C(subjects, K) exceeds exhaustive bound of 1e6");

  auto [acc, counts] = matrix.per_subject_table();
  detail_eval::RankTallies tallies(matrix.models.size());
  std::vector<std::size_t> subset(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < subset.size(); ++i) subset[i] = i;
  for (;;) {
    auto subset_acc = detail_eval::subset_accuracy(acc, counts, subset, pooled);
    tallies.record(detail_eval::rank_models(matrix.models, subset_acc));
    // next lexicographic combination
    int i = k - 1;
    while (i >= 0 && subset[static_cast<std::size_t>(i)] ==
                         n - static_cast<std::size_t>(k) + static_cast<std::size_t>(i)) {
      --i;
    }
    if (i < 0) break;
    ++subset[static_cast<std::size_t>(i)];
    for (std::size_t j = static_cast<std::size_t>(i) + 1; j < static_cast<std::size_t>(k); ++j) {
      subset[j] = subset[j - 1] + 1;
    }
  }
  RankConsistencyReport report = tallies.report(matrix.models);
  report.k = k;
  report.rng_seed = 0;
  return report;
}

// ---------------------------------------------------------------------------
// Contamination splits and deltas.

struct TrainingRecord {
  std::string instruction;
  std::string input;
  std::string output;

  bool operator==(const TrainingRecord&) const = default;

  nlohmann::json to_json() const {
    return {{"instruction", instruction}, {"input", input}, {"output", output}};
  }

  static TrainingRecord from_json(const nlohmann::json& j) {
    return {j.at("instruction").get<std::string>(), j.value("input", std::string{}),
            j.value("output", std::string{})};
  }
};

inline TrainingRecord render_training_record(const EvalItem& item) {
  TrainingRecord rec;
  rec.instruction = build_eval_prompt(item);
  rec.input = "";
  rec.output = std::string(1, index_to_letter(item.answer_index)) + ". " +
               item.options[static_cast<std::size_t>(item.answer_index)];
  return rec;
}

struct ContaminationSplit {
  std::vector<TrainingRecord> clean;
  std::vector<TrainingRecord> contaminated;
  std::vector<std::string> test_ids;
  std::vector<std::string> clean_filler_ids;
};

// The contaminated set is the IFT base plus the test set rendered as
// instruction records; the clean set is the base plus an equal number of
// items sampled from an out-of-distribution pool. Both are shuffled with
// rng_seed and end up the same size.
inline ContaminationSplit build_contamination_splits(const std::vector<TrainingRecord>& ift_base,
                                                     const std::vector<EvalItem>& test_set,
                                                     const std::vector<EvalItem>& ood_pool,
                                                     std::uint64_t rng_seed) {
  if (ood_pool.size() < test_set.size())
    throw ValidationError("ood pool smaller than test set: " + std::to_string(ood_pool.size()) +
                          " < " + std::to_string(test_set.size()));
  ContaminationSplit split;
  Rng rng(rng_seed);
  auto filler_indices = rng.sample_indices(ood_pool.size(), test_set.size());

  split.contaminated = ift_base;
  for (const auto& item : test_set) {
    split.contaminated.push_back(render_training_record(item));
    split.test_ids.push_back(item.id);
  }
  split.clean = ift_base;
  for (std::size_t idx : filler_indices) {
    split.clean.push_back(render_training_record(ood_pool[idx]));
    split.clean_filler_ids.push_back(ood_pool[idx].id);
  }
  rng.shuffle(split.contaminated);
  rng.shuffle(split.clean);
  return split;
}

struct DeltaEntry {
  std::string benchmark;
  std::string method;
  double clean_acc = 0.0;
  double contaminated_acc = 0.0;
  double delta = 0.0;
  std::string formatted;
};

inline std::string format_signed(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.2f", value);
  return buf;
}

// delta = contaminated - clean, signed, rendered with a leading +/-.
inline DeltaEntry contamination_delta(double clean_acc, double contaminated_acc,
                                      const std::string& benchmark = {},
                                      const std::string& method = {}) {
  if (clean_acc < 0 || clean_acc > 100 || contaminated_acc < 0 || contaminated_acc > 100)
    throw ValidationError("accuracies must be percentages in [0, 100]");
  DeltaEntry entry;
  entry.benchmark = benchmark;
  entry.method = method;
  entry.clean_acc = clean_acc;
  entry.contaminated_acc = contaminated_acc;
  entry.delta = contaminated_acc - clean_acc;
  entry.formatted = format_signed(entry.delta);
  return entry;
}

struct DeltaReport {
  std::vector<DeltaEntry> entries;

  void add(const DeltaEntry& entry) { entries.push_back(entry); }

  nlohmann::json to_json() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& e : entries) {
      out.push_back({{"benchmark", e.benchmark},
                     {"method", e.method},
                     {"clean", e.clean_acc},
                     {"contaminated", e.contaminated_acc},
                     {"delta", e.delta},
                     {"formatted", e.formatted}});
    }
    return out;
  }
};

}  // namespace benchforge
