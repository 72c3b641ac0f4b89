#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "benchforge/detail/csv.hpp"
#include "benchforge/io.hpp"
#include "benchforge/types.hpp"

namespace benchforge {

// ---------------------------------------------------------------------------
// Seed benchmark ingestion.

struct IngestError {
  std::size_t line = 0;
  std::string field;
  std::string message;
};

struct IngestResult {
  std::vector<SeedInstance> seeds;
  std::vector<IngestError> errors;
  std::size_t rows_in = 0;  // rows_in == seeds.size() + errors.size()
};

// Subject allowlist: one subject per line, '#' comments. An empty or missing
// list keeps every subject.
class SubjectAllowlist {
 public:
  SubjectAllowlist() = default;

  static SubjectAllowlist from_file(const fs::path& path) {
    SubjectAllowlist list;
    std::ifstream in(path);
    if (!in) throw IoError("cannot open allowlist: " + path.string());
    std::string line;
    while (std::getline(in, line)) {
      std::string t = trim(line);
      if (t.empty() || t.front() == '#') continue;
      list.subjects_.insert(to_lower(t));
    }
    return list;
  }

  bool allows(const std::string& subject) const {
    return subjects_.empty() || subjects_.count(to_lower(subject)) > 0;
  }

  bool empty() const { return subjects_.empty(); }

 private:
  std::set<std::string> subjects_;
};

namespace detail {

// "anatomy_test" -> "anatomy"
inline std::string subject_from_stem(std::string stem) {
  for (std::string_view suffix : {"_test", "_val", "_dev", "_train"}) {
    if (stem.size() > suffix.size() && stem.ends_with(suffix)) {
      return stem.substr(0, stem.size() - suffix.size());
    }
  }
  return stem;
}

inline std::optional<int> parse_answer_token(const std::string& raw, std::size_t num_options) {
  std::string t = trim(raw);
  if (t.empty()) return std::nullopt;
  if (t.size() == 1) {
    if (auto idx = letter_to_index(t[0]); idx && *idx < static_cast<int>(num_options)) return idx;
    if (t[0] >= '0' && t[0] <= '9') {
      int idx = t[0] - '0';
      if (idx < static_cast<int>(num_options)) return idx;
    }
    return std::nullopt;
  }
  // Multi-digit index.
  bool digits = std::all_of(t.begin(), t.end(),
                            [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
  if (digits) {
    int idx = std::stoi(t);
    if (idx >= 0 && idx < static_cast<int>(num_options)) return idx;
  }
  return std::nullopt;
}

inline void finish_seed(IngestResult& result, SeedInstance seed, std::size_t line) {
  std::string err = check_mcq_invariants(seed.question, seed.options, seed.answer_index,
                                         "seed " + seed.id);
  if (!err.empty()) {
    result.errors.push_back({line, "record", err});
    return;
  }
  result.seeds.push_back(std::move(seed));
}

inline void ingest_mmlu_csv(const fs::path& path, IngestResult& result) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path.string());
  const std::string subject = subject_from_stem(path.stem().string());
  std::string line;
  std::size_t lineno = 0;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t first_line = lineno;
    while (benchforge::detail::csv_row_incomplete(line) && in) {
      std::string extra;
      if (!std::getline(in, extra)) break;
      ++lineno;
      line += "\n" + extra;
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    ++result.rows_in;
    auto fields = benchforge::detail::parse_csv_row(line);
    if (fields.size() < 4) {
      result.errors.push_back({first_line, "row", "expected question, options, answer; got " +
                                                      std::to_string(fields.size()) + " fields"});
      ++row;
      continue;
    }
    SeedInstance seed;
    seed.source = SeedSource::kMmlu;
    seed.subject = subject;
    seed.id = "mmlu:" + subject + ":" + std::to_string(row);
    seed.question = fields.front();
    seed.options.assign(fields.begin() + 1, fields.end() - 1);
    auto idx = parse_answer_token(fields.back(), seed.options.size());
    if (!idx) {
      result.errors.push_back(
          {first_line, "answer", "answer out of range, line " + std::to_string(first_line)});
      ++row;
      continue;
    }
    seed.answer_index = *idx;
    finish_seed(result, std::move(seed), first_line);
    ++row;
  }
}

// ARC / OpenBookQA JSONL: {"id", "question":{"stem","choices":[{"text","label"}]},
// "answerKey"}. Labels may be letters or 1-based digits.
inline void ingest_arc_style(const fs::path& path, SeedSource source, IngestResult& result) {
  auto records = read_jsonl(path);
  std::string fallback_subject = to_string(source);
  for (const auto& rec : records) {
    ++result.rows_in;
    const auto& j = rec.value;
    try {
      SeedInstance seed;
      seed.source = source;
      seed.subject = j.value("subject", fallback_subject);
      seed.id = j.contains("id") ? j.at("id").get<std::string>()
                                 : to_string(source) + ":" + std::to_string(rec.line - 1);
      const auto& q = j.at("question");
      seed.question = q.at("stem").get<std::string>();
      std::vector<std::string> labels;
      for (const auto& choice : q.at("choices")) {
        seed.options.push_back(choice.at("text").get<std::string>());
        labels.push_back(choice.at("label").get<std::string>());
      }
      std::string key = trim(j.at("answerKey").get<std::string>());
      auto it = std::find(labels.begin(), labels.end(), key);
      if (it == labels.end()) {
        // 1-based numeric labels sometimes pair with letter keys and vice versa.
        std::optional<int> idx;
        if (key.size() == 1) {
          if (auto li = letter_to_index(key[0]); li && *li < static_cast<int>(labels.size()))
            idx = li;
          else if (key[0] >= '1' && key[0] <= '9' && key[0] - '1' < static_cast<int>(labels.size()))
            idx = key[0] - '1';
        }
        if (!idx) {
          result.errors.push_back({rec.line, "answerKey", "answer key '" + key +
                                                              "' matches no choice label, line " +
                                                              std::to_string(rec.line)});
          continue;
        }
        seed.answer_index = *idx;
      } else {
        seed.answer_index = static_cast<int>(it - labels.begin());
      }
      finish_seed(result, std::move(seed), rec.line);
    } catch (const nlohmann::json::exception& e) {
      result.errors.push_back({rec.line, "record", std::string("bad record: ") + e.what()});
    }
  }
}

// Canonical seed JSONL (or a minimal {"question","options","answer_index"}).
inline void ingest_custom_jsonl(const fs::path& path, IngestResult& result) {
  auto records = read_jsonl(path);
  for (const auto& rec : records) {
    ++result.rows_in;
    const auto& j = rec.value;
    try {
      SeedInstance seed;
      seed.source = SeedSource::kCustom;
      if (j.contains("source")) seed.source = parse_seed_source(j.at("source").get<std::string>());
      seed.id = j.contains("id") ? j.at("id").get<std::string>()
                                 : "custom:" + std::to_string(rec.line - 1);
      seed.subject = j.value("subject", std::string{"custom"});
      seed.question = j.at("question").get<std::string>();
      seed.options = j.at("options").get<std::vector<std::string>>();
      if (j.contains("answer_index")) {
        seed.answer_index = j.at("answer_index").get<int>();
      } else if (j.contains("answer")) {
        auto idx = parse_answer_token(j.at("answer").get<std::string>(), seed.options.size());
        if (!idx) {
          result.errors.push_back(
              {rec.line, "answer", "answer out of range, line " + std::to_string(rec.line)});
          continue;
        }
        seed.answer_index = *idx;
      } else {
        result.errors.push_back({rec.line, "answer_index", "missing answer field"});
        continue;
      }
      finish_seed(result, std::move(seed), rec.line);
    } catch (const nlohmann::json::exception& e) {
      result.errors.push_back({rec.line, "record", std::string("bad record: ") + e.what()});
    }
  }
}

}  // namespace detail

// Ingests one file (or, for directory paths, every regular file inside,
// sorted by name). Malformed rows are collected, never silently dropped;
// duplicate ids are reported as row errors on the later row.
inline IngestResult ingest_seed_benchmark(const fs::path& path, SeedSource source,
                                          const SubjectAllowlist& allowlist = {}) {
  if (!fs::exists(path)) throw IoError("input does not exist: " + path.string());
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(path);
  }

  IngestResult result;
  for (const auto& file : files) {
    switch (source) {
      case SeedSource::kMmlu:
        detail::ingest_mmlu_csv(file, result);
        break;
      case SeedSource::kArcEasy:
      case SeedSource::kArcChallenge:
      case SeedSource::kOpenbookqa:
        detail::ingest_arc_style(file, source, result);
        break;
      case SeedSource::kCustom:
        detail::ingest_custom_jsonl(file, result);
        break;
    }
  }

  // Subject filter: filtered rows count as reported errors so the row
  // accounting stays exact.
  if (!allowlist.empty()) {
    std::vector<SeedInstance> kept;
    for (auto& seed : result.seeds) {
      if (allowlist.allows(seed.subject)) {
        kept.push_back(std::move(seed));
      } else {
        result.errors.push_back({0, "subject", "subject not in allowlist: " + seed.subject});
      }
    }
    result.seeds = std::move(kept);
  }

  std::set<std::string> ids;
  std::vector<SeedInstance> unique;
  for (auto& seed : result.seeds) {
    if (!ids.insert(seed.id).second) {
      result.errors.push_back({0, "id", "duplicate id: " + seed.id});
    } else {
      unique.push_back(std::move(seed));
    }
  }
  result.seeds = std::move(unique);
  return result;
}

inline void persist_seeds(const std::vector<SeedInstance>& seeds, const fs::path& path) {
  std::vector<nlohmann::json> records;
  records.reserve(seeds.size());
  for (const auto& seed : seeds) records.push_back(to_json(seed));
  write_jsonl(path, records);
}

inline std::vector<SeedInstance> load_seeds(const fs::path& path) {
  std::vector<SeedInstance> seeds;
  for (const auto& rec : read_jsonl(path)) {
    require_schema_version(rec.value, path.string() + ":" + std::to_string(rec.line));
    seeds.push_back(seed_from_json(rec.value));
    validate(seeds.back());
  }
  return seeds;
}

// ---------------------------------------------------------------------------
// Structured item persistence (JSON Lines, one item per line).

inline void persist_items(const std::vector<StructuredItem>& items, const fs::path& path) {
  std::vector<nlohmann::json> records;
  records.reserve(items.size());
  for (const auto& item : items) records.push_back(to_json(item));
  write_jsonl(path, records);
}

inline std::vector<StructuredItem> load_items(const fs::path& path) {
  std::vector<StructuredItem> items;
  for (const auto& rec : read_jsonl(path)) {
    items.push_back(item_from_json(rec.value, path.string() + ":" + std::to_string(rec.line)));
    validate(items.back());
  }
  return items;
}

// ---------------------------------------------------------------------------
// Structure statistics.

struct StatsReport {
  std::size_t seed_count = 0;
  std::size_t bloom_count = 0;
  std::size_t concept_count = 0;
  std::size_t structured_count = 0;

  bool operator==(const StatsReport&) const = default;
};

// Counts accepted instances only; structured_count == bloom_count + concept_count.
inline StatsReport structure_stats(const std::vector<StructuredItem>& items) {
  StatsReport report;
  report.seed_count = items.size();
  for (const auto& item : items) {
    for (const auto& [level, list] : item.bloom) {
      for (const auto& inst : list) {
        if (inst.status == InstanceStatus::kAccepted) ++report.bloom_count;
      }
    }
    for (const auto& inst : item.concept_instances) {
      if (inst.status == InstanceStatus::kAccepted) ++report.concept_count;
    }
  }
  report.structured_count = report.bloom_count + report.concept_count;
  return report;
}

inline nlohmann::json to_json(const StatsReport& r) {
  return {{"seed_count", r.seed_count},
          {"bloom_count", r.bloom_count},
          {"concept_count", r.concept_count},
          {"structured_count", r.structured_count}};
}

// ---------------------------------------------------------------------------
// Annotation export for human review. Verdict fields start null.

inline nlohmann::json annotation_record(const std::string& instance_id,
                                        const std::string& question,
                                        const std::vector<std::string>& options,
                                        int answer_index) {
  return {{"instance_id", instance_id}, {"question", question},
          {"options", options},        {"answer_index", answer_index},
          {"helpfulness", nullptr},    {"answerability", nullptr},
          {"correctness", nullptr}};
}

inline void export_annotations(const std::vector<StructuredItem>& items, const fs::path& path) {
  std::vector<nlohmann::json> records;
  for (const auto& item : items) {
    for (BloomLevel level : kBloomLevels) {
      auto it = item.bloom.find(level);
      if (it == item.bloom.end()) continue;
      for (const auto& inst : it->second) {
        if (inst.status != InstanceStatus::kAccepted) continue;
        records.push_back(
            annotation_record(inst.id, inst.question, inst.options, inst.answer_index));
      }
    }
    for (const auto& inst : item.concept_instances) {
      if (inst.status != InstanceStatus::kAccepted) continue;
      records.push_back(
          annotation_record(inst.id, inst.question, inst.options, inst.answer_index));
    }
  }
  write_jsonl(path, records);
}

}  // namespace benchforge
