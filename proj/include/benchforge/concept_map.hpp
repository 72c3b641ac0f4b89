#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "benchforge/gateway.hpp"
#include "benchforge/io.hpp"
#include "benchforge/rng.hpp"
#include "benchforge/templates.hpp"
#include "benchforge/types.hpp"

namespace benchforge {

// ---------------------------------------------------------------------------
// Concept-map domain types.

struct ConceptNode {
  std::string name;
  std::string description;
  std::optional<std::string> kg_entity_id;  // present only after linking
  std::string seed_id;

  bool operator==(const ConceptNode&) const = default;
};

struct EntityRef {
  std::string entity_id;  // empty for literal values
  std::string label;

  bool operator==(const EntityRef&) const = default;
};

struct KnowledgeTriplet {
  EntityRef subject;
  EntityRef predicate;  // entity_id holds the property id
  EntityRef object;
  bool selected = false;

  std::string triple_key() const {
    return subject.entity_id + "|" + predicate.entity_id + "|" +
           (object.entity_id.empty() ? object.label : object.entity_id);
  }

  std::string rendered() const {
    return "(" + subject.label + ", " + predicate.label + ", " + object.label + ")";
  }

  bool operator==(const KnowledgeTriplet&) const = default;
};

struct TaxonomyEntry {
  std::string entity_id;
  std::string class_id;
  std::string class_label;
  int depth = 0;  // larger = finer

  bool operator==(const TaxonomyEntry&) const = default;
};

// Entity -> class memberships plus a label registry, queryable both ways.
class Taxonomy {
 public:
  void add_entry(const TaxonomyEntry& entry) {
    entries_by_entity_[entry.entity_id].push_back(entry);
    members_by_class_[entry.class_id].insert(entry.entity_id);
    class_labels_[entry.class_id] = entry.class_label;
  }

  void add_label(const std::string& entity_id, const std::string& label) {
    if (!entity_id.empty() && !label.empty()) labels_.emplace(entity_id, label);
  }

  bool contains(const std::string& entity_id) const {
    return entries_by_entity_.count(entity_id) > 0;
  }

  // Classes of an entity, finest first (depth descending, then class_id
  // ascending so ties at one depth resolve deterministically).
  std::vector<TaxonomyEntry> classes_of(const std::string& entity_id) const {
    auto it = entries_by_entity_.find(entity_id);
    if (it == entries_by_entity_.end()) return {};
    std::vector<TaxonomyEntry> out = it->second;
    std::sort(out.begin(), out.end(), [](const TaxonomyEntry& a, const TaxonomyEntry& b) {
      if (a.depth != b.depth) return a.depth > b.depth;
      return a.class_id < b.class_id;
    });
    return out;
  }

  std::vector<std::string> members_of(const std::string& class_id) const {
    auto it = members_by_class_.find(class_id);
    if (it == members_by_class_.end()) return {};
    return {it->second.begin(), it->second.end()};
  }

  std::optional<std::string> label(const std::string& entity_id) const {
    auto it = labels_.find(entity_id);
    if (it == labels_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::map<std::string, std::vector<TaxonomyEntry>> entries_by_entity_;
  std::map<std::string, std::set<std::string>> members_by_class_;
  std::map<std::string, std::string> class_labels_;
  std::map<std::string, std::string> labels_;
};

// ---------------------------------------------------------------------------
// Knowledge graph clients: one interface over a live SPARQL endpoint and an
// offline TSV fixture. Tests use fixtures only.

class KgClient {
 public:
  virtual ~KgClient() = default;
  // Exact-label match first, then aliases. Case-insensitive.
  virtual std::optional<std::string> link_entity(const std::string& name) = 0;
  virtual std::vector<KnowledgeTriplet> outgoing(const std::string& entity_id,
                                                 std::size_t max_triples) = 0;
  virtual const Taxonomy& taxonomy() = 0;
};

// Offline fixture.
//   triples.tsv:  subject_id  subject_label  property_id  property_label  object_id  object_label
//   taxonomy.tsv: entity_id  class_id  class_label  depth
//   aliases.tsv (optional): entity_id  alias
// Literal-valued objects leave object_id empty.
class FixtureKg : public KgClient {
 public:
  static FixtureKg load(const fs::path& dir) {
    FixtureKg kg;
    kg.parse_triples(read_file(dir / "triples.tsv"));
    kg.parse_taxonomy(read_file(dir / "taxonomy.tsv"));
    if (fs::exists(dir / "aliases.tsv")) kg.parse_aliases(read_file(dir / "aliases.tsv"));
    return kg;
  }

  std::optional<std::string> link_entity(const std::string& name) override {
    std::string key = to_lower(normalize_whitespace(name));
    auto it = labels_to_id_.find(key);
    if (it != labels_to_id_.end()) return it->second;
    auto alias = aliases_to_id_.find(key);
    if (alias != aliases_to_id_.end()) return alias->second;
    return std::nullopt;
  }

  std::vector<KnowledgeTriplet> outgoing(const std::string& entity_id,
                                         std::size_t max_triples) override {
    auto it = triples_by_subject_.find(entity_id);
    if (it == triples_by_subject_.end()) return {};
    std::vector<KnowledgeTriplet> out = it->second;
    std::sort(out.begin(), out.end(), [](const KnowledgeTriplet& a, const KnowledgeTriplet& b) {
      if (a.predicate.entity_id != b.predicate.entity_id)
        return a.predicate.entity_id < b.predicate.entity_id;
      if (a.object.entity_id != b.object.entity_id) return a.object.entity_id < b.object.entity_id;
      return a.object.label < b.object.label;
    });
    if (out.size() > max_triples) out.resize(max_triples);
    return out;
  }

  const Taxonomy& taxonomy() override { return taxonomy_; }

  // Literal distractor mining: other literal values of the same property,
  // restricted to subjects sharing a taxonomy class with `subject_id`.
  std::vector<std::string> literal_values_of_property(const std::string& property_id,
                                                      const std::string& subject_id) const {
    std::set<std::string> subject_classes;
    for (const auto& entry : taxonomy_.classes_of(subject_id)) {
      subject_classes.insert(entry.class_id);
    }
    std::set<std::string> values;
    for (const auto& [sid, triples] : triples_by_subject_) {
      if (sid == subject_id) continue;
      bool shares_class = false;
      for (const auto& entry : taxonomy_.classes_of(sid)) {
        if (subject_classes.count(entry.class_id)) {
          shares_class = true;
          break;
        }
      }
      if (!shares_class) continue;
      for (const auto& t : triples) {
        if (t.predicate.entity_id == property_id && t.object.entity_id.empty()) {
          values.insert(t.object.label);
        }
      }
    }
    return {values.begin(), values.end()};
  }

 private:
  static std::vector<std::string> tsv_fields(const std::string& line) {
    return split_on(line, '\t');
  }

  void parse_triples(const std::string& content) {
    std::size_t lineno = 0;
    for (const auto& line : split_lines(content)) {
      ++lineno;
      if (trim(line).empty() || line[0] == '#') continue;
      auto fields = tsv_fields(line);
      if (fields.size() != 6)
        throw ValidationError("triples.tsv line " + std::to_string(lineno) + ": expected 6 fields");
      KnowledgeTriplet t;
      t.subject = {trim(fields[0]), trim(fields[1])};
      t.predicate = {trim(fields[2]), trim(fields[3])};
      t.object = {trim(fields[4]), trim(fields[5])};
      if (t.subject.label.empty() || t.predicate.label.empty() || t.object.label.empty())
        throw ValidationError("triples.tsv line " + std::to_string(lineno) + ": empty label");
      labels_to_id_[to_lower(t.subject.label)] = t.subject.entity_id;
      if (!t.object.entity_id.empty()) {
        labels_to_id_.emplace(to_lower(t.object.label), t.object.entity_id);
        taxonomy_.add_label(t.object.entity_id, t.object.label);
      }
      taxonomy_.add_label(t.subject.entity_id, t.subject.label);
      triples_by_subject_[t.subject.entity_id].push_back(t);
    }
  }

  void parse_taxonomy(const std::string& content) {
    std::size_t lineno = 0;
    for (const auto& line : split_lines(content)) {
      ++lineno;
      if (trim(line).empty() || line[0] == '#') continue;
      auto fields = tsv_fields(line);
      if (fields.size() != 4)
        throw ValidationError("taxonomy.tsv line " + std::to_string(lineno) +
                              ": expected 4 fields");
      taxonomy_.add_entry({trim(fields[0]), trim(fields[1]), trim(fields[2]),
                           std::stoi(trim(fields[3]))});
    }
  }

  void parse_aliases(const std::string& content) {
    for (const auto& line : split_lines(content)) {
      if (trim(line).empty() || line[0] == '#') continue;
      auto fields = tsv_fields(line);
      if (fields.size() != 2) continue;
      aliases_to_id_[to_lower(trim(fields[1]))] = trim(fields[0]);
    }
  }

  std::map<std::string, std::vector<KnowledgeTriplet>> triples_by_subject_;
  std::map<std::string, std::string> labels_to_id_;
  std::map<std::string, std::string> aliases_to_id_;
  Taxonomy taxonomy_;
};

// ---------------------------------------------------------------------------
// Distractor sampling: start at the answer's finest class (ties resolved by
// smallest class_id), sample uniformly, then ascend to shallower classes
// until k distinct labels are collected.

struct DistractorSample {
  std::vector<std::string> labels;
  std::vector<std::string> class_ids;  // provenance, parallel to labels
};

inline DistractorSample sample_distractors_with_provenance(const std::string& answer_entity_id,
                                                           const Taxonomy& taxonomy, std::size_t k,
                                                           std::uint64_t rng_seed) {
  auto classes = taxonomy.classes_of(answer_entity_id);
  if (classes.empty())
    throw ValidationError("answer entity absent from taxonomy: " + answer_entity_id);
  const std::string answer_label =
      to_lower(taxonomy.label(answer_entity_id).value_or(std::string{}));

  DistractorSample out;
  Rng rng(rng_seed);
  std::set<std::string> used_entities{answer_entity_id};
  std::set<std::string> used_labels;
  if (!answer_label.empty()) used_labels.insert(answer_label);

  for (const auto& cls : classes) {
    if (out.labels.size() >= k) break;
    std::vector<std::pair<std::string, std::string>> candidates;  // (entity, label)
    for (const auto& member : taxonomy.members_of(cls.class_id)) {
      if (used_entities.count(member)) continue;
      auto label = taxonomy.label(member);
      if (!label || used_labels.count(to_lower(*label))) continue;
      candidates.emplace_back(member, *label);
    }
    std::sort(candidates.begin(), candidates.end());
    const std::size_t need = k - out.labels.size();
    auto picks = rng.sample_indices(candidates.size(), std::min(need, candidates.size()));
    for (std::size_t idx : picks) {
      const auto& [entity, label] = candidates[idx];
      used_entities.insert(entity);
      used_labels.insert(to_lower(label));
      out.labels.push_back(label);
      out.class_ids.push_back(cls.class_id);
    }
  }
  if (out.labels.size() < k)
    throw ValidationError("insufficient distractors for " + answer_entity_id + ": found " +
                          std::to_string(out.labels.size()) + " of " + std::to_string(k));
  return out;
}

inline std::vector<std::string> sample_distractors(const std::string& answer_entity_id,
                                                   const Taxonomy& taxonomy, std::size_t k,
                                                   std::uint64_t rng_seed) {
  return sample_distractors_with_provenance(answer_entity_id, taxonomy, k, rng_seed).labels;
}

// ---------------------------------------------------------------------------
// Question templates per predicate, with a generic fallback.

inline std::string render_triplet_question(const KnowledgeTriplet& t) {
  static const std::map<std::string, std::string> table = {
      {"instance of", "What is {s} an instance of?"},
      {"subclass of", "What is {s} a subclass of?"},
      {"part of", "What is {s} a part of?"},
      {"has part", "Which of the following is a part of {s}?"},
      {"connects with", "Which structure does {s} connect with?"},
      {"author", "Who is the author of {s}?"},
      {"creator", "Who created {s}?"},
      {"developer", "Who developed {s}?"},
      {"discoverer or inventor", "Who discovered or invented {s}?"},
      {"place of birth", "Where was {s} born?"},
      {"place of death", "Where did {s} die?"},
      {"date of birth", "When was {s} born?"},
      {"date of death", "When did {s} die?"},
      {"inception", "When was {s} created or founded?"},
      {"located in the administrative territorial entity", "Where is {s} located?"},
      {"capital", "What is the capital of {s}?"},
      {"capital of", "Which entity is {s} the capital of?"},
  };
  std::string pattern;
  auto it = table.find(to_lower(t.predicate.label));
  if (it != table.end()) {
    pattern = it->second;
  } else {
    pattern = "What is the " + t.predicate.label + " of {s}?";
  }
  std::string out;
  std::size_t pos = pattern.find("{s}");
  if (pos == std::string::npos) return pattern;
  out = pattern.substr(0, pos) + t.subject.label + pattern.substr(pos + 3);
  return out;
}

// ---------------------------------------------------------------------------
// Reply parsing for concept identification and triplet selection.

inline std::vector<ConceptNode> parse_concept_reply(const std::string& reply,
                                                    const std::string& seed_id) {
  std::vector<ConceptNode> out;
  std::set<std::string> seen;
  auto extract_value = [](const std::string& line, const std::string& key) -> std::optional<std::string> {
    // Matches {'key': 'value'} and {"key": "value"} style segments.
    for (char quote : {'\'', '"'}) {
      std::string pattern;
      pattern += quote;
      pattern += key;
      pattern += quote;
      std::size_t kpos = line.find(pattern);
      if (kpos == std::string::npos) continue;
      std::size_t colon = line.find(':', kpos + pattern.size());
      if (colon == std::string::npos) continue;
      std::size_t vstart = line.find_first_of("'\"", colon);
      if (vstart == std::string::npos) continue;
      char vquote = line[vstart];
      std::size_t vend = vstart + 1;
      while (vend < line.size()) {
        if (line[vend] == vquote) {
          // A quote followed by an alphanumeric char is an apostrophe inside
          // the value ("one's"), not the terminator.
          if (vquote == '\'' && vend + 1 < line.size() &&
              std::isalnum(static_cast<unsigned char>(line[vend + 1]))) {
            ++vend;
            continue;
          }
          break;
        }
        ++vend;
      }
      if (vend >= line.size()) continue;
      return line.substr(vstart + 1, vend - vstart - 1);
    }
    return std::nullopt;
  };
  for (const auto& line : split_lines(reply)) {
    auto name = extract_value(line, "name");
    if (!name || trim(*name).empty()) continue;
    auto description = extract_value(line, "description");
    std::string key = to_lower(normalize_whitespace(*name));
    if (!seen.insert(key).second) continue;
    ConceptNode node;
    node.name = trim(*name);
    node.description = description ? trim(*description) : std::string{};
    node.seed_id = seed_id;
    out.push_back(std::move(node));
  }
  return out;
}

struct TripletSelection {
  std::vector<std::size_t> selected_indices;  // zero-based into candidates
  std::size_t ignored_lines = 0;              // out-of-range references
};

inline TripletSelection parse_triplet_selection(const std::string& reply,
                                                std::size_t num_candidates,
                                                std::size_t cap = 3) {
  TripletSelection out;
  if (icontains(reply, "[none]")) return out;
  std::set<std::size_t> chosen;
  for (const auto& raw : split_lines(reply)) {
    std::string line = trim(raw);
    if (line.empty()) continue;
    std::size_t i = 0;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
    if (i == 0) continue;
    if (i < line.size() && line[i] != '.' && line[i] != ')' && line[i] != ':' && line[i] != ' ')
      continue;
    std::size_t number = std::stoul(line.substr(0, i));
    if (number < 1 || number > num_candidates) {
      ++out.ignored_lines;
      continue;
    }
    if (chosen.size() >= cap) break;
    if (chosen.insert(number - 1).second) out.selected_indices.push_back(number - 1);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Concept pipeline.

struct ConceptConfig {
  std::string generator_model = "generator";
  std::size_t max_triples = 50;
  std::size_t select_cap = 3;
  std::size_t distractors = 3;
  int reasks = 1;
  int verification_max_tokens = 512;
  std::uint64_t rng_seed = 0;
};

struct ConceptSeedResult {
  std::vector<ConceptNode> concepts;
  std::vector<KnowledgeTriplet> selected_triplets;
  std::vector<GeneratedInstance> instances;  // accepted
  std::size_t dropped_instances = 0;         // insufficient distractors
  std::size_t ignored_selection_lines = 0;
  bool skipped_no_concepts = false;
};

class ConceptBuilder {
 public:
  ConceptBuilder(LlmGateway& gateway, const TemplateSet& templates, KgClient& kg,
                 ConceptConfig config, LogSink log = nullptr)
      : gateway_(gateway),
        templates_(templates),
        kg_(kg),
        config_(std::move(config)),
        log_(std::move(log)) {}

  std::vector<ConceptNode> identify_concepts(const SeedInstance& seed) {
    const PromptTemplate& tmpl = templates_.get("concept_identification");
    std::string prompt = render_prompt(tmpl, {{"question", seed.question},
                                              {"options", format_options(seed.options)},
                                              {"answer", answer_text(seed)}});
    for (int attempt = 0; attempt <= config_.reasks; ++attempt) {
      ChatResponse response =
          gateway_.chat({config_.generator_model, with_reask(prompt, attempt),
                         kVerificationTemperature, config_.verification_max_tokens, 0});
      auto concepts = parse_concept_reply(response.text, seed.id);
      if (!concepts.empty()) return concepts;
      log("no parseable concepts for seed " + seed.id + ", attempt " +
          std::to_string(attempt + 1));
    }
    return {};
  }

  // Links the concept and returns its outgoing triples (selected=false).
  // An unlinkable concept stays unlinked and yields an empty list.
  std::vector<KnowledgeTriplet> fetch_subgraph(ConceptNode& node) {
    auto entity = kg_.link_entity(node.name);
    if (!entity) return {};
    node.kg_entity_id = *entity;
    return kg_.outgoing(*entity, config_.max_triples);
  }

  std::vector<KnowledgeTriplet> select_triplets(const SeedInstance& seed,
                                                std::vector<KnowledgeTriplet> candidates,
                                                std::size_t* ignored_lines = nullptr) {
    if (candidates.empty()) throw ValidationError("select_triplets: empty candidates");
    const PromptTemplate& tmpl = templates_.get("triplet_selection");
    std::string numbered;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      numbered += std::to_string(i + 1) + ". " + candidates[i].rendered();
      if (i + 1 < candidates.size()) numbered += "\n";
    }
    std::string prompt = render_prompt(tmpl, {{"question", seed.question},
                                              {"candidates", numbered}});
    ChatResponse response = gateway_.chat({config_.generator_model, prompt,
                                           kVerificationTemperature,
                                           config_.verification_max_tokens, 0});
    TripletSelection selection =
        parse_triplet_selection(response.text, candidates.size(), config_.select_cap);
    if (ignored_lines) *ignored_lines += selection.ignored_lines;
    for (std::size_t i = 0; i < selection.ignored_lines; ++i)
      log("selection line out of range for seed " + seed.id);
    for (std::size_t idx : selection.selected_indices) candidates[idx].selected = true;
    return candidates;
  }

  // Turns one selected triplet into a multiple-choice instance: question from
  // the predicate template, the object label as the correct option, and
  // distractors drawn from the answer's finest taxonomy class.
  std::optional<GeneratedInstance> triplet_to_instance(const KnowledgeTriplet& t,
                                                       const Taxonomy& taxonomy,
                                                       std::uint64_t rng_seed,
                                                       const std::string& parent_seed_id) {
    if (!t.selected) throw ValidationError("triplet_to_instance: triplet not selected");
    std::vector<std::string> distractors;
    try {
      if (t.object.entity_id.empty()) {
        distractors = literal_distractors(t, rng_seed);
      } else {
        distractors = sample_distractors(t.object.entity_id, taxonomy, config_.distractors,
                                         rng_seed);
      }
    } catch (const ValidationError& e) {
      log(std::string("dropping triplet ") + t.triple_key() + ": " + e.what());
      return std::nullopt;
    }
    if (distractors.size() < config_.distractors) {
      log("dropping triplet " + t.triple_key() + ": insufficient distractors");
      return std::nullopt;
    }

    GeneratedInstance inst;
    inst.parent_seed_id = parent_seed_id;
    inst.origin = Origin::concept_entity(t.subject.entity_id);
    inst.question = render_triplet_question(t);
    inst.options.push_back(t.object.label);
    for (const auto& d : distractors) inst.options.push_back(d);
    Rng rng(rng_seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<std::size_t> order(inst.options.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<std::string> shuffled(inst.options.size());
    for (std::size_t i = 0; i < order.size(); ++i) shuffled[i] = inst.options[order[i]];
    inst.answer_index = static_cast<int>(
        std::find(order.begin(), order.end(), std::size_t{0}) - order.begin());
    inst.options = std::move(shuffled);
    inst.id = parent_seed_id + ":concept:" + t.triple_key();
    inst.gen_meta = {config_.generator_model, "", rng_seed};
    inst.status = InstanceStatus::kAccepted;
    validate(inst);
    return inst;
  }

  ConceptSeedResult build_concept_set(const SeedInstance& seed) {
    ConceptSeedResult result;
    result.concepts = identify_concepts(seed);
    if (result.concepts.empty()) {
      result.skipped_no_concepts = true;
      log("seed " + seed.id + " skipped for concept expansion: no concepts identified");
      return result;
    }
    expand_concepts(result, seed);
    return result;
  }

  // Custom construction path: the concept list is already known.
  ConceptSeedResult build_from_concepts(const SeedInstance& seed,
                                        std::vector<ConceptNode> concepts) {
    ConceptSeedResult result;
    result.concepts = std::move(concepts);
    for (auto& node : result.concepts) node.seed_id = seed.id;
    if (result.concepts.empty()) {
      result.skipped_no_concepts = true;
      return result;
    }
    expand_concepts(result, seed);
    return result;
  }

 private:
  void expand_concepts(ConceptSeedResult& result, const SeedInstance& seed) {
    for (auto& node : result.concepts) {
      auto candidates = fetch_subgraph(node);
      if (candidates.empty()) continue;
      auto marked = select_triplets(seed, std::move(candidates), &result.ignored_selection_lines);
      for (const auto& t : marked) {
        if (!t.selected) continue;
        result.selected_triplets.push_back(t);
        const std::uint64_t derived = derive_seed(config_.rng_seed, t.triple_key());
        auto inst = triplet_to_instance(t, kg_.taxonomy(), derived, seed.id);
        if (inst) {
          result.instances.push_back(std::move(*inst));
        } else {
          ++result.dropped_instances;
        }
      }
    }
    // One instance per distinct triple even if two concepts share a triple.
    std::set<std::string> seen;
    std::vector<GeneratedInstance> unique;
    for (auto& inst : result.instances) {
      if (seen.insert(inst.id).second) unique.push_back(std::move(inst));
    }
    result.instances = std::move(unique);
  }

 public:
  static std::uint64_t derive_seed(std::uint64_t base, const std::string& key) {
    std::string digest = detail::sha256_hex_fields({std::to_string(base), key});
    std::uint64_t out = 0;
    for (int i = 0; i < 16; ++i) {
      char c = digest[static_cast<std::size_t>(i)];
      out = (out << 4) | static_cast<std::uint64_t>(c <= '9' ? c - '0' : c - 'a' + 10);
    }
    return out;
  }

 private:
  std::vector<std::string> literal_distractors(const KnowledgeTriplet& t,
                                               std::uint64_t rng_seed) {
    auto* fixture = dynamic_cast<FixtureKg*>(&kg_);
    std::vector<std::string> values;
    if (fixture) {
      values = fixture->literal_values_of_property(t.predicate.entity_id, t.subject.entity_id);
    }
    values.erase(std::remove(values.begin(), values.end(), t.object.label), values.end());
    if (values.size() < config_.distractors)
      throw ValidationError("no literal distractors for property " + t.predicate.label);
    Rng rng(rng_seed);
    auto picks = rng.sample_indices(values.size(), config_.distractors);
    std::vector<std::string> out;
    for (std::size_t idx : picks) out.push_back(values[idx]);
    return out;
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

  static std::string with_reask(const std::string& prompt, int attempt) {
    if (attempt == 0) return prompt;
    return prompt + "\n\n(Format reminder " + std::to_string(attempt) +
           ": your previous reply did not follow the required format. Respond again using "
           "exactly the required format.)";
  }

  void log(const std::string& message) {
    if (log_) log_(message);
  }

  LlmGateway& gateway_;
  const TemplateSet& templates_;
  KgClient& kg_;
  ConceptConfig config_;
  LogSink log_;
};

}  // namespace benchforge
