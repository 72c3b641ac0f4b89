#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "benchforge/gateway.hpp"
#include "benchforge/rng.hpp"
#include "benchforge/templates.hpp"
#include "benchforge/types.hpp"

namespace benchforge {

// ---------------------------------------------------------------------------
// Baseline augmentations used as comparison arms. All five preserve the
// answer semantics: option_shuffle remaps the index so the answer text is
// unchanged; the other four leave options and answer_index untouched.

enum class AugmentMethod { kCharDisturb, kSynonym, kParaphrase, kBackTranslate, kOptionShuffle };

inline std::string to_string(AugmentMethod m) {
  switch (m) {
    case AugmentMethod::kCharDisturb: return "char_disturb";
    case AugmentMethod::kSynonym: return "synonym";
    case AugmentMethod::kParaphrase: return "paraphrase";
    case AugmentMethod::kBackTranslate: return "back_translate";
    case AugmentMethod::kOptionShuffle: return "option_shuffle";
  }
  throw ValidationError("unknown augment method");
}

inline AugmentMethod parse_augment_method(std::string_view token) {
  std::string t = to_lower(trim(token));
  if (t == "char_disturb" || t == "char") return AugmentMethod::kCharDisturb;
  if (t == "synonym" || t == "wordnet") return AugmentMethod::kSynonym;
  if (t == "paraphrase") return AugmentMethod::kParaphrase;
  if (t == "back_translate" || t == "backtranslation") return AugmentMethod::kBackTranslate;
  if (t == "option_shuffle" || t == "shuffle") return AugmentMethod::kOptionShuffle;
  throw ValidationError("unknown augment method: " + t);
}

struct AugmentedInstance {
  std::string parent_id;
  AugmentMethod method = AugmentMethod::kCharDisturb;
  std::string subject;
  std::string question;
  std::vector<std::string> options;
  int answer_index = 0;
  std::uint64_t rng_seed = 0;
  nlohmann::json params = nlohmann::json::object();

  nlohmann::json to_json() const {
    return {{"schema_version", kSchemaVersion},
            {"parent_id", parent_id},
            {"method", to_string(method)},
            {"subject", subject},
            {"question", question},
            {"options", options},
            {"answer_index", answer_index},
            {"rng_seed", rng_seed},
            {"params", params}};
  }
};

// ---------------------------------------------------------------------------
// Character-level disturbance.

namespace detail_augment {

inline char random_letter(Rng& rng) { return static_cast<char>('a' + rng.below(26)); }

// Adjacent positions whose characters differ; swapping elsewhere is a no-op.
inline std::vector<std::size_t> swappable_positions(const std::string& s) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    if (s[i] != s[i + 1]) out.push_back(i);
  }
  return out;
}

inline std::string swap_adjacent_at(std::string s, std::size_t eligible_index) {
  auto positions = swappable_positions(s);
  if (positions.empty()) return s;
  std::size_t pos = positions[eligible_index % positions.size()];
  std::swap(s[pos], s[pos + 1]);
  return s;
}

inline std::string apply_one_edit(std::string s, Rng& rng) {
  if (s.empty()) return s;
  int op = static_cast<int>(rng.below(4));
  switch (op) {
    case 0: {  // substitute with a differing character
      std::size_t pos = static_cast<std::size_t>(rng.below(s.size()));
      char c = random_letter(rng);
      while (c == s[pos]) c = random_letter(rng);
      s[pos] = c;
      return s;
    }
    case 1: {  // delete (never emptying the string)
      if (s.size() <= 1) return apply_one_edit(std::move(s), rng);
      std::size_t pos = static_cast<std::size_t>(rng.below(s.size()));
      s.erase(pos, 1);
      return s;
    }
    case 2: {  // insert
      std::size_t pos = static_cast<std::size_t>(rng.below(s.size() + 1));
      s.insert(pos, 1, random_letter(rng));
      return s;
    }
    default: {  // swap adjacent, falling back to substitute when degenerate
      auto positions = swappable_positions(s);
      if (positions.empty()) {
        std::size_t pos = static_cast<std::size_t>(rng.below(s.size()));
        char c = random_letter(rng);
        while (c == s[pos]) c = random_letter(rng);
        s[pos] = c;
        return s;
      }
      std::size_t pos = positions[static_cast<std::size_t>(rng.below(positions.size()))];
      std::swap(s[pos], s[pos + 1]);
      return s;
    }
  }
}

}  // namespace detail_augment

// Applies ceil(rate * word_count) single-character edits to the question
// only. The result always differs from the input.
inline AugmentedInstance char_disturb(const SeedInstance& seed, double rate,
                                      std::uint64_t rng_seed) {
  if (!(rate > 0.0 && rate <= 1.0)) throw ValidationError("char rate must be in (0, 1]");
  if (seed.question.size() < 2) throw ValidationError("question too short for char_disturb");
  const std::size_t word_count = split_whitespace(seed.question).size();
  const std::size_t budget =
      static_cast<std::size_t>(std::ceil(rate * static_cast<double>(word_count)));

  std::string result;
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng(rng_seed + attempt);
    result = seed.question;
    for (std::size_t i = 0; i < budget; ++i) {
      result = detail_augment::apply_one_edit(std::move(result), rng);
    }
    if (result != seed.question) break;
    if (attempt >= 8) {  // pathological input; force a visible substitution
      result = seed.question;
      result[0] = result[0] == 'x' ? 'y' : 'x';
      break;
    }
  }

  AugmentedInstance out;
  out.parent_id = seed.id;
  out.subject = seed.subject;
  out.method = AugmentMethod::kCharDisturb;
  out.question = result;
  out.options = seed.options;
  out.answer_index = seed.answer_index;
  out.rng_seed = rng_seed;
  out.params = {{"rate", rate}, {"edits", budget}};
  return out;
}

// ---------------------------------------------------------------------------
// Synonym replacement from a plain TSV lexicon: word TAB comma-joined synonyms.

class SynonymLexicon {
 public:
  static SynonymLexicon from_file(const fs::path& path) {
    SynonymLexicon lex;
    std::ifstream in(path);
    if (!in) throw IoError("cannot open lexicon: " + path.string());
    std::string line;
    while (std::getline(in, line)) {
      if (trim(line).empty() || line[0] == '#') continue;
      auto tab = line.find('\t');
      if (tab == std::string::npos) continue;
      std::string word = to_lower(trim(line.substr(0, tab)));
      std::vector<std::string> synonyms;
      for (const auto& s : split_on(line.substr(tab + 1), ',')) {
        std::string t = trim(s);
        if (!t.empty()) synonyms.push_back(t);
      }
      if (!word.empty() && !synonyms.empty()) lex.entries_[word] = std::move(synonyms);
    }
    return lex;
  }

  static SynonymLexicon from_map(std::map<std::string, std::vector<std::string>> entries) {
    SynonymLexicon lex;
    for (auto& [word, synonyms] : entries) lex.entries_[to_lower(word)] = std::move(synonyms);
    return lex;
  }

  const std::vector<std::string>* lookup(const std::string& word) const {
    auto it = entries_.find(to_lower(word));
    return it == entries_.end() ? nullptr : &it->second;
  }

  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, std::vector<std::string>> entries_;
};

// Each lexicon-covered word is independently replaced with probability
// `rate`; the replacement keeps the casing of the original first letter.
inline AugmentedInstance synonym_replace(const SeedInstance& seed, const SynonymLexicon& lexicon,
                                         double rate, std::uint64_t rng_seed) {
  if (lexicon.empty()) throw ValidationError("empty lexicon");
  if (rate < 0.0 || rate > 1.0) throw ValidationError("synonym rate must be in [0, 1]");
  Rng rng(rng_seed);
  const std::string& q = seed.question;
  std::string out;
  out.reserve(q.size());
  std::size_t i = 0;
  while (i < q.size()) {
    if (!std::isalpha(static_cast<unsigned char>(q[i]))) {
      out.push_back(q[i]);
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < q.size() && std::isalpha(static_cast<unsigned char>(q[j]))) ++j;
    std::string word = q.substr(i, j - i);
    const auto* synonyms = lexicon.lookup(word);
    if (synonyms && rate > 0.0 && rng.coin(rate)) {
      std::string pick = (*synonyms)[static_cast<std::size_t>(rng.below(synonyms->size()))];
      if (!pick.empty() && std::isupper(static_cast<unsigned char>(word[0]))) {
        pick[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(pick[0])));
      } else if (!pick.empty()) {
        pick[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(pick[0])));
      }
      out += pick;
    } else {
      out += word;
    }
    i = j;
  }

  AugmentedInstance result;
  result.parent_id = seed.id;
  result.subject = seed.subject;
  result.method = AugmentMethod::kSynonym;
  result.question = out;
  result.options = seed.options;
  result.answer_index = seed.answer_index;
  result.rng_seed = rng_seed;
  result.params = {{"rate", rate}};
  return result;
}

// ---------------------------------------------------------------------------
// LLM-mediated rewrites. An empty reply keeps the original question.

inline AugmentedInstance paraphrase(LlmGateway& gateway, const TemplateSet& templates,
                                    const std::string& model_id, const SeedInstance& seed,
                                    LogSink log = nullptr) {
  std::string prompt =
      render_prompt(templates.get("paraphrase"), {{"question", seed.question}});
  ChatResponse response = gateway.chat({model_id, prompt, kGenerationTemperature, 512, 0});
  std::string text = trim(response.text);
  if (text.empty()) {
    if (log) log("empty paraphrase reply for " + seed.id + ", keeping original");
    text = seed.question;
  }
  AugmentedInstance out;
  out.parent_id = seed.id;
  out.subject = seed.subject;
  out.method = AugmentMethod::kParaphrase;
  out.question = text;
  out.options = seed.options;
  out.answer_index = seed.answer_index;
  out.params = {{"model", model_id}};
  return out;
}

// Two chained translation calls: into the pivot language, then back.
inline AugmentedInstance back_translate(LlmGateway& gateway, const TemplateSet& templates,
                                        const std::string& model_id, const SeedInstance& seed,
                                        const std::string& pivot_lang, LogSink log = nullptr) {
  const PromptTemplate& tmpl = templates.get("translate");
  std::string question = seed.question;
  ChatResponse to_pivot = gateway.chat(
      {model_id, render_prompt(tmpl, {{"language", pivot_lang}, {"text", question}}),
       kGenerationTemperature, 512, 0});
  std::string pivot_text = trim(to_pivot.text);
  if (pivot_text.empty()) {
    if (log) log("empty translation reply for " + seed.id + ", keeping original");
  } else {
    ChatResponse back = gateway.chat(
        {model_id, render_prompt(tmpl, {{"language", "English"}, {"text", pivot_text}}),
         kGenerationTemperature, 512, 0});
    std::string back_text = trim(back.text);
    if (back_text.empty()) {
      if (log) log("empty back-translation reply for " + seed.id + ", keeping original");
    } else {
      question = back_text;
    }
  }
  AugmentedInstance out;
  out.parent_id = seed.id;
  out.subject = seed.subject;
  out.method = AugmentMethod::kBackTranslate;
  out.question = question;
  out.options = seed.options;
  out.answer_index = seed.answer_index;
  out.params = {{"model", model_id}, {"pivot", pivot_lang}};
  return out;
}

// ---------------------------------------------------------------------------
// Option shuffle: a uniformly sampled non-identity permutation; the answer
// index is remapped so the answer text is preserved.

inline AugmentedInstance option_shuffle(const SeedInstance& seed, std::uint64_t rng_seed) {
  if (seed.options.size() < 2) throw ValidationError("option_shuffle needs at least 2 options");
  const std::size_t n = seed.options.size();
  Rng rng(rng_seed);
  std::vector<std::size_t> perm(n);
  for (;;) {
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    bool identity = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (perm[i] != i) {
        identity = false;
        break;
      }
    }
    if (!identity) break;
  }

  AugmentedInstance out;
  out.parent_id = seed.id;
  out.subject = seed.subject;
  out.method = AugmentMethod::kOptionShuffle;
  out.question = seed.question;
  out.options.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.options[i] = seed.options[perm[i]];
  out.answer_index = static_cast<int>(
      std::find(perm.begin(), perm.end(), static_cast<std::size_t>(seed.answer_index)) -
      perm.begin());
  out.rng_seed = rng_seed;
  out.params = nlohmann::json::object();
  return out;
}

}  // namespace benchforge
