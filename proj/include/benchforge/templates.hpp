#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "benchforge/gateway.hpp"
#include "benchforge/io.hpp"
#include "benchforge/types.hpp"

namespace benchforge {

// Stage-keyed prompt templates. Builtins cover every pipeline stage; a
// templates directory can override any of them by name. On disk a template
// is the body text, followed by optional few-shot blocks each introduced by
// a line reading "--- demonstration ---".

inline constexpr const char* kDemonstrationSeparator = "--- demonstration ---";

class TemplateSet {
 public:
  static TemplateSet builtin();

  static TemplateSet load_dir(const fs::path& dir) {
    TemplateSet set = builtin();
    if (!fs::exists(dir)) throw IoError("templates directory does not exist: " + dir.string());
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
      set.templates_[entry.path().stem().string()] =
          parse_template_file(entry.path().stem().string(), read_file(entry.path()));
    }
    return set;
  }

  static PromptTemplate parse_template_file(const std::string& name, const std::string& content) {
    PromptTemplate tmpl;
    tmpl.name = name;
    std::vector<std::string> lines = split_lines(content);
    std::vector<std::string>* current = nullptr;
    std::vector<std::string> body_lines;
    std::vector<std::vector<std::string>> demo_lines;
    current = &body_lines;
    for (auto& line : lines) {
      if (trim(line) == kDemonstrationSeparator) {
        demo_lines.emplace_back();
        current = &demo_lines.back();
        continue;
      }
      current->push_back(line);
    }
    auto strip_trailing_blank = [](std::vector<std::string>& v) {
      while (!v.empty() && trim(v.back()).empty()) v.pop_back();
    };
    strip_trailing_blank(body_lines);
    tmpl.body = join(body_lines, "\n");
    for (auto& d : demo_lines) {
      strip_trailing_blank(d);
      std::size_t skip = 0;
      while (skip < d.size() && trim(d[skip]).empty()) ++skip;
      tmpl.demonstrations.push_back(
          join(std::vector<std::string>(d.begin() + skip, d.end()), "\n"));
    }
    return tmpl;
  }

  std::string serialize(const std::string& name) const {
    const PromptTemplate& tmpl = get(name);
    std::string out = tmpl.body;
    for (const auto& d : tmpl.demonstrations) {
      out += "\n";
      out += kDemonstrationSeparator;
      out += "\n";
      out += d;
    }
    out += "\n";
    return out;
  }

  void export_dir(const fs::path& dir) const {
    fs::create_directories(dir);
    for (const auto& [name, tmpl] : templates_) {
      atomic_write_file(dir / (name + ".txt"), serialize(name));
    }
  }

  const PromptTemplate& get(const std::string& name) const {
    auto it = templates_.find(name);
    if (it == templates_.end()) throw ValidationError("unknown template: " + name);
    return it->second;
  }

  const PromptTemplate& bloom_generation(BloomLevel level) const {
    return get("bloom_generation_" + to_string(level));
  }

  std::map<std::string, std::string> hashes() const {
    std::map<std::string, std::string> out;
    for (const auto& [name, tmpl] : templates_) out[name] = tmpl.content_hash();
    return out;
  }

  void put(PromptTemplate tmpl) { templates_[tmpl.name] = std::move(tmpl); }

 private:
  std::map<std::string, PromptTemplate> templates_;
};

namespace detail_templates {

inline std::string bloom_level_focus(BloomLevel level) {
  switch (level) {
    case BloomLevel::kRemember:
      return "which involves recalling facts, terms, and basic concepts";
    case BloomLevel::kUnderstand:
      return "which involves explaining ideas or concepts in one's own terms";
    case BloomLevel::kApply:
      return "which involves using acquired knowledge to solve problems in new situations";
    case BloomLevel::kAnalyze:
      return "which involves breaking information into parts and examining how the parts relate";
    case BloomLevel::kEvaluate:
      return "which involves making and defending judgments based on criteria and evidence";
    case BloomLevel::kCreate:
      return "which involves combining elements into a new coherent whole or original proposal";
  }
  return {};
}

inline PromptTemplate make_bloom_generation(BloomLevel level) {
  const std::string style = bloom_prompt_style(level);
  PromptTemplate tmpl;
  tmpl.name = "bloom_generation_" + to_string(level);
  tmpl.body =
      "# Background\n"
      "Bloom's Taxonomy categorizes educational objectives into six levels. Focus on the level "
      "of " + style + ", " + bloom_level_focus(level) + ".\n"
      "\n"
      "# Instruction\n"
      "For a given test objective and document, generate 5 instances based on the following "
      "principles:\n"
      "1. Ensure the question can be answered independently without additional context.\n"
      "2. Ensure the correct answer and supporting evidence are available within the provided "
      "document.\n"
      "3. Ensure each question requires mastery of the test objective at the " + style +
      " level for accurate resolution.\n"
      "\n"
      "Write each instance as a question line, option lines \"A.\" through \"D.\", and a final "
      "line \"Correct Answer: <letter>\". Separate instances with one blank line.\n"
      "\n"
      "{{demonstrations}}\n"
      "\n"
      "# User Input\n"
      "test objective: {{objective}}\n"
      "Relevant Documents: {{documents}}\n"
      "5 instances of " + style + " level in Bloom's Taxonomy:";
  tmpl.demonstrations.push_back(
      "# Example\n"
      "test objective: water cycle\n"
      "Relevant Documents: Evaporation moves water from the surface into the atmosphere, where "
      "it condenses into clouds and later falls as precipitation.\n"
      "5 instances of " + style + " level in Bloom's Taxonomy:\n"
      "\n"
      "Which process moves surface water into the atmosphere?\n"
      "A. Evaporation\n"
      "B. Condensation\n"
      "C. Precipitation\n"
      "D. Infiltration\n"
      "Correct Answer: A");
  return tmpl;
}

}  // namespace detail_templates

inline TemplateSet TemplateSet::builtin() {
  TemplateSet set;

  {
    PromptTemplate tmpl;
    tmpl.name = "objective_extraction";
    tmpl.body =
        "# Instruction\n"
        "As an expert in education and assessment, identify the test objective examined by the "
        "seed question below, and give a brief description of that objective. Reference examples "
        "follow; keep your response in the same format.\n"
        "Respond in the following format:\n"
        "Test Objective: <test objective of the instance>\n"
        "Description: <description of the test objective>\n"
        "\n"
        "{{demonstrations}}\n"
        "\n"
        "# Input\n"
        "Question: {{question}}\n"
        "Options: {{options}}\n"
        "Correct Answer: {{answer}}\n"
        "Test Objective:";
    tmpl.demonstrations.push_back(
        "# Example 1\n"
        "Question: During the third stage of the demographic transition model, which of the "
        "following is true?\n"
        "A. Birth rates increase and population growth rate is less rapid.\n"
        "B. Birth rates decline and population growth rate is less rapid.\n"
        "C. Birth rates increase and population growth rate increases.\n"
        "D. Birth rates decrease and population growth rate increases.\n"
        "Correct Answer: B\n"
        "Test Objective: demographic transition\n"
        "Description: In demography, demographic transition describes the historical shift from "
        "high birth rates in societies with minimal technology toward low birth rates in "
        "societies with advanced technology.");
    set.put(std::move(tmpl));
  }

  for (BloomLevel level : kBloomLevels) {
    set.put(detail_templates::make_bloom_generation(level));
  }

  {
    PromptTemplate tmpl;
    tmpl.name = "rag_verification";
    tmpl.body =
        "# Instruction\n"
        "Refer to the document, and select the correct answer for the multiple choice question "
        "about {{subject}}.\n"
        "If you can find the correct answer in the document, respond with the correct choice "
        "such as 'A/B/C/D'.\n"
        "If you cannot find the correct answer in the document, respond with 'cannot answer'.\n"
        "If the choices contain more than one correct option, respond with 'cannot answer'.\n"
        "Ensure your response begins with the correct choice and do not output any other "
        "content.\n"
        "\n"
        "# Input\n"
        "Document: {{document}}\n"
        "Question: {{question}}\n"
        "Choices: {{choices}}";
    set.put(std::move(tmpl));
  }

  {
    PromptTemplate tmpl;
    tmpl.name = "context_check";
    tmpl.body =
        "# Instruction\n"
        "Decide whether the question below can be answered on its own, without access to any "
        "accompanying document, passage, or other unstated context. Respond with 'yes' if it is "
        "self-contained, or 'no' if it depends on missing context. Output only yes or no.\n"
        "\n"
        "# Input\n"
        "Question: {{question}}\n"
        "Answer:";
    set.put(std::move(tmpl));
  }

  {
    PromptTemplate tmpl;
    tmpl.name = "concept_identification";
    tmpl.body =
        "# Instruction\n"
        "As an expert in education and assessment, identify the key concepts and the related "
        "knowledge that must be understood in order to answer the seed question below. List "
        "every important concept with a brief description. Reference examples follow; keep your "
        "response in the same format.\n"
        "Respond in the following format, one concept per line:\n"
        "{'name': <concept name>, 'description': <concept description>}\n"
        "\n"
        "{{demonstrations}}\n"
        "\n"
        "# Input\n"
        "Question: {{question}}\n"
        "Options: {{options}}\n"
        "Correct Answer: {{answer}}\n"
        "Critical Concepts:";
    tmpl.demonstrations.push_back(
        "# Example 1\n"
        "Question: During the third stage of the demographic transition model, which of the "
        "following is true?\n"
        "A. Birth rates increase and population growth rate is less rapid.\n"
        "B. Birth rates decline and population growth rate is less rapid.\n"
        "C. Birth rates increase and population growth rate increases.\n"
        "D. Birth rates decrease and population growth rate increases.\n"
        "Correct Answer: B\n"
        "Critical Concepts:\n"
        "{'name': 'third stage of demographic transition', 'description': 'In stage three, "
        "birth rates fall while death rates stay low, so population growth slows.'}\n"
        "{'name': 'birth rates', 'description': 'Birth rate is the total number of live births "
        "per 1,000 population per year.'}\n"
        "{'name': 'population growth rate', 'description': 'Population growth rate is the "
        "change in the number of people in a population over time.'}");
    set.put(std::move(tmpl));
  }

  {
    PromptTemplate tmpl;
    tmpl.name = "triplet_selection";
    tmpl.body =
        "# Instruction\n"
        "Identify up to three fact triples that are most helpful to comprehend the provided "
        "question. Refer to the provided example for a valid response. If none of them is "
        "helpful, output [None].\n"
        "\n"
        "{{demonstrations}}\n"
        "\n"
        "# Input\n"
        "Question: {{question}}\n"
        "Candidate Triplets:\n"
        "{{candidates}}\n"
        "Relevant Triplets:";
    tmpl.demonstrations.push_back(
        "# Example 1\n"
        "Question: Which of the following best describes the structure that collects urine in "
        "the body?\n"
        "A. Bladder B. Kidney C. Ureter D. Urethra\n"
        "Candidate Triplets:\n"
        "1. (urine, subclass of, secretion or excretion)\n"
        "2. (urine, UMLS CUI, C2963137)\n"
        "3. (urinary bladder, connects with, urethra)\n"
        "4. (urinary bladder, part of, urinary system)\n"
        "5. (urinary bladder, subclass of, particular anatomical entity)\n"
        "Relevant Triplets:\n"
        "3. (urinary bladder, connects with, urethra)\n"
        "4. (urinary bladder, part of, urinary system)");
    set.put(std::move(tmpl));
  }

  {
    PromptTemplate tmpl;
    tmpl.name = "paraphrase";
    tmpl.body =
        "# Instruction\n"
        "Rewrite the question below so that it keeps exactly the same meaning and the same "
        "answer but uses different wording. Output only the rewritten question.\n"
        "\n"
        "# Input\n"
        "Question: {{question}}\n"
        "Rewritten question:";
    set.put(std::move(tmpl));
  }

  {
    PromptTemplate tmpl;
    tmpl.name = "translate";
    tmpl.body =
        "# Instruction\n"
        "Translate the text below into {{language}}. Output only the translation, nothing "
        "else.\n"
        "\n"
        "# Input\n"
        "{{text}}";
    set.put(std::move(tmpl));
  }

  {
    PromptTemplate tmpl;
    tmpl.name = "topic_proposer";
    tmpl.body =
        "# Instruction\n"
        "You are designing an assessment for the target domain below. List the {{count}} most "
        "essential test objectives an evaluation of this domain should cover. Respond with one "
        "objective per line, in the format:\n"
        "Test Objective: <name> | Description: <one-sentence description>\n"
        "\n"
        "# Input\n"
        "Target domain: {{target}}\n"
        "Test Objectives:";
    set.put(std::move(tmpl));
  }

  {
    PromptTemplate tmpl;
    tmpl.name = "concept_proposer";
    tmpl.body =
        "# Instruction\n"
        "You are designing an assessment for the target domain below. List the {{count}} most "
        "important concepts someone must understand in this domain. Respond with one concept "
        "per line, in the format:\n"
        "{'name': <concept name>, 'description': <concept description>}\n"
        "\n"
        "# Input\n"
        "Target domain: {{target}}\n"
        "Important Concepts:";
    set.put(std::move(tmpl));
  }

  return set;
}

}  // namespace benchforge
