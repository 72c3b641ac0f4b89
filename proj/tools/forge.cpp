// forge: builds structured evaluation suites from seed benchmarks and scores
// models on them. See README.md for the subcommand reference.

#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "benchforge/benchforge.hpp"
#include "benchforge/http_provider.hpp"
#include "benchforge/sparql_kg.hpp"

namespace bf = benchforge;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitProvider = 2;
constexpr int kExitPartial = 3;

struct GlobalArgs {
  std::string config_path;
  std::string cache_dir;
  std::string mock_script;
  long rng_seed = -1;
  bool verbose = false;
};

bf::PipelineConfig assemble_config(const GlobalArgs& args) {
  bf::PipelineConfig config;
  if (!args.config_path.empty()) config = bf::PipelineConfig::from_file(args.config_path);
  if (!args.cache_dir.empty()) config.set("cache.dir", args.cache_dir);
  if (args.rng_seed >= 0) config.set("rng_seed", std::to_string(args.rng_seed));
  if (!args.mock_script.empty()) config.set("mock.script", args.mock_script);
  return config;
}

std::shared_ptr<bf::LlmGateway> make_gateway(const bf::PipelineConfig& config) {
  std::shared_ptr<bf::Provider> provider;
  if (config.has("mock.script")) {
    auto mock = std::make_shared<bf::MockProvider>();
    mock->load_script(config.get("mock.script"));
    provider = mock;
  } else {
    const std::string endpoint = config.get("provider.endpoint");
    if (endpoint.empty())
      throw bf::ValidationError(
          "no provider configured: set provider.endpoint or pass --mock FILE");
    provider = std::make_shared<bf::HttpProvider>(endpoint);
  }
  bf::ResponseCache cache = config.cache_dir().empty()
                                ? bf::ResponseCache{}
                                : bf::ResponseCache{config.cache_dir()};
  return std::make_shared<bf::LlmGateway>(provider, std::move(cache), config.max_in_flight());
}

bf::PipelineContext make_context(const bf::PipelineConfig& config, bool need_corpus,
                                 bool need_kg, bool verbose) {
  bf::PipelineContext ctx;
  ctx.config = config;
  ctx.gateway = make_gateway(config);
  if (config.has("templates.dir")) {
    ctx.templates = bf::TemplateSet::load_dir(config.get("templates.dir"));
  }
  if (config.has("blacklist.path")) {
    ctx.blacklist = bf::Blacklist::from_file(config.get("blacklist.path"));
  }
  if (need_corpus) {
    if (!config.has("corpus.dir"))
      throw bf::ValidationError("bloom construction requires --corpus-dir");
    ctx.retriever = std::make_shared<bf::EvidenceRetriever>(
        bf::load_corpus_dir(config.get("corpus.dir")), config.retrieval(), ctx.gateway.get());
  }
  if (need_kg) {
    const std::string kg = config.get("kg");
    if (kg.empty()) throw bf::ValidationError("concept construction requires --kg");
    if (kg.rfind("fixture:", 0) == 0) {
      ctx.kg = std::make_shared<bf::FixtureKg>(bf::FixtureKg::load(kg.substr(8)));
    } else {
      bf::ResponseCache kg_cache = config.cache_dir().empty()
                                       ? bf::ResponseCache{}
                                       : bf::ResponseCache{config.cache_dir() + "/kg"};
      ctx.kg = std::make_shared<bf::SparqlKg>(kg, std::move(kg_cache));
    }
  }
  if (verbose) {
    ctx.log = [](const std::string& message) { std::cerr << "[forge] " << message << "\n"; };
  }
  return ctx;
}

std::vector<bf::EvalItem> load_eval_items(const bf::fs::path& path) {
  std::vector<bf::EvalItem> items;
  for (const auto& rec : bf::read_jsonl(path)) {
    const auto& j = rec.value;
    if (j.contains("seed")) {  // structured item: score its accepted instances
      bf::StructuredItem item =
          bf::item_from_json(j, path.string() + ":" + std::to_string(rec.line));
      for (auto& flat : bf::flatten_accepted(item)) items.push_back(std::move(flat));
    } else if (j.contains("method") && j.contains("parent_id")) {  // augmented record
      bf::EvalItem item;
      item.id = j.at("parent_id").get<std::string>() + "#" + j.at("method").get<std::string>();
      item.subject = j.value("subject", std::string{"unknown"});
      item.question = j.at("question").get<std::string>();
      item.options = j.at("options").get<std::vector<std::string>>();
      item.answer_index = j.at("answer_index").get<int>();
      items.push_back(std::move(item));
    } else {  // seed record
      items.push_back(bf::to_eval_item(bf::seed_from_json(j)));
    }
  }
  return items;
}

int run_build(const GlobalArgs& global, const std::string& in, const std::string& out,
              bf::RunMode mode, bf::PipelineConfig config) {
  bf::PipelineContext ctx = make_context(
      config, mode != bf::RunMode::kConcept, mode != bf::RunMode::kBloom, global.verbose);
  auto seeds = bf::load_seeds(in);
  bf::PipelineOutcome outcome = bf::run_pipeline(ctx, seeds, out, mode);
  std::cout << outcome.manifest.dump(2) << "\n";
  if (outcome.status == bf::PipelineOutcome::Status::kPartial) {
    std::cerr << "forge: run incomplete (" << outcome.error
              << "); checkpoint kept, re-run to resume\n";
    return kExitPartial;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"structured multiple-choice benchmark construction and evaluation"};
  app.require_subcommand(1);

  GlobalArgs global;
  app.add_option("--config", global.config_path, "flat key = value configuration file");
  app.add_option("--rng-seed", global.rng_seed, "seed for all deterministic sampling");
  app.add_option("--cache-dir", global.cache_dir, "response cache directory");
  app.add_option("--mock", global.mock_script,
                 "route all LLM calls to a scripted replies JSONL file (offline mode)");
  app.add_flag("-v,--verbose", global.verbose, "log pipeline events to stderr");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "validate a seed benchmark into canonical JSONL");
  std::string ingest_in, ingest_out, ingest_source = "custom", ingest_allowlist;
  ingest->add_option("--in", ingest_in, "input file or directory")->required();
  ingest->add_option("--out", ingest_out, "output seeds.jsonl")->required();
  ingest->add_option("--source", ingest_source, "mmlu|arc_easy|arc_challenge|openbookqa|custom");
  ingest->add_option("--subject-allowlist", ingest_allowlist, "one subject per line");

  // build family
  std::string build_in, build_out, build_corpus, build_pool, build_kg, build_templates,
      build_blacklist;
  long keep_per_level = -1;
  auto add_build_options = [&](CLI::App* cmd, bool corpus, bool kg) {
    cmd->add_option("--in", build_in, "seeds.jsonl")->required();
    cmd->add_option("--out", build_out, "output items.jsonl")->required();
    if (corpus) {
      cmd->add_option("--corpus-dir", build_corpus, "plain-text document corpus directory");
      cmd->add_option("--pool", build_pool, "comma-separated difficulty-screen model ids");
      cmd->add_option("--keep-per-level", keep_per_level, "accepted instances kept per level");
    }
    if (kg) cmd->add_option("--kg", build_kg, "SPARQL endpoint URL or fixture:PATH");
    cmd->add_option("--templates", build_templates, "prompt templates directory");
    if (corpus) cmd->add_option("--blacklist", build_blacklist, "context-phrase blacklist file");
  };
  auto* build_bloom = app.add_subcommand("build-bloom", "cognitive-level expansion only");
  add_build_options(build_bloom, true, false);
  auto* build_concept = app.add_subcommand("build-concept", "concept-map expansion only");
  add_build_options(build_concept, false, true);
  auto* build_both = app.add_subcommand("build", "full structured construction");
  add_build_options(build_both, true, true);

  // custom
  auto* custom = app.add_subcommand("custom", "customized benchmark for a target domain");
  std::string custom_target, custom_out, custom_corpus, custom_kg, custom_pool;
  long custom_objectives = 5, custom_concepts = 5;
  custom->add_option("--target", custom_target, "assessment target")->required();
  custom->add_option("--out", custom_out, "output items.jsonl")->required();
  custom->add_option("--objectives", custom_objectives, "number of proposed test objectives");
  custom->add_option("--concepts", custom_concepts, "number of proposed concepts");
  custom->add_option("--corpus-dir", custom_corpus, "document corpus directory");
  custom->add_option("--kg", custom_kg, "SPARQL endpoint URL or fixture:PATH");
  custom->add_option("--pool", custom_pool, "comma-separated difficulty-screen model ids");

  // augment
  auto* augment = app.add_subcommand("augment", "baseline augmentations of a seed file");
  std::string aug_method, aug_in, aug_out, aug_lexicon, aug_pivot = "de";
  double aug_rate = -1.0;
  augment->add_option("--method", aug_method,
                      "char_disturb|synonym|paraphrase|back_translate|option_shuffle")
      ->required();
  augment->add_option("--in", aug_in, "seeds.jsonl")->required();
  augment->add_option("--out", aug_out, "augmented output jsonl")->required();
  augment->add_option("--lexicon", aug_lexicon, "synonym lexicon TSV");
  augment->add_option("--pivot", aug_pivot, "pivot language for back_translate");
  augment->add_option("--rate", aug_rate, "edit/replacement rate");

  // split-contamination
  auto* split = app.add_subcommand("split-contamination",
                                   "clean vs contaminated instruction-tuning splits");
  std::string split_base, split_test, split_ood, split_out_dir = ".";
  split->add_option("--base", split_base, "IFT base JSONL {instruction,input,output}")->required();
  split->add_option("--test", split_test, "test set (seeds or items)")->required();
  split->add_option("--ood", split_ood, "out-of-distribution pool (seeds)")->required();
  split->add_option("--out-dir", split_out_dir, "output directory");

  // score
  auto* score_cmd = app.add_subcommand("score", "zero-shot scoring of models on a benchmark");
  std::string score_models, score_in, score_out;
  score_cmd->add_option("--models", score_models, "comma-separated model ids")->required();
  score_cmd->add_option("--in", score_in, "seeds, items, or augmented jsonl")->required();
  score_cmd->add_option("--out", score_out, "scores.jsonl")->required();

  // rank-consistency
  auto* rank = app.add_subcommand("rank-consistency", "modal-rank statistics over subject subsets");
  std::string rank_scores, rank_out;
  long rank_k = 15, rank_samples = 10000;
  bool rank_exhaustive = false, rank_pooled = false;
  rank->add_option("--scores", rank_scores, "scores.jsonl from `forge score`")->required();
  rank->add_option("--k", rank_k, "subjects per draw");
  rank->add_option("--samples", rank_samples, "number of draws");
  rank->add_flag("--exhaustive", rank_exhaustive, "enumerate every K-subset instead of sampling");
  rank->add_flag("--pooled", rank_pooled, "pool instances instead of averaging subject accuracies");
  rank->add_option("--out", rank_out, "write the report JSON here as well");

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "structure statistics of an items file");
  std::string stats_in;
  stats_cmd->add_option("--in", stats_in, "items.jsonl")->required();

  // export-annotations
  auto* export_cmd = app.add_subcommand("export-annotations", "human-review export");
  std::string export_in, export_out;
  export_cmd->add_option("--in", export_in, "items.jsonl")->required();
  export_cmd->add_option("--out", export_out, "annotation jsonl")->required();

  // templates
  auto* templates_cmd = app.add_subcommand("templates", "export builtin prompt templates");
  std::string templates_export;
  templates_cmd->add_option("--export", templates_export, "directory to write")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    bf::PipelineConfig config = assemble_config(global);

    if (ingest->parsed()) {
      bf::SubjectAllowlist allowlist;
      if (!ingest_allowlist.empty()) allowlist = bf::SubjectAllowlist::from_file(ingest_allowlist);
      auto result =
          bf::ingest_seed_benchmark(ingest_in, bf::parse_seed_source(ingest_source), allowlist);
      for (const auto& error : result.errors) {
        std::cerr << "forge: line " << error.line << " [" << error.field << "] " << error.message
                  << "\n";
      }
      bf::persist_seeds(result.seeds, ingest_out);
      std::cout << "{\"rows_in\":" << result.rows_in << ",\"seeds\":" << result.seeds.size()
                << ",\"errors\":" << result.errors.size() << "}\n";
      return result.errors.empty() ? kExitOk : kExitValidation;
    }

    if (build_bloom->parsed() || build_concept->parsed() || build_both->parsed()) {
      bf::RunMode mode = build_bloom->parsed()   ? bf::RunMode::kBloom
                         : build_concept->parsed() ? bf::RunMode::kConcept
                                                   : bf::RunMode::kBoth;
      if (!build_corpus.empty()) config.set("corpus.dir", build_corpus);
      if (!build_pool.empty()) config.set("pool.models", build_pool);
      if (keep_per_level >= 0) config.set("bloom.keep_per_level", std::to_string(keep_per_level));
      if (!build_kg.empty()) config.set("kg", build_kg);
      if (!build_templates.empty()) config.set("templates.dir", build_templates);
      if (!build_blacklist.empty()) config.set("blacklist.path", build_blacklist);
      return run_build(global, build_in, build_out, mode, std::move(config));
    }

    if (custom->parsed()) {
      if (!custom_corpus.empty()) config.set("corpus.dir", custom_corpus);
      if (!custom_kg.empty()) config.set("kg", custom_kg);
      if (!custom_pool.empty()) config.set("pool.models", custom_pool);
      bf::PipelineContext ctx =
          make_context(config, custom_objectives > 0, custom_concepts > 0, global.verbose);
      auto result = bf::run_custom(ctx, custom_target,
                                   static_cast<std::size_t>(custom_objectives),
                                   static_cast<std::size_t>(custom_concepts), custom_out);
      std::cout << result.manifest.dump(2) << "\n";
      return kExitOk;
    }

    if (augment->parsed()) {
      auto method = bf::parse_augment_method(aug_method);
      auto seeds = bf::load_seeds(aug_in);
      std::uint64_t rng_seed = config.rng_seed();
      std::vector<nlohmann::json> records;
      std::shared_ptr<bf::LlmGateway> gateway;
      bf::TemplateSet templates = bf::TemplateSet::builtin();
      if (method == bf::AugmentMethod::kParaphrase ||
          method == bf::AugmentMethod::kBackTranslate) {
        gateway = make_gateway(config);
      }
      bf::SynonymLexicon lexicon;
      if (method == bf::AugmentMethod::kSynonym) {
        if (aug_lexicon.empty()) throw bf::ValidationError("synonym method requires --lexicon");
        lexicon = bf::SynonymLexicon::from_file(aug_lexicon);
      }
      const std::string model = config.get("provider.model", "generator");
      std::uint64_t i = 0;
      for (const auto& seed : seeds) {
        bf::AugmentedInstance out;
        const std::uint64_t derived = rng_seed + i++;
        switch (method) {
          case bf::AugmentMethod::kCharDisturb:
            out = bf::char_disturb(seed, aug_rate > 0 ? aug_rate : 0.1, derived);
            break;
          case bf::AugmentMethod::kSynonym:
            out = bf::synonym_replace(seed, lexicon, aug_rate >= 0 ? aug_rate : 0.15, derived);
            break;
          case bf::AugmentMethod::kParaphrase:
            out = bf::paraphrase(*gateway, templates, model, seed);
            break;
          case bf::AugmentMethod::kBackTranslate:
            out = bf::back_translate(*gateway, templates, model, seed, aug_pivot);
            break;
          case bf::AugmentMethod::kOptionShuffle:
            out = bf::option_shuffle(seed, derived);
            break;
        }
        records.push_back(out.to_json());
      }
      bf::write_jsonl(aug_out, records);
      std::cout << "{\"augmented\":" << records.size() << "}\n";
      return kExitOk;
    }

    if (split->parsed()) {
      std::vector<bf::TrainingRecord> base;
      for (const auto& rec : bf::read_jsonl(split_base))
        base.push_back(bf::TrainingRecord::from_json(rec.value));
      auto test_items = load_eval_items(split_test);
      auto ood_items = load_eval_items(split_ood);
      auto result =
          bf::build_contamination_splits(base, test_items, ood_items, config.rng_seed());
      bf::fs::create_directories(split_out_dir);
      std::vector<nlohmann::json> clean, contaminated;
      for (const auto& r : result.clean) clean.push_back(r.to_json());
      for (const auto& r : result.contaminated) contaminated.push_back(r.to_json());
      bf::write_jsonl(bf::fs::path(split_out_dir) / "clean.jsonl", clean);
      bf::write_jsonl(bf::fs::path(split_out_dir) / "contaminated.jsonl", contaminated);
      std::cout << "{\"clean\":" << clean.size() << ",\"contaminated\":" << contaminated.size()
                << "}\n";
      return kExitOk;
    }

    if (score_cmd->parsed()) {
      auto gateway = make_gateway(config);
      std::vector<std::string> models;
      for (const auto& part : bf::split_on(score_models, ','))
        if (!bf::trim(part).empty()) models.push_back(bf::trim(part));
      if (models.empty()) throw bf::ValidationError("no models given");
      auto items = load_eval_items(score_in);
      bf::fs::path partial = score_out + ".partial";
      bf::ScoreMatrix matrix = bf::score(*gateway, models, items, partial);
      std::vector<nlohmann::json> records;
      for (const auto& j : matrix.to_json()) records.push_back(j);
      bf::write_jsonl(score_out, records);
      nlohmann::json summary = nlohmann::json::object();
      for (const auto& model : models) summary[model] = matrix.accuracy(model);
      std::cout << summary.dump(2) << "\n";
      return kExitOk;
    }

    if (rank->parsed()) {
      auto matrix = bf::ScoreMatrix::from_jsonl(rank_scores);
      bf::RankConsistencyReport report =
          rank_exhaustive
              ? bf::rank_consistency_exhaustive(matrix, static_cast<int>(rank_k), rank_pooled)
              : bf::rank_consistency(matrix, static_cast<int>(rank_k),
                                     static_cast<std::uint64_t>(rank_samples), config.rng_seed(),
                                     rank_pooled);
      std::cout << report.to_json().dump(2) << "\n";
      if (!rank_out.empty()) bf::atomic_write_file(rank_out, report.to_json().dump(2) + "\n");
      return kExitOk;
    }

    if (stats_cmd->parsed()) {
      auto items = bf::load_items(stats_in);
      std::cout << bf::to_json(bf::structure_stats(items)).dump(2) << "\n";
      return kExitOk;
    }

    if (export_cmd->parsed()) {
      auto items = bf::load_items(export_in);
      bf::export_annotations(items, export_out);
      std::cout << "{\"exported\":true}\n";
      return kExitOk;
    }

    if (templates_cmd->parsed()) {
      bf::TemplateSet set = config.has("templates.dir")
                                ? bf::TemplateSet::load_dir(config.get("templates.dir"))
                                : bf::TemplateSet::builtin();
      set.export_dir(templates_export);
      std::cout << "{\"exported\":true}\n";
      return kExitOk;
    }
  } catch (const bf::ProviderError& e) {
    std::cerr << "forge: provider error: " << e.what() << "\n";
    return kExitProvider;
  } catch (const std::exception& e) {
    std::cerr << "forge: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}
