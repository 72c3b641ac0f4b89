#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "benchforge/gateway.hpp"
#include "benchforge/io.hpp"
#include "benchforge/types.hpp"

namespace benchforge {

// ---------------------------------------------------------------------------
// Document chunking. Tokenization is whitespace word split; chunks tile the
// document with the configured overlap, preserving original spacing.

struct DocumentChunk {
  std::string doc_id;
  int chunk_index = 0;
  std::string text;
  std::pair<std::size_t, std::size_t> char_span{0, 0};

  std::string ref() const { return doc_id + "#" + std::to_string(chunk_index); }

  bool operator==(const DocumentChunk&) const = default;
};

inline std::vector<DocumentChunk> chunk_document(const std::string& doc_id,
                                                 const std::string& text, int window,
                                                 int overlap) {
  if (overlap < 0) throw ValidationError("overlap must be non-negative");
  if (window <= overlap) throw ValidationError("window must exceed overlap");
  std::vector<WordSpan> words = split_whitespace_spans(text);
  std::vector<DocumentChunk> chunks;
  const std::size_t n = words.size();
  const std::size_t stride = static_cast<std::size_t>(window - overlap);
  int index = 0;
  for (std::size_t start = 0; start < n; start += stride) {
    std::size_t end = std::min(start + static_cast<std::size_t>(window), n);
    DocumentChunk chunk;
    chunk.doc_id = doc_id;
    chunk.chunk_index = index++;
    chunk.char_span = {words[start].begin, words[end - 1].end};
    chunk.text = text.substr(chunk.char_span.first, chunk.char_span.second - chunk.char_span.first);
    chunks.push_back(std::move(chunk));
  }
  return chunks;
}

// ---------------------------------------------------------------------------
// Okapi BM25 over a document map, with the Robertson IDF variant
// ln((N - df + 0.5) / (df + 0.5) + 1) so scores stay non-negative.

struct RetrievalResult {
  DocumentChunk chunk;
  double bm25_score = 0.0;
  double rerank_score = 0.0;
};

struct Bm25Params {
  double k1 = 1.5;
  double b = 0.75;
};

class Bm25Index {
 public:
  static Bm25Index build(const std::map<std::string, std::string>& docs, Bm25Params params = {}) {
    Bm25Index index;
    index.params_ = params;
    double total_len = 0;
    for (const auto& [doc_id, text] : docs) {
      auto tokens = tokenize_for_index(text);
      index.doc_ids_.push_back(doc_id);
      index.doc_lengths_.push_back(tokens.size());
      total_len += static_cast<double>(tokens.size());
      const std::size_t doc = index.doc_ids_.size() - 1;
      std::map<std::string, long> tf;
      for (const auto& t : tokens) ++tf[t];
      for (const auto& [term, freq] : tf) {
        index.postings_[term].push_back({doc, freq});
      }
    }
    index.avg_doc_length_ = index.doc_ids_.empty() ? 0.0 : total_len / index.doc_ids_.size();
    return index;
  }

  std::size_t doc_count() const { return doc_ids_.size(); }
  const Bm25Params& params() const { return params_; }

  double idf(const std::string& term) const {
    auto it = postings_.find(term);
    const double df = it == postings_.end() ? 0.0 : static_cast<double>(it->second.size());
    const double n = static_cast<double>(doc_ids_.size());
    return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
  }

  // Documents sharing no query term are excluded; results sorted by score
  // descending, ties broken by doc_id ascending.
  std::vector<std::pair<std::string, double>> search_docs(const std::string& query,
                                                          std::size_t top_n) const {
    auto terms = tokenize_for_index(query);
    if (terms.empty()) throw ValidationError("empty query after normalization");
    std::unordered_map<std::size_t, double> scores;
    std::map<std::string, long> query_tf;
    for (const auto& t : terms) ++query_tf[t];
    for (const auto& [term, qf] : query_tf) {
      auto it = postings_.find(term);
      if (it == postings_.end()) continue;
      const double term_idf = idf(term);
      for (const auto& [doc, freq] : it->second) {
        const double f = static_cast<double>(freq);
        const double norm_len =
            avg_doc_length_ > 0 ? static_cast<double>(doc_lengths_[doc]) / avg_doc_length_ : 0.0;
        const double tf_part =
            f * (params_.k1 + 1.0) / (f + params_.k1 * (1.0 - params_.b + params_.b * norm_len));
        scores[doc] += static_cast<double>(qf) * term_idf * tf_part;
      }
    }
    std::vector<std::pair<std::string, double>> out;
    out.reserve(scores.size());
    for (const auto& [doc, score] : scores) out.emplace_back(doc_ids_[doc], score);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    if (out.size() > top_n) out.resize(top_n);
    return out;
  }

  // Persisted layout: manifest.json (params + tokenizer version), plus
  // postings.json and doclens.json.
  void save(const fs::path& dir) const {
    fs::create_directories(dir);
    nlohmann::json manifest{{"k1", params_.k1},
                            {"b", params_.b},
                            {"tokenizer_version", kTokenizerVersion},
                            {"doc_count", doc_ids_.size()},
                            {"avg_doc_length", avg_doc_length_}};
    atomic_write_file(dir / "manifest.json", manifest.dump(2));
    nlohmann::json doclens = nlohmann::json::object();
    for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
      doclens[doc_ids_[i]] = doc_lengths_[i];
    }
    atomic_write_file(dir / "doclens.json", doclens.dump());
    nlohmann::json postings = nlohmann::json::object();
    for (const auto& [term, list] : postings_) {
      nlohmann::json entries = nlohmann::json::array();
      for (const auto& [doc, freq] : list) {
        entries.push_back(nlohmann::json::array({doc_ids_[doc], freq}));
      }
      postings[term] = std::move(entries);
    }
    atomic_write_file(dir / "postings.json", postings.dump());
  }

  static Bm25Index load(const fs::path& dir) {
    Bm25Index index;
    nlohmann::json manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
    if (manifest.value("tokenizer_version", 0) != kTokenizerVersion)
      throw ValidationError("index tokenizer version mismatch: found " +
                            std::to_string(manifest.value("tokenizer_version", 0)) +
                            ", expected " + std::to_string(kTokenizerVersion));
    index.params_.k1 = manifest.at("k1").get<double>();
    index.params_.b = manifest.at("b").get<double>();
    index.avg_doc_length_ = manifest.at("avg_doc_length").get<double>();
    nlohmann::json doclens = nlohmann::json::parse(read_file(dir / "doclens.json"));
    std::map<std::string, std::size_t> id_to_pos;
    for (auto it = doclens.begin(); it != doclens.end(); ++it) {
      id_to_pos[it.key()] = index.doc_ids_.size();
      index.doc_ids_.push_back(it.key());
      index.doc_lengths_.push_back(it.value().get<std::size_t>());
    }
    nlohmann::json postings = nlohmann::json::parse(read_file(dir / "postings.json"));
    for (auto it = postings.begin(); it != postings.end(); ++it) {
      auto& list = index.postings_[it.key()];
      for (const auto& entry : it.value()) {
        list.push_back({id_to_pos.at(entry.at(0).get<std::string>()), entry.at(1).get<long>()});
      }
    }
    return index;
  }

  static constexpr int kTokenizerVersion = 1;

 private:
  Bm25Params params_;
  std::vector<std::string> doc_ids_;
  std::vector<std::size_t> doc_lengths_;
  std::map<std::string, std::vector<std::pair<std::size_t, long>>> postings_;
  double avg_doc_length_ = 0.0;
};

// ---------------------------------------------------------------------------
// Embedding rerank of chunks against the seed instance.

inline std::string rerank_query_text(const SeedInstance& seed) {
  return seed.question + " " + join(seed.options, " ");
}

inline std::vector<RetrievalResult> rerank_chunks(LlmGateway& gateway,
                                                  const std::string& embed_model,
                                                  const SeedInstance& seed,
                                                  const std::vector<DocumentChunk>& chunks,
                                                  std::size_t top_m) {
  if (chunks.empty()) return {};
  std::vector<std::string> texts;
  texts.reserve(chunks.size() + 1);
  texts.push_back(rerank_query_text(seed));
  for (const auto& chunk : chunks) texts.push_back(chunk.text);
  auto vectors = gateway.embed(texts, embed_model);
  std::vector<RetrievalResult> results;
  results.reserve(chunks.size());
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    RetrievalResult r;
    r.chunk = chunks[i];
    r.rerank_score = cosine(vectors[0].values, vectors[i + 1].values);
    results.push_back(std::move(r));
  }
  std::sort(results.begin(), results.end(), [](const RetrievalResult& a, const RetrievalResult& b) {
    if (a.rerank_score != b.rerank_score) return a.rerank_score > b.rerank_score;
    if (a.chunk.doc_id != b.chunk.doc_id) return a.chunk.doc_id < b.chunk.doc_id;
    return a.chunk.chunk_index < b.chunk.chunk_index;
  });
  if (results.size() > top_m) results.resize(top_m);
  return results;
}

// ---------------------------------------------------------------------------
// Corpus directory: plain-text files, filename stem = doc_id.

inline std::map<std::string, std::string> load_corpus_dir(const fs::path& dir) {
  if (!fs::exists(dir)) throw IoError("corpus directory does not exist: " + dir.string());
  std::map<std::string, std::string> docs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    docs[entry.path().stem().string()] = read_file(entry.path());
  }
  return docs;
}

struct RetrievalConfig {
  int window = 256;
  int overlap = 32;
  Bm25Params bm25;
  std::size_t top_n = 5;  // documents from BM25
  std::size_t top_m = 4;  // chunks after rerank
  std::string embed_model = "bge-small";
};

// Evidence retrieval for one objective: BM25 over the corpus with the
// objective text as the query, then chunk the hit documents and rerank the
// chunks against the seed instance. Zero BM25 hits is an error; the caller
// skips generation for that seed and logs it.
class EvidenceRetriever {
 public:
  EvidenceRetriever(std::map<std::string, std::string> docs, RetrievalConfig config,
                    LlmGateway* gateway)
      : docs_(std::move(docs)),
        config_(config),
        index_(Bm25Index::build(docs_, config.bm25)),
        gateway_(gateway) {}

  std::vector<DocumentChunk> retrieve_for_objective(const TestObjective& objective,
                                                    const SeedInstance& seed) const {
    const std::string query = objective.name + " " + objective.description;
    auto hits = index_.search_docs(query, config_.top_n);
    if (hits.empty()) throw ValidationError("no evidence found for objective: " + objective.name);
    std::vector<DocumentChunk> chunks;
    for (const auto& [doc_id, score] : hits) {
      auto doc_chunks = chunk_document(doc_id, docs_.at(doc_id), config_.window, config_.overlap);
      for (auto& chunk : doc_chunks) chunks.push_back(std::move(chunk));
    }
    auto reranked = rerank_chunks(*gateway_, config_.embed_model, seed, chunks, config_.top_m);
    std::vector<DocumentChunk> out;
    out.reserve(reranked.size());
    for (auto& r : reranked) out.push_back(std::move(r.chunk));
    return out;
  }

  const Bm25Index& index() const { return index_; }
  const RetrievalConfig& config() const { return config_; }

 private:
  std::map<std::string, std::string> docs_;
  RetrievalConfig config_;
  Bm25Index index_;
  LlmGateway* gateway_;
};

}  // namespace benchforge
