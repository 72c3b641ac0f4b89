#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "benchforge/concept_map.hpp"
#include "benchforge/gateway.hpp"

namespace benchforge {

// Live SPARQL client for a Wikidata-style endpoint. Query construction and
// result parsing are static so they test without a network; transport goes
// through one HTTP GET per query, cached by query text.
class SparqlKg : public KgClient {
 public:
  explicit SparqlKg(std::string endpoint_url, ResponseCache cache = {}, int taxonomy_depth = 3)
      : endpoint_(std::move(endpoint_url)), cache_(std::move(cache)), taxonomy_depth_(taxonomy_depth) {}

  // --- query builders ---------------------------------------------------------

  static std::string escape_literal(const std::string& s) {
    std::string out;
    for (char c : s) {
      if (c == '"' || c == '\\') out.push_back('\\');
      out.push_back(c);
    }
    return out;
  }

  static std::string link_query(const std::string& label, bool alias) {
    std::string predicate = alias ? "skos:altLabel" : "rdfs:label";
    return "SELECT ?e WHERE { ?e " + predicate + " \"" + escape_literal(label) +
           "\"@en . } LIMIT 1";
  }

  static std::string outgoing_query(const std::string& entity_id, std::size_t limit) {
    return "SELECT ?p ?pLabel ?o ?oLabel WHERE { wd:" + entity_id +
           " ?prop ?o . ?p wikibase:directClaim ?prop . SERVICE wikibase:label { bd:serviceParam "
           "wikibase:language \"en\". } } ORDER BY ?p ?o LIMIT " +
           std::to_string(limit);
  }

  static std::string classes_query(const std::string& entity_id, int hops) {
    // instance-of then `hops` subclass-of steps
    std::string path = "wdt:P31";
    for (int i = 0; i < hops; ++i) path += "/wdt:P279";
    return "SELECT ?c ?cLabel WHERE { wd:" + entity_id + " " + path +
           " ?c . SERVICE wikibase:label { bd:serviceParam wikibase:language \"en\". } } ORDER BY "
           "?c";
  }

  static std::string members_query(const std::string& class_id, std::size_t limit) {
    return "SELECT ?e ?eLabel WHERE { ?e wdt:P31 wd:" + class_id +
           " . SERVICE wikibase:label { bd:serviceParam wikibase:language \"en\". } } ORDER BY ?e "
           "LIMIT " +
           std::to_string(limit);
  }

  // --- result parsing -----------------------------------------------------------

  static std::string strip_entity_uri(const std::string& value) {
    auto pos = value.rfind('/');
    return pos == std::string::npos ? value : value.substr(pos + 1);
  }

  static std::vector<std::map<std::string, std::string>> parse_bindings(
      const nlohmann::json& response) {
    std::vector<std::map<std::string, std::string>> rows;
    for (const auto& binding : response.at("results").at("bindings")) {
      std::map<std::string, std::string> row;
      for (auto it = binding.begin(); it != binding.end(); ++it) {
        row[it.key()] = it.value().at("value").get<std::string>();
      }
      rows.push_back(std::move(row));
    }
    return rows;
  }

  static std::vector<KnowledgeTriplet> parse_outgoing(const nlohmann::json& response,
                                                      const std::string& entity_id,
                                                      const std::string& entity_label) {
    std::vector<KnowledgeTriplet> out;
    for (const auto& row : parse_bindings(response)) {
      auto p = row.find("p");
      auto o = row.find("o");
      if (p == row.end() || o == row.end()) continue;
      KnowledgeTriplet t;
      t.subject = {entity_id, entity_label};
      t.predicate = {strip_entity_uri(p->second),
                     row.count("pLabel") ? row.at("pLabel") : strip_entity_uri(p->second)};
      const std::string object_value = o->second;
      if (object_value.rfind("http", 0) == 0) {
        t.object = {strip_entity_uri(object_value),
                    row.count("oLabel") ? row.at("oLabel") : strip_entity_uri(object_value)};
      } else {
        t.object = {"", object_value};  // literal
      }
      if (t.object.label.empty()) continue;
      out.push_back(std::move(t));
    }
    return out;
  }

  // --- KgClient -------------------------------------------------------------------

  std::optional<std::string> link_entity(const std::string& name) override {
    for (bool alias : {false, true}) {
      auto rows = parse_bindings(run_query(link_query(name, alias)));
      if (!rows.empty() && rows.front().count("e")) {
        return strip_entity_uri(rows.front().at("e"));
      }
    }
    return std::nullopt;
  }

  std::vector<KnowledgeTriplet> outgoing(const std::string& entity_id,
                                         std::size_t max_triples) override {
    auto triples = parse_outgoing(run_query(outgoing_query(entity_id, max_triples * 2)),
                                  entity_id, entity_label(entity_id));
    std::sort(triples.begin(), triples.end(),
              [](const KnowledgeTriplet& a, const KnowledgeTriplet& b) {
                if (a.predicate.entity_id != b.predicate.entity_id)
                  return a.predicate.entity_id < b.predicate.entity_id;
                if (a.object.entity_id != b.object.entity_id)
                  return a.object.entity_id < b.object.entity_id;
                return a.object.label < b.object.label;
              });
    if (triples.size() > max_triples) triples.resize(max_triples);
    for (const auto& t : triples) {
      taxonomy_.add_label(t.object.entity_id, t.object.label);
      taxonomy_.add_label(t.subject.entity_id, t.subject.label);
    }
    ensure_taxonomy(entity_id);
    for (const auto& t : triples) {
      if (!t.object.entity_id.empty()) ensure_taxonomy(t.object.entity_id);
    }
    return triples;
  }

  const Taxonomy& taxonomy() override { return taxonomy_; }

 private:
  std::string entity_label(const std::string& entity_id) {
    if (auto l = taxonomy_.label(entity_id)) return *l;
    return entity_id;
  }

  // Direct instance-of classes get the largest depth; each subclass-of hop
  // above them one less.
  void ensure_taxonomy(const std::string& entity_id) {
    if (taxonomy_.contains(entity_id)) return;
    for (int hops = 0; hops < taxonomy_depth_; ++hops) {
      auto rows = parse_bindings(run_query(classes_query(entity_id, hops)));
      for (const auto& row : rows) {
        if (!row.count("c")) continue;
        const std::string class_id = strip_entity_uri(row.at("c"));
        const std::string class_label = row.count("cLabel") ? row.at("cLabel") : class_id;
        taxonomy_.add_entry({entity_id, class_id, class_label, taxonomy_depth_ - hops});
        // Members of the class, bounded; needed for distractor sampling.
        for (const auto& member :
             parse_bindings(run_query(members_query(class_id, kMembersLimit)))) {
          if (!member.count("e")) continue;
          const std::string member_id = strip_entity_uri(member.at("e"));
          taxonomy_.add_entry({member_id, class_id, class_label, taxonomy_depth_ - hops});
          if (member.count("eLabel")) taxonomy_.add_label(member_id, member.at("eLabel"));
        }
      }
    }
  }

  nlohmann::json run_query(const std::string& query) {
    const std::string key = detail::sha256_hex_fields({"sparql", endpoint_, query});
    if (auto cached = cache_.get(key)) return *cached;
    std::string origin = endpoint_;
    std::string path = "/sparql";
    if (auto pos = origin.find("://"); pos != std::string::npos) {
      auto slash = origin.find('/', pos + 3);
      if (slash != std::string::npos) {
        path = origin.substr(slash);
        origin = origin.substr(0, slash);
      }
    }
    httplib::Client client(origin);
    client.set_read_timeout(60, 0);
    httplib::Params params{{"query", query}, {"format", "json"}};
    auto res = client.Get(path, params, httplib::Headers{{"Accept", "application/sparql-results+json"}});
    if (!res) throw ProviderError("SPARQL endpoint unreachable: " + endpoint_, 0);
    if (res->status != 200)
      throw ProviderError("SPARQL endpoint returned HTTP " + std::to_string(res->status),
                          res->status);
    nlohmann::json j = nlohmann::json::parse(res->body, nullptr, false);
    if (j.is_discarded()) throw ProviderError("SPARQL endpoint returned non-JSON body");
    cache_.put(key, j);
    return j;
  }

  static constexpr std::size_t kMembersLimit = 200;

  std::string endpoint_;
  ResponseCache cache_;
  int taxonomy_depth_;
  Taxonomy taxonomy_;
};

}  // namespace benchforge
