#pragma once

#include <cstdlib>
#include <memory>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "benchforge/gateway.hpp"

namespace benchforge {

// Chat-completions / embeddings client following the common JSON convention:
// request {model, messages:[{role,content}]}, reply {choices[0].message.content}.
// Credential comes from the STRUCTEVAL_API_KEY environment variable.
class HttpProvider : public Provider {
 public:
  explicit HttpProvider(const std::string& endpoint) : endpoint_(endpoint) {
    parse_endpoint(endpoint);
    if (const char* key = std::getenv(kApiKeyEnvVar)) api_key_ = key;
  }

  ProviderReply chat(const std::string& model_id, const std::string& prompt, double temperature,
                     int max_tokens, std::uint64_t seed_hint) override {
    nlohmann::json body{{"model", model_id},
                        {"messages", nlohmann::json::array({nlohmann::json{
                                         {"role", "user"}, {"content", prompt}}})},
                        {"temperature", temperature},
                        {"max_tokens", max_tokens}};
    if (seed_hint != 0) body["seed"] = seed_hint;
    nlohmann::json reply = post_json(base_path_ + "/chat/completions", body);
    try {
      const auto& choice = reply.at("choices").at(0);
      ProviderReply out;
      out.text = choice.at("message").at("content").get<std::string>();
      out.finish_reason = choice.value("finish_reason", std::string{"stop"});
      if (reply.contains("usage")) out.usage_tokens = reply["usage"].value("total_tokens", 0L);
      return out;
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(std::string("malformed chat reply: ") + e.what());
    }
  }

  std::vector<std::vector<double>> embed(const std::string& model_id,
                                         const std::vector<std::string>& texts) override {
    nlohmann::json body{{"model", model_id}, {"input", texts}};
    nlohmann::json reply = post_json(base_path_ + "/embeddings", body);
    try {
      std::vector<std::vector<double>> out;
      for (const auto& item : reply.at("data")) {
        out.push_back(item.at("embedding").get<std::vector<double>>());
      }
      return out;
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(std::string("malformed embedding reply: ") + e.what());
    }
  }

 private:
  void parse_endpoint(std::string url) {
    std::string scheme = "http";
    if (auto pos = url.find("://"); pos != std::string::npos) {
      scheme = url.substr(0, pos);
      url = url.substr(pos + 3);
    }
    std::string hostport = url;
    if (auto slash = url.find('/'); slash != std::string::npos) {
      hostport = url.substr(0, slash);
      base_path_ = url.substr(slash);
      while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
    }
    host_origin_ = scheme + "://" + hostport;
  }

  nlohmann::json post_json(const std::string& path, const nlohmann::json& body) {
    httplib::Client client(host_origin_);
    client.set_connection_timeout(10, 0);
    client.set_read_timeout(120, 0);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) {
      throw ProviderError("connection to " + host_origin_ + " failed: " +
                              httplib::to_string(res.error()),
                          0);
    }
    if (res->status < 200 || res->status >= 300) {
      throw ProviderError("provider returned HTTP " + std::to_string(res->status) + ": " +
                              res->body.substr(0, 200),
                          res->status);
    }
    nlohmann::json j = nlohmann::json::parse(res->body, nullptr, false);
    if (j.is_discarded()) throw ProviderError("provider returned non-JSON body");
    return j;
  }

  std::string endpoint_;
  std::string host_origin_;
  std::string base_path_;
  std::string api_key_;
};

}  // namespace benchforge
