#include <cstdlib>

#include "dquag/error.hpp"
#include "dquag/feature_graph.hpp"
#include "httplib.h"

namespace dquag {

std::optional<LlmConfig> LlmConfig::from_env() {
  const char* endpoint = std::getenv("DQUAG_LLM_ENDPOINT");
  const char* key = std::getenv("DQUAG_LLM_KEY");
  if (!endpoint || !*endpoint || !key || !*key) return std::nullopt;
  LlmConfig cfg;
  cfg.endpoint = endpoint;
  cfg.api_key = key;
  return cfg;
}

std::string complete_prompt(const LlmConfig& config, const std::string& prompt) {
  auto scheme_end = config.endpoint.find("://");
  if (scheme_end == std::string::npos) throw ServiceUnreachable("endpoint '" + config.endpoint + "' has no scheme");
  auto path_start = config.endpoint.find('/', scheme_end + 3);
  std::string origin = config.endpoint.substr(0, path_start);
  std::string path = path_start == std::string::npos ? "/" : config.endpoint.substr(path_start);

  httplib::Client client(origin);
  const auto secs = static_cast<time_t>(config.timeout_seconds);
  const auto usecs = static_cast<time_t>((config.timeout_seconds - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  nlohmann::json body{{"model", config.model},
                      {"temperature", 0},
                      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
  httplib::Headers headers{{"Authorization", "Bearer " + config.api_key}};
  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) throw ServiceUnreachable("request to " + origin + " failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300)
    throw ServiceUnreachable("service answered HTTP " + std::to_string(res->status));

  auto reply = nlohmann::json::parse(res->body, nullptr, false);
  if (!reply.is_discarded() && reply.contains("choices") && reply["choices"].is_array() && !reply["choices"].empty()) {
    const auto& choice = reply["choices"][0];
    if (choice.contains("message") && choice["message"].contains("content") && choice["message"]["content"].is_string())
      return choice["message"]["content"].get<std::string>();
  }
  return res->body;
}

}  // namespace dquag
