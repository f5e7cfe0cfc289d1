#include <cstdlib>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "peerfb/feedback_quality.hpp"

namespace peerfb {

RemoteProvider::RemoteProvider(RemoteProviderConfig cfg) : cfg_(std::move(cfg)) {}

std::string RemoteProvider::complete(const ProviderRequest& request) {
  httplib::Client client(cfg_.endpoint);
  if (!client.is_valid()) throw ProviderError("invalid provider endpoint: " + cfg_.endpoint);
  const auto secs = static_cast<time_t>(cfg_.timeout.count());
  client.set_connection_timeout(secs, 0);
  client.set_read_timeout(secs, 0);
  client.set_write_timeout(secs, 0);

  httplib::Headers headers;
  if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key != nullptr && *key != '\0') {
    headers.emplace("Authorization", fmt::format("Bearer {}", key));
  }

  const nlohmann::json body = {
      {"model", cfg_.model},
      {"temperature", 0},
      {"messages",
       {{{"role", "system"}, {"content", request.system}},
        {{"role", "user"}, {"content", request.user}}}}};

  auto res = client.Post(cfg_.path, headers, body.dump(), "application/json");
  if (!res) throw ProviderError("provider request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw ProviderError(fmt::format("provider returned HTTP {}", res->status));

  try {
    const auto j = nlohmann::json::parse(res->body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(std::string("unexpected provider response: ") + e.what());
  }
}

}  // namespace peerfb
