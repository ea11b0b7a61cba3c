// SPDX-License-Identifier: Apache-2.0
#include <chrono>
#include <cstdlib>
#include <semaphore>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "agentbias/chat.hpp"

namespace agentbias {
namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUrl split_endpoint(const std::string& endpoint) {
  auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) throw std::invalid_argument("endpoint must include a scheme: " + endpoint);
  auto path_start = endpoint.find('/', scheme_end + 3);
  ParsedUrl u;
  u.origin = endpoint.substr(0, path_start);
  u.path = path_start == std::string::npos ? "" : endpoint.substr(path_start);
  while (!u.path.empty() && u.path.back() == '/') u.path.pop_back();
  constexpr std::string_view kSuffix = "/chat/completions";
  if (u.path.empty()) {
    u.path = "/v1/chat/completions";
  } else if (u.path.size() < kSuffix.size() || u.path.compare(u.path.size() - kSuffix.size(), kSuffix.size(), kSuffix) != 0) {
    u.path += kSuffix;
  }
  return u;
}

}  // namespace

struct RemoteBackend::Impl {
  explicit Impl(int max_in_flight) : in_flight(max_in_flight) {}
  std::counting_semaphore<1024> in_flight;
  ParsedUrl url;
};

RemoteBackend::RemoteBackend(BackendConfig cfg)
    : cfg_(std::move(cfg)), impl_(std::make_unique<Impl>(std::min(cfg_.max_in_flight, 1024))) {
  cfg_.kind = BackendKind::Remote;
  cfg_.validate();
  impl_->url = split_endpoint(cfg_.endpoint);
}

RemoteBackend::~RemoteBackend() = default;

nlohmann::json RemoteBackend::request_body(std::span<const ChatMessage> messages) const {
  return {{"model", cfg_.model},
          {"messages", to_json(messages)},
          {"temperature", cfg_.temperature},
          {"top_p", cfg_.top_p},
          {"max_tokens", cfg_.max_tokens}};
}

std::string RemoteBackend::complete(std::span<const ChatMessage> messages, const CallContext& ctx) {
  if (messages.empty()) throw std::invalid_argument("complete: empty message list");
  const std::string body = request_body(messages).dump();

  httplib::Headers headers;
  if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key != nullptr && *key != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + key);
    headers.emplace("api-key", key);
  }

  impl_->in_flight.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{impl_->in_flight};

  std::string last_error;
  auto backoff = std::chrono::milliseconds(cfg_.retry.initial_backoff_ms);
  for (int attempt = 1; attempt <= cfg_.retry.max_attempts; ++attempt) {
    httplib::Client client(impl_->url.origin);
    client.set_connection_timeout(cfg_.timeout_seconds);
    client.set_read_timeout(cfg_.timeout_seconds);
    client.set_write_timeout(cfg_.timeout_seconds);
    auto res = client.Post(impl_->url.path, headers, body, "application/json");

    bool retryable = false;
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      retryable = true;
    } else if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
      retryable = true;
    } else if (res->status != 200) {
      throw BackendError(BackendError::Kind::Http, "HTTP " + std::to_string(res->status) + " from " +
                                                       cfg_.endpoint + ": " + res->body.substr(0, 200));
    } else {
      try {
        auto j = nlohmann::json::parse(res->body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw BackendError(BackendError::Kind::Protocol,
                           std::string("malformed chat-completions response: ") + e.what());
      }
    }
    if (retryable && attempt < cfg_.retry.max_attempts) {
      std::this_thread::sleep_for(backoff);
      backoff = std::chrono::milliseconds(
          static_cast<long long>(static_cast<double>(backoff.count()) * cfg_.retry.backoff_multiplier));
    }
  }
  throw BackendError(BackendError::Kind::Transport, "agent " + ctx.agent + ", round " + ctx.round + ": " + last_error +
                                               " after " + std::to_string(cfg_.retry.max_attempts) + " attempts");
}

}  // namespace agentbias
