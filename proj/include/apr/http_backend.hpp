#pragma once

// Wire client for completion endpoints speaking the de-facto JSON format.
//
// Request:  POST {path} {"prompt", "stop", "max_tokens", "temperature",
//                        "stream": false}
// Response: {"text", "finish_reason", "usage": {"completion_tokens"}} or the
//           OpenAI-style {"choices": [{"text", "finish_reason"}], "usage"}.
//
// Transport errors (connect/reset/timeout) are retried with exponential
// backoff, max_attempts total; HTTP-level errors are surfaced immediately.
// If an auth token is present in the configured environment variable it is
// sent as a Bearer header.  Latencies are measured wall time, and
// complete_concurrent issues real threads, one per request.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "apr/backend.hpp"
#include "apr/codec.hpp"

namespace apr {

struct HttpBackendConfig {
  std::string base_url = "http://127.0.0.1:8000";
  std::string path = "/v1/completions";
  std::string auth_env = "BACKEND_AUTH_TOKEN";
  int max_attempts = 3;
  int backoff_base_ms = 100;  // 100ms, 200ms, 400ms, ...
  int timeout_seconds = 300;
};

class HttpBackend final : public Backend {
 public:
  HttpBackend(HttpBackendConfig config, const TokenCodec* codec = nullptr)
      : config_(std::move(config)), codec_(codec) {
    if (const char* token = std::getenv(config_.auth_env.c_str())) {
      auth_header_ = std::string("Bearer ") + token;
    }
  }

  CompletionResult complete(const CompletionRequest& request) override {
    nlohmann::json body = {
        {"prompt", request.context},
        {"stop", request.stop},
        {"max_tokens", request.max_tokens},
        {"temperature", request.temperature},
        {"stream", false},
    };
    const std::string payload = body.dump();

    const auto started = std::chrono::steady_clock::now();
    httplib::Result result;
    for (int attempt = 0; attempt < std::max(config_.max_attempts, 1);
         ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(
            config_.backoff_base_ms * (1LL << (attempt - 1))));
      }
      httplib::Client client(config_.base_url);
      client.set_connection_timeout(config_.timeout_seconds, 0);
      client.set_read_timeout(config_.timeout_seconds, 0);
      if (!auth_header_.empty()) {
        client.set_default_headers({{"Authorization", auth_header_}});
      }
      result = client.Post(config_.path, payload, "application/json");
      if (result) break;  // got an HTTP response; status handled below
      if (attempt + 1 >= std::max(config_.max_attempts, 1)) {
        return CompletionResult::failure(
            "transport error after " + std::to_string(attempt + 1) +
            " attempts: " + httplib::to_string(result.error()));
      }
    }
    if (result->status < 200 || result->status >= 300) {
      return CompletionResult::failure(
          "endpoint returned HTTP " + std::to_string(result->status) + ": " +
          result->body.substr(0, 512));
    }

    CompletionResponse resp;
    try {
      const nlohmann::json j = nlohmann::json::parse(result->body);
      std::string finish;
      if (j.contains("choices") && j["choices"].is_array() &&
          !j["choices"].empty()) {
        resp.text = j["choices"][0].value("text", "");
        finish = j["choices"][0].value("finish_reason", "");
      } else {
        resp.text = j.value("text", "");
        finish = j.value("finish_reason", "");
      }
      if (j.contains("usage") && j["usage"].contains("completion_tokens")) {
        resp.token_count = j["usage"]["completion_tokens"].get<std::int64_t>();
      } else if (codec_ != nullptr) {
        resp.token_count = codec_->count(resp.text);
      }
      if (finish == "stop") {
        resp.finish = FinishReason::StopMatched;
        // The wire format does not say which stop fired; recover it from the
        // text tail so the orchestrator can branch on it.
        for (const std::string& stop : request.stop) {
          if (resp.text.size() >= stop.size() &&
              resp.text.compare(resp.text.size() - stop.size(), stop.size(),
                                stop) == 0) {
            resp.matched_stop = stop;
            break;
          }
        }
        if (resp.matched_stop.empty()) resp.finish = FinishReason::EndOfSequence;
      } else if (finish == "length") {
        resp.finish = FinishReason::Length;
      } else {
        resp.finish = FinishReason::EndOfSequence;
      }
    } catch (const nlohmann::json::exception& e) {
      return CompletionResult::failure(std::string("malformed endpoint JSON: ") +
                                       e.what());
    }
    resp.latency_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                          std::chrono::steady_clock::now() - started)
                          .count();
    return CompletionResult::success(std::move(resp));
  }

  std::vector<CompletionResult> complete_concurrent(
      std::span<const CompletionRequest> requests) override {
    std::vector<CompletionResult> out(requests.size());
    std::vector<std::thread> workers;
    workers.reserve(requests.size());
    for (std::size_t i = 0; i < requests.size(); ++i) {
      workers.emplace_back([this, &requests, &out, i] {
        out[i] = complete(requests[i]);
      });
    }
    for (std::thread& w : workers) w.join();
    return out;
  }

 private:
  HttpBackendConfig config_;
  const TokenCodec* codec_;
  std::string auth_header_;
};

}  // namespace apr
