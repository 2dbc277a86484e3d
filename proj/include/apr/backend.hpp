#pragma once

// Completion-backend abstraction.
//
// The runtime talks to any autoregressive completion endpoint through this
// interface: one blocking completion per request, plus a concurrent batch
// entry point used for thread fan-out.  Errors are carried per slot rather
// than thrown, so one failed thread does not tear down its siblings; the
// orchestrator decides what a failed slot means for the run.
//
// Simulated backends (the virtual-clock mock) advertise their cost model via
// sim_cost(); real backends return nullopt and report measured latencies.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace apr {

enum class FinishReason {
  StopMatched,     // a stop sequence was produced (and is included in text)
  Length,          // max_tokens hit before any stop
  EndOfSequence,   // natural end of generation
};

inline std::string_view to_string(FinishReason f) {
  switch (f) {
    case FinishReason::StopMatched: return "stop";
    case FinishReason::Length: return "length";
    case FinishReason::EndOfSequence: return "eos";
  }
  return "unknown";
}

struct CompletionRequest {
  std::string context;            // full prompt + everything decoded so far
  std::vector<std::string> stop;  // stop strings; matched text is included
  std::int64_t max_tokens = 0;    // hard cap on completion tokens, > 0
  double temperature = 1.0;
};

struct CompletionResponse {
  std::string text;            // completion only (no context echo)
  std::int64_t token_count = 0;
  FinishReason finish = FinishReason::EndOfSequence;
  std::string matched_stop;    // which stop string ended generation, if any
  std::int64_t latency_ns = 0; // simulated or measured wall time
};

// Per-slot outcome: a response or an error message, never both.
struct CompletionResult {
  std::optional<CompletionResponse> response;
  std::string error;

  bool ok() const { return response.has_value(); }

  static CompletionResult success(CompletionResponse r) {
    return {std::move(r), {}};
  }
  static CompletionResult failure(std::string message) {
    return {std::nullopt, std::move(message)};
  }
};

// Cost model of a simulated backend: latency = per_request_ns +
// per_token_ns * tokens for one request.  Real backends return nullopt.
struct SimCostModel {
  std::int64_t per_token_ns = 0;
  std::int64_t per_request_ns = 0;
};

class Backend {
 public:
  virtual ~Backend() = default;

  virtual CompletionResult complete(const CompletionRequest& request) = 0;

  // Issues all requests as one concurrent batch.  Slot i of the result
  // corresponds to requests[i].  The base implementation is a serial loop;
  // backends with real or simulated concurrency override it.
  virtual std::vector<CompletionResult> complete_concurrent(
      std::span<const CompletionRequest> requests) {
    std::vector<CompletionResult> out;
    out.reserve(requests.size());
    for (const CompletionRequest& r : requests) out.push_back(complete(r));
    return out;
  }

  virtual std::optional<SimCostModel> sim_cost() const { return std::nullopt; }
};

}  // namespace apr
