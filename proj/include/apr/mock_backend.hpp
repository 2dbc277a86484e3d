#pragma once

// Deterministic mock backend with a virtual clock.
//
// Two scripting modes:
//   * replay: add_script(prompt, response) installs a stored trajectory;
//     requests are answered by slicing it.
//   * synthetic: enable_synthetic(seed, options) generates a well-formed
//     trajectory on first sight of an unknown prompt (seeded by the prompt
//     bytes, so identical prompts replay identically).
//
// Request matching is structural, so replay keeps working even when the
// orchestrator's context diverges from the stored bytes (e.g. a truncated
// thread body followed by a synthesized close tag):
//   1. context is a byte prefix of prompt+response  -> serve the remainder;
//   2. context ends with a thread seed "<Thread> i:" -> serve that thread's
//      body+close for the current block (blocks counted by how many
//      "</Parallel>" the context already contains);
//   3. context ends with "</Parallel>"              -> serve the stored text
//      that follows the corresponding block close.
//
// Latency model: latency = per_request_ns + per_token_ns * completion
// tokens.  complete() advances the virtual clock by the request latency;
// complete_concurrent() advances it by max over the batch, which is the
// whole point of issuing threads concurrently.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "apr/backend.hpp"
#include "apr/codec.hpp"
#include "apr/synthetic.hpp"
#include "apr/trajectory.hpp"

namespace apr {

class MockBackend final : public Backend {
 public:
  MockBackend(const TokenCodec& codec, SimCostModel cost = {1000, 0})
      : codec_(codec), cost_(cost) {}

  void add_script(std::string prompt, std::string response) {
    auto script = compile_script(std::move(prompt), std::move(response));
    std::lock_guard<std::mutex> lock(mu_);
    scripts_.push_back(std::move(script));
  }

  // Unknown prompts get a generated trajectory instead of an error.
  void enable_synthetic(std::uint64_t seed, SyntheticOptions options = {}) {
    std::lock_guard<std::mutex> lock(mu_);
    synthetic_seed_ = seed;
    synthetic_options_ = std::move(options);
  }

  // Test hook: requests matching the predicate fail as transport errors.
  void set_fail_predicate(std::function<bool(const CompletionRequest&)> p) {
    std::lock_guard<std::mutex> lock(mu_);
    fail_predicate_ = std::move(p);
  }

  CompletionResult complete(const CompletionRequest& request) override {
    CompletionResult r = serve(request);
    std::lock_guard<std::mutex> lock(mu_);
    if (r.ok()) now_ns_ += r.response->latency_ns;
    return r;
  }

  std::vector<CompletionResult> complete_concurrent(
      std::span<const CompletionRequest> requests) override {
    std::vector<CompletionResult> out;
    out.reserve(requests.size());
    std::int64_t makespan = 0;
    for (const CompletionRequest& req : requests) {
      out.push_back(serve(req));
      if (out.back().ok()) {
        makespan = std::max(makespan, out.back().response->latency_ns);
      }
    }
    std::lock_guard<std::mutex> lock(mu_);
    now_ns_ += makespan;
    return out;
  }

  std::optional<SimCostModel> sim_cost() const override { return cost_; }

  std::int64_t virtual_now_ns() const {
    std::lock_guard<std::mutex> lock(mu_);
    return now_ns_;
  }

 private:
  struct ScriptBlock {
    std::vector<std::string> thread_completions;  // body + close tag
    std::string suffix_after_close;  // response text after "</Parallel>"
  };
  struct Script {
    std::string prompt;
    std::string response;
    std::string full;  // prompt + response
    std::vector<ScriptBlock> blocks;
  };

  static std::unique_ptr<Script> compile_script(std::string prompt,
                                                std::string response) {
    auto s = std::make_unique<Script>();
    s->prompt = std::move(prompt);
    s->response = std::move(response);
    s->full = s->prompt + s->response;
    const Trajectory t = parse(s->response);
    std::size_t offset = 0;
    for (const Segment& seg : t.segments) {
      if (const auto* seq = std::get_if<SequentialSegment>(&seg)) {
        offset += seq->text.size();
        continue;
      }
      const auto& b = std::get<ParallelBlock>(seg);
      ScriptBlock sb;
      offset += b.header.size();
      for (const ThreadSpan& th : b.threads) {
        offset += th.filler.size() + th.seed.size();
        sb.thread_completions.push_back(th.body + th.close_tag);
        offset += th.body.size() + th.close_tag.size();
      }
      offset += b.trailer.size();
      sb.suffix_after_close = s->response.substr(offset);
      s->blocks.push_back(std::move(sb));
    }
    return s;
  }

  CompletionResult serve(const CompletionRequest& request) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (fail_predicate_ && fail_predicate_(request)) {
        return CompletionResult::failure("mock: injected transport failure");
      }
    }
    const Script* script = find_script(request.context);
    if (script == nullptr) {
      return CompletionResult::failure(
          "mock: no script matches the request context");
    }
    std::string continuation;
    if (!continuation_for(*script, request.context, &continuation)) {
      return CompletionResult::failure(
          "mock: unscripted context (diverges from the stored trajectory)");
    }
    return CompletionResult::success(finish_response(request, continuation));
  }

  // Longest-prompt-prefix match; generates a synthetic script on miss when
  // synthetic mode is enabled.  Scripts are heap-held, so the returned
  // pointer stays valid as the list grows.
  const Script* find_script(const std::string& context) {
    std::lock_guard<std::mutex> lock(mu_);
    const Script* best = nullptr;
    for (const auto& s : scripts_) {
      if (context.compare(0, s->prompt.size(), s->prompt) == 0) {
        if (best == nullptr || s->prompt.size() > best->prompt.size()) {
          best = s.get();
        }
      }
    }
    if (best != nullptr || !synthetic_seed_) return best;
    // First contact with a prompt is always the bare prompt, so the whole
    // context is the prompt of the new script.
    const std::uint64_t seed = *synthetic_seed_ ^ fnv1a64(context);
    SyntheticTrajectory t = synthetic_trajectory(seed, synthetic_options_);
    scripts_.push_back(compile_script(context, std::move(t.response)));
    return scripts_.back().get();
  }

  bool continuation_for(const Script& s, const std::string& ctx,
                        std::string* out) const {
    // Rule 1: byte prefix of the stored full text.
    if (ctx.size() <= s.full.size() &&
        s.full.compare(0, ctx.size(), ctx) == 0) {
      *out = s.full.substr(ctx.size());
      return true;
    }
    const std::string_view past_prompt =
        std::string_view(ctx).substr(std::min(ctx.size(), s.prompt.size()));
    const std::size_t closed_blocks =
        count_occurrences(past_prompt, tags::parallel_close);

    // Rule 2: context ends with a thread seed -> that thread's completion.
    if (auto ordinal = trailing_thread_seed_ordinal(ctx)) {
      if (closed_blocks < s.blocks.size()) {
        const auto& threads = s.blocks[closed_blocks].thread_completions;
        if (*ordinal >= 1 &&
            static_cast<std::size_t>(*ordinal) <= threads.size()) {
          *out = threads[static_cast<std::size_t>(*ordinal) - 1];
          return true;
        }
      }
      return false;
    }

    // Rule 3: context ends with a block close -> stored continuation.
    if (ctx.size() >= tags::parallel_close.size() &&
        std::string_view(ctx).substr(
            ctx.size() - tags::parallel_close.size()) == tags::parallel_close &&
        closed_blocks >= 1 && closed_blocks <= s.blocks.size()) {
      *out = s.blocks[closed_blocks - 1].suffix_after_close;
      return true;
    }
    return false;
  }

  static std::size_t count_occurrences(std::string_view text,
                                       std::string_view needle) {
    std::size_t n = 0, pos = 0;
    while ((pos = text.find(needle, pos)) != std::string_view::npos) {
      ++n;
      pos += needle.size();
    }
    return n;
  }

  // Matches "...<Thread> <digits>:" at the very end of the context.
  static std::optional<int> trailing_thread_seed_ordinal(
      const std::string& ctx) {
    const std::size_t p = ctx.rfind(tags::thread_open);
    if (p == std::string::npos) return std::nullopt;
    std::size_t end = 0;
    const auto idx =
        detail::parse_ordinal_label(ctx, p + tags::thread_open.size(), &end);
    if (!idx || end != ctx.size()) return std::nullopt;
    return *idx;
  }

  // Applies stop sequences and the token cap, then prices the request.
  CompletionResponse finish_response(const CompletionRequest& request,
                                     std::string continuation) const {
    CompletionResponse resp;
    resp.finish = FinishReason::EndOfSequence;

    std::size_t cut = std::string::npos;
    for (const std::string& stop : request.stop) {
      if (stop.empty()) continue;
      const std::size_t p = continuation.find(stop);
      if (p == std::string::npos) continue;
      const std::size_t end = p + stop.size();
      if (cut == std::string::npos || end < cut) {
        cut = end;
        resp.matched_stop = stop;
      }
    }
    if (cut != std::string::npos) {
      continuation.resize(cut);
      resp.finish = FinishReason::StopMatched;
    }

    const std::int64_t max_tokens =
        std::max<std::int64_t>(request.max_tokens, 0);
    std::int64_t n = codec_.count(continuation);
    if (n > max_tokens) {
      std::vector<TokenId> ids = codec_.encode(continuation);
      ids.resize(static_cast<std::size_t>(max_tokens));
      continuation = codec_.decode(ids);
      n = max_tokens;
      resp.finish = FinishReason::Length;
      resp.matched_stop.clear();
    }

    resp.text = std::move(continuation);
    resp.token_count = n;
    resp.latency_ns = cost_.per_request_ns + cost_.per_token_ns * n;
    return resp;
  }

  const TokenCodec& codec_;
  SimCostModel cost_;

  mutable std::mutex mu_;
  std::vector<std::unique_ptr<Script>> scripts_;
  std::optional<std::uint64_t> synthetic_seed_;
  SyntheticOptions synthetic_options_;
  std::function<bool(const CompletionRequest&)> fail_predicate_;
  std::int64_t now_ns_ = 0;
};

}  // namespace apr
