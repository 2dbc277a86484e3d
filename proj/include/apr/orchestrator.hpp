#pragma once

// Fork-join inference orchestrator.
//
// One rollout alternates between phases:
//   1. sequential decode with stop {"</Outlines>"} (EOS implicit);
//   2. on stop match, parse the numbered outline entries just produced;
//   3. issue one completion per outline concurrently, each seeded with
//      "<Thread> i:" appended to the shared context, stop {"</Thread>"};
//   4. join: append every thread's seed+completion in outline order plus
//      "</Parallel>", exactly once, no filler;
//   5. resume sequential decode; repeat until EOS or budget exhaustion.
//
// Token budget counts decoded tokens across all branches (the sum, not the
// critical path).  Per-thread budgeting is deliberately optimistic: each
// thread may spend min(per_thread_cap, remaining); overshoot is reconciled
// after the join.  A thread that hits its cap without producing
// "</Thread>" gets the close tag synthesized so the trajectory stays
// parseable, and the trace records the repair.
//
// Makespan: sequential phases add their request latency; a parallel phase
// adds the max over its slots.  When the backend advertises a simulated
// cost model, runtime-injected glue (thread seeds, synthesized closes,
// "</Parallel>") is charged at the per-token rate on the same path, so the
// zero-overhead makespan of a run equals per-token-cost * token-latency of
// the produced trajectory, and parallel/autoregressive makespan ratios are
// directly comparable.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "apr/backend.hpp"
#include "apr/codec.hpp"
#include "apr/trajectory.hpp"

namespace apr {

enum class UnitKind {
  Sequential,
  Thread,
  JoinContinuation,
  FullAutoregressive,
};

inline std::string_view to_string(UnitKind k) {
  switch (k) {
    case UnitKind::Sequential: return "sequential";
    case UnitKind::Thread: return "thread";
    case UnitKind::JoinContinuation: return "join_continuation";
    case UnitKind::FullAutoregressive: return "full_autoregressive";
  }
  return "unknown";
}

enum class RunFinish { Eos, BudgetExhausted, Error };

inline std::string_view to_string(RunFinish f) {
  switch (f) {
    case RunFinish::Eos: return "eos";
    case RunFinish::BudgetExhausted: return "budget_exhausted";
    case RunFinish::Error: return "error";
  }
  return "unknown";
}

enum class ZeroOutlinePolicy {
  ContinueSequential,  // close the degenerate block and keep decoding
  Abort,               // finish the run with an error
};

struct OrchestratorConfig {
  std::int64_t total_token_budget = 40000;
  // Per-thread completion cap; unset means "whatever remains".
  std::optional<std::int64_t> per_thread_cap;
  std::string thread_seed_template = "<Thread> {i}:";
  int max_parallel_blocks = 16;
  double temperature = 1.0;
  ZeroOutlinePolicy zero_outline_policy = ZeroOutlinePolicy::ContinueSequential;
};

struct UnitRecord {
  UnitKind kind = UnitKind::Sequential;
  std::string context;     // full request context (prompt + decoded + seed)
  std::string completion;  // decoded text, plus a synthesized close if any
  std::int64_t context_tokens = 0;
  std::int64_t completion_tokens = 0;  // of the full completion text
  FinishReason finish = FinishReason::EndOfSequence;
  int block = -1;   // 0-based block index for thread units
  int ordinal = 0;  // 1-based thread ordinal for thread units
};

struct TokenStats {
  std::int64_t sequential_tokens = 0;  // decoded in sequential/join phases
  std::int64_t thread_tokens = 0;      // decoded across all threads (sum)
  std::int64_t injected_glue_tokens = 0;  // seeds, synthesized closes, </Parallel>

  std::int64_t decoded_total() const {
    return sequential_tokens + thread_tokens;
  }
};

struct RolloutTrace {
  std::string prompt;
  std::string response;  // everything appended after the prompt
  std::vector<UnitRecord> units;
  RunFinish finish = RunFinish::Eos;
  std::string error;
  std::int64_t makespan_ns = 0;
  TokenStats tokens;
  int parallel_blocks = 0;
  std::vector<std::string> violations;  // structural repairs and fallbacks
};

class Orchestrator {
 public:
  Orchestrator(Backend& backend, const TokenCodec& codec,
               OrchestratorConfig config = {})
      : backend_(backend), codec_(codec), cfg_(std::move(config)) {}

  // Budget available to one thread of an n-way fork: optimistic, clamped by
  // the per-thread cap.  n threads may jointly exceed `remaining`; the
  // overshoot is reconciled after the join.
  static std::int64_t thread_budget(std::int64_t remaining, int n_threads,
                                    const OrchestratorConfig& cfg) {
    (void)n_threads;  // the optimistic policy ignores the fan-out on purpose
    std::int64_t budget = remaining;
    if (cfg.per_thread_cap) budget = std::min(budget, *cfg.per_thread_cap);
    return std::max<std::int64_t>(budget, 0);
  }

  RolloutTrace run(const std::string& prompt) {
    RolloutTrace trace;
    trace.prompt = prompt;
    std::string ctx = prompt;
    std::int64_t remaining = cfg_.total_token_budget;
    bool forking = true;
    bool first_sequential = true;

    const std::string sep(tags::parallel_close);
    const std::int64_t sep_tokens = codec_.count(sep);

    while (true) {
      if (remaining <= 0) {
        trace.finish = RunFinish::BudgetExhausted;
        break;
      }
      CompletionRequest req;
      req.context = ctx;
      if (forking) req.stop = {std::string(tags::outlines_close)};
      req.max_tokens = remaining;
      req.temperature = cfg_.temperature;

      CompletionResult result = backend_.complete(req);
      if (!result.ok()) {
        trace.finish = RunFinish::Error;
        trace.error = result.error;
        break;
      }
      CompletionResponse& resp = *result.response;

      UnitRecord unit;
      unit.kind = first_sequential ? UnitKind::Sequential
                                   : UnitKind::JoinContinuation;
      first_sequential = false;
      unit.context = ctx;
      unit.context_tokens = codec_.count(ctx);
      unit.completion = resp.text;
      unit.completion_tokens = resp.token_count;
      unit.finish = resp.finish;
      trace.units.push_back(unit);

      ctx += resp.text;
      trace.response += resp.text;
      remaining -= resp.token_count;
      trace.tokens.sequential_tokens += resp.token_count;
      trace.makespan_ns += resp.latency_ns;

      if (resp.finish == FinishReason::EndOfSequence) {
        trace.finish = RunFinish::Eos;
        break;
      }
      if (resp.finish == FinishReason::Length || remaining <= 0) {
        trace.finish = RunFinish::BudgetExhausted;
        break;
      }

      // Stop matched "</Outlines>": fork point.
      if (trace.parallel_blocks >= cfg_.max_parallel_blocks) {
        trace.violations.push_back("max_parallel_blocks_reached");
        append_glue(&ctx, &trace, sep, sep_tokens);
        forking = false;  // decode the rest purely sequentially
        continue;
      }
      const std::vector<Outline> outlines =
          parse_fork_outlines(resp.text);
      if (outlines.empty()) {
        if (cfg_.zero_outline_policy == ZeroOutlinePolicy::Abort) {
          trace.finish = RunFinish::Error;
          trace.error = "no outline entries parsed at fork point";
          break;
        }
        trace.violations.push_back("zero_outline_fallback");
        ++trace.parallel_blocks;  // degenerate block still counts for the guard
        append_glue(&ctx, &trace, sep, sep_tokens);
        continue;
      }

      const int block_index = trace.parallel_blocks++;
      const int n = static_cast<int>(outlines.size());
      const std::int64_t per_thread = thread_budget(remaining, n, cfg_);

      std::vector<CompletionRequest> reqs;
      std::vector<std::string> seeds;
      reqs.reserve(static_cast<std::size_t>(n));
      for (int i = 1; i <= n; ++i) {
        seeds.push_back(instantiate_seed(cfg_.thread_seed_template, i));
        CompletionRequest tr;
        tr.context = ctx + seeds.back();
        tr.stop = {std::string(tags::thread_close)};
        tr.max_tokens = per_thread;
        tr.temperature = cfg_.temperature;
        reqs.push_back(std::move(tr));
      }
      std::vector<CompletionResult> slots =
          backend_.complete_concurrent(reqs);

      const auto cost = backend_.sim_cost();
      std::int64_t phase_ns = 0;
      std::string joined;
      bool failed = false;
      for (int i = 0; i < n; ++i) {
        if (!slots[static_cast<std::size_t>(i)].ok()) {
          trace.finish = RunFinish::Error;
          trace.error = "thread " + std::to_string(i + 1) + " of block " +
                        std::to_string(block_index + 1) + ": " +
                        slots[static_cast<std::size_t>(i)].error;
          failed = true;
          break;
        }
        CompletionResponse& tresp = *slots[static_cast<std::size_t>(i)].response;
        const std::int64_t seed_tokens =
            codec_.count(seeds[static_cast<std::size_t>(i)]);

        std::string completion = tresp.text;
        std::int64_t close_glue = 0;
        if (tresp.finish != FinishReason::StopMatched) {
          // Cap hit (or bare EOS) without a close tag: synthesize it.
          completion += tags::thread_close;
          close_glue = codec_.count(tags::thread_close);
          trace.violations.push_back(
              "synthesized_thread_close:block=" +
              std::to_string(block_index + 1) + ",thread=" +
              std::to_string(i + 1));
        }

        UnitRecord unit;
        unit.kind = UnitKind::Thread;
        unit.block = block_index;
        unit.ordinal = i + 1;
        unit.context = reqs[static_cast<std::size_t>(i)].context;
        unit.context_tokens = codec_.count(unit.context);
        unit.completion = completion;
        unit.completion_tokens = tresp.token_count + close_glue;
        unit.finish = tresp.finish;
        trace.units.push_back(std::move(unit));

        joined += seeds[static_cast<std::size_t>(i)];
        joined += completion;
        remaining -= tresp.token_count;
        trace.tokens.thread_tokens += tresp.token_count;
        trace.tokens.injected_glue_tokens += seed_tokens + close_glue;

        std::int64_t slot_ns = tresp.latency_ns;
        if (cost) slot_ns += cost->per_token_ns * (seed_tokens + close_glue);
        phase_ns = std::max(phase_ns, slot_ns);
      }
      if (failed) break;

      trace.makespan_ns += phase_ns;
      ctx += joined;
      trace.response += joined;
      append_glue(&ctx, &trace, sep, sep_tokens);

      if (remaining <= 0) {
        trace.finish = RunFinish::BudgetExhausted;
        break;
      }
    }
    return trace;
  }

  // Hybrid mode: one request, the control tags decoded as ordinary text.
  RolloutTrace run_autoregressive(const std::string& prompt) {
    RolloutTrace trace;
    trace.prompt = prompt;

    CompletionRequest req;
    req.context = prompt;
    req.max_tokens = cfg_.total_token_budget;
    req.temperature = cfg_.temperature;

    CompletionResult result = backend_.complete(req);
    if (!result.ok()) {
      trace.finish = RunFinish::Error;
      trace.error = result.error;
      return trace;
    }
    const CompletionResponse& resp = *result.response;

    UnitRecord unit;
    unit.kind = UnitKind::FullAutoregressive;
    unit.context = prompt;
    unit.context_tokens = codec_.count(prompt);
    unit.completion = resp.text;
    unit.completion_tokens = resp.token_count;
    unit.finish = resp.finish;
    trace.units.push_back(std::move(unit));

    trace.response = resp.text;
    trace.tokens.sequential_tokens = resp.token_count;
    trace.makespan_ns = resp.latency_ns;
    trace.finish = resp.finish == FinishReason::Length
                       ? RunFinish::BudgetExhausted
                       : RunFinish::Eos;
    return trace;
  }

 private:
  static std::string instantiate_seed(const std::string& tmpl, int ordinal) {
    std::string seed = tmpl;
    const std::size_t p = seed.find("{i}");
    if (p != std::string::npos) seed.replace(p, 3, std::to_string(ordinal));
    return seed;
  }

  void append_glue(std::string* ctx, RolloutTrace* trace,
                   const std::string& glue, std::int64_t glue_tokens) {
    *ctx += glue;
    trace->response += glue;
    trace->tokens.injected_glue_tokens += glue_tokens;
    if (const auto cost = backend_.sim_cost()) {
      trace->makespan_ns += cost->per_token_ns * glue_tokens;
    }
  }

  // Outline entries of the fork the model just proposed: parse the tail of
  // the sequential completion, from its last "<Outlines>" section.
  static std::vector<Outline> parse_fork_outlines(const std::string& text) {
    std::vector<Outline> outlines;
    const std::size_t p = text.rfind(tags::outlines_open);
    if (p == std::string::npos) return outlines;
    detail::parse_outlines(std::string_view(text).substr(p), &outlines);
    // Entries must be labeled 1..n in order; a fork with garbled labels is
    // not actionable (the seeds would not correspond to the outlines).
    for (std::size_t i = 0; i < outlines.size(); ++i) {
      if (outlines[i].index != static_cast<int>(i) + 1) return {};
    }
    return outlines;
  }

  Backend& backend_;
  const TokenCodec& codec_;
  OrchestratorConfig cfg_;
};

}  // namespace apr
