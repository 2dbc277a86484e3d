// Tests for the fork-join orchestrator: phase schedule, byte-exact replay,
// token accounting, makespan accounting, truncation repair, and fallbacks.

#include <doctest.h>

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "apr/backend.hpp"
#include "apr/codec.hpp"
#include "apr/mock_backend.hpp"
#include "apr/orchestrator.hpp"
#include "apr/synthetic.hpp"
#include "apr/trajectory.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace apr;

namespace {

// Minimal scripted backend: pops canned responses in order, regardless of
// context.  Lets tests stage fork-point texts the replay mock cannot express
// (e.g. an outline section with no entries).
class QueueBackend final : public Backend {
 public:
  explicit QueueBackend(const TokenCodec& codec) : codec_(codec) {}

  void push(std::string text, FinishReason finish) {
    queue_.push_back({std::move(text), finish});
  }

  CompletionResult complete(const CompletionRequest& request) override {
    if (queue_.empty()) {
      return CompletionResult::failure("queue exhausted");
    }
    CompletionResponse resp;
    resp.text = queue_.front().first;
    resp.finish = queue_.front().second;
    queue_.pop_front();
    resp.token_count = codec_.count(resp.text);
    resp.latency_ns = resp.token_count;
    (void)request;
    return CompletionResult::success(resp);
  }

 private:
  const TokenCodec& codec_;
  std::deque<std::pair<std::string, FinishReason>> queue_;
};

}  // namespace

TEST_CASE("single-block replay reproduces the trajectory byte for byte") {
  WordCodec codec;
  MockBackend backend(codec, SimCostModel{1000, 0});
  backend.add_script(fixtures::distance_prompt, fixtures::distance_response);
  Orchestrator orch(backend, codec);

  const RolloutTrace trace = orch.run(fixtures::distance_prompt);

  CHECK(trace.finish == RunFinish::Eos);
  CHECK(trace.error.empty());
  CHECK(trace.response == fixtures::distance_response);
  CHECK(trace.parallel_blocks == 1);
  CHECK(trace.violations.empty());

  REQUIRE(trace.units.size() == 4);
  CHECK(trace.units[0].kind == UnitKind::Sequential);
  CHECK(trace.units[0].context == fixtures::distance_prompt);
  CHECK(trace.units[0].completion == fixtures::distance_seq1);
  CHECK(trace.units[0].finish == FinishReason::StopMatched);

  const std::string fork_ctx =
      fixtures::distance_prompt + fixtures::distance_seq1;
  CHECK(trace.units[1].kind == UnitKind::Thread);
  CHECK(trace.units[1].block == 0);
  CHECK(trace.units[1].ordinal == 1);
  CHECK(trace.units[1].context == fork_ctx + "<Thread> 1:");
  CHECK(trace.units[1].completion == fixtures::distance_body1 + "</Thread>");

  CHECK(trace.units[2].kind == UnitKind::Thread);
  CHECK(trace.units[2].block == 0);
  CHECK(trace.units[2].ordinal == 2);
  CHECK(trace.units[2].context == fork_ctx + "<Thread> 2:");
  CHECK(trace.units[2].completion == fixtures::distance_body2 + "</Thread>");

  const std::string join_ctx = fork_ctx + "<Thread> 1:" +
                               fixtures::distance_body1 + "</Thread>" +
                               "<Thread> 2:" + fixtures::distance_body2 +
                               "</Thread>" + "</Parallel>";
  CHECK(trace.units[3].kind == UnitKind::JoinContinuation);
  CHECK(trace.units[3].context == join_ctx);
  CHECK(trace.units[3].completion == fixtures::distance_tail);
  CHECK(trace.units[3].finish == FinishReason::EndOfSequence);

  for (const UnitRecord& u : trace.units) {
    CHECK(u.context_tokens == codec.count(u.context));
    CHECK(u.completion_tokens == codec.count(u.completion));
  }
}

TEST_CASE("decoded plus injected tokens equal the response token count") {
  WordCodec codec;
  for (const auto* fix :
       {&fixtures::distance_response, &fixtures::sum_response,
        &fixtures::plain_response}) {
    const std::string& prompt = fix == &fixtures::distance_response
                                    ? fixtures::distance_prompt
                                    : fix == &fixtures::sum_response
                                          ? fixtures::sum_prompt
                                          : fixtures::plain_prompt;
    MockBackend backend(codec);
    backend.add_script(prompt, *fix);
    Orchestrator orch(backend, codec);
    const RolloutTrace trace = orch.run(prompt);
    REQUIRE(trace.finish == RunFinish::Eos);
    CHECK(trace.tokens.decoded_total() + trace.tokens.injected_glue_tokens ==
          codec.count(trace.response));
  }
}

TEST_CASE("two-block replay yields the seven-unit schedule") {
  WordCodec codec;
  MockBackend backend(codec);
  backend.add_script(fixtures::sum_prompt, fixtures::sum_response);
  Orchestrator orch(backend, codec);

  const RolloutTrace trace = orch.run(fixtures::sum_prompt);
  CHECK(trace.finish == RunFinish::Eos);
  CHECK(trace.response == fixtures::sum_response);
  CHECK(trace.parallel_blocks == 2);

  REQUIRE(trace.units.size() == 7);
  const UnitKind expected[] = {
      UnitKind::Sequential,       UnitKind::Thread, UnitKind::Thread,
      UnitKind::JoinContinuation, UnitKind::Thread, UnitKind::Thread,
      UnitKind::JoinContinuation,
  };
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(trace.units[i].kind == expected[i]);
  }
  CHECK(trace.units[1].block == 0);
  CHECK(trace.units[4].block == 1);
  CHECK(trace.units[4].ordinal == 1);
  CHECK(trace.units[5].ordinal == 2);
  CHECK(trace.units[3].completion == fixtures::sum_seq2);
  CHECK(trace.units[6].completion == fixtures::sum_tail);
}

TEST_CASE("sequential-only prompts produce one unit and no glue") {
  WordCodec codec;
  MockBackend backend(codec, SimCostModel{1000, 7});
  backend.add_script(fixtures::plain_prompt, fixtures::plain_response);
  Orchestrator orch(backend, codec);

  const RolloutTrace trace = orch.run(fixtures::plain_prompt);
  CHECK(trace.finish == RunFinish::Eos);
  CHECK(trace.response == fixtures::plain_response);
  CHECK(trace.parallel_blocks == 0);
  REQUIRE(trace.units.size() == 1);
  CHECK(trace.units[0].kind == UnitKind::Sequential);
  CHECK(trace.tokens.thread_tokens == 0);
  CHECK(trace.tokens.injected_glue_tokens == 0);
  CHECK(trace.makespan_ns ==
        7 + 1000 * codec.count(fixtures::plain_response));
}

TEST_CASE("zero-overhead makespan equals per-token cost times token latency") {
  WordCodec codec;
  const std::int64_t T = 1000;
  struct Case {
    const std::string* prompt;
    const std::string* response;
  };
  const std::string long_resp = fixtures::long_response();
  const Case cases[] = {
      {&fixtures::distance_prompt, &fixtures::distance_response},
      {&fixtures::sum_prompt, &fixtures::sum_response},
      {&fixtures::plain_prompt, &fixtures::plain_response},
      {&fixtures::long_prompt, &long_resp},
  };
  for (const Case& c : cases) {
    MockBackend backend(codec, SimCostModel{T, 0});
    backend.add_script(*c.prompt, *c.response);
    Orchestrator orch(backend, codec);
    const RolloutTrace trace = orch.run(*c.prompt);
    REQUIRE(trace.finish == RunFinish::Eos);
    const auto lat = oracles::oracle_latency(trace.response, codec);
    CHECK(trace.makespan_ns == T * lat.latency);
    CHECK(trace.tokens.decoded_total() + trace.tokens.injected_glue_tokens ==
          lat.total);
  }
}

TEST_CASE("per-request overhead adds 2B+1 charges on the critical path") {
  WordCodec codec;
  const std::int64_t T = 1000, R = 50000;

  SUBCASE("one block: three requests") {
    MockBackend backend(codec, SimCostModel{T, R});
    backend.add_script(fixtures::distance_prompt, fixtures::distance_response);
    Orchestrator orch(backend, codec);
    const RolloutTrace trace = orch.run(fixtures::distance_prompt);
    const auto lat = oracles::oracle_latency(trace.response, codec);
    CHECK(trace.makespan_ns == 3 * R + T * lat.latency);
  }

  SUBCASE("two blocks: five requests") {
    MockBackend backend(codec, SimCostModel{T, R});
    backend.add_script(fixtures::sum_prompt, fixtures::sum_response);
    Orchestrator orch(backend, codec);
    const RolloutTrace trace = orch.run(fixtures::sum_prompt);
    const auto lat = oracles::oracle_latency(trace.response, codec);
    CHECK(trace.makespan_ns == 5 * R + T * lat.latency);
  }
}

TEST_CASE("autoregressive mode decodes everything as one unit") {
  WordCodec codec;
  const std::int64_t T = 1000, R = 50000;
  MockBackend backend(codec, SimCostModel{T, R});
  backend.add_script(fixtures::distance_prompt, fixtures::distance_response);
  Orchestrator orch(backend, codec);

  const RolloutTrace trace =
      orch.run_autoregressive(fixtures::distance_prompt);
  CHECK(trace.finish == RunFinish::Eos);
  CHECK(trace.response == fixtures::distance_response);
  REQUIRE(trace.units.size() == 1);
  CHECK(trace.units[0].kind == UnitKind::FullAutoregressive);
  CHECK(trace.parallel_blocks == 0);
  CHECK(trace.tokens.thread_tokens == 0);
  CHECK(trace.tokens.injected_glue_tokens == 0);
  const std::int64_t total = codec.count(fixtures::distance_response);
  CHECK(trace.tokens.sequential_tokens == total);
  CHECK(trace.makespan_ns == R + T * total);
}

TEST_CASE("budget exhaustion truncates and reports itself") {
  WordCodec codec;

  SUBCASE("mid-decode length stop") {
    MockBackend backend(codec);
    backend.add_script(fixtures::plain_prompt, fixtures::plain_response);
    OrchestratorConfig cfg;
    cfg.total_token_budget = 5;
    Orchestrator orch(backend, codec, cfg);
    const RolloutTrace trace = orch.run(fixtures::plain_prompt);
    CHECK(trace.finish == RunFinish::BudgetExhausted);
    REQUIRE(trace.units.size() == 1);
    CHECK(trace.units[0].finish == FinishReason::Length);
    CHECK(trace.tokens.sequential_tokens == 5);
    auto ids = codec.encode(fixtures::plain_response);
    ids.resize(5);
    CHECK(trace.response == codec.decode(ids));
  }

  SUBCASE("zero budget produces an empty rollout") {
    MockBackend backend(codec);
    backend.add_script(fixtures::plain_prompt, fixtures::plain_response);
    OrchestratorConfig cfg;
    cfg.total_token_budget = 0;
    Orchestrator orch(backend, codec, cfg);
    const RolloutTrace trace = orch.run(fixtures::plain_prompt);
    CHECK(trace.finish == RunFinish::BudgetExhausted);
    CHECK(trace.units.empty());
    CHECK(trace.response.empty());
  }
}

TEST_CASE("thread cap truncation synthesizes the close and replay recovers") {
  WordCodec codec;
  MockBackend backend(codec);
  const std::string response = fixtures::long_response();
  backend.add_script(fixtures::long_prompt, response);
  OrchestratorConfig cfg;
  cfg.per_thread_cap = 8;
  Orchestrator orch(backend, codec, cfg);

  const RolloutTrace trace = orch.run(fixtures::long_prompt);
  CHECK(trace.finish == RunFinish::Eos);
  REQUIRE(trace.units.size() == 4);

  // Thread 1 fits inside the cap and keeps its real close tag.
  CHECK(trace.units[1].finish == FinishReason::StopMatched);
  CHECK(trace.units[1].completion == fixtures::long_body1 + "</Thread>");

  // Thread 2 hits the cap: the close is synthesized and recorded.
  CHECK(trace.units[2].finish == FinishReason::Length);
  auto ids = codec.encode(fixtures::long_thread_body() + "</Thread>");
  ids.resize(8);
  CHECK(trace.units[2].completion == codec.decode(ids) + "</Thread>");
  CHECK(trace.units[2].completion_tokens == 9);
  REQUIRE(trace.violations.size() == 1);
  CHECK(trace.violations[0] == "synthesized_thread_close:block=1,thread=2");

  // The join continuation recovered via structural matching.
  CHECK(trace.units[3].completion == fixtures::long_tail);

  // The repaired trajectory still parses as format-valid.
  const Trajectory t = parse(trace.response);
  const ValidationReport report = validate(t);
  CHECK(report.format_valid());
  CHECK(trace.tokens.decoded_total() + trace.tokens.injected_glue_tokens ==
        codec.count(trace.response));
}

TEST_CASE("zero-outline fork points fall back per policy") {
  WordCodec codec;
  const std::string fork_text =
      "<think>\nLet me fan out.\n<Parallel>\n<Outlines>\n</Outlines>";
  const std::string tail_text =
      "\nNo fan-out needed. \\boxed{1}\n</think>\nThe answer is "
      "$\\boxed{1}$.";

  SUBCASE("continue-sequential closes the degenerate block and keeps going") {
    QueueBackend backend(codec);
    backend.push(fork_text, FinishReason::StopMatched);
    backend.push(tail_text, FinishReason::EndOfSequence);
    Orchestrator orch(backend, codec);
    const RolloutTrace trace = orch.run("p");
    CHECK(trace.finish == RunFinish::Eos);
    CHECK(trace.response == fork_text + "</Parallel>" + tail_text);
    CHECK(trace.parallel_blocks == 1);
    REQUIRE(trace.violations.size() == 1);
    CHECK(trace.violations[0] == "zero_outline_fallback");
    REQUIRE(trace.units.size() == 2);
    CHECK(trace.units[0].kind == UnitKind::Sequential);
    CHECK(trace.units[1].kind == UnitKind::JoinContinuation);
  }

  SUBCASE("abort policy turns the fallback into an error") {
    QueueBackend backend(codec);
    backend.push(fork_text, FinishReason::StopMatched);
    OrchestratorConfig cfg;
    cfg.zero_outline_policy = ZeroOutlinePolicy::Abort;
    Orchestrator orch(backend, codec, cfg);
    const RolloutTrace trace = orch.run("p");
    CHECK(trace.finish == RunFinish::Error);
    CHECK(trace.error == "no outline entries parsed at fork point");
  }

  SUBCASE("garbled outline labels are not actionable") {
    QueueBackend backend(codec);
    backend.push("<think>\nx\n<Parallel>\n<Outlines>\n<Outline>2: only"
                 "</Outline>\n</Outlines>",
                 FinishReason::StopMatched);
    backend.push(tail_text, FinishReason::EndOfSequence);
    Orchestrator orch(backend, codec);
    const RolloutTrace trace = orch.run("p");
    CHECK(trace.finish == RunFinish::Eos);
    REQUIRE(trace.violations.size() == 1);
    CHECK(trace.violations[0] == "zero_outline_fallback");
  }
}

TEST_CASE("max_parallel_blocks disables forking after the cap") {
  WordCodec codec;
  MockBackend backend(codec);
  backend.add_script(fixtures::sum_prompt, fixtures::sum_response);
  OrchestratorConfig cfg;
  cfg.max_parallel_blocks = 1;
  Orchestrator orch(backend, codec, cfg);

  const RolloutTrace trace = orch.run(fixtures::sum_prompt);
  CHECK(trace.finish == RunFinish::Eos);
  CHECK(trace.parallel_blocks == 1);
  REQUIRE(trace.violations.size() == 1);
  CHECK(trace.violations[0] == "max_parallel_blocks_reached");

  // Block one ran; block two's fork point was sealed into a degenerate
  // block, then the stored continuation was replayed structurally.
  const std::string expected =
      fixtures::sum_seq1 + "<Thread> 1:" + fixtures::sum_b1t1 + "</Thread>" +
      "<Thread> 2:" + fixtures::sum_b1t2 + "</Thread>" + "</Parallel>" +
      fixtures::sum_seq2 + "</Parallel>" + fixtures::sum_tail;
  CHECK(trace.response == expected);
  REQUIRE(trace.units.size() == 5);
  CHECK(trace.units[3].kind == UnitKind::JoinContinuation);
  CHECK(trace.units[3].completion == fixtures::sum_seq2);
  CHECK(trace.units[4].completion == fixtures::sum_tail);
}

TEST_CASE("a failed thread aborts the rollout without committing the join") {
  WordCodec codec;
  MockBackend backend(codec, SimCostModel{1000, 0});
  backend.add_script(fixtures::distance_prompt, fixtures::distance_response);
  backend.set_fail_predicate([](const CompletionRequest& r) {
    return r.context.size() >= 11 &&
           r.context.compare(r.context.size() - 11, 11, "<Thread> 2:") == 0;
  });
  Orchestrator orch(backend, codec);

  const RolloutTrace trace = orch.run(fixtures::distance_prompt);
  CHECK(trace.finish == RunFinish::Error);
  CHECK(trace.error.find("thread 2 of block 1") != std::string::npos);
  REQUIRE(trace.units.size() == 2);
  CHECK(trace.units[0].kind == UnitKind::Sequential);
  CHECK(trace.units[1].kind == UnitKind::Thread);
  // The join never committed: the response holds the sequential prefix only.
  CHECK(trace.response == fixtures::distance_seq1);
  CHECK(trace.makespan_ns ==
        1000 * codec.count(fixtures::distance_seq1));
}

TEST_CASE("synthetic rollouts reproduce the generator byte for byte") {
  WordCodec codec;
  const std::uint64_t backend_seed = 424242;
  int parallel_runs = 0;
  for (int p = 0; p < 20; ++p) {
    const std::string prompt = "problem #" + std::to_string(p);
    MockBackend backend(codec, SimCostModel{1000, 0});
    backend.enable_synthetic(backend_seed);
    Orchestrator orch(backend, codec);
    const RolloutTrace trace = orch.run(prompt);
    CAPTURE(p);
    REQUIRE(trace.finish == RunFinish::Eos);
    const SyntheticTrajectory expected =
        synthetic_trajectory(backend_seed ^ fnv1a64(prompt));
    CHECK(trace.response == expected.response);
    CHECK(trace.violations.empty());

    const Trajectory t = parse(trace.response);
    CHECK(validate(t).format_valid());
    CHECK(trace.tokens.decoded_total() + trace.tokens.injected_glue_tokens ==
          codec.count(trace.response));
    const auto lat = oracles::oracle_latency(trace.response, codec);
    CHECK(trace.makespan_ns == 1000 * lat.latency);

    // Unit schedule: one opener, one thread per outline, one join per block.
    std::size_t expected_units = 1;
    for (const auto* b : t.blocks()) expected_units += b->threads.size() + 1;
    CHECK(trace.units.size() == expected_units);
    if (!t.blocks().empty()) ++parallel_runs;
  }
  CHECK(parallel_runs > 5);
}

TEST_CASE("thread budget policy is optimistic and clamped") {
  OrchestratorConfig cfg;
  CHECK(Orchestrator::thread_budget(100, 4, cfg) == 100);
  cfg.per_thread_cap = 10;
  CHECK(Orchestrator::thread_budget(100, 4, cfg) == 10);
  CHECK(Orchestrator::thread_budget(5, 4, cfg) == 5);
  CHECK(Orchestrator::thread_budget(-3, 2, cfg) == 0);
  cfg.per_thread_cap = std::nullopt;
  CHECK(Orchestrator::thread_budget(7, 1, cfg) == 7);
}
