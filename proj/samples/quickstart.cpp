// Minimal tour: run one fork-join rollout against the simulated backend,
// inspect its unit schedule and latency, and pack it for training.

#include <iostream>

#include "apr/apr.hpp"

int main() {
  apr::WordCodec codec;

  // A deterministic backend that invents a structurally valid trajectory
  // for any prompt (seeded), with a virtual clock at 1000 ns per token.
  apr::MockBackend backend(codec, {/*per_token_ns=*/1000,
                                   /*per_request_ns=*/50000});
  backend.enable_synthetic(/*seed=*/7);

  apr::Orchestrator orchestrator(backend, codec);
  const std::string prompt =
      "Prove the identity holds for n = 6. Put your answer in \\boxed{}.";
  const apr::RolloutTrace trace = orchestrator.run(prompt);

  std::cout << "finish: " << apr::to_string(trace.finish) << "\n"
            << "parallel blocks: " << trace.parallel_blocks << "\n"
            << "units:\n";
  for (const apr::UnitRecord& u : trace.units) {
    std::cout << "  " << apr::to_string(u.kind) << "  context="
              << u.context_tokens << " completion=" << u.completion_tokens
              << "\n";
  }

  // Critical-path accounting over the finished trajectory.
  apr::Trajectory t = apr::parse(trace.response);
  t.prompt = prompt;
  const apr::LatencyReport lat = apr::latency_report(t, codec);
  std::cout << "total tokens: " << lat.total_tokens
            << ", token latency: " << lat.token_latency
            << ", self-parallelism: " << lat.self_parallelism() << "\n"
            << "simulated makespan: " << trace.makespan_ns << " ns\n";

  // Trie-packed training sequence: one sequence, loss on each decoded
  // token exactly once, ancestor-only attention.
  const std::vector<apr::PackedSequence> packed =
      apr::pack_trajectory(t, codec);
  std::cout << "packed tokens: " << packed[0].size() << " across "
            << packed[0].node_table.size() << " trie nodes\n";
  return 0;
}
