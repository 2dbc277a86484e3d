#pragma once

// Parallelization-aware rewards and group-relative advantages.
//
// A rollout earns reward only when its boxed answer is correct; a correct
// rollout earns a bonus for finishing in fewer critical-path tokens:
//
//   eta    = 1 - token_latency / total_tokens      (acceleration ratio)
//   reward = correct ? 1 + min(rho * eta, rho_clip) : 0
//
// Advantages are computed within a sampling group, either mean-centered
// (A = r - mean) or sigma-normalized (A = (r - mean) / (stddev + epsilon),
// population stddev).  Per-token loss weights divide each rollout's
// advantage by the total completion-token count of its training batch.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace apr {

enum class AdvantageMode {
  MeanCentered,
  SigmaNormalized,
};

struct RewardConfig {
  double rho = 0.5;        // bonus slope on the acceleration ratio
  double rho_clip = 0.2;   // bonus ceiling
  double epsilon = 1e-6;   // sigma-normalization stabilizer
  AdvantageMode mode = AdvantageMode::MeanCentered;
};

// eta in [0, 1): the fraction of decoded tokens taken off the critical path.
inline double acceleration_ratio(std::int64_t total_tokens,
                                 std::int64_t token_latency) {
  if (total_tokens <= 0) {
    throw std::domain_error("acceleration ratio needs total_tokens > 0");
  }
  if (token_latency <= 0 || token_latency > total_tokens) {
    throw std::domain_error(
        "token_latency must lie in [1, total_tokens]; got " +
        std::to_string(token_latency) + " of " +
        std::to_string(total_tokens));
  }
  return 1.0 - static_cast<double>(token_latency) /
                   static_cast<double>(total_tokens);
}

inline double parallel_reward(bool correct, std::int64_t total_tokens,
                              std::int64_t token_latency,
                              const RewardConfig& cfg = {}) {
  if (!correct) return 0.0;
  const double eta = acceleration_ratio(total_tokens, token_latency);
  return 1.0 + std::min(cfg.rho * eta, cfg.rho_clip);
}

struct GroupAdvantages {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
  std::vector<double> advantages;
};

inline GroupAdvantages group_advantages(std::span<const double> rewards,
                                        const RewardConfig& cfg = {}) {
  if (rewards.size() < 2) {
    throw std::invalid_argument(
        "a sampling group needs at least 2 rollouts; got " +
        std::to_string(rewards.size()));
  }
  GroupAdvantages g;
  const auto k = static_cast<double>(rewards.size());
  for (double r : rewards) g.mean += r;
  g.mean /= k;
  double var = 0.0;
  for (double r : rewards) {
    const double d = r - g.mean;
    var += d * d;
  }
  g.stddev = std::sqrt(var / k);

  g.advantages.reserve(rewards.size());
  const double denom = g.stddev + cfg.epsilon;
  for (double r : rewards) {
    const double centered = r - g.mean;
    if (cfg.mode == AdvantageMode::MeanCentered) {
      g.advantages.push_back(centered);
    } else if (denom == 0.0) {
      // All rewards identical and epsilon zero: no signal, not a blow-up.
      g.advantages.push_back(0.0);
    } else {
      g.advantages.push_back(centered / denom);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Per-token loss weights over a training batch.

struct TokenWeight {
  std::int64_t completion_tokens = 0;
  double weight_per_token = 0.0;  // advantage / batch completion-token total
};

struct BatchWeights {
  std::int64_t normalizer = 0;  // total completion tokens across the batch
  std::vector<TokenWeight> records;  // one per rollout, input order
};

inline BatchWeights emit_token_weights(
    std::span<const double> advantages,
    std::span<const std::int64_t> completion_tokens) {
  if (advantages.size() != completion_tokens.size()) {
    throw std::invalid_argument(
        "advantages and completion-token counts must pair up");
  }
  BatchWeights out;
  for (std::int64_t n : completion_tokens) {
    if (n < 0) throw std::invalid_argument("negative completion-token count");
    out.normalizer += n;
  }
  out.records.reserve(advantages.size());
  for (std::size_t i = 0; i < advantages.size(); ++i) {
    TokenWeight w;
    w.completion_tokens = completion_tokens[i];
    w.weight_per_token =
        out.normalizer > 0
            ? advantages[i] / static_cast<double>(out.normalizer)
            : 0.0;
    out.records.push_back(w);
  }
  return out;
}

}  // namespace apr
