#pragma once

// Critical-path latency accounting and corpus statistics.
//
// Decoding cost is modeled in tokens.  Sequential text — including outline
// sections, inter-tag filler and each "</Parallel>" — costs its full token
// count; the threads of a parallel block decode concurrently, so the block
// contributes only its longest thread span to the critical path.  A thread
// span runs from its "<Thread>" tag through its "</Thread>" inclusive.
//
//   token_latency = sequential + sum over blocks of max thread span
//   total_tokens  = sequential + sum over blocks of sum of thread spans
//   self-parallelism = total_tokens / token_latency   (1.0 when no blocks)

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "apr/codec.hpp"
#include "apr/trajectory.hpp"

namespace apr {

struct BlockLatency {
  std::vector<std::int64_t> span_tokens;  // per thread, in outline order
  std::int64_t max_span = 0;
  std::int64_t sum_span = 0;
  std::int64_t n_threads = 0;
};

struct LatencyReport {
  std::int64_t sequential_tokens = 0;
  std::int64_t token_latency = 0;  // critical-path tokens
  std::int64_t total_tokens = 0;   // all decoded tokens
  std::vector<BlockLatency> blocks;

  bool parallel_activated() const { return !blocks.empty(); }

  double self_parallelism() const {
    if (token_latency <= 0) return 1.0;
    return static_cast<double>(total_tokens) /
           static_cast<double>(token_latency);
  }
};

// Measures the response only; the prompt is prefill, not decoding.
inline LatencyReport latency_report(const Trajectory& t,
                                    const TokenCodec& codec) {
  LatencyReport r;
  for (const Segment& seg : t.segments) {
    if (const auto* s = std::get_if<SequentialSegment>(&seg)) {
      r.sequential_tokens += codec.count(s->text);
      continue;
    }
    const auto& b = std::get<ParallelBlock>(seg);
    r.sequential_tokens += codec.count(b.header);
    BlockLatency bl;
    for (const ThreadSpan& th : b.threads) {
      // Filler between tags decodes on the main path, not inside the span.
      r.sequential_tokens += codec.count(th.filler);
      const std::int64_t span = codec.count(th.seed + th.body + th.close_tag);
      bl.span_tokens.push_back(span);
      bl.sum_span += span;
      bl.max_span = std::max(bl.max_span, span);
    }
    bl.n_threads = static_cast<std::int64_t>(b.threads.size());
    r.sequential_tokens += codec.count(b.trailer);
    r.blocks.push_back(std::move(bl));
  }
  r.token_latency = r.sequential_tokens;
  r.total_tokens = r.sequential_tokens;
  for (const BlockLatency& bl : r.blocks) {
    r.token_latency += bl.max_span;
    r.total_tokens += bl.sum_span;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Cross-method speedup aggregation.

struct LatencySample {
  double latency = 0.0;
  bool correct = false;
};

struct ProblemLatencies {
  std::string id;
  std::vector<LatencySample> baseline;
  std::vector<LatencySample> ours;
};

struct SpeedupAggregate {
  // Per-problem speedups: mean baseline latency / mean of ours.  A problem
  // contributes only when both sides have samples (after any restriction).
  std::vector<double> per_problem_all;
  std::vector<double> per_problem_correct;  // correct samples only
  std::size_t problems_all = 0;
  std::size_t problems_correct = 0;
  double mean_speedup_all = std::numeric_limits<double>::quiet_NaN();
  double mean_speedup_correct = std::numeric_limits<double>::quiet_NaN();
  double max_speedup_correct = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline double mean_latency(std::span<const LatencySample> samples,
                           bool correct_only, std::size_t* n_used) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const LatencySample& s : samples) {
    if (correct_only && !s.correct) continue;
    sum += s.latency;
    ++n;
  }
  if (n_used) *n_used = n;
  return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

}  // namespace detail

inline SpeedupAggregate aggregate_speedups(
    std::span<const ProblemLatencies> problems) {
  SpeedupAggregate agg;
  for (const ProblemLatencies& p : problems) {
    std::size_t nb = 0, no = 0;
    const double base_all = detail::mean_latency(p.baseline, false, &nb);
    const double ours_all = detail::mean_latency(p.ours, false, &no);
    if (nb > 0 && no > 0 && ours_all > 0.0) {
      agg.per_problem_all.push_back(base_all / ours_all);
    }
    const double base_c = detail::mean_latency(p.baseline, true, &nb);
    const double ours_c = detail::mean_latency(p.ours, true, &no);
    if (nb > 0 && no > 0 && ours_c > 0.0) {
      agg.per_problem_correct.push_back(base_c / ours_c);
    }
  }
  agg.problems_all = agg.per_problem_all.size();
  agg.problems_correct = agg.per_problem_correct.size();
  agg.mean_speedup_all = detail::mean_of(agg.per_problem_all);
  agg.mean_speedup_correct = detail::mean_of(agg.per_problem_correct);
  if (!agg.per_problem_correct.empty()) {
    agg.max_speedup_correct = *std::max_element(
        agg.per_problem_correct.begin(), agg.per_problem_correct.end());
  }
  return agg;
}

// ---------------------------------------------------------------------------
// Histograms (fixed-width bins, CSV emission).

struct Histogram {
  double bin_width = 0.1;
  double lo = 0.0;  // left edge of counts[0]
  std::vector<std::int64_t> counts;
};

inline Histogram histogram(std::span<const double> values,
                           double bin_width = 0.1) {
  Histogram h;
  h.bin_width = bin_width;
  if (values.empty() || bin_width <= 0.0) return h;
  double lo = values[0], hi = values[0];
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  h.lo = std::floor(lo / bin_width) * bin_width;
  const auto bins = static_cast<std::size_t>(
      std::floor((hi - h.lo) / bin_width)) + 1;
  h.counts.assign(bins, 0);
  for (double v : values) {
    auto idx = static_cast<std::size_t>(std::floor((v - h.lo) / bin_width));
    if (idx >= bins) idx = bins - 1;  // hi landing on the top edge
    ++h.counts[idx];
  }
  return h;
}

inline std::string histogram_csv(const Histogram& h) {
  std::string out = "bin_start,bin_end,count\n";
  char buf[96];
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    const double a = h.lo + h.bin_width * static_cast<double>(i);
    const double b = a + h.bin_width;
    std::snprintf(buf, sizeof(buf), "%.6g,%.6g,%lld\n", a, b,
                  static_cast<long long>(h.counts[i]));
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corpus-level statistics, streamed one trajectory at a time.

class DatasetStatsAccumulator {
 public:
  void add(const LatencyReport& r) {
    ++trajectories_;
    total_tokens_ += static_cast<double>(r.total_tokens);
    latency_tokens_ += static_cast<double>(r.token_latency);
    sequential_tokens_ += static_cast<double>(r.sequential_tokens);
    self_parallelism_sum_ += r.self_parallelism();
    if (r.parallel_activated()) {
      ++parallel_trajectories_;
      self_parallelism_parallel_sum_ += r.self_parallelism();
    }
    blocks_ += static_cast<double>(r.blocks.size());
    double block_tokens = 0.0;
    for (const BlockLatency& bl : r.blocks) {
      threads_ += static_cast<double>(bl.n_threads);
      thread_tokens_ += static_cast<double>(bl.sum_span);
      block_tokens += static_cast<double>(bl.sum_span);
    }
    if (r.total_tokens > 0) {
      parallel_token_ratio_sum_ +=
          block_tokens / static_cast<double>(r.total_tokens);
    }
  }

  void add(const Trajectory& t, const TokenCodec& codec) {
    add(latency_report(t, codec));
  }

  std::size_t trajectories() const { return trajectories_; }

  // Flat key/value summary in a stable emission order.
  std::vector<std::pair<std::string, double>> summary() const {
    const double n = trajectories_ > 0
                         ? static_cast<double>(trajectories_)
                         : 1.0;
    std::vector<std::pair<std::string, double>> out;
    out.emplace_back("trajectories", static_cast<double>(trajectories_));
    out.emplace_back("parallel_trajectories",
                     static_cast<double>(parallel_trajectories_));
    out.emplace_back("parallel_activation_rate",
                     static_cast<double>(parallel_trajectories_) / n);
    out.emplace_back("mean_total_tokens", total_tokens_ / n);
    out.emplace_back("mean_token_latency", latency_tokens_ / n);
    out.emplace_back("mean_sequential_tokens", sequential_tokens_ / n);
    // Mean of per-trajectory total/latency ratios; the ratio-of-sums variant
    // answers "what did the whole corpus pay" and is reported alongside.
    out.emplace_back("self_parallelism", self_parallelism_sum_ / n);
    out.emplace_back(
        "self_parallelism_parallel_only",
        parallel_trajectories_ > 0
            ? self_parallelism_parallel_sum_ /
                  static_cast<double>(parallel_trajectories_)
            : 1.0);
    out.emplace_back("self_parallelism_ratio_of_sums",
                     latency_tokens_ > 0.0 ? total_tokens_ / latency_tokens_
                                           : 1.0);
    out.emplace_back("mean_blocks_per_trajectory", blocks_ / n);
    out.emplace_back("mean_threads_per_block",
                     blocks_ > 0.0 ? threads_ / blocks_ : 0.0);
    out.emplace_back("mean_tokens_per_thread",
                     threads_ > 0.0 ? thread_tokens_ / threads_ : 0.0);
    out.emplace_back("parallel_token_ratio", parallel_token_ratio_sum_ / n);
    return out;
  }

 private:
  std::size_t trajectories_ = 0;
  std::size_t parallel_trajectories_ = 0;
  double total_tokens_ = 0.0;
  double latency_tokens_ = 0.0;
  double sequential_tokens_ = 0.0;
  double self_parallelism_sum_ = 0.0;
  double self_parallelism_parallel_sum_ = 0.0;
  double blocks_ = 0.0;
  double threads_ = 0.0;
  double thread_tokens_ = 0.0;
  double parallel_token_ratio_sum_ = 0.0;
};

}  // namespace apr
