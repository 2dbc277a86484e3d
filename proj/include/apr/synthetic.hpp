#pragma once

// Seeded synthetic trajectory generator.
//
// Produces well-formed fork-join responses with machine-faithful glue: each
// sequential stretch ends exactly at "</Outlines>", thread seeds follow the
// given template, the join appends "</Parallel>" with no filler.  Used by
// the synthetic mock backend and by property tests that need large numbers
// of structurally valid trajectories.  Determinism contract: same seed and
// options, same bytes, on any platform (no std::*_distribution involved).

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace apr {

// splitmix64: tiny, portable, and plenty for test-data generation.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [lo, hi] inclusive; lo <= hi.
  std::int64_t range(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next() % span);
  }

  double unit() {  // [0, 1)
    return static_cast<double>(next() >> 11) * (1.0 / 9007199254740992.0);
  }

 private:
  std::uint64_t state_;
};

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

struct SyntheticOptions {
  int min_blocks = 0;
  int max_blocks = 3;
  int min_threads = 1;
  int max_threads = 4;
  int min_seq_words = 4;
  int max_seq_words = 24;
  int min_thread_words = 3;
  int max_thread_words = 30;
  std::string thread_seed_template = "<Thread> {i}:";  // "{i}" -> ordinal
};

struct SyntheticTrajectory {
  std::string response;
  std::string answer;  // the value inside the final \boxed{...}
};

namespace detail {

inline void append_words(SplitMix64* rng, int n, std::string* out) {
  for (int i = 0; i < n; ++i) {
    if (i > 0) *out += ' ';
    *out += 'w';
    *out += std::to_string(rng->range(0, 9999));
  }
}

inline std::string instantiate_seed(const std::string& tmpl, int ordinal) {
  std::string seed = tmpl;
  const std::size_t p = seed.find("{i}");
  if (p != std::string::npos) seed.replace(p, 3, std::to_string(ordinal));
  return seed;
}

}  // namespace detail

inline SyntheticTrajectory synthetic_trajectory(std::uint64_t seed,
                                                const SyntheticOptions& opt = {}) {
  SplitMix64 rng(seed);
  SyntheticTrajectory out;
  out.answer = std::to_string(rng.range(0, 999));

  std::string& r = out.response;
  r = "<think>\n";
  detail::append_words(&rng, static_cast<int>(rng.range(opt.min_seq_words,
                                                        opt.max_seq_words)),
                       &r);

  const int n_blocks =
      static_cast<int>(rng.range(opt.min_blocks, opt.max_blocks));
  for (int b = 0; b < n_blocks; ++b) {
    const int n_threads =
        static_cast<int>(rng.range(opt.min_threads, opt.max_threads));
    // The fork preamble is ordinary sequential text ending at </Outlines>.
    r += "\n<Parallel>\n<Outlines>\n";
    for (int i = 1; i <= n_threads; ++i) {
      r += "<Outline>" + std::to_string(i) + ": step ";
      detail::append_words(&rng, 2, &r);
      r += "</Outline>\n";
    }
    r += "</Outlines>";
    // Threads: seed exactly from the template, body, close tag, no filler.
    for (int i = 1; i <= n_threads; ++i) {
      r += detail::instantiate_seed(opt.thread_seed_template, i);
      r += ' ';
      detail::append_words(
          &rng,
          static_cast<int>(rng.range(opt.min_thread_words,
                                     opt.max_thread_words)),
          &r);
      r += "</Thread>";
    }
    r += "</Parallel>";
    // Join continuation resumes as sequential text.
    r += "\n";
    detail::append_words(&rng, static_cast<int>(rng.range(opt.min_seq_words,
                                                          opt.max_seq_words)),
                         &r);
  }

  r += "\nTherefore, the answer is \\boxed{" + out.answer + "}.\n</think>\n";
  r += "The answer is $\\boxed{" + out.answer + "}$.";
  return out;
}

}  // namespace apr
