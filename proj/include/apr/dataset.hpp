#pragma once

// Corpus records, the keep/drop filter, and annotation helpers used when
// converting sequential reasoning traces into fork-join form.
//
// A record survives filtering only if its response is format-valid and its
// final boxed answer verifies against the gold answer; optional length and
// acceleration floors drop correct-but-unhelpful traces.  Every drop carries
// a single machine-readable reason code (the first failure wins).

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "apr/answer.hpp"
#include "apr/codec.hpp"
#include "apr/metrics.hpp"
#include "apr/trajectory.hpp"

namespace apr {

struct CorpusRecord {
  std::string prompt;
  std::string response;
  std::string gold_answer;  // empty = absent
  std::string meta_json;    // opaque passthrough, empty = absent
};

struct FilterOptions {
  ParseOptions parse;
  // Drop responses longer than this many tokens (needs a codec).
  std::optional<std::int64_t> max_response_tokens;
  // Drop parallel traces whose acceleration ratio falls below this floor
  // (needs a codec).  Purely sequential traces are exempt.
  std::optional<double> min_acceleration;
};

struct FilterResult {
  bool kept = false;
  std::string reason;  // empty when kept; a single SCREAMING_SNAKE code
  Trajectory trajectory;
};

inline FilterResult filter_record(const CorpusRecord& rec,
                                  const AnswerVerifier& verifier,
                                  const FilterOptions& opts = {},
                                  const TokenCodec* codec = nullptr) {
  FilterResult out;
  out.trajectory = parse(rec.response, opts.parse);
  out.trajectory.prompt = rec.prompt;

  const ValidationReport report = validate(out.trajectory);
  if (!report.format_valid()) {
    out.reason = std::string(to_string(report.violations.front().code));
    return out;
  }
  if (rec.gold_answer.empty()) {
    out.reason = "MISSING_GOLD_ANSWER";
    return out;
  }
  const std::optional<std::string> boxed = extract_boxed_answer(rec.response);
  if (!boxed) {
    out.reason = "MISSING_BOXED_ANSWER";
    return out;
  }
  if (!verifier.equivalent(*boxed, rec.gold_answer)) {
    out.reason = "INCORRECT_ANSWER";
    return out;
  }
  if (codec && (opts.max_response_tokens || opts.min_acceleration)) {
    const LatencyReport lat = latency_report(out.trajectory, *codec);
    if (opts.max_response_tokens &&
        lat.total_tokens > *opts.max_response_tokens) {
      out.reason = "LENGTH_CONSTRAINT";
      return out;
    }
    if (opts.min_acceleration && lat.parallel_activated() &&
        lat.total_tokens > 0) {
      const double eta = 1.0 - static_cast<double>(lat.token_latency) /
                                   static_cast<double>(lat.total_tokens);
      if (eta < *opts.min_acceleration) {
        out.reason = "ACCELERATION_CONSTRAINT";
        return out;
      }
    }
  }
  out.kept = true;
  return out;
}

// Reward-filtered self-training: keep a model's own rollouts only when they
// are format-valid and answer-correct, logging one reason per drop.
struct RejectionLogEntry {
  std::size_t index = 0;  // position in the input corpus
  std::string reason;
};

struct SelfTrainingCorpus {
  std::vector<CorpusRecord> kept;
  std::vector<RejectionLogEntry> rejections;
};

inline SelfTrainingCorpus filter_self_training(
    std::span<const CorpusRecord> records, const AnswerVerifier& verifier,
    const FilterOptions& opts = {}, const TokenCodec* codec = nullptr) {
  SelfTrainingCorpus out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    FilterResult r = filter_record(records[i], verifier, opts, codec);
    if (r.kept) {
      out.kept.push_back(records[i]);
    } else {
      out.rejections.push_back({i, std::move(r.reason)});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Annotation helpers: line numbering, range wrapping, tag rewriting.

// Prefixes every line with "Lk: " (1-based), the addressing scheme used when
// asking an annotator to point at line ranges.
inline std::string add_line_numbers(const std::string& text) {
  std::string out;
  out.reserve(text.size() + text.size() / 8 + 8);
  std::size_t line = 1;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    const bool last = nl == std::string::npos;
    const std::size_t end = last ? text.size() : nl;
    if (!last || end > start || line == 1) {
      out += "L" + std::to_string(line) + ": ";
      out.append(text, start, end - start);
      if (!last) out += '\n';
    }
    if (last) break;
    start = nl + 1;
    ++line;
  }
  return out;
}

// Inverse of add_line_numbers; lines without the prefix pass through.
inline std::string strip_line_numbers(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    const bool last = nl == std::string::npos;
    const std::size_t end = last ? text.size() : nl;
    std::size_t body = start;
    if (body < end && text[body] == 'L') {
      std::size_t p = body + 1;
      while (p < end && text[p] >= '0' && text[p] <= '9') ++p;
      if (p > body + 1 && p + 1 < end && text[p] == ':' &&
          text[p + 1] == ' ') {
        body = p + 2;
      } else if (p > body + 1 && p + 1 == end && text[p] == ':') {
        body = end;  // numbered empty line, "Lk:" with the space trimmed
      }
    }
    out.append(text, body, end - body);
    if (last) break;
    out += '\n';
    start = nl + 1;
  }
  return out;
}

// A 1-based inclusive line range designating one thread's body.
struct LineRange {
  int first = 0;
  int last = 0;
};

// Rewrites a block of sequential reasoning into a parallel block: the lines
// of each range become one thread, wrapped in tags on their own lines, with
// an outline section synthesized from the given summaries.  Ranges must be
// in order, contiguous (each starts right after the previous ends) and in
// bounds; outlines must pair up with ranges one to one.  Lines before the
// first range and after the last stay sequential.
inline std::string wrap_threads(const std::string& text,
                                std::span<const LineRange> threads,
                                std::span<const std::string> outlines) {
  if (threads.empty()) {
    throw std::invalid_argument("COUNT_MISMATCH: no thread ranges given");
  }
  if (threads.size() != outlines.size()) {
    throw std::invalid_argument(
        "COUNT_MISMATCH: " + std::to_string(threads.size()) +
        " ranges vs " + std::to_string(outlines.size()) + " outlines");
  }

  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t nl = text.find('\n', start);
    if (nl == std::string::npos) {
      lines.emplace_back(text, start, text.size() - start);
      break;
    }
    lines.emplace_back(text, start, nl - start);
    start = nl + 1;
  }
  const int n_lines = static_cast<int>(lines.size());

  for (std::size_t i = 0; i < threads.size(); ++i) {
    const LineRange& r = threads[i];
    if (r.first < 1 || r.last > n_lines || r.first > r.last) {
      throw std::invalid_argument(
          "RANGE_OUT_OF_BOUNDS: lines " + std::to_string(r.first) + ".." +
          std::to_string(r.last) + " of " + std::to_string(n_lines));
    }
    if (i > 0 && r.first != threads[i - 1].last + 1) {
      throw std::invalid_argument(
          "CONTIGUITY_VIOLATION: range " + std::to_string(i + 1) +
          " starts at line " + std::to_string(r.first) +
          ", expected line " + std::to_string(threads[i - 1].last + 1));
    }
  }

  std::string out;
  for (int l = 0; l < threads.front().first - 1; ++l) {
    out += lines[static_cast<std::size_t>(l)];
    out += '\n';
  }
  out += "<Parallel>\n<Outlines>\n";
  for (std::size_t i = 0; i < outlines.size(); ++i) {
    out += "<Outline>" + std::to_string(i + 1) + ": " + outlines[i] +
           "</Outline>\n";
  }
  out += "</Outlines>\n";
  for (std::size_t i = 0; i < threads.size(); ++i) {
    out += "<Thread> " + std::to_string(i + 1) + ":\n";
    for (int l = threads[i].first; l <= threads[i].last; ++l) {
      out += lines[static_cast<std::size_t>(l - 1)];
      out += '\n';
    }
    out += "</Thread>\n";
  }
  out += "</Parallel>";
  if (threads.back().last < n_lines) {
    out += '\n';
    for (int l = threads.back().last; l < n_lines; ++l) {
      out += lines[static_cast<std::size_t>(l)];
      if (l + 1 < n_lines) out += '\n';
    }
  }
  return out;
}

// Single left-to-right pass; at each byte the longest matching pattern wins,
// ties broken by list order.  Replaced text is never rescanned.
struct Replacement {
  std::string pattern;
  std::string replacement;
};

inline std::string apply_replacements(const std::string& text,
                                      std::span<const Replacement> rules) {
  for (const Replacement& r : rules) {
    if (r.pattern.empty()) {
      throw std::invalid_argument("empty replacement pattern");
    }
  }
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const Replacement* best = nullptr;
    for (const Replacement& r : rules) {
      if ((best == nullptr || r.pattern.size() > best->pattern.size()) &&
          text.compare(i, r.pattern.size(), r.pattern) == 0) {
        best = &r;
      }
    }
    if (best) {
      out += best->replacement;
      i += best->pattern.size();
    } else {
      out += text[i++];
    }
  }
  return out;
}

// Rewrites legacy <Goal>/<Path> markup to the canonical tag set.
inline std::string canonicalize_tags(const std::string& text) {
  static const std::vector<Replacement> rules = {
      {"<Goal>", "<Outlines>"},
      {"</Goal>", "</Outlines>"},
      {"<Path>", "<Thread>"},
      {"</Path>", "</Thread>"},
  };
  return apply_replacements(text, rules);
}

// ---------------------------------------------------------------------------
// Annotator seam: proposes a fork-join rewrite of a sequential record, or
// declines.  Production annotators call a model; tests script the mapping.

class Annotator {
 public:
  virtual ~Annotator() = default;
  virtual std::optional<std::string> annotate(const CorpusRecord& rec) = 0;
};

class ScriptedAnnotator final : public Annotator {
 public:
  void add(std::string prompt, std::string rewritten_response) {
    script_[std::move(prompt)] = std::move(rewritten_response);
  }

  std::optional<std::string> annotate(const CorpusRecord& rec) override {
    const auto it = script_.find(rec.prompt);
    if (it == script_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::map<std::string, std::string> script_;
};

}  // namespace apr
