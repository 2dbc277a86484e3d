#pragma once

// Trajectory model for fork-join reasoning traces.
//
// A trajectory's response is plain text in which single-level parallel
// blocks may appear:
//
//   <think> ...sequential text...
//   <Parallel>
//     <Outlines> <Outline>1: ...</Outline> ... </Outlines>
//     <Thread>1: ...</Thread> ... <Thread>n: ...</Thread>
//   </Parallel>
//   ...sequential text... </think> ...final answer text...
//
// parse() is total: it never throws on malformed input, it segments what it
// can and keeps the rest as raw bytes, and flatten() always reconstructs the
// original response byte-for-byte.  validate() reports structural rule
// violations against the parsed form; only trajectories with an empty
// violation list are "format-valid" and eligible for unit extraction,
// packing, and self-training.

#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "apr/codec.hpp"

namespace apr {

struct Outline {
  int index = 0;     // parsed ordinal label, 0 when missing/unparseable
  std::string text;  // entry text after the "N:" label, trimmed
};

// One <Thread>..</Thread> span plus the block-level filler that precedes it.
// Flattened bytes: filler + seed + body + close_tag.
struct ThreadSpan {
  int index = 0;          // parsed ordinal label, 0 when missing
  std::string filler;     // text between the previous span and the open tag
  std::string seed;       // open tag through the label colon, e.g. "<Thread> 1:"
  std::string body;       // text between the seed and the close tag
  std::string close_tag;  // exact close-tag bytes, empty when unclosed
  bool closed = true;
};

struct ParallelBlock {
  std::string header;   // "<Parallel>" through "</Outlines>" inclusive (raw)
  std::vector<Outline> outlines;
  std::vector<ThreadSpan> threads;
  std::string trailer;  // text after the last thread through "</Parallel>"
};

struct SequentialSegment {
  std::string text;
};

using Segment = std::variant<SequentialSegment, ParallelBlock>;

struct Trajectory {
  std::string prompt;    // optional; supplied by the record loader
  std::string response;  // raw bytes, authoritative
  std::vector<Segment> segments;  // concatenation reproduces response
  // Byte offset of the end of the last "</think>" in response, or npos.
  std::size_t think_close_end = std::string::npos;

  bool has_think_close() const { return think_close_end != std::string::npos; }
  std::string_view post_think_text() const {
    if (!has_think_close()) return {};
    return std::string_view(response).substr(think_close_end);
  }

  // Read-only view of the parallel blocks, in order of appearance.
  std::vector<const ParallelBlock*> blocks() const {
    std::vector<const ParallelBlock*> out;
    for (const Segment& seg : segments) {
      if (const auto* b = std::get_if<ParallelBlock>(&seg)) out.push_back(b);
    }
    return out;
  }
};

struct ParseOptions {
  // Recognize legacy markup: <Goal> as an alias for the <Outlines> section
  // wrapper and <Path> as an alias for <Thread> spans.
  bool goal_path_alias = false;
};

enum class ValidationCode {
  UnbalancedTag,
  NestedParallel,
  NestedThread,
  ThreadOutsideParallel,
  CountMismatch,
  EmptyThreadBody,
  EmptyOutline,
  MalformedOutline,
  NonMonotoneLabels,
  MissingOutlines,
  EmptyParallelBlock,
  MissingThinkClose,
};

inline std::string_view to_string(ValidationCode c) {
  switch (c) {
    case ValidationCode::UnbalancedTag: return "UNBALANCED_TAG";
    case ValidationCode::NestedParallel: return "NESTED_PARALLEL";
    case ValidationCode::NestedThread: return "NESTED_THREAD";
    case ValidationCode::ThreadOutsideParallel: return "THREAD_OUTSIDE_PARALLEL";
    case ValidationCode::CountMismatch: return "COUNT_MISMATCH";
    case ValidationCode::EmptyThreadBody: return "EMPTY_THREAD_BODY";
    case ValidationCode::EmptyOutline: return "EMPTY_OUTLINE";
    case ValidationCode::MalformedOutline: return "MALFORMED_OUTLINE";
    case ValidationCode::NonMonotoneLabels: return "NON_MONOTONE_LABELS";
    case ValidationCode::MissingOutlines: return "MISSING_OUTLINES";
    case ValidationCode::EmptyParallelBlock: return "EMPTY_PARALLEL_BLOCK";
    case ValidationCode::MissingThinkClose: return "MISSING_THINK_CLOSE";
  }
  return "UNKNOWN";
}

struct Violation {
  ValidationCode code;
  std::string message;
  std::size_t offset = 0;  // best-effort byte offset into response
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool format_valid() const { return violations.empty(); }
};

namespace detail {

// Parses "<ws>* digits ':'" starting at pos.  On success returns the index
// value and sets end to one past the colon; otherwise returns nullopt.
inline std::optional<int> parse_ordinal_label(std::string_view s,
                                              std::size_t pos,
                                              std::size_t* end) {
  std::size_t i = pos;
  while (i < s.size() && is_space(s[i])) ++i;
  const std::size_t digits = i;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i == digits || i >= s.size() || s[i] != ':') return std::nullopt;
  int value = 0;
  for (std::size_t k = digits; k < i; ++k) {
    value = value * 10 + (s[k] - '0');
    if (value > 1'000'000) return std::nullopt;  // absurd label
  }
  *end = i + 1;
  return value;
}

struct ThreadTagSet {
  std::string_view open;
  std::string_view close;
};

// Entries are always "<Outline>".."</Outline>"; the section wrapper around
// them may be "<Outlines>" or, under the legacy alias, "<Goal>".
inline void parse_outlines(std::string_view header,
                           std::vector<Outline>* out) {
  std::size_t pos = 0;
  while (pos < header.size()) {
    const std::size_t best = header.find(tags::outline_open, pos);
    if (best == std::string_view::npos) break;
    const std::size_t body_start = best + tags::outline_open.size();
    const std::size_t close = header.find(tags::outline_close, body_start);
    if (close == std::string_view::npos) break;  // validator flags via counts
    std::string_view content = header.substr(body_start, close - body_start);
    Outline o;
    std::size_t label_end = 0;
    if (auto idx = parse_ordinal_label(content, 0, &label_end)) {
      o.index = *idx;
      o.text = std::string(trim(content.substr(label_end)));
    } else {
      o.index = 0;
      o.text = std::string(trim(content));
    }
    out->push_back(std::move(o));
    pos = close + tags::outline_close.size();
  }
}

inline ParallelBlock parse_block(std::string_view raw, bool alias) {
  // raw covers "<Parallel>" .. "</Parallel>" inclusive.
  ParallelBlock block;
  const std::string_view body =
      raw.substr(0, raw.size() - tags::parallel_close.size());

  std::size_t header_end;
  std::size_t oc = body.find(tags::outlines_close);
  std::size_t oc_len = tags::outlines_close.size();
  if (alias) {
    const std::size_t gc = body.find(tags::goal_close);
    if (gc < oc) {
      oc = gc;
      oc_len = tags::goal_close.size();
    }
  }
  if (oc != std::string_view::npos) {
    header_end = oc + oc_len;
  } else {
    header_end = tags::parallel_open.size();
  }
  block.header = std::string(body.substr(0, header_end));
  parse_outlines(block.header, &block.outlines);

  const ThreadTagSet kinds[2] = {{tags::thread_open, tags::thread_close},
                                 {tags::path_open, tags::path_close}};
  const int n_kinds = alias ? 2 : 1;
  std::size_t cur = header_end;
  while (cur < body.size()) {
    std::size_t best = std::string_view::npos;
    int kind = -1;
    for (int k = 0; k < n_kinds; ++k) {
      const std::size_t p = body.find(kinds[k].open, cur);
      if (p < best) {
        best = p;
        kind = k;
      }
    }
    if (kind < 0 || best == std::string_view::npos) break;

    ThreadSpan t;
    t.filler = std::string(body.substr(cur, best - cur));
    std::size_t body_start = best + kinds[kind].open.size();
    std::size_t label_end = 0;
    if (auto idx = parse_ordinal_label(body, body_start, &label_end)) {
      t.index = *idx;
      t.seed = std::string(body.substr(best, label_end - best));
      body_start = label_end;
    } else {
      t.index = 0;
      t.seed = std::string(kinds[kind].open);
    }
    const std::size_t close = body.find(kinds[kind].close, body_start);
    if (close != std::string_view::npos) {
      t.body = std::string(body.substr(body_start, close - body_start));
      t.close_tag = std::string(kinds[kind].close);
      t.closed = true;
      cur = close + kinds[kind].close.size();
    } else {
      t.body = std::string(body.substr(body_start));
      t.closed = false;
      cur = body.size();
    }
    block.threads.push_back(std::move(t));
  }
  block.trailer = std::string(body.substr(cur)) +
                  std::string(tags::parallel_close);
  return block;
}

}  // namespace detail

// Total parser: segments the response into sequential text and parallel
// blocks.  A "<Parallel>" without a matching "</Parallel>" is left in
// sequential text (the validator flags it).  Nested "<Parallel>" tags end up
// inside the enclosing block's raw pieces and are likewise flagged, never
// parsed as structure.
inline Trajectory parse(std::string response, ParseOptions opts = {}) {
  Trajectory t;
  t.response = std::move(response);
  const std::string_view text = t.response;

  std::size_t pos = 0;
  std::size_t seq_start = 0;
  while (true) {
    const std::size_t p = text.find(tags::parallel_open, pos);
    if (p == std::string_view::npos) break;
    const std::size_t q =
        text.find(tags::parallel_close, p + tags::parallel_open.size());
    if (q == std::string_view::npos) break;  // unclosed: stays sequential
    if (p > seq_start) {
      t.segments.push_back(
          SequentialSegment{std::string(text.substr(seq_start, p - seq_start))});
    }
    const std::size_t block_end = q + tags::parallel_close.size();
    t.segments.push_back(detail::parse_block(
        text.substr(p, block_end - p), opts.goal_path_alias));
    pos = seq_start = block_end;
  }
  if (seq_start < text.size() || t.segments.empty()) {
    t.segments.push_back(
        SequentialSegment{std::string(text.substr(seq_start))});
  }

  const std::size_t tc = t.response.rfind(tags::think_close);
  if (tc != std::string::npos) {
    t.think_close_end = tc + tags::think_close.size();
  }
  return t;
}

// Byte-identical reconstruction of the raw response from the parsed form.
inline std::string flatten(const Trajectory& t) {
  std::string out;
  out.reserve(t.response.size());
  for (const Segment& seg : t.segments) {
    if (const auto* s = std::get_if<SequentialSegment>(&seg)) {
      out += s->text;
    } else {
      const auto& b = std::get<ParallelBlock>(seg);
      out += b.header;
      for (const ThreadSpan& th : b.threads) {
        out += th.filler;
        out += th.seed;
        out += th.body;
        out += th.close_tag;
      }
      out += b.trailer;
    }
  }
  return out;
}

namespace detail {

inline void flag_stray_tags(std::string_view text, std::size_t base,
                            bool inside_block, bool inside_thread_body,
                            std::vector<Violation>* out) {
  struct Probe {
    std::string_view tag;
    ValidationCode in_seq;
    ValidationCode in_block;
  };
  // Inside a block, an open <Parallel> means nesting; in sequential text it
  // means the parser found no matching close (unbalanced).
  const Probe probes[] = {
      {tags::parallel_open,
       ValidationCode::UnbalancedTag, ValidationCode::NestedParallel},
      {tags::parallel_close,
       ValidationCode::UnbalancedTag, ValidationCode::UnbalancedTag},
      {tags::thread_open,
       ValidationCode::ThreadOutsideParallel, ValidationCode::NestedThread},
      {tags::thread_close,
       ValidationCode::ThreadOutsideParallel, ValidationCode::UnbalancedTag},
      {tags::outlines_open,
       ValidationCode::UnbalancedTag, ValidationCode::UnbalancedTag},
      {tags::outlines_close,
       ValidationCode::UnbalancedTag, ValidationCode::UnbalancedTag},
  };
  for (const Probe& probe : probes) {
    // Thread bodies only exclude *open* tags; a stray close tag there was
    // already consumed as span structure by the parser.
    if (inside_thread_body && (probe.tag == tags::parallel_close ||
                               probe.tag == tags::thread_close ||
                               probe.tag == tags::outlines_close)) {
      continue;
    }
    std::size_t p = 0;
    while ((p = text.find(probe.tag, p)) != std::string_view::npos) {
      out->push_back({inside_block ? probe.in_block : probe.in_seq,
                      "stray " + std::string(probe.tag), base + p});
      p += probe.tag.size();
    }
  }
}

}  // namespace detail

// Structural validation of a parsed trajectory.  An empty violation list
// means format-valid: balanced single-level blocks, outline/thread counts
// match, labels run 1..n on both sides, bodies non-empty, and the think
// section is closed.
inline ValidationReport validate(const Trajectory& t) {
  ValidationReport report;
  auto flag = [&](ValidationCode code, std::string msg, std::size_t off = 0) {
    report.violations.push_back({code, std::move(msg), off});
  };

  std::size_t offset = 0;  // running byte offset into response
  int block_no = 0;
  for (const Segment& seg : t.segments) {
    if (const auto* s = std::get_if<SequentialSegment>(&seg)) {
      detail::flag_stray_tags(s->text, offset, /*inside_block=*/false,
                              /*inside_thread_body=*/false,
                              &report.violations);
      offset += s->text.size();
      continue;
    }
    const auto& b = std::get<ParallelBlock>(seg);
    ++block_no;
    const std::size_t block_start = offset;
    const std::string bname = "block " + std::to_string(block_no);

    if (b.header.find(tags::outlines_close) == std::string::npos &&
        b.header.find(tags::goal_close) == std::string::npos) {
      flag(ValidationCode::MissingOutlines, bname + ": no outline section",
           block_start);
    }
    if (b.threads.empty()) {
      flag(ValidationCode::EmptyParallelBlock, bname + ": no threads",
           block_start);
    }
    if (b.outlines.size() != b.threads.size()) {
      flag(ValidationCode::CountMismatch,
           bname + ": " + std::to_string(b.outlines.size()) + " outlines vs " +
               std::to_string(b.threads.size()) + " threads",
           block_start);
    }
    for (std::size_t i = 0; i < b.outlines.size(); ++i) {
      if (b.outlines[i].index == 0) {
        flag(ValidationCode::MalformedOutline,
             bname + ": outline entry " + std::to_string(i + 1) +
                 " lacks an \"N:\" label",
             block_start);
      } else if (b.outlines[i].text.empty()) {
        flag(ValidationCode::EmptyOutline,
             bname + ": outline " + std::to_string(b.outlines[i].index) +
                 " is empty",
             block_start);
      }
    }
    bool outline_labels_ok = true;
    for (std::size_t i = 0; i < b.outlines.size(); ++i) {
      if (b.outlines[i].index != static_cast<int>(i) + 1) {
        outline_labels_ok = false;
      }
    }
    if (!outline_labels_ok) {
      flag(ValidationCode::NonMonotoneLabels,
           bname + ": outline labels are not 1..n in order", block_start);
    }
    bool thread_labels_ok = true;
    for (std::size_t i = 0; i < b.threads.size(); ++i) {
      if (b.threads[i].index != static_cast<int>(i) + 1) {
        thread_labels_ok = false;
      }
    }
    if (!thread_labels_ok && !b.threads.empty()) {
      flag(ValidationCode::NonMonotoneLabels,
           bname + ": thread labels are not 1..n in order", block_start);
    }

    // Walk raw pieces, tracking offsets and scanning for misplaced tags.
    std::size_t off = block_start;
    {
      // Skip the leading "<Parallel>" itself when probing the header, and
      // treat the outline section as structure: inside it only nested
      // <Parallel>/<Thread> opens are misplaced.
      const std::size_t skip = tags::parallel_open.size();
      const std::string_view header(b.header);
      std::size_t oo = header.find(tags::outlines_open, skip);
      std::size_t oo_len = tags::outlines_open.size();
      {
        const std::size_t go = header.find(tags::goal_open, skip);
        if (go < oo) {
          oo = go;
          oo_len = tags::goal_open.size();
        }
      }
      std::size_t close_len = 0;
      if (header.ends_with(tags::outlines_close)) {
        close_len = tags::outlines_close.size();
      } else if (header.ends_with(tags::goal_close)) {
        close_len = tags::goal_close.size();
      }
      if (oo == std::string_view::npos) {
        detail::flag_stray_tags(header.substr(skip), off + skip,
                                /*inside_block=*/true,
                                /*inside_thread_body=*/false,
                                &report.violations);
      } else {
        detail::flag_stray_tags(header.substr(skip, oo - skip), off + skip,
                                true, false, &report.violations);
        const std::size_t is = oo + oo_len;
        const std::size_t ie = header.size() - close_len;
        if (ie > is) {
          const std::string_view interior = header.substr(is, ie - is);
          const std::pair<std::string_view, ValidationCode> nest_probes[] = {
              {tags::parallel_open, ValidationCode::NestedParallel},
              {tags::thread_open, ValidationCode::NestedThread},
          };
          for (const auto& [tag, code] : nest_probes) {
            std::size_t p = 0;
            while ((p = interior.find(tag, p)) != std::string_view::npos) {
              flag(code, "stray " + std::string(tag) + " in outline section",
                   off + is + p);
              p += tag.size();
            }
          }
        }
      }
      off += b.header.size();
    }
    for (const ThreadSpan& th : b.threads) {
      detail::flag_stray_tags(th.filler, off, true, false,
                              &report.violations);
      off += th.filler.size() + th.seed.size();
      if (!th.closed) {
        flag(ValidationCode::UnbalancedTag,
             bname + ": thread " + std::to_string(th.index) +
                 " has no close tag",
             off);
      }
      if (th.body.empty()) {
        flag(ValidationCode::EmptyThreadBody,
             bname + ": thread " + std::to_string(th.index) + " body is empty",
             off);
      }
      detail::flag_stray_tags(th.body, off, true, /*inside_thread_body=*/true,
                              &report.violations);
      off += th.body.size() + th.close_tag.size();
    }
    {
      const std::size_t tail = tags::parallel_close.size();
      std::string_view trailer_body(b.trailer);
      trailer_body.remove_suffix(tail);
      detail::flag_stray_tags(trailer_body, off, true, false,
                              &report.violations);
      off += b.trailer.size();
    }
    offset = off;
  }

  if (!t.has_think_close()) {
    flag(ValidationCode::MissingThinkClose, "response has no </think>",
         t.response.size());
  }
  return report;
}

// Contents of the last balanced \boxed{...} in the text, with brace nesting
// honored.  Unbalanced candidates are skipped; returns nullopt when none
// balances.  Braces escaped with a backslash do not count toward nesting.
inline std::optional<std::string> extract_boxed_answer(std::string_view text) {
  constexpr std::string_view marker = "\\boxed{";
  std::size_t search_end = text.size();
  while (true) {
    const std::size_t p = text.rfind(marker, search_end == 0 ? 0 : search_end - 1);
    if (p == std::string_view::npos) return std::nullopt;
    std::size_t i = p + marker.size();
    int depth = 1;
    bool escaped = false;
    for (; i < text.size(); ++i) {
      const char c = text[i];
      if (escaped) {
        escaped = false;
        continue;
      }
      if (c == '\\') {
        escaped = true;
        continue;
      }
      if (c == '{') ++depth;
      if (c == '}') {
        if (--depth == 0) {
          return std::string(text.substr(p + marker.size(),
                                         i - (p + marker.size())));
        }
      }
    }
    if (p == 0) return std::nullopt;
    search_end = p;  // unbalanced; try an earlier occurrence
  }
}

}  // namespace apr
