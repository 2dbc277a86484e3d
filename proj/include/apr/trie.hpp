#pragma once

// Training-sequence packing over a token-level prefix trie.
//
// A fork-join trajectory is first cut into <context, completion> units — the
// exact requests its state machine would issue.  Units of one trajectory are
// then merged into a trie at span granularity: the root holds the shared
// prompt, completion spans become loss-eligible nodes, context-only spans
// (thread seeds, the join's view of sibling threads plus "</Parallel>")
// become glue nodes with loss off.  DFS linearization emits one packed
// sequence in which every unit's root-to-leaf path reproduces exactly the
// tokens, positions (0..len-1) and causal visibility that unit would see if
// decoded standalone — later threads simply appear twice, once loss-on as a
// branch and once loss-off as context glue on the join path, with positions
// shifted by the preceding threads' lengths, mirroring inference-time
// prefill.  Every decoded token carries loss exactly once per packed
// sequence.
//
// The full-autoregressive unit deliberately never joins the trie: merged, it
// would give thread tokens loss twice.  pack_trajectory() emits it as a
// separate trivial sequence when requested.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "apr/codec.hpp"
#include "apr/orchestrator.hpp"  // UnitKind
#include "apr/trajectory.hpp"
#include "apr/version.hpp"

namespace apr {

struct Unit {
  UnitKind kind = UnitKind::Sequential;
  // Context at span granularity; spans[0] is always the shared prompt.
  std::vector<std::string> context_spans;
  std::string completion;
  int block = -1;   // 0-based block index for thread units
  int ordinal = 0;  // 1-based thread ordinal for thread units

  std::string context() const {
    std::string out;
    for (const std::string& s : context_spans) out += s;
    return out;
  }
};

struct ExtractOptions {
  bool include_ar_unit = false;  // append the full-autoregressive unit last
};

// Cuts a format-valid trajectory into the unit schedule its state machine
// would produce.  Inter-tag filler inside a block is treated as part of the
// injected seed (context glue), so arbitrary-glue trajectories remain
// replayable.  Throws std::invalid_argument on format violations.
inline std::vector<Unit> extract_units(const Trajectory& t,
                                       ExtractOptions opts = {}) {
  const ValidationReport report = validate(t);
  if (!report.format_valid()) {
    throw std::invalid_argument(
        "trajectory is not format-valid: " +
        std::string(to_string(report.violations.front().code)) + " (" +
        report.violations.front().message + ")");
  }

  std::vector<Unit> units;
  std::vector<std::string> ctx = {t.prompt};
  std::string pending;  // sequential text accumulated since the last unit cut
  bool first_sequential = true;
  int block_index = 0;

  for (const Segment& seg : t.segments) {
    if (const auto* s = std::get_if<SequentialSegment>(&seg)) {
      pending += s->text;
      continue;
    }
    const auto& b = std::get<ParallelBlock>(seg);

    // Sequential phase: decodes through "</Outlines>".
    Unit seq;
    seq.kind = first_sequential ? UnitKind::Sequential
                                : UnitKind::JoinContinuation;
    seq.context_spans = ctx;
    seq.completion = pending + b.header;
    units.push_back(seq);
    ctx.push_back(seq.completion);
    pending.clear();
    first_sequential = false;

    // Thread phase: one unit per thread, all sharing the post-fork context.
    for (std::size_t i = 0; i < b.threads.size(); ++i) {
      const ThreadSpan& th = b.threads[i];
      Unit u;
      u.kind = UnitKind::Thread;
      u.block = block_index;
      u.ordinal = static_cast<int>(i) + 1;
      u.context_spans = ctx;
      u.context_spans.push_back(th.filler + th.seed);
      u.completion = th.body + th.close_tag;
      units.push_back(std::move(u));
    }

    // Join: the continuation's context extends thread 1's chain; threads
    // 2..n plus the trailer ride along as one glue span.
    const ThreadSpan& t1 = b.threads.front();
    ctx.push_back(t1.filler + t1.seed);
    ctx.push_back(t1.body + t1.close_tag);
    std::string tail;
    for (std::size_t i = 1; i < b.threads.size(); ++i) {
      const ThreadSpan& th = b.threads[i];
      tail += th.filler + th.seed + th.body + th.close_tag;
    }
    tail += b.trailer;
    ctx.push_back(tail);
    ++block_index;
  }

  // Final sequential phase; present even when it decoded nothing, because
  // the machine always issues the post-join request.
  Unit last;
  last.kind =
      first_sequential ? UnitKind::Sequential : UnitKind::JoinContinuation;
  last.context_spans = ctx;
  last.completion = pending;
  units.push_back(std::move(last));

  if (opts.include_ar_unit) {
    Unit ar;
    ar.kind = UnitKind::FullAutoregressive;
    ar.context_spans = {t.prompt};
    ar.completion = t.response;
    units.push_back(std::move(ar));
  }
  return units;
}

struct TrieNode {
  int id = 0;
  int parent = -1;  // -1 for the root
  std::vector<TokenId> tokens;
  bool loss_eligible = false;  // true only for completion spans
  int unit_index = -1;         // which unit's completion, -1 for glue
  std::vector<int> children;   // in insertion order
};

struct Trie {
  std::vector<TrieNode> nodes;  // nodes[0] is the root (shared prompt)
};

// Merges the state-machine units of one trajectory into a prefix trie.
// Contexts are matched span by span against existing nodes (token-level
// sharing only at span boundaries); unmatched context spans become glue
// nodes, and each completion becomes a fresh loss-eligible node.
inline Trie build_trie(std::span<const Unit> units, const TokenCodec& codec) {
  if (units.empty()) throw std::invalid_argument("no units to pack");

  std::unordered_map<std::string, std::vector<TokenId>> enc_cache;
  auto encode = [&](const std::string& text) -> const std::vector<TokenId>& {
    auto it = enc_cache.find(text);
    if (it == enc_cache.end()) {
      it = enc_cache.emplace(text, codec.encode(text)).first;
    }
    return it->second;
  };

  Trie trie;
  trie.nodes.push_back(TrieNode{0, -1, encode(units[0].context_spans.at(0)),
                                false, -1, {}});

  for (std::size_t ui = 0; ui < units.size(); ++ui) {
    const Unit& u = units[ui];
    if (u.kind == UnitKind::FullAutoregressive) {
      throw std::invalid_argument(
          "full-autoregressive units must be packed as separate sequences");
    }
    if (u.context_spans.empty() ||
        encode(u.context_spans[0]) != trie.nodes[0].tokens) {
      throw std::invalid_argument(
          "unit contexts disagree on the shared prompt");
    }
    int cur = 0;
    for (std::size_t k = 1; k < u.context_spans.size(); ++k) {
      const std::vector<TokenId>& span = encode(u.context_spans[k]);
      int next = -1;
      for (int child : trie.nodes[static_cast<std::size_t>(cur)].children) {
        if (trie.nodes[static_cast<std::size_t>(child)].tokens == span) {
          next = child;
          break;
        }
      }
      if (next < 0) {
        next = static_cast<int>(trie.nodes.size());
        trie.nodes.push_back(
            TrieNode{next, cur, span, false, -1, {}});
        trie.nodes[static_cast<std::size_t>(cur)].children.push_back(next);
      }
      cur = next;
    }
    const int leaf = static_cast<int>(trie.nodes.size());
    trie.nodes.push_back(TrieNode{leaf, cur, encode(u.completion), true,
                                  static_cast<int>(ui), {}});
    trie.nodes[static_cast<std::size_t>(cur)].children.push_back(leaf);
  }
  return trie;
}

struct NodeSpan {
  std::int64_t start = 0;  // token range [start, end) in the packed sequence
  std::int64_t end = 0;
  std::int32_t node = 0;    // trie node id
  std::int32_t parent = -1; // parent node id, -1 for the root
};

struct PackedSequence {
  std::vector<TokenId> tokens;
  std::vector<std::int64_t> positions;  // per-path positions, restart per branch
  std::vector<std::uint8_t> loss_mask;
  std::vector<std::int32_t> ancestry;   // per-token owning node id
  std::vector<NodeSpan> node_table;     // DFS emission order
  // unit index -> its completion node id; -1 for units absent from this
  // sequence.  In-memory aid only, not part of the file format.
  std::vector<std::int32_t> unit_completion_node;

  std::size_t size() const { return tokens.size(); }
};

// DFS pre-order emission: children in insertion order, which places thread
// branches in outline order with the join path under the first thread's
// chain.  Positions count tokens along the root path and restart per branch.
inline PackedSequence linearize(const Trie& trie) {
  PackedSequence ps;
  std::int64_t total = 0;
  for (const TrieNode& n : trie.nodes) {
    total += static_cast<std::int64_t>(n.tokens.size());
  }
  ps.tokens.reserve(static_cast<std::size_t>(total));
  ps.positions.reserve(static_cast<std::size_t>(total));
  ps.loss_mask.reserve(static_cast<std::size_t>(total));
  ps.ancestry.reserve(static_cast<std::size_t>(total));

  int max_unit = -1;
  for (const TrieNode& n : trie.nodes) max_unit = std::max(max_unit, n.unit_index);
  ps.unit_completion_node.assign(static_cast<std::size_t>(max_unit) + 1, -1);

  struct Frame {
    int node;
    std::int64_t base;  // token-position of the node's first token
  };
  std::vector<Frame> stack = {{0, 0}};
  while (!stack.empty()) {
    const Frame f = stack.back();
    stack.pop_back();
    const TrieNode& n = trie.nodes[static_cast<std::size_t>(f.node)];

    NodeSpan span;
    span.start = static_cast<std::int64_t>(ps.tokens.size());
    span.end = span.start + static_cast<std::int64_t>(n.tokens.size());
    span.node = n.id;
    span.parent = n.parent;
    ps.node_table.push_back(span);

    for (std::size_t k = 0; k < n.tokens.size(); ++k) {
      ps.tokens.push_back(n.tokens[k]);
      ps.positions.push_back(f.base + static_cast<std::int64_t>(k));
      ps.loss_mask.push_back(n.loss_eligible ? 1 : 0);
      ps.ancestry.push_back(n.id);
    }
    if (n.unit_index >= 0) {
      ps.unit_completion_node[static_cast<std::size_t>(n.unit_index)] = n.id;
    }
    const std::int64_t child_base =
        f.base + static_cast<std::int64_t>(n.tokens.size());
    // Stack is LIFO: push children reversed to visit them in insertion order.
    for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) {
      stack.push_back({*it, child_base});
    }
  }
  return ps;
}

struct PackOptions {
  bool include_ar_unit = false;
  // Reject packed sequences longer than this many tokens.
  std::optional<std::int64_t> max_tokens;
};

// One trajectory -> one trie-packed sequence, plus (optionally) the
// full-autoregressive unit as a separate trivial sequence.
inline std::vector<PackedSequence> pack_trajectory(const Trajectory& t,
                                                   const TokenCodec& codec,
                                                   PackOptions opts = {}) {
  std::vector<Unit> units =
      extract_units(t, {.include_ar_unit = opts.include_ar_unit});
  std::span<const Unit> machine_units(units);
  std::optional<Unit> ar;
  if (opts.include_ar_unit) {
    ar = units.back();
    machine_units = machine_units.subspan(0, units.size() - 1);
  }

  std::vector<PackedSequence> out;
  out.push_back(linearize(build_trie(machine_units, codec)));
  if (ar) {
    // The AR unit packs alone: a two-node path, full causal visibility.
    std::vector<Unit> solo = {*ar};
    solo[0].kind = UnitKind::Sequential;  // a path trie, not a merged one
    PackedSequence ps = linearize(build_trie(solo, codec));
    ps.unit_completion_node.assign(units.size(), -1);
    ps.unit_completion_node.back() = ps.node_table.back().node;
    out.push_back(std::move(ps));
  }
  for (const PackedSequence& ps : out) {
    if (opts.max_tokens && static_cast<std::int64_t>(ps.size()) > *opts.max_tokens) {
      throw std::length_error(
          "packed sequence of " + std::to_string(ps.size()) +
          " tokens exceeds the limit of " + std::to_string(*opts.max_tokens));
    }
  }
  return out;
}

// Dense masks above this size are refused; use the block-sparse form.
inline constexpr std::size_t dense_mask_limit = 4096;

struct DenseMask {
  std::size_t n = 0;
  std::vector<std::uint8_t> bits;  // row-major, bits[i*n+j] == 1 iff i sees j

  bool at(std::size_t i, std::size_t j) const { return bits[i * n + j] != 0; }
};

namespace detail {

inline std::unordered_map<std::int32_t, std::size_t> node_rows(
    const PackedSequence& ps) {
  std::unordered_map<std::int32_t, std::size_t> rows;
  for (std::size_t r = 0; r < ps.node_table.size(); ++r) {
    rows.emplace(ps.node_table[r].node, r);
  }
  return rows;
}

}  // namespace detail

// Ancestor-only causal mask: token i attends to token j iff j is at the same
// or earlier offset in i's own node, or j lies in a node on i's root path.
inline DenseMask dense_attention_mask(const PackedSequence& ps) {
  const std::size_t n = ps.size();
  if (n > dense_mask_limit) {
    throw std::length_error(
        "dense mask refused for " + std::to_string(n) +
        " tokens (limit " + std::to_string(dense_mask_limit) +
        "); use the block-sparse form");
  }
  DenseMask mask;
  mask.n = n;
  mask.bits.assign(n * n, 0);

  const auto rows = detail::node_rows(ps);
  for (const NodeSpan& span : ps.node_table) {
    // Visible key ranges: every ancestor span in full, then self-causal.
    std::vector<std::pair<std::int64_t, std::int64_t>> ranges;
    std::int32_t anc = span.parent;
    while (anc >= 0) {
      const NodeSpan& a = ps.node_table[rows.at(anc)];
      ranges.emplace_back(a.start, a.end);
      anc = a.parent;
    }
    for (std::int64_t i = span.start; i < span.end; ++i) {
      auto* row = &mask.bits[static_cast<std::size_t>(i) * n];
      for (const auto& [s, e] : ranges) {
        for (std::int64_t j = s; j < e; ++j) row[j] = 1;
      }
      for (std::int64_t j = span.start; j <= i; ++j) row[j] = 1;
    }
  }
  return mask;
}

// Block-sparse form: (query span, key span) pairs over node-table entries.
// query == key means causal (lower-triangular) visibility inside the span;
// query != key means the query span sees the key span in full.
struct BlockSparseMask {
  struct Pair {
    std::int32_t query_node = 0;
    std::int32_t key_node = 0;
  };
  std::vector<Pair> pairs;
};

inline BlockSparseMask block_sparse_attention_mask(const PackedSequence& ps) {
  BlockSparseMask mask;
  const auto rows = detail::node_rows(ps);
  for (const NodeSpan& span : ps.node_table) {
    if (span.start == span.end) continue;  // empty spans attend to nothing
    // Root-first ancestor order keeps the block layout monotone.
    std::vector<std::int32_t> chain;
    std::int32_t anc = span.parent;
    while (anc >= 0) {
      const NodeSpan& a = ps.node_table[rows.at(anc)];
      if (a.start != a.end) chain.push_back(a.node);
      anc = a.parent;
    }
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
      mask.pairs.push_back({span.node, *it});
    }
    mask.pairs.push_back({span.node, span.node});
  }
  return mask;
}

}  // namespace apr
