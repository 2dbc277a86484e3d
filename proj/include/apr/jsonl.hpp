#pragma once

// JSONL corpus I/O, rollout-trace JSON, and the packed-sequence file
// formats (JSON for inspection, a little-endian binary for bulk use).

#include <cstdint>
#include <cstring>
#include <functional>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "apr/dataset.hpp"
#include "apr/orchestrator.hpp"
#include "apr/trie.hpp"
#include "apr/version.hpp"

namespace apr {

// Calls `fn(line_number, parsed)` for every non-blank line; parse errors
// carry the 1-based line number.
inline void read_jsonl(
    std::istream& in,
    const std::function<void(std::size_t, const nlohmann::json&)>& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error("line " + std::to_string(line_no) +
                               ": invalid JSON: " + e.what());
    }
    fn(line_no, j);
  }
}

inline CorpusRecord record_from_json(const nlohmann::json& j,
                                     std::size_t line_no = 0) {
  const std::string where =
      line_no > 0 ? "line " + std::to_string(line_no) + ": " : "";
  if (!j.is_object()) {
    throw std::runtime_error(where + "record must be a JSON object");
  }
  CorpusRecord rec;
  if (!j.contains("prompt") || !j["prompt"].is_string() ||
      !j.contains("response") || !j["response"].is_string()) {
    throw std::runtime_error(
        where + "record needs string fields \"prompt\" and \"response\"");
  }
  rec.prompt = j["prompt"].get<std::string>();
  rec.response = j["response"].get<std::string>();
  if (j.contains("gold_answer")) {
    if (!j["gold_answer"].is_string()) {
      throw std::runtime_error(where + "\"gold_answer\" must be a string");
    }
    rec.gold_answer = j["gold_answer"].get<std::string>();
  }
  if (j.contains("meta")) rec.meta_json = j["meta"].dump();
  return rec;
}

inline nlohmann::json to_json(const CorpusRecord& rec) {
  nlohmann::json j;
  j["prompt"] = rec.prompt;
  j["response"] = rec.response;
  if (!rec.gold_answer.empty()) j["gold_answer"] = rec.gold_answer;
  if (!rec.meta_json.empty()) j["meta"] = nlohmann::json::parse(rec.meta_json);
  return j;
}

inline nlohmann::json to_json(const RolloutTrace& trace) {
  nlohmann::json j;
  j["prompt"] = trace.prompt;
  j["response"] = trace.response;
  j["finish"] = std::string(to_string(trace.finish));
  if (!trace.error.empty()) j["error"] = trace.error;
  j["makespan_ns"] = trace.makespan_ns;
  j["parallel_blocks"] = trace.parallel_blocks;
  j["token_stats"] = {
      {"sequential_tokens", trace.tokens.sequential_tokens},
      {"thread_tokens", trace.tokens.thread_tokens},
      {"injected_glue_tokens", trace.tokens.injected_glue_tokens},
      {"decoded_total", trace.tokens.decoded_total()},
  };
  j["violations"] = trace.violations;
  nlohmann::json units = nlohmann::json::array();
  for (const UnitRecord& u : trace.units) {
    nlohmann::json ju;
    ju["kind"] = std::string(to_string(u.kind));
    ju["context_tokens"] = u.context_tokens;
    ju["completion"] = u.completion;
    ju["completion_tokens"] = u.completion_tokens;
    ju["finish"] = std::string(to_string(u.finish));
    if (u.kind == UnitKind::Thread) {
      ju["block"] = u.block;
      ju["ordinal"] = u.ordinal;
    }
    units.push_back(std::move(ju));
  }
  j["units"] = std::move(units);
  return j;
}

// ---------------------------------------------------------------------------
// Packed-sequence formats.  Ancestry is reconstructed from the node table on
// load, so only four arrays travel.

inline nlohmann::json to_json(const PackedSequence& ps) {
  nlohmann::json j;
  j["schema_version"] = packed_sequence_schema_version;
  j["tokens"] = ps.tokens;
  j["positions"] = ps.positions;
  j["loss_mask"] = ps.loss_mask;
  nlohmann::json table = nlohmann::json::array();
  for (const NodeSpan& s : ps.node_table) {
    table.push_back({s.start, s.end, s.node, s.parent});
  }
  j["node_table"] = std::move(table);
  return j;
}

inline PackedSequence packed_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("schema_version")) {
    throw std::runtime_error("packed sequence: missing schema_version");
  }
  const auto version = j["schema_version"].get<std::int64_t>();
  if (version != packed_sequence_schema_version) {
    throw std::runtime_error(
        "packed sequence: unsupported schema_version " +
        std::to_string(version));
  }
  PackedSequence ps;
  ps.tokens = j.at("tokens").get<std::vector<TokenId>>();
  ps.positions = j.at("positions").get<std::vector<std::int64_t>>();
  ps.loss_mask = j.at("loss_mask").get<std::vector<std::uint8_t>>();
  if (ps.positions.size() != ps.tokens.size() ||
      ps.loss_mask.size() != ps.tokens.size()) {
    throw std::runtime_error("packed sequence: array lengths disagree");
  }
  const auto& table = j.at("node_table");
  if (!table.is_array()) {
    throw std::runtime_error("packed sequence: node_table must be an array");
  }
  std::int64_t cursor = 0;
  for (const auto& row : table) {
    if (!row.is_array() || row.size() != 4) {
      throw std::runtime_error(
          "packed sequence: node_table rows are [start,end,node,parent]");
    }
    NodeSpan s;
    s.start = row[0].get<std::int64_t>();
    s.end = row[1].get<std::int64_t>();
    s.node = row[2].get<std::int32_t>();
    s.parent = row[3].get<std::int32_t>();
    if (s.start != cursor || s.end < s.start) {
      throw std::runtime_error(
          "packed sequence: node spans must tile the token array in order");
    }
    cursor = s.end;
    ps.node_table.push_back(s);
  }
  if (cursor != static_cast<std::int64_t>(ps.tokens.size())) {
    throw std::runtime_error(
        "packed sequence: node spans do not cover the token array");
  }
  ps.ancestry.resize(ps.tokens.size());
  for (const NodeSpan& s : ps.node_table) {
    for (std::int64_t i = s.start; i < s.end; ++i) {
      ps.ancestry[static_cast<std::size_t>(i)] = s.node;
    }
  }
  return ps;
}

namespace detail {

inline void put_bytes(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  unsigned char buf[sizeof(T)];
  using U = std::make_unsigned_t<T>;
  U u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf[i] = static_cast<unsigned char>(u & 0xff);
    u = static_cast<U>(u >> 8);
  }
  put_bytes(out, buf, sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  static_assert(std::is_integral_v<T>);
  unsigned char buf[sizeof(T)];
  in.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!in) throw std::runtime_error("packed sequence: truncated file");
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (std::size_t i = sizeof(T); i-- > 0;) {
    u = static_cast<U>((u << 8) | buf[i]);
  }
  return static_cast<T>(u);
}

inline constexpr char packed_magic[8] = {'A', 'P', 'R', 'P',
                                         'A', 'C', 'K', '1'};

}  // namespace detail

inline void write_packed_binary(std::ostream& out, const PackedSequence& ps) {
  detail::put_bytes(out, detail::packed_magic, sizeof(detail::packed_magic));
  detail::put_le<std::uint32_t>(out, packed_sequence_schema_version);
  detail::put_le<std::uint64_t>(out, ps.tokens.size());
  for (TokenId t : ps.tokens) detail::put_le<std::int32_t>(out, t);
  for (std::int64_t p : ps.positions) detail::put_le<std::int64_t>(out, p);
  for (std::uint8_t m : ps.loss_mask) detail::put_le<std::uint8_t>(out, m);
  detail::put_le<std::uint64_t>(out, ps.node_table.size());
  for (const NodeSpan& s : ps.node_table) {
    detail::put_le<std::int64_t>(out, s.start);
    detail::put_le<std::int64_t>(out, s.end);
    detail::put_le<std::int32_t>(out, s.node);
    detail::put_le<std::int32_t>(out, s.parent);
  }
  if (!out) throw std::runtime_error("packed sequence: write failed");
}

inline PackedSequence read_packed_binary(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, detail::packed_magic, sizeof(magic)) != 0) {
    throw std::runtime_error("packed sequence: bad magic");
  }
  const auto version = detail::get_le<std::uint32_t>(in);
  if (version != packed_sequence_schema_version) {
    throw std::runtime_error(
        "packed sequence: unsupported schema_version " +
        std::to_string(version));
  }
  const auto n = detail::get_le<std::uint64_t>(in);
  PackedSequence ps;
  ps.tokens.resize(n);
  ps.positions.resize(n);
  ps.loss_mask.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    ps.tokens[i] = detail::get_le<std::int32_t>(in);
  }
  for (std::uint64_t i = 0; i < n; ++i) {
    ps.positions[i] = detail::get_le<std::int64_t>(in);
  }
  for (std::uint64_t i = 0; i < n; ++i) {
    ps.loss_mask[i] = detail::get_le<std::uint8_t>(in);
  }
  const auto rows = detail::get_le<std::uint64_t>(in);
  std::int64_t cursor = 0;
  ps.ancestry.resize(n);
  for (std::uint64_t r = 0; r < rows; ++r) {
    NodeSpan s;
    s.start = detail::get_le<std::int64_t>(in);
    s.end = detail::get_le<std::int64_t>(in);
    s.node = detail::get_le<std::int32_t>(in);
    s.parent = detail::get_le<std::int32_t>(in);
    if (s.start != cursor || s.end < s.start ||
        s.end > static_cast<std::int64_t>(n)) {
      throw std::runtime_error(
          "packed sequence: node spans must tile the token array in order");
    }
    for (std::int64_t i = s.start; i < s.end; ++i) {
      ps.ancestry[static_cast<std::size_t>(i)] = s.node;
    }
    cursor = s.end;
    ps.node_table.push_back(s);
  }
  if (cursor != static_cast<std::int64_t>(n)) {
    throw std::runtime_error(
        "packed sequence: node spans do not cover the token array");
  }
  return ps;
}

}  // namespace apr
