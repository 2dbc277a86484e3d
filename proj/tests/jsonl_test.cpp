// Tests for JSONL corpus I/O, rollout-trace JSON, and the packed-sequence
// JSON/binary file formats.

#include <doctest.h>

#include <cstddef>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "apr/codec.hpp"
#include "apr/jsonl.hpp"
#include "apr/mock_backend.hpp"
#include "apr/orchestrator.hpp"
#include "apr/trajectory.hpp"
#include "apr/trie.hpp"
#include "apr/version.hpp"
#include "support/fixtures.hpp"

using namespace apr;

namespace {

PackOptions pack_opts(bool with_ar) {
  PackOptions po;
  po.include_ar_unit = with_ar;
  return po;
}

PackedSequence packed_fixture(bool ar_too = false) {
  WordCodec codec;
  Trajectory t = parse(fixtures::distance_response);
  t.prompt = fixtures::distance_prompt;
  auto seqs = pack_trajectory(t, codec, pack_opts(ar_too));
  REQUIRE(seqs.size() == (ar_too ? 2u : 1u));
  return ar_too ? seqs.back() : seqs.front();
}

void check_same_payload(const PackedSequence& a, const PackedSequence& b) {
  CHECK(b.tokens == a.tokens);
  CHECK(b.positions == a.positions);
  CHECK(b.loss_mask == a.loss_mask);
  CHECK(b.ancestry == a.ancestry);
  REQUIRE(b.node_table.size() == a.node_table.size());
  for (std::size_t i = 0; i < a.node_table.size(); ++i) {
    CAPTURE(i);
    CHECK(b.node_table[i].start == a.node_table[i].start);
    CHECK(b.node_table[i].end == a.node_table[i].end);
    CHECK(b.node_table[i].node == a.node_table[i].node);
    CHECK(b.node_table[i].parent == a.node_table[i].parent);
  }
}

std::string binary_bytes(const PackedSequence& ps) {
  std::ostringstream out;
  write_packed_binary(out, ps);
  return out.str();
}

}  // namespace

TEST_CASE("read_jsonl visits non-blank lines with 1-based numbers") {
  std::istringstream in("{\"a\":1}\n\n   \t\n{\"b\":[2,3]}\n");
  std::vector<std::pair<std::size_t, nlohmann::json>> seen;
  read_jsonl(in, [&](std::size_t n, const nlohmann::json& j) {
    seen.emplace_back(n, j);
  });
  REQUIRE(seen.size() == 2);
  CHECK(seen[0].first == 1);
  CHECK(seen[0].second["a"] == 1);
  CHECK(seen[1].first == 4);
  CHECK(seen[1].second["b"][1] == 3);
}

TEST_CASE("read_jsonl reports the failing line") {
  std::istringstream in("{}\nnot json\n{}\n");
  CHECK_THROWS_WITH_AS(
      read_jsonl(in, [](std::size_t, const nlohmann::json&) {}),
      doctest::Contains("line 2: invalid JSON"), std::runtime_error);
}

TEST_CASE("corpus records round-trip through JSON") {
  SUBCASE("full record") {
    const nlohmann::json j = {
        {"prompt", "p"},
        {"response", "r"},
        {"gold_answer", "42"},
        {"meta", {{"source", "unit-test"}, {"id", 7}}},
    };
    const CorpusRecord rec = record_from_json(j);
    CHECK(rec.prompt == "p");
    CHECK(rec.response == "r");
    CHECK(rec.gold_answer == "42");
    CHECK(nlohmann::json::parse(rec.meta_json)["id"] == 7);
    CHECK(to_json(rec) == j);
  }

  SUBCASE("minimal record omits optional keys on the way out") {
    const nlohmann::json j = {{"prompt", "p"}, {"response", "r"}};
    const CorpusRecord rec = record_from_json(j);
    CHECK(rec.gold_answer.empty());
    CHECK(rec.meta_json.empty());
    const nlohmann::json back = to_json(rec);
    CHECK_FALSE(back.contains("gold_answer"));
    CHECK_FALSE(back.contains("meta"));
  }

  SUBCASE("malformed records carry the line number") {
    CHECK_THROWS_WITH_AS(record_from_json(nlohmann::json::array(), 3),
                         doctest::Contains("line 3"), std::runtime_error);
    CHECK_THROWS_WITH_AS(
        record_from_json(nlohmann::json{{"prompt", "p"}}, 9),
        doctest::Contains("line 9"), std::runtime_error);
    CHECK_THROWS_WITH_AS(
        record_from_json(
            nlohmann::json{{"prompt", "p"}, {"response", 5}}),
        doctest::Contains("\"prompt\" and \"response\""), std::runtime_error);
    CHECK_THROWS_WITH_AS(
        record_from_json(nlohmann::json{
            {"prompt", "p"}, {"response", "r"}, {"gold_answer", 4}}),
        doctest::Contains("gold_answer"), std::runtime_error);
  }
}

TEST_CASE("rollout traces serialize with per-unit detail") {
  WordCodec codec;
  MockBackend backend(codec);
  backend.add_script(fixtures::distance_prompt, fixtures::distance_response);
  Orchestrator orch(backend, codec);
  const RolloutTrace trace = orch.run(fixtures::distance_prompt);
  REQUIRE(trace.error.empty());

  const nlohmann::json j = to_json(trace);
  CHECK(j["prompt"] == fixtures::distance_prompt);
  CHECK(j["response"] == fixtures::distance_response);
  CHECK(j["finish"] == "eos");
  CHECK_FALSE(j.contains("error"));
  CHECK(j["makespan_ns"] == trace.makespan_ns);
  CHECK(j["parallel_blocks"] == 1);
  CHECK(j["violations"].is_array());
  CHECK(j["violations"].empty());

  const auto& ts = j["token_stats"];
  CHECK(ts["sequential_tokens"] == trace.tokens.sequential_tokens);
  CHECK(ts["thread_tokens"] == trace.tokens.thread_tokens);
  CHECK(ts["injected_glue_tokens"] == trace.tokens.injected_glue_tokens);
  CHECK(ts["decoded_total"] ==
        trace.tokens.sequential_tokens + trace.tokens.thread_tokens);

  const auto& units = j["units"];
  REQUIRE(units.size() == 4);
  CHECK(units[0]["kind"] == "sequential");
  CHECK(units[1]["kind"] == "thread");
  CHECK(units[2]["kind"] == "thread");
  CHECK(units[3]["kind"] == "join_continuation");
  // Only thread units carry block/ordinal coordinates.
  CHECK_FALSE(units[0].contains("block"));
  CHECK_FALSE(units[3].contains("block"));
  CHECK(units[1]["ordinal"] == 1);
  CHECK(units[2]["ordinal"] == 2);
  CHECK(units[1]["block"] == units[2]["block"]);
  for (const auto& u : units) {
    CHECK(u["context_tokens"].get<std::int64_t>() > 0);
    CHECK(u["completion_tokens"].get<std::int64_t>() > 0);
    CHECK_FALSE(u["completion"].get<std::string>().empty());
    CHECK_FALSE(u["finish"].get<std::string>().empty());
  }
}

TEST_CASE("failed rollouts serialize their error") {
  WordCodec codec;
  MockBackend backend(codec);
  backend.add_script(fixtures::distance_prompt, fixtures::distance_response);
  backend.set_fail_predicate([](const CompletionRequest& r) {
    return r.context.find("<Thread> 2:") != std::string::npos;
  });
  Orchestrator orch(backend, codec);
  const RolloutTrace trace = orch.run(fixtures::distance_prompt);
  REQUIRE_FALSE(trace.error.empty());
  const nlohmann::json j = to_json(trace);
  CHECK(j["finish"] == "error");
  CHECK(j["error"].get<std::string>() == trace.error);
}

TEST_CASE("packed sequences round-trip through JSON") {
  const PackedSequence ps = packed_fixture();
  const nlohmann::json j = to_json(ps);
  CHECK(j["schema_version"] == packed_sequence_schema_version);
  REQUIRE(j["node_table"].is_array());
  for (const auto& row : j["node_table"]) {
    REQUIRE(row.is_array());
    CHECK(row.size() == 4);
  }
  const PackedSequence back = packed_from_json(j);
  check_same_payload(ps, back);
  // Ancestry is reconstructed from the node table, never stored.
  CHECK_FALSE(j.contains("ancestry"));
}

TEST_CASE("packed JSON loader rejects malformed input") {
  const PackedSequence ps = packed_fixture();
  const nlohmann::json good = to_json(ps);

  SUBCASE("missing schema version") {
    nlohmann::json j = good;
    j.erase("schema_version");
    CHECK_THROWS_WITH_AS(packed_from_json(j),
                         doctest::Contains("schema_version"),
                         std::runtime_error);
  }

  SUBCASE("unsupported schema version") {
    nlohmann::json j = good;
    j["schema_version"] = 999;
    CHECK_THROWS_WITH_AS(packed_from_json(j),
                         doctest::Contains("unsupported schema_version 999"),
                         std::runtime_error);
  }

  SUBCASE("array lengths must agree") {
    nlohmann::json j = good;
    j["positions"].erase(j["positions"].size() - 1);
    CHECK_THROWS_WITH_AS(packed_from_json(j),
                         doctest::Contains("lengths disagree"),
                         std::runtime_error);
  }

  SUBCASE("node-table rows have four columns") {
    nlohmann::json j = good;
    j["node_table"][0] = {0, 1, 0};
    CHECK_THROWS_WITH_AS(packed_from_json(j),
                         doctest::Contains("[start,end,node,parent]"),
                         std::runtime_error);
  }

  SUBCASE("spans must tile in order") {
    nlohmann::json j = good;
    j["node_table"][1][0] = j["node_table"][1][0].get<std::int64_t>() + 1;
    CHECK_THROWS_WITH_AS(packed_from_json(j), doctest::Contains("tile"),
                         std::runtime_error);
  }

  SUBCASE("spans must cover the whole token array") {
    nlohmann::json j = good;
    j["node_table"].erase(j["node_table"].size() - 1);
    CHECK_THROWS_WITH_AS(packed_from_json(j), doctest::Contains("cover"),
                         std::runtime_error);
  }
}

TEST_CASE("packed sequences round-trip through the binary format") {
  for (const bool ar : {false, true}) {
    CAPTURE(ar);
    const PackedSequence ps = packed_fixture(ar);
    const std::string bytes = binary_bytes(ps);
    CHECK(bytes.size() > 8);
    CHECK(bytes.substr(0, 8) == "APRPACK1");
    // Writing is deterministic byte-for-byte.
    CHECK(binary_bytes(ps) == bytes);

    std::istringstream in(bytes);
    const PackedSequence back = read_packed_binary(in);
    check_same_payload(ps, back);
  }
}

TEST_CASE("binary reader rejects corrupt files") {
  const PackedSequence ps = packed_fixture();
  const std::string bytes = binary_bytes(ps);

  SUBCASE("bad magic") {
    std::string bad = bytes;
    bad[0] = 'X';
    std::istringstream in(bad);
    CHECK_THROWS_WITH_AS(read_packed_binary(in),
                         doctest::Contains("bad magic"), std::runtime_error);
  }

  SUBCASE("short header") {
    std::istringstream in(bytes.substr(0, 4));
    CHECK_THROWS_WITH_AS(read_packed_binary(in),
                         doctest::Contains("bad magic"), std::runtime_error);
  }

  SUBCASE("unsupported version") {
    std::string bad = bytes;
    bad[8] = '\xff';
    std::istringstream in(bad);
    CHECK_THROWS_WITH_AS(read_packed_binary(in),
                         doctest::Contains("unsupported schema_version"),
                         std::runtime_error);
  }

  SUBCASE("truncated payload") {
    std::istringstream in(bytes.substr(0, bytes.size() - 5));
    CHECK_THROWS_WITH_AS(read_packed_binary(in),
                         doctest::Contains("truncated"), std::runtime_error);
  }
}

TEST_CASE("JSON and binary loaders agree") {
  const PackedSequence ps = packed_fixture();
  const PackedSequence via_json = packed_from_json(to_json(ps));
  std::istringstream in(binary_bytes(ps));
  const PackedSequence via_binary = read_packed_binary(in);
  check_same_payload(via_json, via_binary);
}
