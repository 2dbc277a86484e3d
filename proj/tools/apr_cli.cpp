// Command-line driver: run rollouts against a backend, validate and filter
// corpora, pack trajectories for training, score rewards, and report corpus
// statistics.  Every subcommand streams JSONL record by record.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "apr/apr.hpp"

namespace {

struct GlobalOptions {
  std::uint64_t seed = 0;
  std::string vocab_path;
};

std::unique_ptr<apr::TokenCodec> make_codec(const GlobalOptions& g) {
  if (!g.vocab_path.empty()) {
    return std::make_unique<apr::VocabFileCodec>(
        apr::VocabFileCodec::from_file(g.vocab_path));
  }
  return std::make_unique<apr::WordCodec>();
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open input file: " + path);
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  return out;
}

// Accepts both corpus records and previously written rollout traces: any
// object with string "prompt" and "response" fields.
apr::CorpusRecord row_to_record(const nlohmann::json& j, std::size_t line) {
  return apr::record_from_json(j, line);
}

// --- run -------------------------------------------------------------------

struct RunOptions {
  std::string prompts_path;
  std::string prompt_inline;
  std::string mode = "parallel";  // parallel | ar
  std::string backend = "mock";   // mock | synthetic | replay:FILE | http:URL
  int rollouts = 1;
  std::int64_t budget = 40000;
  std::optional<std::int64_t> per_thread_cap;
  std::int64_t per_token_ns = 1000;
  std::int64_t per_request_ns = 0;
  std::string out_path;
  std::string gold_path;  // with the synthetic backend: per-prompt answers
};

int cmd_run(const GlobalOptions& g, const RunOptions& opt) {
  const auto codec = make_codec(g);

  std::vector<std::string> prompts;
  if (!opt.prompt_inline.empty()) prompts.push_back(opt.prompt_inline);
  std::vector<apr::CorpusRecord> replay_records;
  if (!opt.prompts_path.empty()) {
    std::ifstream in = open_input(opt.prompts_path);
    apr::read_jsonl(in, [&](std::size_t line, const nlohmann::json& j) {
      if (j.contains("response")) {
        replay_records.push_back(row_to_record(j, line));
        prompts.push_back(replay_records.back().prompt);
      } else if (j.contains("prompt") && j["prompt"].is_string()) {
        prompts.push_back(j["prompt"].get<std::string>());
      } else {
        throw std::runtime_error("line " + std::to_string(line) +
                                 ": expected a \"prompt\" field");
      }
    });
  }
  if (prompts.empty()) {
    std::cerr << "run: no prompts given (use --prompt or --prompts)\n";
    return 2;
  }

  const bool is_replay = opt.backend.rfind("replay:", 0) == 0;
  const bool is_http = opt.backend.rfind("http:", 0) == 0;
  if (is_replay) {
    std::ifstream in = open_input(opt.backend.substr(7));
    apr::read_jsonl(in, [&](std::size_t line, const nlohmann::json& j) {
      replay_records.push_back(row_to_record(j, line));
    });
  } else if (!is_http && opt.backend != "mock" && opt.backend != "synthetic") {
    std::cerr << "run: unknown backend \"" << opt.backend << "\"\n";
    return 2;
  }

  const bool out_is_stdout = opt.out_path.empty() || opt.out_path == "-";
  std::ofstream out;
  if (!out_is_stdout) out = open_output(opt.out_path);
  std::ostream& sink = out_is_stdout ? std::cout : out;

  std::ofstream gold_out;
  if (!opt.gold_path.empty()) gold_out = open_output(opt.gold_path);

  apr::OrchestratorConfig cfg;
  cfg.total_token_budget = opt.budget;
  cfg.per_thread_cap = opt.per_thread_cap;

  std::unique_ptr<apr::HttpBackend> http;
  if (is_http) {
    apr::HttpBackendConfig hc;
    hc.base_url = opt.backend;
    http = std::make_unique<apr::HttpBackend>(hc, codec.get());
  }

  int failures = 0;
  for (const std::string& prompt : prompts) {
    if (gold_out) {
      // The reference rollout (index 0) defines the prompt's gold answer.
      const apr::SyntheticTrajectory ref = apr::synthetic_trajectory(
          g.seed ^ apr::fnv1a64(prompt));
      nlohmann::json jg;
      jg["prompt"] = prompt;
      jg["gold_answer"] = ref.answer;
      gold_out << jg.dump() << "\n";
    }
    for (int r = 0; r < opt.rollouts; ++r) {
      apr::RolloutTrace trace;
      if (is_http) {
        apr::Orchestrator orch(*http, *codec, cfg);
        trace = opt.mode == "ar" ? orch.run_autoregressive(prompt)
                                 : orch.run(prompt);
      } else {
        apr::MockBackend mock(
            *codec, {opt.per_token_ns, opt.per_request_ns});
        for (const apr::CorpusRecord& rec : replay_records) {
          mock.add_script(rec.prompt, rec.response);
        }
        if (!is_replay) {
          mock.enable_synthetic(g.seed ^ static_cast<std::uint64_t>(r));
        }
        apr::Orchestrator orch(mock, *codec, cfg);
        trace = opt.mode == "ar" ? orch.run_autoregressive(prompt)
                                 : orch.run(prompt);
      }
      if (trace.finish == apr::RunFinish::Error) {
        ++failures;
        std::cerr << "run: rollout " << r << " failed: " << trace.error
                  << "\n";
      }
      nlohmann::json j = apr::to_json(trace);
      j["rollout"] = r;
      sink << j.dump() << "\n";
    }
  }
  return failures == 0 ? 0 : 1;
}

// --- validate ---------------------------------------------------------------

int cmd_validate(const GlobalOptions& g, const std::string& in_path,
                 bool alias, bool strict) {
  (void)g;
  std::ifstream in = open_input(in_path);
  std::size_t total = 0, valid = 0;
  apr::read_jsonl(in, [&](std::size_t line, const nlohmann::json& j) {
    const apr::CorpusRecord rec = row_to_record(j, line);
    apr::ParseOptions popts;
    popts.goal_path_alias = alias;
    const apr::Trajectory t = apr::parse(rec.response, popts);
    const apr::ValidationReport report = apr::validate(t);
    ++total;
    if (report.format_valid()) {
      ++valid;
      std::cout << "line " << line << ": OK\n";
    } else {
      std::cout << "line " << line << ":";
      for (const apr::Violation& v : report.violations) {
        std::cout << " " << apr::to_string(v.code);
      }
      std::cout << "\n";
    }
  });
  std::cerr << "validate: " << valid << "/" << total << " format-valid\n";
  return strict && valid != total ? 1 : 0;
}

// --- filter ------------------------------------------------------------------

struct FilterCliOptions {
  std::string in_path;
  std::string out_path;
  std::string rejects_path;
  std::optional<std::int64_t> max_tokens;
  std::optional<double> min_accel;
  bool alias = false;
};

int cmd_filter(const GlobalOptions& g, const FilterCliOptions& opt) {
  const auto codec = make_codec(g);
  std::ifstream in = open_input(opt.in_path);
  std::ofstream out = open_output(opt.out_path);
  std::ofstream rejects;
  if (!opt.rejects_path.empty()) rejects = open_output(opt.rejects_path);

  apr::BuiltinVerifier verifier;
  apr::FilterOptions fopts;
  fopts.parse.goal_path_alias = opt.alias;
  fopts.max_response_tokens = opt.max_tokens;
  fopts.min_acceleration = opt.min_accel;

  std::size_t total = 0, kept = 0;
  apr::read_jsonl(in, [&](std::size_t line, const nlohmann::json& j) {
    const apr::CorpusRecord rec = row_to_record(j, line);
    ++total;
    const apr::FilterResult r =
        apr::filter_record(rec, verifier, fopts, codec.get());
    if (r.kept) {
      ++kept;
      out << apr::to_json(rec).dump() << "\n";
    } else if (rejects) {
      nlohmann::json jr;
      jr["line"] = line;
      jr["reason"] = r.reason;
      jr["prompt"] = rec.prompt;
      rejects << jr.dump() << "\n";
    }
  });
  std::cerr << "filter: kept " << kept << "/" << total << "\n";
  return 0;
}

// --- pack --------------------------------------------------------------------

struct PackCliOptions {
  std::string in_path;
  std::string out_path;
  std::string bin_dir;
  bool with_ar = false;
  std::optional<std::int64_t> max_tokens;
  bool alias = false;
};

int cmd_pack(const GlobalOptions& g, const PackCliOptions& opt) {
  const auto codec = make_codec(g);
  std::ifstream in = open_input(opt.in_path);
  std::ofstream out = open_output(opt.out_path);
  if (!opt.bin_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(opt.bin_dir, ec);
    if (ec) {
      throw std::runtime_error("cannot create binary pack directory " +
                               opt.bin_dir + ": " + ec.message());
    }
  }

  std::size_t emitted = 0, skipped = 0;
  apr::read_jsonl(in, [&](std::size_t line, const nlohmann::json& j) {
    const apr::CorpusRecord rec = row_to_record(j, line);
    apr::ParseOptions popts;
    popts.goal_path_alias = opt.alias;
    apr::Trajectory t = apr::parse(rec.response, popts);
    t.prompt = rec.prompt;
    std::vector<apr::PackedSequence> packed;
    try {
      apr::PackOptions po;
      po.include_ar_unit = opt.with_ar;
      po.max_tokens = opt.max_tokens;
      packed = apr::pack_trajectory(t, *codec, po);
    } catch (const std::exception& e) {
      ++skipped;
      std::cerr << "pack: line " << line << " skipped: " << e.what() << "\n";
      return;
    }
    for (const apr::PackedSequence& ps : packed) {
      nlohmann::json jp = apr::to_json(ps);
      jp["source_line"] = line;
      out << jp.dump() << "\n";
      if (!opt.bin_dir.empty()) {
        char name[64];
        std::snprintf(name, sizeof(name), "packed_%06zu.bin", emitted);
        std::ofstream bin(opt.bin_dir + "/" + name, std::ios::binary);
        if (!bin) {
          throw std::runtime_error("cannot write binary packs in " +
                                   opt.bin_dir);
        }
        apr::write_packed_binary(bin, ps);
      }
      ++emitted;
    }
  });
  std::cerr << "pack: " << emitted << " sequences, " << skipped
            << " skipped\n";
  return 0;
}

// --- reward ------------------------------------------------------------------

struct RewardCliOptions {
  std::string in_path;
  std::string gold_path;
  std::string out_path;
  double rho = 0.5;
  double rho_clip = 0.2;
  double epsilon = 1e-6;
  std::string mode = "mean";  // mean | sigma
};

int cmd_reward(const GlobalOptions& g, const RewardCliOptions& opt) {
  const auto codec = make_codec(g);

  std::map<std::string, std::string> gold;
  if (!opt.gold_path.empty()) {
    std::ifstream in = open_input(opt.gold_path);
    apr::read_jsonl(in, [&](std::size_t line, const nlohmann::json& j) {
      if (!j.contains("prompt") || !j.contains("gold_answer")) {
        throw std::runtime_error(
            "line " + std::to_string(line) +
            ": gold rows need \"prompt\" and \"gold_answer\"");
      }
      gold[j["prompt"].get<std::string>()] =
          j["gold_answer"].get<std::string>();
    });
  }

  struct Row {
    std::string prompt;
    bool correct = false;
    std::int64_t total_tokens = 0;
    std::int64_t token_latency = 0;
    std::int64_t completion_tokens = 0;
    double reward = 0.0;
    double advantage = 0.0;
  };
  std::vector<Row> rows;
  std::map<std::string, std::vector<std::size_t>> groups;

  apr::RewardConfig rcfg;
  rcfg.rho = opt.rho;
  rcfg.rho_clip = opt.rho_clip;
  rcfg.epsilon = opt.epsilon;
  rcfg.mode = opt.mode == "sigma" ? apr::AdvantageMode::SigmaNormalized
                                  : apr::AdvantageMode::MeanCentered;

  apr::BuiltinVerifier verifier;
  std::ifstream in = open_input(opt.in_path);
  apr::read_jsonl(in, [&](std::size_t line, const nlohmann::json& j) {
    const apr::CorpusRecord rec = row_to_record(j, line);
    Row row;
    row.prompt = rec.prompt;

    std::string gold_answer = rec.gold_answer;
    if (gold_answer.empty()) {
      const auto it = gold.find(rec.prompt);
      if (it != gold.end()) gold_answer = it->second;
    }
    const std::optional<std::string> boxed =
        apr::extract_boxed_answer(rec.response);
    apr::Trajectory t = apr::parse(rec.response);
    const bool format_ok = apr::validate(t).format_valid();
    row.correct = format_ok && boxed && !gold_answer.empty() &&
                  verifier.equivalent(*boxed, gold_answer);

    const apr::LatencyReport lat = apr::latency_report(t, *codec);
    row.total_tokens = lat.total_tokens;
    row.token_latency = lat.token_latency;
    if (j.contains("token_stats") &&
        j["token_stats"].contains("decoded_total")) {
      row.completion_tokens =
          j["token_stats"]["decoded_total"].get<std::int64_t>();
    } else {
      row.completion_tokens = codec->count(rec.response);
    }
    row.reward = row.total_tokens > 0
                     ? apr::parallel_reward(row.correct, row.total_tokens,
                                            row.token_latency, rcfg)
                     : 0.0;
    groups[row.prompt].push_back(rows.size());
    rows.push_back(row);
  });

  std::size_t degenerate_groups = 0;
  for (const auto& [prompt, members] : groups) {
    if (members.size() < 2) {
      ++degenerate_groups;  // advantage stays 0: no group signal
      continue;
    }
    std::vector<double> rewards;
    rewards.reserve(members.size());
    for (std::size_t i : members) rewards.push_back(rows[i].reward);
    const apr::GroupAdvantages adv = apr::group_advantages(rewards, rcfg);
    for (std::size_t k = 0; k < members.size(); ++k) {
      rows[members[k]].advantage = adv.advantages[k];
    }
  }

  std::vector<double> advantages;
  std::vector<std::int64_t> completion_tokens;
  for (const Row& r : rows) {
    advantages.push_back(r.advantage);
    completion_tokens.push_back(r.completion_tokens);
  }
  const apr::BatchWeights weights =
      apr::emit_token_weights(advantages, completion_tokens);

  const bool out_is_stdout = opt.out_path.empty() || opt.out_path == "-";
  std::ofstream out;
  if (!out_is_stdout) out = open_output(opt.out_path);
  std::ostream& sink = out_is_stdout ? std::cout : out;
  double reward_sum = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Row& r = rows[i];
    nlohmann::json j;
    j["prompt"] = r.prompt;
    j["correct"] = r.correct;
    j["total_tokens"] = r.total_tokens;
    j["token_latency"] = r.token_latency;
    j["reward"] = r.reward;
    j["advantage"] = r.advantage;
    j["completion_tokens"] = r.completion_tokens;
    j["weight_per_token"] = weights.records[i].weight_per_token;
    sink << j.dump() << "\n";
    reward_sum += r.reward;
  }
  std::cerr << "reward: rollouts=" << rows.size()
            << " groups=" << groups.size()
            << " degenerate_groups=" << degenerate_groups
            << " batch_normalizer=" << weights.normalizer << " mean_reward="
            << (rows.empty() ? 0.0
                             : reward_sum / static_cast<double>(rows.size()))
            << "\n";
  return 0;
}

// --- stats -------------------------------------------------------------------

int cmd_stats(const GlobalOptions& g, const std::string& in_path,
              const std::string& hist_path, bool alias) {
  const auto codec = make_codec(g);
  std::ifstream in = open_input(in_path);
  apr::DatasetStatsAccumulator acc;
  std::vector<double> self_par;
  apr::read_jsonl(in, [&](std::size_t line, const nlohmann::json& j) {
    const apr::CorpusRecord rec = row_to_record(j, line);
    apr::ParseOptions popts;
    popts.goal_path_alias = alias;
    const apr::Trajectory t = apr::parse(rec.response, popts);
    const apr::LatencyReport lat = apr::latency_report(t, *codec);
    acc.add(lat);
    self_par.push_back(lat.self_parallelism());
  });
  for (const auto& [key, value] : acc.summary()) {
    std::cout << key << "=" << value << "\n";
  }
  if (!hist_path.empty()) {
    std::ofstream hist = open_output(hist_path);
    hist << apr::histogram_csv(apr::histogram(self_par, 0.1));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive parallel reasoning toolkit"};
  app.require_subcommand(1);

  GlobalOptions g;
  app.add_option("--seed", g.seed, "Base RNG seed");
  app.add_option("--vocab", g.vocab_path,
                 "Vocabulary file (one token per line); default word codec");

  RunOptions run_opt;
  auto* run = app.add_subcommand("run", "Run rollouts against a backend");
  run->add_option("--prompts", run_opt.prompts_path,
                  "JSONL file with prompt (or prompt+response) rows");
  run->add_option("--prompt", run_opt.prompt_inline, "Single inline prompt");
  run->add_option("--mode", run_opt.mode, "parallel | ar")
      ->check(CLI::IsMember({"parallel", "ar"}));
  run->add_option("--backend", run_opt.backend,
                  "mock | synthetic | replay:FILE | http://host:port");
  run->add_option("--rollouts", run_opt.rollouts, "Rollouts per prompt")
      ->check(CLI::Range(1, std::numeric_limits<int>::max()));
  run->add_option("--budget", run_opt.budget, "Total decoded-token budget");
  std::int64_t cap = -1;
  run->add_option("--per-thread-cap", cap, "Per-thread token cap");
  run->add_option("--per-token-ns", run_opt.per_token_ns,
                  "Mock decode cost per token");
  run->add_option("--per-request-ns", run_opt.per_request_ns,
                  "Mock fixed cost per request");
  run->add_option("--out", run_opt.out_path, "Trace JSONL output (- stdout)");
  run->add_option("--emit-gold", run_opt.gold_path,
                  "Write per-prompt gold answers (synthetic backend)");

  std::string validate_in;
  bool validate_alias = false, validate_strict = false;
  auto* val = app.add_subcommand("validate", "Check trajectory format");
  val->add_option("--in", validate_in, "Input JSONL")->required();
  val->add_flag("--alias", validate_alias, "Accept legacy Goal/Path tags");
  val->add_flag("--strict", validate_strict,
                "Exit nonzero when any record is invalid");

  FilterCliOptions filter_opt;
  std::int64_t filter_max_tokens = -1;
  double filter_min_accel = -1.0;
  auto* fil = app.add_subcommand("filter", "Reward-filter a corpus");
  fil->add_option("--in", filter_opt.in_path, "Input JSONL")->required();
  fil->add_option("--out", filter_opt.out_path, "Kept records")->required();
  fil->add_option("--rejects", filter_opt.rejects_path, "Rejection log");
  fil->add_option("--max-tokens", filter_max_tokens,
                  "Drop responses over this many tokens");
  fil->add_option("--min-accel", filter_min_accel,
                  "Drop parallel traces under this acceleration ratio");
  fil->add_flag("--alias", filter_opt.alias, "Accept legacy Goal/Path tags");

  PackCliOptions pack_opt;
  std::int64_t pack_max_tokens = -1;
  auto* pack = app.add_subcommand("pack", "Pack trajectories for training");
  pack->add_option("--in", pack_opt.in_path, "Input JSONL")->required();
  pack->add_option("--out", pack_opt.out_path, "Packed JSONL")->required();
  pack->add_option("--bin-dir", pack_opt.bin_dir,
                   "Also write one binary file per sequence here");
  pack->add_flag("--with-ar", pack_opt.with_ar,
                 "Also pack the full-autoregressive unit separately");
  pack->add_option("--max-tokens", pack_max_tokens,
                   "Reject packed sequences over this length");
  pack->add_flag("--alias", pack_opt.alias, "Accept legacy Goal/Path tags");

  RewardCliOptions reward_opt;
  auto* rew = app.add_subcommand("reward", "Score rollouts and weights");
  rew->add_option("--in", reward_opt.in_path, "Trace/corpus JSONL")
      ->required();
  rew->add_option("--gold", reward_opt.gold_path,
                  "JSONL with prompt -> gold_answer");
  rew->add_option("--out", reward_opt.out_path, "Reward JSONL (- stdout)");
  rew->add_option("--rho", reward_opt.rho, "Acceleration bonus slope");
  rew->add_option("--clip", reward_opt.rho_clip, "Acceleration bonus cap");
  rew->add_option("--epsilon", reward_opt.epsilon,
                  "Sigma-normalization stabilizer");
  rew->add_option("--mode", reward_opt.mode, "mean | sigma")
      ->check(CLI::IsMember({"mean", "sigma"}));

  std::string stats_in, stats_hist;
  bool stats_alias = false;
  auto* stats = app.add_subcommand("stats", "Corpus statistics");
  stats->add_option("--in", stats_in, "Input JSONL")->required();
  stats->add_option("--self-par-hist", stats_hist,
                    "Write a self-parallelism histogram CSV here");
  stats->add_flag("--alias", stats_alias, "Accept legacy Goal/Path tags");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      if (cap >= 0) run_opt.per_thread_cap = cap;
      return cmd_run(g, run_opt);
    }
    if (*val) return cmd_validate(g, validate_in, validate_alias,
                                  validate_strict);
    if (*fil) {
      if (filter_max_tokens >= 0) filter_opt.max_tokens = filter_max_tokens;
      if (filter_min_accel >= 0) filter_opt.min_accel = filter_min_accel;
      return cmd_filter(g, filter_opt);
    }
    if (*pack) {
      if (pack_max_tokens >= 0) pack_opt.max_tokens = pack_max_tokens;
      return cmd_pack(g, pack_opt);
    }
    if (*rew) return cmd_reward(g, reward_opt);
    if (*stats) return cmd_stats(g, stats_in, stats_hist, stats_alias);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
