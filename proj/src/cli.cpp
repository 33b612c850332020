#include "deeptravel/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "deeptravel/datagen.hpp"
#include "deeptravel/policy.hpp"
#include "deeptravel/trainer.hpp"
#include "deeptravel/verifier.hpp"

namespace deeptravel {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& content) {
  if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

/// Keys understood by at least one command.
const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      // trainer
      "n", "epsilon", "beta", "eta", "gamma", "replay_fraction", "learning_rate", "batch_size", "total_steps",
      "ref_refresh", "strict_ratio", "buffer_capacity", "seed", "threads", "max_turns", "max_total_segments",
      "transfer_buffer_min", "force_trajectory_pass", "force_turn_pass", "clone_epochs", "clone_lr",
      "checkpoint_every",
      // world
      "cities", "days", "start_date", "world_seed",
      // data
      "probe_epsilon", "probe_k", "splits", "max_candidates", "easy_threshold", "medium_threshold", "intent_space"};
  return keys;
}

const std::set<std::string>& trainer_keys() {
  static const std::set<std::string> keys = {
      "n", "epsilon", "beta", "eta", "gamma", "replay_fraction", "learning_rate", "batch_size", "total_steps",
      "ref_refresh", "strict_ratio", "buffer_capacity", "seed", "threads", "max_turns", "max_total_segments",
      "transfer_buffer_min", "force_trajectory_pass", "force_turn_pass"};
  return keys;
}

WorldState load_world(const std::string& path) { return WorldState::from_jsonl(slurp(path)); }

EpisodeLimits limits_from(const json& cfg) {
  EpisodeLimits l;
  l.max_turns = cfg.value("max_turns", l.max_turns);
  l.max_total_segments = cfg.value("max_total_segments", l.max_total_segments);
  l.validate();
  return l;
}

std::string pct(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}

std::string choice_name(Head h, int c) {
  switch (h) {
    case Head::Kind: return std::string(kind_template_name(static_cast<KindTemplate>(c)));
    case Head::Selector: return std::string(selector_name(static_cast<Selector>(c)));
    case Head::Observation: return c == 0 ? "ok" : c == 1 ? "empty" : "error";
  }
  return "?";
}

// ---------------------------------------------------------------------------

int cmd_gen_world(const json& cfg, std::optional<uint64_t> seed_flag, std::optional<int> cities,
                  std::optional<int> days, const std::string& out_path, std::ostream& out) {
  WorldConfig wc;
  wc.seed = resolve_seed(cfg, "world_seed", seed_flag, cfg.value("seed", wc.seed));
  wc.city_count = cities.value_or(cfg.value("cities", wc.city_count));
  wc.horizon_days = days.value_or(cfg.value("days", wc.horizon_days));
  wc.start_date = cfg.value("start_date", wc.start_date);
  try {
    wc.validate();
  } catch (const ConfigError& e) {
    throw UsageError(std::string("config error: ") + e.what());
  }
  const WorldState w = generate_world(wc);
  spit(out_path, w.to_jsonl());
  out << w.digest() << "\n";
  return 0;
}

int cmd_gen_data(const json& cfg, std::optional<uint64_t> seed_flag, const std::string& world_path,
                 const std::string& splits_text, const std::string& probe, const std::string& out_dir,
                 const std::string& overrides_path, int threads, std::ostream& out) {
  std::vector<SplitSpec> specs;
  try {
    specs = parse_split_spec(splits_text);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  GenDataConfig g;
  g.seed = resolve_seed(cfg, "seed", seed_flag, g.seed);
  g.probe_k = cfg.value("probe_k", g.probe_k);
  g.probe_epsilon = cfg.value("probe_epsilon", g.probe_epsilon);
  g.max_candidates = cfg.value("max_candidates", g.max_candidates);
  g.thresholds.easy = cfg.value("easy_threshold", g.thresholds.easy);
  g.thresholds.medium = cfg.value("medium_threshold", g.thresholds.medium);
  g.limits = limits_from(cfg);
  g.transfer_buffer_min = cfg.value("transfer_buffer_min", g.transfer_buffer_min);
  g.threads = threads;
  if (cfg.contains("intent_space")) g.space = IntentSpace::from_json(cfg["intent_space"]);
  if (!probe.empty()) {
    const auto parts = split(probe, ':');
    if (parts[0] == "oracle" && parts.size() == 1) {
      g.probe_epsilon = 0.0;
    } else if (parts[0] == "noisy-oracle" && parts.size() <= 2) {
      if (parts.size() == 2) {
        try {
          g.probe_epsilon = std::stod(parts[1]);
        } catch (const std::exception&) {
          throw UsageError("bad probe epsilon in '" + probe + "'");
        }
      }
    } else {
      throw UsageError("unknown probe '" + probe + "' (expected oracle or noisy-oracle[:epsilon])");
    }
  }
  if (specs.empty()) {
    out << "empty split spec: nothing written\n";
    return 0;
  }
  QueryOverrides overrides;
  if (!overrides_path.empty()) overrides = QueryOverrides::parse(slurp(overrides_path));
  Sandbox sandbox(load_world(world_path));
  const GenDataResult data = generate_data(sandbox, specs, g, overrides);
  write_data(data, out_dir);
  for (const auto& s : specs) {
    if (s.kind == SplitKind::ColdStart) {
      out << s.name << ": " << data.teachers.at(s.name).size() << " teacher trajectories\n";
    } else {
      const auto& qs = data.queries.at(s.name);
      int e = 0, m = 0, h = 0;
      for (const auto& q : qs) {
        e += q.difficulty == Difficulty::Easy;
        m += q.difficulty == Difficulty::Medium;
        h += q.difficulty == Difficulty::Hard;
      }
      out << s.name << ": " << qs.size() << " queries (easy " << e << ", medium " << m << ", hard " << h << ")\n";
    }
  }
  return 0;
}

std::vector<Query> load_training_queries(const std::string& data) {
  if (fs::is_directory(data)) {
    if (fs::exists(data + "/train.jsonl")) return read_queries(data + "/train.jsonl");
    throw std::runtime_error("data directory " + data + " has no train.jsonl");
  }
  return read_queries(data);
}

int cmd_train(json cfg, std::optional<uint64_t> seed_flag, const std::string& world_path, const std::string& data,
              const std::string& cold_start, const std::string& ablation, const std::string& out_dir,
              const std::string& resume, std::ostream& out) {
  static const std::set<std::string> ablations = {"none", "no-er", "no-cs", "no-traj", "no-turn"};
  if (!ablations.count(ablation)) throw UsageError("unknown ablation '" + ablation + "'");
  cfg["seed"] = resolve_seed(cfg, "seed", seed_flag, 7);
  json tj = json::object();
  for (const auto& [k, v] : cfg.items())
    if (trainer_keys().count(k)) tj[k] = v;
  TrainerConfig tc;
  try {
    tc = TrainerConfig::from_json(tj);
  } catch (const ConfigError& e) {
    throw UsageError(std::string("config error: ") + e.what());
  }
  if (ablation == "no-er") tc.gamma.reset();
  if (ablation == "no-traj") tc.verifier.force_trajectory_pass = true;
  if (ablation == "no-turn") tc.verifier.force_turn_pass = true;

  Sandbox sandbox(load_world(world_path));
  const std::vector<Query> dataset = load_training_queries(data);
  PolicyParams init = PolicyParams::zeros();
  json clone_info = nullptr;
  if (!cold_start.empty() && ablation != "no-cs") {
    const auto teacher = read_trajectories(cold_start, tc.limits);
    const int epochs = cfg.value("clone_epochs", 200);
    const double lr = cfg.value("clone_lr", 2.0);
    CloneResult c = behavior_clone(init, teacher, epochs, lr);
    init = c.params;
    clone_info = {{"teacher", teacher.size()},
                  {"epochs", epochs},
                  {"lr", lr},
                  {"initial_loss", c.losses.empty() ? 0.0 : c.losses.front()},
                  {"final_loss", c.losses.empty() ? 0.0 : c.losses.back()},
                  {"top1_agreement", top1_agreement(init, teacher)}};
    out << "cold start: " << teacher.size() << " teacher trajectories, loss " << clone_info["initial_loss"] << " -> "
        << clone_info["final_loss"] << "\n";
  }

  Trainer trainer(tc, dataset, sandbox, init);
  if (!resume.empty()) trainer.restore(json::parse(slurp(resume)));
  const int every = cfg.value("checkpoint_every", 50);
  fs::create_directories(out_dir);
  auto flush = [&] {
    std::string jsonl, csv = metrics_csv_header() + "\n";
    for (const auto& m : trainer.metrics()) {
      jsonl += m.to_json().dump() + "\n";
      csv += metrics_csv_row(m) + "\n";
    }
    spit(out_dir + "/metrics.jsonl", jsonl);
    spit(out_dir + "/metrics.csv", csv);
    spit(out_dir + "/checkpoint.json", trainer.checkpoint().dump() + "\n");
    spit(out_dir + "/params.json", trainer.params().to_json().dump() + "\n");
  };
  while (!trainer.done()) {
    const StepMetrics m = trainer.step();
    out << "step " << m.step << " reward " << pct(m.mean_reward) << " keep " << pct(m.sample_keep_rate)
        << " buffer " << m.buffer_size << (m.replayed ? " replayed " + std::to_string(m.replayed) : std::string())
        << "\n";
    if (every > 0 && m.step % every == 0) flush();
  }
  flush();
  const json manifest{{"format", "deeptravel-train-manifest"},
                      {"schema", 1},
                      {"world_digest", sandbox.world().digest()},
                      {"config", tc.to_json()},
                      {"ablation", ablation},
                      {"dataset", data},
                      {"dataset_size", dataset.size()},
                      {"cold_start", clone_info},
                      {"steps", trainer.current_step()},
                      {"files", {"params.json", "checkpoint.json", "metrics.jsonl", "metrics.csv"}}};
  spit(out_dir + "/manifest.json", manifest.dump(2) + "\n");
  return 0;
}

struct NamedSplit {
  std::string name;
  std::vector<Query> queries;
};

std::vector<NamedSplit> load_benchmark(const std::string& path) {
  std::vector<NamedSplit> out;
  if (fs::is_directory(path)) {
    const json manifest = json::parse(slurp(path + "/manifest.json"));
    for (const auto& [name, entry] : manifest.at("files").items()) {
      const std::string kind = entry.value("kind", "");
      if (kind != "constrained" && kind != "unconstrained") continue;
      out.push_back({name, read_queries(path + "/" + entry.at("file").get<std::string>())});
    }
  } else {
    out.push_back({fs::path(path).stem().string(), read_queries(path)});
  }
  size_t total = 0;
  for (const auto& s : out) total += s.queries.size();
  if (total == 0) throw std::runtime_error("benchmark " + path + " has no queries");
  return out;
}

int cmd_eval(const json& cfg, std::optional<uint64_t> seed_flag, const std::string& params_arg,
             const std::string& world_path, const std::string& bench_path, const std::string& report_path,
             int threads, std::ostream& out) {
  const uint64_t seed = resolve_seed(cfg, "seed", seed_flag, 7);
  const EpisodeLimits limits = limits_from(cfg);
  const int buffer = cfg.value("transfer_buffer_min", 60);
  Sandbox sandbox(load_world(world_path));
  const auto splits = load_benchmark(bench_path);

  PolicyParams params = PolicyParams::zeros();
  std::unique_ptr<Policy> policy;
  if (params_arg == "oracle") {
    policy = std::make_unique<OraclePolicy>(buffer);
  } else {
    if (params_arg != "untrained") {
      json j = json::parse(slurp(params_arg));
      if (j.value("format", "") == "deeptravel-checkpoint") j = j.at("params");
      params = PolicyParams::from_json(j);
    }
    policy = std::make_unique<SoftmaxPolicy>(params, true, buffer);
  }
  RuleVerifier verifier(VerifierConfig{buffer, false, false});

  json report{{"policy", params_arg}, {"world_digest", sandbox.world().digest()}, {"splits", json::object()}};
  std::vector<int> everything;
  out << std::left << std::setw(22) << "split" << std::setw(9) << "easy" << std::setw(9) << "medium" << std::setw(9)
      << "hard" << "all\n";
  for (const auto& s : splits) {
    const EvalResult r = evaluate(*policy, sandbox, verifier, s.queries, limits, seed, threads);
    json row = json::object();
    out << std::setw(22) << s.name;
    for (Difficulty d : {Difficulty::Easy, Difficulty::Medium, Difficulty::Hard}) {
      std::vector<int> sub;
      for (size_t i = 0; i < s.queries.size(); ++i)
        if (s.queries[i].difficulty == d) sub.push_back(r.rewards[i]);
      const std::string key(difficulty_name(d));
      if (sub.empty()) {
        row[key] = nullptr;
        out << std::setw(9) << "-";
      } else {
        row[key] = pass_rate_percent(sub);
        out << std::setw(9) << pct(pass_rate_percent(sub));
      }
    }
    row["all"] = r.pass_rate;
    row["count"] = s.queries.size();
    out << pct(r.pass_rate) << "\n";
    report["splits"][s.name] = row;
    everything.insert(everything.end(), r.rewards.begin(), r.rewards.end());
  }
  report["aggregate"] = pass_rate_percent(everything);
  out << "aggregate final pass rate: " << pct(pass_rate_percent(everything)) << "%\n";
  if (!report_path.empty()) spit(report_path, report.dump(2) + "\n");
  return 0;
}

int cmd_inspect(const std::string& path, long long index, std::ostream& out) {
  std::vector<json> records;
  {
    std::istringstream in(slurp(path));
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      json j = json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object() || !j.contains("text"))
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": not a trajectory record");
      records.push_back(std::move(j));
    }
  }
  if (index < 0 || static_cast<size_t>(index) >= records.size())
    throw std::out_of_range("index " + std::to_string(index) + " out of range (" + std::to_string(records.size()) +
                            " trajectories)");
  const json& rec = records[static_cast<size_t>(index)];
  const Trajectory t = trajectory_from_json(rec);
  out << "trajectory " << index << " of " << records.size() << "  query " << t.query_id << "  terminal "
      << terminal_name(t.terminal) << "\n";
  std::optional<Query> q;
  if (rec.contains("query")) q = query_from_json(rec["query"]);
  if (q) out << "query: " << q->text << "\n";
  out << "\nsegments:\n";
  for (const auto& s : t.segments) {
    std::string body = s.body;
    if (body.size() > 400) body = body.substr(0, 400) + " ...";
    out << "  [turn " << s.turn_index << "] " << segment_tag(s.kind) << ": " << body << "\n";
  }
  out << "\ndecisions:\n";
  for (const auto& d : t.decisions)
    out << "  " << head_name(d.head) << " bucket " << d.bucket << " -> " << choice_name(d.head, d.choice)
        << "  log_prob " << d.log_prob << (d.masked ? "  [masked]" : "") << "\n";
  if (!q) {
    out << "\n(no embedded query: verdicts unavailable)\n";
    return 0;
  }
  RuleVerifier verifier;
  const RewardRecord r = verifier.joint_reward(*q, t);
  static const char* const rubric_names[kRubricCount] = {"completeness", "main requirement", "logic",
                                                          "budget/deadline", "specific requirement", "contingency"};
  out << "\nverdict: " << conclusion_phrase(r.trajectory_verdict.conclusion) << "\n";
  for (int i = 0; i < kRubricCount; ++i) {
    const auto& rb = r.trajectory_verdict.rubrics[static_cast<size_t>(i)];
    out << "  " << (i + 1) << ". " << rubric_names[i] << ": " << (rb.pass ? "pass" : "fail");
    if (!rb.diagnostics.empty()) out << " (" << join(rb.diagnostics, "; ") << ")";
    out << "\n";
  }
  for (const auto& tv : r.turn_verdicts)
    out << "  turn " << tv.turn_index << ": call logic " << (tv.call_logic_ok ? "ok" : "bad") << ", consistency "
        << (tv.consistency_ok ? "ok" : "bad") << (tv.diagnostics.empty() ? "" : " (" + tv.diagnostics + ")") << "\n";
  out << "reward: " << r.r << "\n";
  return 0;
}

}  // namespace

json load_flat_config(const std::string& path, const std::vector<std::string>& overrides) {
  json cfg = json::object();
  if (!path.empty()) {
    cfg = json::parse(slurp(path), nullptr, false);
    if (cfg.is_discarded() || !cfg.is_object()) throw UsageError("config " + path + " is not a JSON object");
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("override '" + o + "' is not key=value");
    const std::string key = o.substr(0, eq), raw = o.substr(eq + 1);
    json v = json::parse(raw, nullptr, false);
    cfg[key] = v.is_discarded() ? json(raw) : v;
  }
  for (const auto& [k, v] : cfg.items())
    if (!known_keys().count(k)) throw UsageError("unknown config key '" + k + "'");
  return cfg;
}

uint64_t resolve_seed(const json& config, const std::string& key, std::optional<uint64_t> flag, uint64_t fallback) {
  if (flag) return *flag;
  if (auto env = seed_from_env()) return *env;
  if (config.contains(key)) return config[key].get<uint64_t>();
  return fallback;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"deeptravel: desk-scale agentic RL for travel planning"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  std::optional<uint64_t> seed;
  int threads = 0;
  auto common = [&](CLI::App* c) {
    c->add_option("--config", config_path, "flat JSON config file");
    c->add_option("--set", sets, "key=value override (repeatable)");
    c->add_option("--seed", seed, "seed (overrides config and DEEPTRAVEL_SEED)");
  };

  auto* gw = app.add_subcommand("gen-world", "generate a seeded world");
  std::optional<int> cities, days;
  std::string world_out;
  common(gw);
  gw->add_option("--cities", cities, "number of cities");
  gw->add_option("--days", days, "date horizon in days");
  gw->add_option("--out", world_out, "output world file")->required();

  auto* gd = app.add_subcommand("gen-data", "build benchmark, training and cold-start data");
  std::string world_path, splits = "default", probe, out_dir, overrides;
  common(gd);
  gd->add_option("--world", world_path, "world file")->required();
  gd->add_option("--splits", splits, "split spec, e.g. name:constrained=156/45/299;train:train=450");
  gd->add_option("--probe", probe, "difficulty probe: oracle or noisy-oracle[:epsilon]");
  gd->add_option("--out-dir", out_dir, "output directory")->required();
  gd->add_option("--overrides", overrides, "allow/deny list file");
  gd->add_option("--threads", threads, "worker threads (0: all cores)");

  auto* tr = app.add_subcommand("train", "cold start then replay-augmented RL");
  std::string data, cold_start, ablation = "none", train_out, resume;
  common(tr);
  tr->add_option("--world", world_path, "world file")->required();
  tr->add_option("--data", data, "training queries (file or gen-data directory)")->required();
  tr->add_option("--cold-start", cold_start, "teacher trajectories for behavior cloning");
  tr->add_option("--ablation", ablation, "none, no-er, no-cs, no-traj or no-turn");
  tr->add_option("--out", train_out, "output directory")->required();
  tr->add_option("--resume", resume, "checkpoint to resume from");

  auto* ev = app.add_subcommand("eval", "greedy final pass rate on a benchmark");
  std::string params_arg, bench, report;
  common(ev);
  ev->add_option("--params", params_arg, "params or checkpoint file, 'untrained' or 'oracle'")->required();
  ev->add_option("--world", world_path, "world file")->required();
  ev->add_option("--benchmark", bench, "benchmark file or gen-data directory")->required();
  ev->add_option("--report", report, "JSON report path");
  ev->add_option("--threads", threads, "worker threads (0: all cores)");

  auto* in = app.add_subcommand("inspect", "pretty-print one trajectory");
  std::string traj_path;
  long long index = 0;
  in->add_option("--trajectory", traj_path, "trajectory JSON-lines file")->required();
  in->add_option("--index", index, "record index");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*in) return cmd_inspect(traj_path, index, out);
    const json cfg = load_flat_config(config_path, sets);
    if (*gw) return cmd_gen_world(cfg, seed, cities, days, world_out, out);
    if (*gd) return cmd_gen_data(cfg, seed, world_path, splits, probe, out_dir, overrides, threads, out);
    if (*tr) return cmd_train(cfg, seed, world_path, data, cold_start, ablation, train_out, resume, out);
    if (*ev) {
      json c = cfg;
      if (!c.contains("threads")) c["threads"] = threads;
      return cmd_eval(c, seed, params_arg, world_path, bench, report, c.value("threads", threads), out);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace deeptravel
