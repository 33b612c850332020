#include "deeptravel/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace deeptravel {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

void TrainerConfig::validate() const {
  if (n < 2) throw ConfigError("rollout group size n must be at least 2");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("clip radius epsilon must lie in (0,1)");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("KL coefficient beta must be non-negative");
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigError("std filter eta must be non-negative");
  if (gamma && *gamma < 1) throw ConfigError("replay period gamma must be at least 1");
  if (!(replay_fraction >= 0.0 && replay_fraction <= 1.0)) throw ConfigError("replay_fraction must lie in [0,1]");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (total_steps < 0) throw ConfigError("total_steps must be non-negative");
  if (ref_refresh < 1) throw ConfigError("ref_refresh must be positive");
  if (buffer_capacity && *buffer_capacity == 0) throw ConfigError("buffer_capacity must be positive when set");
  if (threads < 0) throw ConfigError("threads must be non-negative");
  if (verifier.transfer_buffer_min < 0) throw ConfigError("transfer buffer must be non-negative");
  limits.validate();
}

json TrainerConfig::to_json() const {
  return json{{"n", n},
              {"epsilon", epsilon},
              {"beta", beta},
              {"eta", eta},
              {"gamma", gamma ? json(*gamma) : json(nullptr)},
              {"replay_fraction", replay_fraction},
              {"learning_rate", learning_rate},
              {"batch_size", batch_size},
              {"total_steps", total_steps},
              {"ref_refresh", ref_refresh},
              {"strict_ratio", strict_ratio},
              {"buffer_capacity", buffer_capacity ? json(*buffer_capacity) : json(nullptr)},
              {"seed", seed},
              {"threads", threads},
              {"max_turns", limits.max_turns},
              {"max_total_segments", limits.max_total_segments},
              {"transfer_buffer_min", verifier.transfer_buffer_min},
              {"force_trajectory_pass", verifier.force_trajectory_pass},
              {"force_turn_pass", verifier.force_turn_pass}};
}

TrainerConfig TrainerConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("trainer config must be an object");
  TrainerConfig c;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "n") c.n = v.get<int>();
      else if (key == "epsilon") c.epsilon = v.get<double>();
      else if (key == "beta") c.beta = v.get<double>();
      else if (key == "eta") c.eta = v.get<double>();
      else if (key == "gamma") {
        if (v.is_null() || (v.is_number() && v.get<double>() == 0)) c.gamma.reset();
        else c.gamma = v.get<int>();
      } else if (key == "replay_fraction") c.replay_fraction = v.get<double>();
      else if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "batch_size") c.batch_size = v.get<int>();
      else if (key == "total_steps") c.total_steps = v.get<int>();
      else if (key == "ref_refresh") c.ref_refresh = v.get<int>();
      else if (key == "strict_ratio") c.strict_ratio = v.get<bool>();
      else if (key == "buffer_capacity") {
        if (v.is_null()) c.buffer_capacity.reset();
        else c.buffer_capacity = v.get<size_t>();
      } else if (key == "seed") c.seed = v.get<uint64_t>();
      else if (key == "threads") c.threads = v.get<int>();
      else if (key == "max_turns") c.limits.max_turns = v.get<int>();
      else if (key == "max_total_segments") c.limits.max_total_segments = v.get<int>();
      else if (key == "transfer_buffer_min") c.verifier.transfer_buffer_min = v.get<int>();
      else if (key == "force_trajectory_pass") c.verifier.force_trajectory_pass = v.get<bool>();
      else if (key == "force_turn_pass") c.verifier.force_turn_pass = v.get<bool>();
      else throw ConfigError("unknown trainer config key: " + key);
    } catch (const json::exception& e) {
      throw ConfigError("bad value for " + key + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

std::string_view group_source_name(GroupSource s) { return s == GroupSource::Dataset ? "dataset" : "buffer"; }

// ---------------------------------------------------------------------------
// Group statistics
// ---------------------------------------------------------------------------

double population_std(const std::vector<int>& rewards) {
  if (rewards.empty()) return 0.0;
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0;
  for (int r : rewards) var += (r - mean) * (r - mean);
  return std::sqrt(var / n);
}

bool keep_filter(const std::vector<int>& rewards, double eta) { return population_std(rewards) > eta; }

std::vector<double> compute_advantages(const std::vector<int>& rewards) {
  const double sd = population_std(rewards);
  if (!(sd > 0.0)) throw ContractError("advantages requested for a group with zero reward spread");
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(rewards.size());
  std::vector<double> a;
  a.reserve(rewards.size());
  for (int r : rewards) a.push_back((r - mean) / sd);
  return a;
}

// ---------------------------------------------------------------------------
// Surrogate objective
// ---------------------------------------------------------------------------

double bucket_kl(const PolicyParams& p, const PolicyParams& q, Head h, int bucket) {
  const uint32_t all = (1u << head_arity(h)) - 1u;
  const auto pp = bucket_probs(p, h, bucket, all), qq = bucket_probs(q, h, bucket, all);
  double kl = 0;
  for (size_t k = 0; k < pp.size(); ++k)
    if (pp[k] > 0) kl += pp[k] * (std::log(pp[k]) - std::log(qq[k]));
  return kl;
}

SurrogateResult surrogate_loss(const PolicyParams& theta, const PolicyParams& snapshot, const PolicyParams& ref,
                               const std::vector<const GroupRollout*>& groups, const SurrogateOptions& opt) {
  SurrogateResult res;
  res.grad.assign(theta.theta.size(), 0.0);
  const PolicyParams& denom = opt.strict_ratio ? ref : snapshot;
  auto finite = [](double x, const char* what) {
    if (!std::isfinite(x)) throw std::runtime_error(std::string("non-finite ") + what + " in surrogate objective");
  };
  std::vector<const Trajectory*> visited_from;
  size_t kept = 0;
  for (const GroupRollout* g : groups)
    if (g->advantages) ++kept;
  if (kept == 0) return res;
  const double group_weight = 1.0 / static_cast<double>(kept);
  for (const GroupRollout* g : groups) {
    if (!g->advantages) continue;
    const auto& adv = *g->advantages;
    if (adv.size() != g->trajectories.size()) throw ContractError("advantage count differs from group size");
    const double w = group_weight / static_cast<double>(adv.size());
    for (size_t i = 0; i < adv.size(); ++i) {
      const Trajectory& t = g->trajectories[i];
      visited_from.push_back(&t);
      const double log_ratio = trajectory_log_prob(theta, t) - trajectory_log_prob(denom, t);
      const double rho = std::exp(log_ratio);
      finite(rho, "ratio");
      const double a = adv[i];
      const double clipped = std::clamp(rho, 1.0 - opt.epsilon, 1.0 + opt.epsilon);
      const double unclipped_term = rho * a, clipped_term = clipped * a;
      ++res.trajectories;
      if (unclipped_term <= clipped_term) {
        res.objective += w * unclipped_term;
        accumulate_log_prob_grad(theta, t, w * a * rho, res.grad);
      } else {
        res.objective += w * clipped_term;
        ++res.clipped;
      }
    }
  }
  if (opt.beta != 0.0) {
    for (const auto& [h, b] : visited_buckets(visited_from)) {
      if (b < 0 || b >= head_buckets(h)) continue;
      const uint32_t all = (1u << head_arity(h)) - 1u;
      const auto p = bucket_probs(theta, h, b, all), q = bucket_probs(ref, h, b, all);
      double kl = 0;
      for (size_t k = 0; k < p.size(); ++k) kl += p[k] * (std::log(p[k]) - std::log(q[k]));
      finite(kl, "KL");
      res.kl += kl;
      for (size_t k = 0; k < p.size(); ++k)
        res.grad[PolicyParams::index(h, b, static_cast<int>(k))] -=
            opt.beta * p[k] * ((std::log(p[k]) - std::log(q[k])) - kl);
    }
    res.objective -= opt.beta * res.kl;
  }
  finite(res.objective, "objective");
  for (double gk : res.grad) finite(gk, "gradient");
  return res;
}

// ---------------------------------------------------------------------------
// Experience buffer
// ---------------------------------------------------------------------------

bool ExperienceBuffer::contains(const std::string& id) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.query_id == id; });
}

bool ExperienceBuffer::push(const std::string& id, int step) {
  if (contains(id)) return false;
  if (capacity_ && entries_.size() >= *capacity_) entries_.pop_front();
  entries_.push_back({id, step});
  return true;
}

bool ExperienceBuffer::remove(const std::string& id) {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.query_id == id; });
  if (it == entries_.end()) return false;
  entries_.erase(it);
  return true;
}

std::vector<std::string> ExperienceBuffer::rotate(size_t k) {
  k = std::min(k, entries_.size());
  std::vector<std::string> ids;
  for (size_t i = 0; i < k; ++i) {
    Entry e = entries_.front();
    entries_.pop_front();
    ids.push_back(e.query_id);
    entries_.push_back(std::move(e));
  }
  return ids;
}

void buffer_update(ExperienceBuffer& buffer, const GroupRollout& group, int step) {
  const bool any_success = std::any_of(group.rewards.begin(), group.rewards.end(), [](int r) { return r == 1; });
  if (!any_success) {
    buffer.push(group.query_id, step);
  } else if (group.source == GroupSource::Buffer) {
    buffer.remove(group.query_id);
  }
}

// ---------------------------------------------------------------------------
// Rollouts
// ---------------------------------------------------------------------------

void parallel_for(size_t count, int threads, const std::function<void(size_t)>& task) {
  size_t workers = threads > 0 ? static_cast<size_t>(threads) : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> pool;
  for (size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (size_t i; (i = next.fetch_add(1)) < count;) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

namespace {

struct Scored {
  Trajectory trajectory;
  RewardRecord record;
};

Scored run_scored(Policy& policy, Sandbox& sandbox, Verifier& verifier, const Query& q, const EpisodeLimits& limits,
                  uint64_t stream, size_t index) {
  Rng rng = Rng::derive({stream, fnv1a(q.id), static_cast<uint64_t>(index)});
  SandboxEnvironment env(sandbox);
  Scored s;
  s.trajectory = run_episode(policy, env, q, limits, rng);
  s.record = verifier.joint_reward(q, s.trajectory);
  return s;
}

GroupRollout assemble_group(const Query& q, GroupSource source, std::vector<Scored>&& scored) {
  GroupRollout g;
  g.query_id = q.id;
  g.source = source;
  for (auto& s : scored) {
    g.rewards.push_back(s.record.r);
    g.trajectories.push_back(std::move(s.trajectory));
    g.records.push_back(std::move(s.record));
  }
  return g;
}

}  // namespace

GroupRollout rollout_group(Policy& policy, Sandbox& sandbox, Verifier& verifier, const Query& q, int n,
                           const EpisodeLimits& limits, uint64_t stream, GroupSource source, int threads) {
  if (n < 2) throw ConfigError("a rollout group needs at least 2 episodes");
  std::vector<Scored> scored(static_cast<size_t>(n));
  parallel_for(scored.size(), threads,
               [&](size_t i) { scored[i] = run_scored(policy, sandbox, verifier, q, limits, stream, i); });
  return assemble_group(q, source, std::move(scored));
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

json StepMetrics::to_json() const {
  json j{{"step", step},
         {"mean_reward", mean_reward},
         {"entropy", entropy},
         {"grad_norm", grad_norm},
         {"mean_response_length", mean_response_length},
         {"mean_turns", mean_turns},
         {"tool_call_accuracy", tool_call_accuracy},
         {"verifier_success_rate", verifier_success_rate},
         {"sample_keep_rate", sample_keep_rate},
         {"loss_mask_ratio", loss_mask_ratio},
         {"buffer_size", buffer_size},
         {"replayed", replayed},
         {"groups", groups},
         {"objective", objective},
         {"kl", kl},
         {"clip_fraction", clip_fraction},
         {"masked_grad_max", masked_grad_max},
         {"trajectory_passes", trajectory_passes},
         {"turn_phases", turn_phases}};
  if (!diagnostic.empty()) j["diagnostic"] = diagnostic;
  return j;
}

StepMetrics StepMetrics::from_json(const json& j) {
  StepMetrics m;
  m.step = j.at("step");
  m.mean_reward = j.at("mean_reward");
  m.entropy = j.at("entropy");
  m.grad_norm = j.at("grad_norm");
  m.mean_response_length = j.at("mean_response_length");
  m.mean_turns = j.at("mean_turns");
  m.tool_call_accuracy = j.at("tool_call_accuracy");
  m.verifier_success_rate = j.at("verifier_success_rate");
  m.sample_keep_rate = j.at("sample_keep_rate");
  m.loss_mask_ratio = j.at("loss_mask_ratio");
  m.buffer_size = j.at("buffer_size");
  m.replayed = j.at("replayed");
  m.groups = j.value("groups", 0);
  m.objective = j.value("objective", 0.0);
  m.kl = j.value("kl", 0.0);
  m.clip_fraction = j.value("clip_fraction", 0.0);
  m.masked_grad_max = j.value("masked_grad_max", 0.0);
  m.trajectory_passes = j.value("trajectory_passes", int64_t{0});
  m.turn_phases = j.value("turn_phases", int64_t{0});
  m.diagnostic = j.value("diagnostic", "");
  return m;
}

std::string metrics_csv_header() {
  return "step,mean_reward,entropy,grad_norm,mean_response_length,mean_turns,tool_call_accuracy,"
         "verifier_success_rate,sample_keep_rate,loss_mask_ratio,buffer_size,replayed,groups,objective,kl,"
         "clip_fraction";
}

std::string metrics_csv_row(const StepMetrics& m) {
  std::ostringstream os;
  os.precision(10);
  os << m.step << ',' << m.mean_reward << ',' << m.entropy << ',' << m.grad_norm << ',' << m.mean_response_length
     << ',' << m.mean_turns << ',' << m.tool_call_accuracy << ',' << m.verifier_success_rate << ','
     << m.sample_keep_rate << ',' << m.loss_mask_ratio << ',' << m.buffer_size << ',' << m.replayed << ','
     << m.groups << ',' << m.objective << ',' << m.kl << ',' << m.clip_fraction;
  return os.str();
}

namespace {

/// Calls whose text parsed and whose response came back ok, over all calls.
std::pair<int, int> call_accuracy(const Trajectory& t) {
  int ok = 0, total = 0;
  for (size_t i = 0; i < t.segments.size(); ++i) {
    if (t.segments[i].kind != SegmentKind::ToolCall) continue;
    ++total;
    if (i + 1 >= t.segments.size() || t.segments[i + 1].kind != SegmentKind::ToolResponse) continue;
    const json j = json::parse(t.segments[i + 1].body, nullptr, false);
    if (!j.is_discarded() && j.is_object() && j.value("status", "") == "ok") ++ok;
  }
  return {ok, total};
}

}  // namespace

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

Trainer::Trainer(TrainerConfig cfg, std::vector<Query> dataset, Sandbox& sandbox, PolicyParams init)
    : cfg_(std::move(cfg)),
      dataset_(std::move(dataset)),
      sandbox_(sandbox),
      verifier_(cfg_.verifier),
      params_(std::move(init)),
      ref_(params_),
      buffer_(cfg_.buffer_capacity) {
  cfg_.validate();
  if (dataset_.empty()) throw ConfigError("training dataset is empty");
  if (params_.theta.size() != PolicyParams::size()) throw ConfigError("initial parameters have the wrong size");
  for (size_t i = 0; i < dataset_.size(); ++i) by_id_.emplace(dataset_[i].id, i);
}

const Query& Trainer::dataset_query(uint64_t draw) const {
  const uint64_t n = dataset_.size();
  const uint64_t epoch = draw / n, pos = draw % n;
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng = Rng::derive({cfg_.seed, 0x64617461ull, epoch});
  for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return dataset_[order[pos]];
}

StepMetrics Trainer::step() {
  if (done()) throw ContractError("training already finished");
  const int s = ++step_;
  const PolicyParams snapshot = params_;

  // Batch: every gamma-th step draws part of the batch from the buffer head.
  std::vector<std::pair<const Query*, GroupSource>> batch;
  if (cfg_.gamma && s % *cfg_.gamma == 0 && !buffer_.empty()) {
    const auto want = static_cast<size_t>(std::llround(cfg_.replay_fraction * cfg_.batch_size));
    for (const auto& id : buffer_.rotate(want)) {
      auto it = by_id_.find(id);
      if (it != by_id_.end()) batch.emplace_back(&dataset_[it->second], GroupSource::Buffer);
    }
  }
  while (batch.size() < static_cast<size_t>(cfg_.batch_size)) batch.emplace_back(&dataset_query(draws_++), GroupSource::Dataset);
  last_batch_.clear();
  for (const auto& [q, src] : batch) last_batch_.emplace_back(q->id, src);

  const int64_t passes_before = verifier_.counters().trajectory_passes;
  const int64_t phases_before = verifier_.counters().turn_phases;
  const uint64_t stream = mix_seed({cfg_.seed, static_cast<uint64_t>(s)});
  const size_t n = static_cast<size_t>(cfg_.n);
  std::vector<Scored> scored(batch.size() * n);
  SoftmaxPolicy behaviour(snapshot, false, cfg_.verifier.transfer_buffer_min);
  parallel_for(scored.size(), cfg_.threads, [&](size_t k) {
    scored[k] = run_scored(behaviour, sandbox_, verifier_, *batch[k / n].first, cfg_.limits, stream, k % n);
  });

  std::vector<GroupRollout> groups;
  for (size_t g = 0; g < batch.size(); ++g) {
    std::vector<Scored> part(std::make_move_iterator(scored.begin() + static_cast<std::ptrdiff_t>(g * n)),
                             std::make_move_iterator(scored.begin() + static_cast<std::ptrdiff_t>((g + 1) * n)));
    groups.push_back(assemble_group(*batch[g].first, batch[g].second, std::move(part)));
    if (keep_filter(groups.back().rewards, cfg_.eta)) groups.back().advantages = compute_advantages(groups.back().rewards);
  }

  StepMetrics m;
  m.step = s;
  m.groups = static_cast<int>(groups.size());
  int kept = 0, calls_ok = 0, calls = 0, verifier_ok = 0, masked = 0, decisions = 0;
  double reward = 0, length = 0, turns = 0;
  std::vector<const Trajectory*> all;
  std::set<BucketKey> unmasked_buckets, masked_buckets;
  for (const auto& g : groups) {
    if (g.source == GroupSource::Buffer) ++m.replayed;
    if (g.advantages) ++kept;
    for (size_t i = 0; i < g.trajectories.size(); ++i) {
      const Trajectory& t = g.trajectories[i];
      all.push_back(&t);
      reward += g.rewards[i];
      length += static_cast<double>(t.segments.size());
      turns += t.turn_count();
      const auto [ok, total] = call_accuracy(t);
      calls_ok += ok;
      calls += total;
      if (!g.records[i].verifier_failed) ++verifier_ok;
      for (const auto& d : t.decisions) {
        ++decisions;
        if (d.masked) {
          ++masked;
          masked_buckets.insert({d.head, d.bucket});
        } else {
          unmasked_buckets.insert({d.head, d.bucket});
        }
      }
    }
  }
  const double count = static_cast<double>(all.size());
  m.mean_reward = reward / count;
  m.mean_response_length = length / count;
  m.mean_turns = turns / count;
  m.tool_call_accuracy = calls ? static_cast<double>(calls_ok) / calls : 0.0;
  m.verifier_success_rate = verifier_ok / count;
  m.sample_keep_rate = static_cast<double>(kept) / static_cast<double>(groups.size());
  m.loss_mask_ratio = decisions ? static_cast<double>(masked) / decisions : 0.0;
  m.entropy = policy_entropy(snapshot, visited_buckets(all));

  if (kept > 0) {
    std::vector<const GroupRollout*> ptrs;
    for (const auto& g : groups) ptrs.push_back(&g);
    try {
      SurrogateResult r = surrogate_loss(params_, snapshot, ref_, ptrs, {cfg_.epsilon, cfg_.beta, cfg_.strict_ratio});
      double sq = 0;
      for (double gk : r.grad) sq += gk * gk;
      m.grad_norm = std::sqrt(sq);
      m.objective = r.objective;
      m.kl = r.kl;
      m.clip_fraction = r.trajectories ? static_cast<double>(r.clipped) / r.trajectories : 0.0;
      for (const auto& key : masked_buckets) {
        if (unmasked_buckets.count(key) || key.second < 0 || key.second >= head_buckets(key.first)) continue;
        for (int c = 0; c < head_arity(key.first); ++c)
          m.masked_grad_max = std::max(m.masked_grad_max, std::abs(r.grad[PolicyParams::index(key.first, key.second, c)]));
      }
      for (size_t i = 0; i < r.grad.size(); ++i) params_.theta[i] += cfg_.learning_rate * r.grad[i];
      ++params_.version;
    } catch (const std::runtime_error& e) {
      m.diagnostic = std::string("update skipped: ") + e.what();
    }
  } else {
    m.diagnostic = "all groups filtered";
  }

  for (const auto& g : groups) buffer_update(buffer_, g, s);
  m.buffer_size = static_cast<int>(buffer_.size());
  m.trajectory_passes = verifier_.counters().trajectory_passes - passes_before;
  m.turn_phases = verifier_.counters().turn_phases - phases_before;
  if (s % cfg_.ref_refresh == 0) ref_ = params_;
  metrics_.push_back(m);
  return m;
}

json Trainer::checkpoint() const {
  json buf = json::array();
  for (const auto& e : buffer_.entries()) buf.push_back({{"query_id", e.query_id}, {"step", e.step}});
  json metrics = json::array();
  for (const auto& m : metrics_) metrics.push_back(m.to_json());
  return json{{"format", "deeptravel-checkpoint"},
              {"schema", 1},
              {"step", step_},
              {"draws", draws_},
              {"config", cfg_.to_json()},
              {"params", params_.to_json()},
              {"ref_params", ref_.to_json()},
              {"buffer", buf},
              {"metrics", metrics}};
}

void Trainer::restore(const json& ck) {
  if (ck.value("format", "") != "deeptravel-checkpoint") throw ConfigError("not a checkpoint file");
  if (ck.value("schema", 0) != 1) throw ConfigError("unsupported checkpoint schema");
  step_ = ck.at("step");
  draws_ = ck.at("draws");
  params_ = PolicyParams::from_json(ck.at("params"));
  ref_ = PolicyParams::from_json(ck.at("ref_params"));
  buffer_ = ExperienceBuffer(cfg_.buffer_capacity);
  for (const auto& e : ck.at("buffer")) buffer_.push(e.at("query_id"), e.at("step"));
  metrics_.clear();
  for (const auto& m : ck.value("metrics", json::array())) metrics_.push_back(StepMetrics::from_json(m));
}

TrainResult train(const TrainerConfig& cfg, const std::vector<Query>& dataset, Sandbox& sandbox,
                  const PolicyParams& init, const std::function<void(const StepMetrics&)>& on_step) {
  Trainer t(cfg, dataset, sandbox, init);
  while (!t.done()) {
    StepMetrics m = t.step();
    if (on_step) on_step(m);
  }
  return {t.params(), t.metrics(), t.buffer()};
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

double pass_rate_percent(const std::vector<int>& rewards) {
  if (rewards.empty()) return 0.0;
  const auto passed = std::count(rewards.begin(), rewards.end(), 1);
  return 100.0 * static_cast<double>(passed) / static_cast<double>(rewards.size());
}

EvalResult evaluate(Policy& policy, Sandbox& sandbox, Verifier& verifier, const std::vector<Query>& queries,
                    const EpisodeLimits& limits, uint64_t seed, int threads) {
  EvalResult res;
  res.rewards.assign(queries.size(), 0);
  parallel_for(queries.size(), threads, [&](size_t i) {
    res.rewards[i] = run_scored(policy, sandbox, verifier, queries[i], limits, seed, 0).record.r;
  });
  res.pass_rate = pass_rate_percent(res.rewards);
  return res;
}

EvalResult evaluate_params(const PolicyParams& params, Sandbox& sandbox, const std::vector<Query>& queries,
                           const EpisodeLimits& limits, const VerifierConfig& vcfg, uint64_t seed, int threads) {
  SoftmaxPolicy greedy(params, true, vcfg.transfer_buffer_min);
  RuleVerifier verifier(vcfg);
  return evaluate(greedy, sandbox, verifier, queries, limits, seed, threads);
}

}  // namespace deeptravel
