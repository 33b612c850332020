#pragma once

// Replay-augmented group-relative policy optimisation over the tabular policy.

#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "deeptravel/policy.hpp"
#include "deeptravel/protocol.hpp"
#include "deeptravel/verifier.hpp"
#include "json.hpp"

namespace deeptravel {

struct TrainerConfig {
  int n = 8;
  double epsilon = 0.2;
  double beta = 0.01;
  double eta = 0.1;
  std::optional<int> gamma = 10;  // nullopt: never replay
  double replay_fraction = 0.5;
  double learning_rate = 1.0;
  int batch_size = 8;  // queries per step
  int total_steps = 300;
  int ref_refresh = 50;
  bool strict_ratio = false;  // ratio against the reference policy instead of the step snapshot
  std::optional<size_t> buffer_capacity;
  uint64_t seed = 7;
  int threads = 0;  // 0: hardware concurrency
  EpisodeLimits limits;
  VerifierConfig verifier;

  void validate() const;
  nlohmann::json to_json() const;
  /// Unknown keys are rejected.
  static TrainerConfig from_json(const nlohmann::json& j);
};

enum class GroupSource { Dataset, Buffer };
std::string_view group_source_name(GroupSource s);

struct GroupRollout {
  std::string query_id;
  GroupSource source = GroupSource::Dataset;
  std::vector<Trajectory> trajectories;
  std::vector<int> rewards;
  std::vector<RewardRecord> records;
  std::optional<std::vector<double>> advantages;  // absent when filtered
};

double population_std(const std::vector<int>& rewards);
/// true when the group is kept, i.e. population std > eta.
bool keep_filter(const std::vector<int>& rewards, double eta);
/// (r_i - mean) / std; ContractError when std is zero.
std::vector<double> compute_advantages(const std::vector<int>& rewards);

struct SurrogateOptions {
  double epsilon = 0.2;
  double beta = 0.01;
  bool strict_ratio = false;
};

struct SurrogateResult {
  double objective = 0;  // maximised
  double kl = 0;
  std::vector<double> grad;
  int clipped = 0;
  int trajectories = 0;
};

/// Clipped group-relative objective averaged over kept groups minus beta times
/// the exact KL(theta || ref) summed over buckets visited by unmasked decisions.
/// Throws std::runtime_error on non-finite intermediates.
SurrogateResult surrogate_loss(const PolicyParams& theta, const PolicyParams& snapshot, const PolicyParams& ref,
                               const std::vector<const GroupRollout*>& groups, const SurrogateOptions& opt);

/// Exact KL(p || q) over one bucket with every template valid.
double bucket_kl(const PolicyParams& p, const PolicyParams& q, Head h, int bucket);

class ExperienceBuffer {
 public:
  struct Entry {
    std::string query_id;
    int step = 0;
  };

  explicit ExperienceBuffer(std::optional<size_t> capacity = std::nullopt) : capacity_(capacity) {}
  bool contains(const std::string& id) const;
  /// Appends when absent; the oldest entry is dropped at capacity.
  bool push(const std::string& id, int step);
  bool remove(const std::string& id);
  /// Moves up to k entries from the head to the tail and returns their ids.
  std::vector<std::string> rotate(size_t k);
  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::deque<Entry>& entries() const { return entries_; }
  std::optional<size_t> capacity() const { return capacity_; }

 private:
  std::optional<size_t> capacity_;
  std::deque<Entry> entries_;
};

/// Enqueues all-fail groups; evicts buffer-sourced groups that found a success.
void buffer_update(ExperienceBuffer& buffer, const GroupRollout& group, int step);

/// Runs `count` tasks on up to `threads` workers; task i writes only its own slot.
void parallel_for(size_t count, int threads, const std::function<void(size_t)>& task);

/// n episodes with streams derived from (stream, query id, index), each scored.
GroupRollout rollout_group(Policy& policy, Sandbox& sandbox, Verifier& verifier, const Query& q, int n,
                           const EpisodeLimits& limits, uint64_t stream, GroupSource source = GroupSource::Dataset,
                           int threads = 1);

struct StepMetrics {
  int step = 0;
  double mean_reward = 0;
  double entropy = 0;
  double grad_norm = 0;
  double mean_response_length = 0;  // segments
  double mean_turns = 0;
  double tool_call_accuracy = 0;
  double verifier_success_rate = 0;
  double sample_keep_rate = 0;
  double loss_mask_ratio = 0;
  int buffer_size = 0;
  int replayed = 0;  // buffer-sourced groups in the batch
  int groups = 0;
  double objective = 0;
  double kl = 0;
  double clip_fraction = 0;
  double masked_grad_max = 0;  // largest |grad| on parameters reachable only through masked decisions
  int64_t trajectory_passes = 0;
  int64_t turn_phases = 0;
  std::string diagnostic;

  nlohmann::json to_json() const;
  static StepMetrics from_json(const nlohmann::json& j);
};

std::string metrics_csv_header();
std::string metrics_csv_row(const StepMetrics& m);

class Trainer {
 public:
  Trainer(TrainerConfig cfg, std::vector<Query> dataset, Sandbox& sandbox, PolicyParams init);

  /// One optimisation step; returns its metrics.
  StepMetrics step();
  bool done() const { return step_ >= cfg_.total_steps; }
  int current_step() const { return step_; }

  const PolicyParams& params() const { return params_; }
  const PolicyParams& ref_params() const { return ref_; }
  const ExperienceBuffer& buffer() const { return buffer_; }
  const std::vector<StepMetrics>& metrics() const { return metrics_; }
  const TrainerConfig& config() const { return cfg_; }
  RuleVerifier& verifier() { return verifier_; }

  /// Query ids used for the batch of a given step; exposed for schedule checks.
  std::vector<std::pair<std::string, GroupSource>> last_batch() const { return last_batch_; }

  nlohmann::json checkpoint() const;
  /// Restores params, reference, buffer, data cursor and step from a checkpoint.
  void restore(const nlohmann::json& checkpoint);

 private:
  const Query& dataset_query(uint64_t draw) const;

  TrainerConfig cfg_;
  std::vector<Query> dataset_;
  std::map<std::string, size_t> by_id_;
  Sandbox& sandbox_;
  RuleVerifier verifier_;
  PolicyParams params_;
  PolicyParams ref_;
  ExperienceBuffer buffer_;
  std::vector<StepMetrics> metrics_;
  std::vector<std::pair<std::string, GroupSource>> last_batch_;
  uint64_t draws_ = 0;
  int step_ = 0;
};

struct TrainResult {
  PolicyParams params;
  std::vector<StepMetrics> metrics;
  ExperienceBuffer buffer;
};

TrainResult train(const TrainerConfig& cfg, const std::vector<Query>& dataset, Sandbox& sandbox,
                  const PolicyParams& init, const std::function<void(const StepMetrics&)>& on_step = nullptr);

struct EvalResult {
  std::vector<int> rewards;
  double pass_rate = 0;  // percent
};

double pass_rate_percent(const std::vector<int>& rewards);
/// One episode per query; r = 1 counts as a pass.
EvalResult evaluate(Policy& policy, Sandbox& sandbox, Verifier& verifier, const std::vector<Query>& queries,
                    const EpisodeLimits& limits, uint64_t seed, int threads = 0);
/// Greedy decoding of the given parameters.
EvalResult evaluate_params(const PolicyParams& params, Sandbox& sandbox, const std::vector<Query>& queries,
                           const EpisodeLimits& limits, const VerifierConfig& vcfg = {}, uint64_t seed = 0,
                           int threads = 0);

}  // namespace deeptravel
