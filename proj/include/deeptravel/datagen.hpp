#pragma once

// Query synthesis, difficulty scoring, benchmark construction and cold-start
// distillation.

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "deeptravel/policy.hpp"
#include "deeptravel/trainer.hpp"
#include "deeptravel/verifier.hpp"
#include "json.hpp"

namespace deeptravel {

/// Combinatorics of the enumeration. Optional slots contribute 1 + |values|
/// choices (absent, or one of the values).
struct IntentSpace {
  std::vector<std::string> cities;    // empty: every world city
  std::vector<int> depart_offsets;    // days after the first world day; empty: whole horizon minus the longest trip
  std::vector<int> trip_lengths{2, 3, 4};
  std::vector<int64_t> budgets{120000, 250000, 450000};
  std::vector<int> deadlines{720, 1080};
  std::vector<std::string> hotel_prefs{"city-center", "riverside", "breakfast"};
  std::vector<TransportMode> modes{TransportMode::Flight, TransportMode::Train};
  int poi_choices = 1;  // first k POIs of the destination

  void validate() const;
  nlohmann::json to_json() const;
  static IntentSpace from_json(const nlohmann::json& j);
};

/// An intent space with only the base slots (no optional constraints).
IntentSpace base_intent_space();

/// Size of the mixed-radix product before validity filtering.
uint64_t intent_space_size(const WorldState& world, const IntentSpace& space);
/// Decodes one mixed-radix index; nullopt when the combination is invalid.
std::optional<TripIntents> decode_intents(const WorldState& world, const IntentSpace& space, uint64_t index);
/// Every valid combination in index order; the sink returns false to stop.
void enumerate_intents(const WorldState& world, const IntentSpace& space,
                       const std::function<bool(const TripIntents&)>& sink);
std::vector<TripIntents> enumerate_intents(const WorldState& world, const IntentSpace& space);

/// Throws ConfigError naming the problem when the set is invalid.
Query synthesize_query(const TripIntents& intents);

struct DifficultyThresholds {
  double easy = 2.0 / 3.0;
  double medium = 1.0 / 3.0;
};

Difficulty classify_pass_fraction(double p, const DifficultyThresholds& th = {});

struct DifficultyScore {
  Difficulty difficulty = Difficulty::Unrated;
  double pass_fraction = 0;
  int passes = 0;
};

/// k stochastic probe episodes; the pass fraction decides the class.
DifficultyScore score_difficulty(const Query& q, Policy& probe, int k, Sandbox& sandbox, Verifier& verifier,
                                 const EpisodeLimits& limits, uint64_t seed, const DifficultyThresholds& th = {});

/// A constraint-satisfying itinerary built only from records the tools return, if one exists.
std::optional<Itinerary> feasibility_witness(Sandbox& sandbox, const TripIntents& q, int transfer_buffer_min = 60);

/// Manual overrides: "allow <id>" keeps a query that fails the witness check,
/// "deny <id>" drops it. '#' starts a comment.
struct QueryOverrides {
  std::set<std::string> allow;
  std::set<std::string> deny;
  static QueryOverrides parse(std::string_view text);
};

enum class SplitKind { Constrained, Unconstrained, Train, ColdStart };
std::string_view split_kind_name(SplitKind k);

struct SplitSpec {
  std::string name;
  SplitKind kind = SplitKind::Constrained;
  int easy = 0, medium = 0, hard = 0;  // benchmark kinds
  int count = 0;                       // train and cold-start kinds

  int total() const { return kind == SplitKind::Train || kind == SplitKind::ColdStart ? count : easy + medium + hard; }
};

/// "name:kind=E/M/H" or "name:kind=N" entries separated by ';'. Kinds:
/// constrained, unconstrained, train, cold-start. "default" expands to the
/// standard benchmark plus 450/50 training queries and 1000 cold-start traces.
std::vector<SplitSpec> parse_split_spec(std::string_view text);
std::string default_split_spec();

struct ScoredQuery {
  Query query;
  DifficultyScore score;
  bool feasible = false;
};

/// Fills benchmark cells first-come from the scored pool, skipping excluded
/// ids and using each query at most once. Throws ConfigError listing every
/// deficient cell.
std::map<std::string, std::vector<Query>> build_benchmark(const std::vector<ScoredQuery>& pool,
                                                          const std::vector<SplitSpec>& specs,
                                                          const std::set<std::string>& exclude = {});

struct DistillResult {
  std::vector<Trajectory> trajectories;
  std::vector<const Query*> sources;
  int attempted = 0;
  int rejected_reward = 0;
  int rejected_format = 0;
};

/// Teacher episodes kept only when r = 1 and the strict format check passes.
DistillResult distill_cold_start(Policy& teacher, const std::vector<Query>& queries, Sandbox& sandbox,
                                 Verifier& verifier, const EpisodeLimits& limits, uint64_t seed,
                                 size_t max_keep = SIZE_MAX);

struct GenDataConfig {
  IntentSpace space;
  DifficultyThresholds thresholds;
  double probe_epsilon = 0.3;
  int probe_k = 8;
  uint64_t seed = 7;
  int threads = 0;
  EpisodeLimits limits;
  int transfer_buffer_min = 60;
  size_t max_candidates = 200000;  // sampled intent draws before giving up

  nlohmann::json to_json() const;
};

struct GenDataResult {
  std::map<std::string, std::vector<Query>> queries;         // benchmark and train splits
  std::map<std::string, std::vector<Trajectory>> teachers;   // cold-start splits
  std::map<std::string, std::vector<Query>> teacher_queries; // sources of each teacher trajectory
  nlohmann::json manifest;
};

/// Samples intent combinations, scores them with the noisy probe, and fills
/// every split with disjoint query ids.
GenDataResult generate_data(Sandbox& sandbox, const std::vector<SplitSpec>& specs, const GenDataConfig& cfg,
                            const QueryOverrides& overrides = {});

/// Writes one JSON-lines file per split plus manifest.json.
void write_data(const GenDataResult& data, const std::string& dir);
/// Problems found when re-reading a directory against its manifest; empty when consistent.
std::vector<std::string> verify_manifest(const std::string& dir);

std::vector<Query> read_queries(const std::string& path);
void write_queries(const std::string& path, const std::vector<Query>& queries);
std::vector<Trajectory> read_trajectories(const std::string& path, const EpisodeLimits& limits = {});

}  // namespace deeptravel
