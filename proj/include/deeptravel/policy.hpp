#pragma once

// Decision-level agents. Every action is an (action template, selector)
// choice; arguments are bound deterministically from the query and earlier
// observations. The learnable policy is a tabular softmax per feature bucket,
// so log-probabilities, entropy, KL and gradients are exact.

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "deeptravel/domain.hpp"
#include "deeptravel/protocol.hpp"
#include "json.hpp"

namespace deeptravel {

enum class KindTemplate { CallFlight, CallTrain, CallHotel, CallRoute, CallPoi, CallWeb, EmitAnswer };
enum class Selector { Cheapest, Fastest, PreferenceMatched, FirstListed };
enum class ObservationStatus { Ok, Empty, Error };

std::string_view kind_template_name(KindTemplate k);
std::string_view selector_name(Selector s);

inline constexpr size_t kPoolCap = 8;  // candidates kept per tool response

struct HotelOption {
  std::string id;
  std::string name;
  std::string city;
  int64_t total_price = 0;
  std::vector<std::string> tags;
  Coordinate location;
};

/// Usable candidates gathered from successful responses.
struct CandidatePools {
  std::vector<TransportRecord> outbound;
  std::vector<TransportRecord> inbound;
  std::vector<HotelOption> hotels;
  std::vector<std::string> pois;  // names matching the required POI
};

/// Folds one response into the pools; responses unrelated to the query are ignored.
void add_to_pools(CandidatePools& pools, const TripIntents& q, const ToolCall& call, std::string_view response_text);
CandidatePools collect_pools(const TripIntents& q, const std::vector<Observation>& observations);

/// Assembles an itinerary from chosen parts; visits placed when a POI is required and known.
Itinerary assemble_itinerary(const TripIntents& q, const TransportRecord* out, const TransportRecord* ret,
                             const HotelOption* hotel, const std::vector<std::string>& pois, int buffer);
Itinerary select_itinerary(const TripIntents& q, const CandidatePools& pools, Selector sel, int buffer);
/// Cheapest constraint-satisfying combination by exhaustive search, if any.
std::optional<Itinerary> best_feasible_itinerary(const TripIntents& q, const CandidatePools& pools, int buffer);
std::string render_answer(const TripIntents& q, const Itinerary& it, const CandidatePools& pools);

struct DecisionContext {
  const Query* query = nullptr;
  const EpisodeState* state = nullptr;
  CandidatePools pools;
  // searched[mode][0 outbound, 1 return]
  std::array<std::array<bool, 2>, 2> searched{};
  bool hotel_searched = false;
  bool poi_searched = false;
  int kind_bucket = 0;
  int selector_bucket = 0;
};

DecisionContext analyze(const EpisodeState& state, int buffer);
int kind_bucket(const TripIntents& q, const CandidatePools& pools, const std::vector<Observation>& observations);
int selector_bucket(const TripIntents& q);
ObservationStatus observation_status(const ToolResponse& r);

/// Call text for a template under the deterministic binding rules.
ToolCall bind_call(KindTemplate k, const DecisionContext& ctx);

// ---------------------------------------------------------------------------
// Parameters and exact quantities
// ---------------------------------------------------------------------------

struct PolicyParams {
  std::vector<double> theta;
  int64_t version = 0;

  static PolicyParams zeros();
  static size_t size();
  static size_t offset(Head h);
  static size_t index(Head h, int bucket, int choice);
  double at(Head h, int bucket, int choice) const { return theta[index(h, bucket, choice)]; }
  double& at(Head h, int bucket, int choice) { return theta[index(h, bucket, choice)]; }

  nlohmann::json to_json() const;
  static PolicyParams from_json(const nlohmann::json& j);
};

/// Probabilities over templates of one bucket; zero outside the valid mask.
std::vector<double> bucket_probs(const PolicyParams& p, Head h, int bucket, uint32_t valid);
double decision_log_prob(const PolicyParams& p, const DecisionRecord& d);
DecisionRecord sample_decision(const PolicyParams& p, Head h, int bucket, uint32_t valid, Rng& rng, bool greedy);

/// Sum over unmasked decisions.
double trajectory_log_prob(const PolicyParams& p, const Trajectory& t);
/// grad += scale * d/dtheta trajectory_log_prob.
void accumulate_log_prob_grad(const PolicyParams& p, const Trajectory& t, double scale, std::vector<double>& grad);

using BucketKey = std::pair<Head, int>;
double bucket_entropy(const PolicyParams& p, Head h, int bucket);
/// Mean Shannon entropy over the given buckets (all templates valid).
double policy_entropy(const PolicyParams& p, const std::vector<BucketKey>& buckets);
/// Unmasked buckets visited by the trajectories, sorted and unique.
std::vector<BucketKey> visited_buckets(const std::vector<const Trajectory*>& ts);

struct CloneResult {
  PolicyParams params;
  std::vector<double> losses;  // mean negative log-likelihood before each epoch, then final
};
/// Full-batch gradient ascent on mean unmasked log-likelihood of teacher decisions.
CloneResult behavior_clone(const PolicyParams& init, const std::vector<Trajectory>& teacher, int epochs, double lr);
/// Fraction of unmasked teacher decisions whose argmax under params matches the teacher choice.
double top1_agreement(const PolicyParams& p, const std::vector<Trajectory>& teacher);

// ---------------------------------------------------------------------------
// Policies
// ---------------------------------------------------------------------------

class TemplatePolicy : public Policy {
 public:
  explicit TemplatePolicy(int transfer_buffer_min = 60) : buffer_(transfer_buffer_min) {}
  Action act(const EpisodeState& state, Rng& rng) override;
  std::vector<DecisionRecord> observe(const EpisodeState& state, const Observation& obs) override;

 protected:
  virtual DecisionRecord choose_kind(const DecisionContext& ctx, Rng& rng) = 0;
  virtual DecisionRecord choose_selector(const DecisionContext& ctx, Rng& rng) = 0;
  virtual double observation_log_prob(const DecisionRecord&) const { return 0.0; }
  int buffer() const { return buffer_; }

 private:
  int buffer_;
};

/// Scripted teacher: preferred mode first, the other mode when a search is
/// empty or its own plan fails the audit, then hotel and POI, then answer.
class OraclePolicy : public TemplatePolicy {
 public:
  using TemplatePolicy::TemplatePolicy;
  KindTemplate plan(const DecisionContext& ctx) const;
  Selector plan_selector(const DecisionContext& ctx) const;

 protected:
  DecisionRecord choose_kind(const DecisionContext& ctx, Rng& rng) override;
  DecisionRecord choose_selector(const DecisionContext& ctx, Rng& rng) override;
};

/// Oracle that takes a uniformly random template with probability epsilon.
class NoisyOraclePolicy : public OraclePolicy {
 public:
  NoisyOraclePolicy(double epsilon, int transfer_buffer_min = 60);

 protected:
  DecisionRecord choose_kind(const DecisionContext& ctx, Rng& rng) override;
  DecisionRecord choose_selector(const DecisionContext& ctx, Rng& rng) override;

 private:
  double epsilon_;
};

class SoftmaxPolicy : public TemplatePolicy {
 public:
  SoftmaxPolicy(const PolicyParams& params, bool greedy, int transfer_buffer_min = 60)
      : TemplatePolicy(transfer_buffer_min), params_(params), greedy_(greedy) {}
  const PolicyParams& params() const { return params_; }

 protected:
  DecisionRecord choose_kind(const DecisionContext& ctx, Rng& rng) override;
  DecisionRecord choose_selector(const DecisionContext& ctx, Rng& rng) override;
  double observation_log_prob(const DecisionRecord& d) const override { return decision_log_prob(params_, d); }

 private:
  const PolicyParams& params_;
  bool greedy_;
};

}  // namespace deeptravel
