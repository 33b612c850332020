#pragma once

// Hierarchical reward: a trajectory-level rubric engine, turn-level checks of
// every tool call against the final itinerary, and the binary joint reward.

#include <array>
#include <atomic>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include "deeptravel/domain.hpp"
#include "deeptravel/protocol.hpp"
#include "json.hpp"

namespace deeptravel {

enum class Conclusion {
  VerySatisfied,
  SatisfiedNoContingency,
  BasicConstraintMiss,
  LogicUnreasonable,
  MainRequirementMisread,
  IncompleteAnswer,
};

std::string_view conclusion_name(Conclusion c);
/// The judge-facing phrase, e.g. "Dissatisfied, incomplete answer".
std::string_view conclusion_phrase(Conclusion c);
inline bool conclusion_passes(Conclusion c) {
  return c == Conclusion::VerySatisfied || c == Conclusion::SatisfiedNoContingency;
}

inline constexpr int kRubricCount = 6;

struct RubricResult {
  bool pass = true;
  std::vector<std::string> diagnostics;
};

struct TrajectoryVerdict {
  Conclusion conclusion = Conclusion::IncompleteAnswer;
  std::array<RubricResult, kRubricCount> rubrics;  // completeness .. contingency
  bool passed() const { return conclusion_passes(conclusion); }
};

struct TurnVerdict {
  int turn_index = 0;
  bool call_logic_ok = true;
  bool consistency_ok = true;
  std::string diagnostics;
  bool passed() const { return call_logic_ok && consistency_ok; }
};

struct RewardRecord {
  std::string trajectory_id;
  int r = 0;
  TrajectoryVerdict trajectory_verdict;
  std::vector<TurnVerdict> turn_verdicts;
  double verifier_latency_ms = 0;
  bool verifier_failed = false;
  std::string failure;
};

struct VerifierConfig {
  int transfer_buffer_min = 60;
  bool force_trajectory_pass = false;  // ablation: trajectory level disabled
  bool force_turn_pass = false;        // ablation: turn level disabled
};

struct VerifierCounters {
  std::atomic<int64_t> trajectory_checks{0};
  std::atomic<int64_t> trajectory_passes{0};
  std::atomic<int64_t> turn_phases{0};  // joint rewards that reached the turn level
  std::atomic<int64_t> turn_checks{0};  // individual turn verdicts computed

  void reset() {
    trajectory_checks = 0;
    trajectory_passes = 0;
    turn_phases = 0;
    turn_checks = 0;
  }
};

class Verifier {
 public:
  virtual ~Verifier() = default;
  virtual RewardRecord joint_reward(const Query& q, const Trajectory& t) = 0;
};

class RuleVerifier : public Verifier {
 public:
  explicit RuleVerifier(VerifierConfig cfg = {}) : cfg_(cfg) {}

  TrajectoryVerdict verify_trajectory(const Query& q, const Trajectory& t);
  TurnVerdict verify_turn(const Query& q, const Trajectory& t, int turn_index, const Itinerary* itinerary);
  RewardRecord joint_reward(const Query& q, const Trajectory& t) override;

  const VerifierConfig& config() const { return cfg_; }
  VerifierCounters& counters() { return counters_; }

 private:
  VerifierConfig cfg_;
  VerifierCounters counters_;
};

/// Turns that carry a tool call, in order.
std::vector<int> tool_turns(const Trajectory& t);

// ---------------------------------------------------------------------------
// External judge
// ---------------------------------------------------------------------------

struct JudgeEndpoint {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string path = "/complete";
  double timeout_s = 30.0;
  int max_in_flight = 4;
};

std::string trajectory_judge_prompt(const Query& q, const Trajectory& t);
std::string turn_judge_prompt(const Query& q, const Trajectory& t, int turn_index);
std::optional<Conclusion> parse_trajectory_conclusion(std::string_view completion);
/// true for Satisfied, false for either Unsatisfied form.
std::optional<bool> parse_turn_conclusion(std::string_view completion);

/// Sends the prompts to a text-in/text-out endpoint. Network errors,
/// timeouts and unparseable completions all yield verifier_failed.
class ExternalJudge : public Verifier {
 public:
  explicit ExternalJudge(JudgeEndpoint endpoint);
  RewardRecord joint_reward(const Query& q, const Trajectory& t) override;
  /// Raw completion, or nullopt with `error` set.
  std::optional<std::string> complete(const std::string& prompt, std::string& error);

 private:
  JudgeEndpoint endpoint_;
  std::unique_ptr<std::counting_semaphore<>> slots_;
};

nlohmann::json to_json(const RewardRecord& r);

}  // namespace deeptravel
