#pragma once

// Tagged trajectories: representation, parse/render, strict format checks and
// the multi-turn episode loop.

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "deeptravel/common.hpp"
#include "deeptravel/domain.hpp"
#include "deeptravel/sandbox.hpp"
#include "json.hpp"

namespace deeptravel {

enum class SegmentKind { Think, ToolCallThinking, ToolCall, ToolResponse, ToolResponseThinking, Answer };
inline constexpr int kSegmentKindCount = 6;

std::string_view segment_tag(SegmentKind kind);
std::optional<SegmentKind> segment_from_tag(std::string_view tag);

struct Segment {
  SegmentKind kind = SegmentKind::Think;
  std::string body;
  int turn_index = 1;
  std::string lead;  // whitespace preceding the opening tag

  friend bool operator==(const Segment&, const Segment&) = default;
};

enum class Terminal { Answered, TurnLimit, LengthLimit, Malformed };
std::string_view terminal_name(Terminal t);
std::optional<Terminal> terminal_from_name(std::string_view s);

struct EpisodeLimits {
  int max_turns = 8;
  int max_total_segments = 64;
  void validate() const;
};

/// Which categorical head produced a decision.
enum class Head { Kind, Selector, Observation };
inline constexpr int kHeadCount = 3;
std::string_view head_name(Head h);
int head_arity(Head h);
int head_buckets(Head h);

struct DecisionRecord {
  Head head = Head::Kind;
  int bucket = 0;
  int choice = 0;
  uint32_t valid = 0xffffffffu;  // bit i set when template i was available
  double log_prob = 0.0;
  bool masked = false;

  friend bool operator==(const DecisionRecord&, const DecisionRecord&) = default;
};

struct Trajectory {
  std::string query_id;
  std::vector<Segment> segments;
  std::string tail;  // whitespace after the last closing tag
  Terminal terminal = Terminal::Malformed;
  std::vector<DecisionRecord> decisions;
  std::string diagnostic;  // why the trajectory is malformed, if it is

  const Segment* answer() const;
  int tool_call_count() const;
  int turn_count() const;
};

/// Ordering problems independent of the terminal state; empty when none.
std::vector<std::string> structural_problems(const std::vector<Segment>& segments);

Trajectory parse_trajectory(std::string_view text, const EpisodeLimits& limits = {});
/// Throws ContractError on segments that cannot be rendered faithfully.
std::string render_trajectory(const Trajectory& t);

struct FormatReport {
  bool ok = false;
  std::vector<std::string> diagnostics;
};
FormatReport validate_format(const Trajectory& t, const EpisodeLimits& limits = {});

enum class CallErrorKind { None, Syntax, UnknownTool, Arity, Keyword };
std::string_view call_error_name(CallErrorKind k);

struct CallParse {
  std::optional<ToolCall> call;
  CallErrorKind error = CallErrorKind::None;
  std::string diagnostic;
  std::string tool_name;  // as written, even when unknown
};
CallParse parse_tool_call(std::string_view body);

ItineraryParse extract_itinerary(std::string_view answer_body);

// ---------------------------------------------------------------------------
// Episode loop
// ---------------------------------------------------------------------------

struct Observation {
  int turn = 0;
  std::optional<ToolCall> call;  // empty when the call text did not parse
  ToolResponse response;
};

struct EpisodeState {
  const Query* query = nullptr;
  EpisodeLimits limits;
  std::vector<Segment> segments;
  std::vector<Observation> observations;
  int tool_calls = 0;
};

struct Action {
  std::string reflection;  // thought about the previous response; may be empty
  std::string thought;
  bool answer = false;
  std::string body;  // tool call text or answer text
  std::vector<DecisionRecord> decisions;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual Action act(const EpisodeState& state, Rng& rng) = 0;
  /// Masked pseudo-decisions describing an observation the environment injected.
  virtual std::vector<DecisionRecord> observe(const EpisodeState&, const Observation&) { return {}; }
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual ToolResponse execute(const ToolCall& call, Rng& rng) = 0;
};

class SandboxEnvironment : public Environment {
 public:
  explicit SandboxEnvironment(Sandbox& sandbox, LiveModeConfig live = {}) : sandbox_(sandbox), live_(live) {}
  ToolResponse execute(const ToolCall& call, Rng& rng) override;

 private:
  Sandbox& sandbox_;
  LiveModeConfig live_;
};

/// In-band error response for a call that did not parse.
ToolResponse call_error_response(const CallParse& parsed);

Trajectory run_episode(Policy& policy, Environment& env, const Query& query, const EpisodeLimits& limits, Rng& rng);

nlohmann::json to_json(const DecisionRecord& d);
DecisionRecord decision_from_json(const nlohmann::json& j);
/// One JSON-lines record; the query is embedded when given.
nlohmann::json to_json(const Trajectory& t, const Query* query = nullptr);
Trajectory trajectory_from_json(const nlohmann::json& j, const EpisodeLimits& limits = {});

}  // namespace deeptravel
