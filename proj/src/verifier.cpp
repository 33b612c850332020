#include "deeptravel/verifier.hpp"

#include <algorithm>
#include <chrono>
#include <set>

#include "httplib.h"

namespace deeptravel {

using nlohmann::json;

std::string_view conclusion_name(Conclusion c) {
  switch (c) {
    case Conclusion::VerySatisfied: return "very_satisfied";
    case Conclusion::SatisfiedNoContingency: return "satisfied_no_contingency";
    case Conclusion::BasicConstraintMiss: return "basic_constraint_miss";
    case Conclusion::LogicUnreasonable: return "logic_unreasonable";
    case Conclusion::MainRequirementMisread: return "main_requirement_misread";
    case Conclusion::IncompleteAnswer: return "incomplete_answer";
  }
  return "incomplete_answer";
}

std::string_view conclusion_phrase(Conclusion c) {
  switch (c) {
    case Conclusion::VerySatisfied: return "Very satisfied";
    case Conclusion::SatisfiedNoContingency: return "Very satisfied but did not address unexpected situations";
    case Conclusion::BasicConstraintMiss:
      return "Basically satisfied, other constraints or specific requirements were not met";
    case Conclusion::LogicUnreasonable: return "Dissatisfied, logically unreasonable";
    case Conclusion::MainRequirementMisread: return "Dissatisfied, main requirements misunderstood";
    case Conclusion::IncompleteAnswer: return "Dissatisfied, incomplete answer";
  }
  return "";
}

namespace {

bool same_place(std::string_view a, std::string_view b) { return normalize_key(a) == normalize_key(b); }

struct TurnEvidence {
  int turn = 0;
  CallParse parse;
  std::string response_text;
  bool ok = false;
  json results;  // array when ok
};

std::vector<TurnEvidence> collect_turns(const Trajectory& t) {
  std::vector<TurnEvidence> out;
  for (size_t k = 0; k < t.segments.size(); ++k) {
    const Segment& s = t.segments[k];
    if (s.kind != SegmentKind::ToolCall) continue;
    TurnEvidence ev;
    ev.turn = s.turn_index;
    ev.parse = parse_tool_call(s.body);
    if (k + 1 < t.segments.size() && t.segments[k + 1].kind == SegmentKind::ToolResponse) {
      ev.response_text = t.segments[k + 1].body;
      json j = json::parse(ev.response_text, nullptr, false);
      if (!j.is_discarded() && j.is_object() && j.value("status", "") == "ok" && j.contains("results") &&
          j["results"].is_array()) {
        ev.ok = true;
        ev.results = std::move(j["results"]);
      }
    }
    out.push_back(std::move(ev));
  }
  return out;
}

std::optional<ToolKind> evidence_kind(const TurnEvidence& ev) {
  if (ev.parse.call) return ev.parse.call->tool;
  return tool_from_name(ev.parse.tool_name);
}

using Failures = std::vector<std::pair<int, std::string>>;

int fallback_turn(const std::vector<TurnEvidence>& ev, ToolKind kind) {
  for (auto it = ev.rbegin(); it != ev.rend(); ++it)
    if (evidence_kind(*it) == kind) return it->turn;
  return ev.empty() ? 0 : ev.back().turn;
}

/// Latest successful response of one of `kinds` holding a record that satisfies `match`.
std::pair<const TurnEvidence*, const json*> find_record(const std::vector<TurnEvidence>& ev,
                                                        std::initializer_list<ToolKind> kinds,
                                                        const std::function<bool(const json&)>& match) {
  for (auto it = ev.rbegin(); it != ev.rend(); ++it) {
    if (!it->ok) continue;
    const auto k = evidence_kind(*it);
    if (!k || std::find(kinds.begin(), kinds.end(), *k) == kinds.end()) continue;
    for (const auto& rec : it->results)
      if (rec.is_object() && match(rec)) return {&*it, &rec};
  }
  return {nullptr, nullptr};
}

std::string str_field(const json& rec, const char* key) {
  auto it = rec.find(key);
  return it != rec.end() && it->is_string() ? it->get<std::string>() : std::string();
}

int64_t int_field(const json& rec, const char* key) {
  auto it = rec.find(key);
  return it != rec.end() && it->is_number_integer() ? it->get<int64_t>() : INT64_MIN;
}

Failures consistency_failures(const std::vector<TurnEvidence>& ev, const Itinerary& it) {
  Failures out;
  auto check_leg = [&](const Leg& l) {
    const ToolKind kind = l.mode == TransportMode::Flight ? ToolKind::Flight : ToolKind::Train;
    auto [turn, rec] = find_record(ev, {ToolKind::Flight, ToolKind::Train},
                                   [&](const json& r) { return str_field(r, "id") == l.id; });
    if (!turn) {
      out.emplace_back(fallback_turn(ev, kind), "leg " + l.id + " appears in no tool response");
      return;
    }
    std::vector<std::string> bad;
    if (str_field(*rec, "mode") != mode_name(l.mode)) bad.push_back("mode");
    if (!same_place(str_field(*rec, "origin"), l.origin)) bad.push_back("origin");
    if (!same_place(str_field(*rec, "destination"), l.destination)) bad.push_back("destination");
    if (str_field(*rec, "date") != l.date.iso()) bad.push_back("date");
    if (str_field(*rec, "depart") != format_clock(l.depart)) bad.push_back("depart");
    if (str_field(*rec, "arrive") != format_clock(l.arrive)) bad.push_back("arrive");
    if (rec->value("next_day", false) != l.next_day) bad.push_back("next_day");
    if (int_field(*rec, "price") != l.price) bad.push_back("price");
    if (int_field(*rec, "seats") <= 0) bad.push_back("seats");
    if (!bad.empty()) out.emplace_back(turn->turn, "leg " + l.id + " disagrees on " + join(bad, ", "));
  };
  for (const auto& l : it.outbound) check_leg(l);
  for (const auto& l : it.return_legs) check_leg(l);

  if (it.hotel) {
    const HotelStay& h = *it.hotel;
    auto [turn, rec] =
        find_record(ev, {ToolKind::Hotel}, [&](const json& r) { return str_field(r, "id") == h.id; });
    if (!turn) {
      out.emplace_back(fallback_turn(ev, ToolKind::Hotel), "hotel " + h.id + " appears in no tool response");
    } else {
      std::vector<std::string> bad;
      if (str_field(*rec, "name") != h.name) bad.push_back("name");
      if (!same_place(str_field(*rec, "city"), h.city)) bad.push_back("city");
      if (int_field(*rec, "total_price") != h.total_price) bad.push_back("total_price");
      std::vector<std::string> tags;
      if (rec->contains("tags") && (*rec)["tags"].is_array())
        for (const auto& x : (*rec)["tags"])
          if (x.is_string()) tags.push_back(x);
      if (std::set<std::string>(tags.begin(), tags.end()) != std::set<std::string>(h.tags.begin(), h.tags.end()))
        bad.push_back("tags");
      const auto& call = turn->parse.call;
      if (!call || Date::parse(call->get("checkin_date").value_or("")) != h.checkin ||
          Date::parse(call->get("checkout_date").value_or("")) != h.checkout)
        bad.push_back("dates");
      if (!bad.empty()) out.emplace_back(turn->turn, "hotel " + h.id + " disagrees on " + join(bad, ", "));
    }
  }

  for (const auto& day : it.daily_plan) {
    for (const auto& v : day.visits) {
      auto [turn, rec] = find_record(ev, {ToolKind::Poi}, [&](const json& r) {
        return same_place(str_field(r, "name"), v.poi);
      });
      if (!turn) out.emplace_back(fallback_turn(ev, ToolKind::Poi), "POI " + v.poi + " appears in no tool response");
    }
  }
  return out;
}

std::vector<std::string> call_logic_problems(const Query& q, const TurnEvidence& ev) {
  std::vector<std::string> bad;
  if (!ev.parse.call) {
    bad.push_back(std::string(call_error_name(ev.parse.error)) + ": " + ev.parse.diagnostic);
    return bad;
  }
  const ToolCall& c = *ev.parse.call;
  const TripIntents& in = q.intents;
  auto endpoint = [&](const std::string& city) {
    return same_place(city, in.origin) || same_place(city, in.destination);
  };
  switch (c.tool) {
    case ToolKind::Flight:
    case ToolKind::Train: {
      const std::string from = c.get("depart_city").value_or(""), to = c.get("arrival_city").value_or("");
      if (!endpoint(from) || !endpoint(to)) bad.push_back("searches a city outside the trip");
      else if (same_place(from, to)) bad.push_back("searches a city against itself");
      else {
        const Date want = same_place(from, in.origin) ? in.depart : in.return_day();
        if (Date::parse(c.get("depart_date").value_or("")) != want)
          bad.push_back("searches " + trim(c.get("depart_date").value_or("")) + " instead of " + want.iso());
      }
      break;
    }
    case ToolKind::Hotel: {
      if (!same_place(c.get("city_name").value_or(""), in.destination)) bad.push_back("hotel city is not the destination");
      auto ci = Date::parse(c.get("checkin_date").value_or(""));
      auto co = Date::parse(c.get("checkout_date").value_or(""));
      if (!ci || !co) bad.push_back("hotel dates do not parse");
      else {
        if (*ci >= *co) bad.push_back("hotel checkout is not after checkin");
        if (*ci < in.depart || *co > in.return_day()) bad.push_back("hotel dates fall outside the trip");
      }
      break;
    }
    case ToolKind::Poi:
    case ToolKind::Route:
      if (!endpoint(c.get("city_name").value_or(""))) bad.push_back("searches a city outside the trip");
      break;
    case ToolKind::Web: break;
  }
  return bad;
}

}  // namespace

std::vector<int> tool_turns(const Trajectory& t) {
  std::vector<int> out;
  for (const auto& s : t.segments)
    if (s.kind == SegmentKind::ToolCall) out.push_back(s.turn_index);
  return out;
}

TrajectoryVerdict RuleVerifier::verify_trajectory(const Query& q, const Trajectory& t) {
  ++counters_.trajectory_checks;
  TrajectoryVerdict v;
  auto& r = v.rubrics;
  auto fail = [](RubricResult& rr, std::string why) {
    rr.pass = false;
    rr.diagnostics.push_back(std::move(why));
  };
  const Segment* ans = t.answer();
  std::optional<Itinerary> itinerary;
  if (t.terminal != Terminal::Answered || !ans) {
    fail(r[0], "no final answer (terminal " + std::string(terminal_name(t.terminal)) + ")");
  } else {
    auto parsed = extract_itinerary(ans->body);
    if (!parsed.itinerary) fail(r[0], parsed.error);
    itinerary = std::move(parsed.itinerary);
  }
  if (std::none_of(t.segments.begin(), t.segments.end(),
                   [](const Segment& s) { return s.kind == SegmentKind::ToolResponse; }))
    fail(r[0], "answer is not grounded in any tool response");

  if (itinerary) {
    const ItineraryAudit a = audit_itinerary(q.intents, *itinerary, cfg_.transfer_buffer_min);
    for (const auto& d : a.completeness) fail(r[0], d);
    for (const auto& d : a.main_requirement) fail(r[1], d);
    for (const auto& d : a.logic) fail(r[2], d);
    for (const auto& d : a.other_constraints) fail(r[3], d);
    for (const auto& d : a.specific) fail(r[4], d);
  } else {
    for (int k = 1; k < 5; ++k) fail(r[static_cast<size_t>(k)], "no itinerary to check");
  }
  if (!ans || !(contains_folded(ans->body, "tips") || contains_folded(ans->body, "alternative")))
    fail(r[5], "no alternatives or tips for unexpected situations");

  if (!r[0].pass) v.conclusion = Conclusion::IncompleteAnswer;
  else if (!r[1].pass) v.conclusion = Conclusion::MainRequirementMisread;
  else if (!r[2].pass) v.conclusion = Conclusion::LogicUnreasonable;
  else if (!r[3].pass || !r[4].pass) v.conclusion = Conclusion::BasicConstraintMiss;
  else if (!r[5].pass) v.conclusion = Conclusion::SatisfiedNoContingency;
  else v.conclusion = Conclusion::VerySatisfied;

  if (cfg_.force_trajectory_pass) v.conclusion = Conclusion::VerySatisfied;
  if (v.passed()) ++counters_.trajectory_passes;
  return v;
}

TurnVerdict RuleVerifier::verify_turn(const Query& q, const Trajectory& t, int turn_index, const Itinerary* itinerary) {
  ++counters_.turn_checks;
  TurnVerdict v;
  v.turn_index = turn_index;
  if (cfg_.force_turn_pass) return v;
  const auto ev = collect_turns(t);
  auto it = std::find_if(ev.begin(), ev.end(), [&](const TurnEvidence& e) { return e.turn == turn_index; });
  if (it == ev.end()) {
    v.call_logic_ok = false;
    v.diagnostics = "turn has no tool call";
    return v;
  }
  std::vector<std::string> notes;
  for (auto& p : call_logic_problems(q, *it)) {
    v.call_logic_ok = false;
    notes.push_back(std::move(p));
  }
  if (itinerary) {
    for (auto& [turn, why] : consistency_failures(ev, *itinerary)) {
      if (turn != turn_index) continue;
      v.consistency_ok = false;
      notes.push_back(std::move(why));
    }
  }
  v.diagnostics = join(notes, "; ");
  return v;
}

RewardRecord RuleVerifier::joint_reward(const Query& q, const Trajectory& t) {
  const auto start = std::chrono::steady_clock::now();
  RewardRecord rec;
  rec.trajectory_id = t.query_id;
  try {
    rec.trajectory_verdict = verify_trajectory(q, t);
    if (rec.trajectory_verdict.passed()) {
      ++counters_.turn_phases;
      std::optional<Itinerary> itinerary;
      if (const Segment* ans = t.answer()) itinerary = extract_itinerary(ans->body).itinerary;
      bool all = true;
      for (int turn : tool_turns(t)) {
        rec.turn_verdicts.push_back(verify_turn(q, t, turn, itinerary ? &*itinerary : nullptr));
        all = all && rec.turn_verdicts.back().passed();
      }
      rec.r = all ? 1 : 0;
    }
  } catch (const std::exception& e) {
    rec.r = 0;
    rec.verifier_failed = true;
    rec.failure = e.what();
  }
  rec.verifier_latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

// ---------------------------------------------------------------------------
// External judge
// ---------------------------------------------------------------------------

namespace {

const char* const kToolList =
    "poi_search(query, city_name, **kwargs)\n"
    "route_planning(origin, destination, city_name)\n"
    "flight_search(depart_city, arrival_city, depart_date, **kwargs)\n"
    "train_search(depart_city, arrival_city, depart_date, **kwargs)\n"
    "hotel_search(city_name, checkin_date, checkout_date, **kwargs)\n"
    "web_search(query)\n";

const char* const kTrajectoryHeader =
    "As a travel planning judger, you will evaluate whether the agent's response adheres to the following "
    "criteria.\n\n"
    "You will receive:\n"
    "1. [Query]: Contains the user's needs and travel constraints.\n"
    "2. [Agent's Response]: The AI travel assistant's final response, which you will need to verify.\n"
    "Please strictly follow the following [Evaluation Rubrics] to make quality assessments.\n\n"
    "Evaluation Rubrics\n"
    "1. [Is the answer complete?]...\n"
    "2. [Is the main requirement understood accurately?]...\n"
    "3. [Is the logic sound?]...\n"
    "4. [Are other constraints met?]...\n"
    "5. [Are specific requirements met?]...\n"
    "6. [Emergency backup plan?]...\n\n"
    "Available Tools\n";

const char* const kTrajectoryFooter =
    "\nEvaluation Output\n"
    "Evaluation Reason: Provide the analysis process and reasons.\n"
    "Final Conclusion: {{{Very satisfied}}} or {{{Very satisfied but did not address unexpected situations}}} or "
    "{{{Basically satisfied, other constraints or specific requirements were not met}}} or {{{Dissatisfied, "
    "logically unreasonable}}} or {{{Dissatisfied, main requirements misunderstood}}} or {{{Dissatisfied, "
    "incomplete answer}}}\n\n"
    "Let's get started! Return the evaluation reason and final conclusion.\n";

const char* const kTurnHeader =
    "As a travel planning judger, you will evaluate whether the agent's response adheres to the following "
    "criteria.\n\n"
    "You will receive:\n"
    "1. [Query]: Contains the user's needs and travel constraints.\n"
    "2. [Agent's Response]: The AI travel assistant's final response, which you will need to verify.\n"
    "Please strictly follow the following [Evaluation Rubrics] to make quality assessments.\n"
    "3. [Tool response used for agent's response generation]: What information the AI assistant used for "
    "response generation:\n"
    "<tool_response>..</tool_response>\n\n"
    "Evaluation Rubrics\n"
    "1.[Is the tool call parameters/logic correct?]...\n"
    "2. [Is the agent's response accurately reflect the tool response?]...\n\n"
    "Available Tools\n";

const char* const kTurnFooter =
    "\nEvaluation Output\n"
    "Evaluation Reason: Provide the analysis process and reasons.\n"
    "Final Conclusion: Satisfied or Unsatisfied where inconsistent information between agent response and tool "
    "response, or Unsatisfied with tool call logic error.\n\n"
    "Let's get started! Return the evaluation reason and final conclusion.\n";

std::string answer_text(const Trajectory& t) {
  const Segment* a = t.answer();
  return a ? a->body : std::string("(no answer)");
}

std::optional<std::string> conclusion_line(std::string_view completion) {
  const std::string_view marker = "Final Conclusion:";
  const size_t at = completion.rfind(marker);
  if (at == std::string_view::npos) return std::nullopt;
  std::string_view rest = completion.substr(at + marker.size());
  rest = rest.substr(0, rest.find('\n'));
  std::string cleaned;
  for (char c : rest)
    if (c != '{' && c != '}' && c != '*') cleaned += c;
  return casefold(trim(cleaned));
}

}  // namespace

std::string trajectory_judge_prompt(const Query& q, const Trajectory& t) {
  return std::string(kTrajectoryHeader) + kToolList + kTrajectoryFooter + "\n[Query]: " + q.text +
         "\n\n[Agent's Response]: " + answer_text(t) + "\n";
}

std::string turn_judge_prompt(const Query& q, const Trajectory& t, int turn_index) {
  std::string evidence;
  for (size_t k = 0; k < t.segments.size(); ++k) {
    const Segment& s = t.segments[k];
    if (s.turn_index != turn_index) continue;
    if (s.kind == SegmentKind::ToolCall || s.kind == SegmentKind::ToolResponse)
      evidence += "<" + std::string(segment_tag(s.kind)) + ">" + s.body + "</" + std::string(segment_tag(s.kind)) + ">\n";
  }
  return std::string(kTurnHeader) + kToolList + kTurnFooter + "\n[Query]: " + q.text +
         "\n\n[Agent's Response]: " + answer_text(t) + "\n\n[Tool response used for agent's response generation]:\n" +
         evidence;
}

std::optional<Conclusion> parse_trajectory_conclusion(std::string_view completion) {
  auto line = conclusion_line(completion);
  if (!line) return std::nullopt;
  // Longer phrases first: "very satisfied" prefixes another option.
  std::vector<Conclusion> order = {Conclusion::SatisfiedNoContingency, Conclusion::BasicConstraintMiss,
                                   Conclusion::LogicUnreasonable,      Conclusion::MainRequirementMisread,
                                   Conclusion::IncompleteAnswer,       Conclusion::VerySatisfied};
  for (Conclusion c : order)
    if (line->rfind(casefold(conclusion_phrase(c)), 0) == 0) return c;
  return std::nullopt;
}

std::optional<bool> parse_turn_conclusion(std::string_view completion) {
  auto line = conclusion_line(completion);
  if (!line) return std::nullopt;
  if (line->rfind("unsatisfied", 0) == 0) return false;
  if (line->rfind("satisfied", 0) == 0) return true;
  return std::nullopt;
}

ExternalJudge::ExternalJudge(JudgeEndpoint endpoint)
    : endpoint_(std::move(endpoint)),
      slots_(std::make_unique<std::counting_semaphore<>>(std::max(1, endpoint_.max_in_flight))) {
  if (endpoint_.timeout_s <= 0) throw ConfigError("judge timeout must be positive");
}

std::optional<std::string> ExternalJudge::complete(const std::string& prompt, std::string& error) {
  slots_->acquire();
  struct Release {
    std::counting_semaphore<>* s;
    ~Release() { s->release(); }
  } release{slots_.get()};
  httplib::Client cli(endpoint_.host, endpoint_.port);
  const auto secs = static_cast<time_t>(endpoint_.timeout_s);
  const auto usecs = static_cast<time_t>((endpoint_.timeout_s - static_cast<double>(secs)) * 1e6);
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  auto res = cli.Post(endpoint_.path, prompt, "text/plain");
  if (!res) {
    error = "judge request failed: " + httplib::to_string(res.error());
    return std::nullopt;
  }
  if (res->status != 200) {
    error = "judge returned HTTP " + std::to_string(res->status);
    return std::nullopt;
  }
  return res->body;
}

RewardRecord ExternalJudge::joint_reward(const Query& q, const Trajectory& t) {
  const auto start = std::chrono::steady_clock::now();
  RewardRecord rec;
  rec.trajectory_id = t.query_id;
  auto finish = [&] {
    rec.verifier_latency_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return rec;
  };
  auto failed = [&](std::string why) {
    rec.r = 0;
    rec.turn_verdicts.clear();
    rec.verifier_failed = true;
    rec.failure = std::move(why);
    return finish();
  };
  std::string err;
  auto completion = complete(trajectory_judge_prompt(q, t), err);
  if (!completion) return failed(err);
  auto c = parse_trajectory_conclusion(*completion);
  if (!c) return failed("unparseable trajectory conclusion");
  rec.trajectory_verdict.conclusion = *c;
  if (!conclusion_passes(*c)) return finish();
  bool all = true;
  for (int turn : tool_turns(t)) {
    auto turn_completion = complete(turn_judge_prompt(q, t, turn), err);
    if (!turn_completion) return failed(err);
    auto ok = parse_turn_conclusion(*turn_completion);
    if (!ok) return failed("unparseable turn conclusion");
    TurnVerdict v;
    v.turn_index = turn;
    v.call_logic_ok = *ok;
    v.consistency_ok = *ok;
    v.diagnostics = trim(*turn_completion);
    rec.turn_verdicts.push_back(std::move(v));
    all = all && *ok;
  }
  rec.r = all ? 1 : 0;
  return finish();
}

json to_json(const RewardRecord& r) {
  json rubrics = json::array();
  for (const auto& rr : r.trajectory_verdict.rubrics) rubrics.push_back(json{{"pass", rr.pass}, {"diagnostics", rr.diagnostics}});
  json turns = json::array();
  for (const auto& t : r.turn_verdicts)
    turns.push_back(json{{"turn", t.turn_index},
                         {"call_logic_ok", t.call_logic_ok},
                         {"consistency_ok", t.consistency_ok},
                         {"diagnostics", t.diagnostics}});
  return json{{"trajectory_id", r.trajectory_id},
              {"r", r.r},
              {"conclusion", std::string(conclusion_name(r.trajectory_verdict.conclusion))},
              {"rubrics", rubrics},
              {"turn_verdicts", turns},
              {"verifier_latency_ms", r.verifier_latency_ms},
              {"verifier_failed", r.verifier_failed},
              {"failure", r.failure}};
}

}  // namespace deeptravel
