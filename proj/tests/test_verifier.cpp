#include "doctest.h"

#include <chrono>
#include <thread>

#include "deeptravel/verifier.hpp"
#include "fixtures.hpp"
#include "httplib.h"

using namespace deeptravel;

namespace {

const std::vector<Query>& queries() {
  static const auto qs = fixtures::feasible_queries(40);
  return qs;
}

Itinerary itinerary_of(const Trajectory& t) { return *extract_itinerary(t.answer()->body).itinerary; }

// Same trajectory with the answer's structured block replaced.
Trajectory with_itinerary(Trajectory t, const Itinerary& it) {
  std::string& body = t.segments.back().body;
  const size_t b = body.find("```itinerary\n");
  const size_t e = body.find("```", b + 3) + 3;
  body.replace(b, e - b, render_itinerary_block(it));
  return t;
}

Trajectory oracle(const Query& q) {
  static Sandbox sb(fixtures::world());
  return fixtures::oracle_run(sb, q);
}

Query with_intents(const Query& q, const std::function<void(TripIntents&)>& edit) {
  TripIntents t = q.intents;
  edit(t);
  return Query::from_intents(t);
}

}  // namespace

TEST_CASE("oracle itineraries pass both levels") {
  RuleVerifier v;
  for (const auto& q : queries()) {
    const auto t = oracle(q);
    const auto verdict = v.verify_trajectory(q, t);
    CHECK(verdict.passed());
    const auto rec = v.joint_reward(q, t);
    CHECK(rec.r == 1);
    CHECK_FALSE(rec.verifier_failed);
    CHECK(rec.turn_verdicts.size() == static_cast<size_t>(t.tool_call_count()));
  }
}

TEST_CASE("missing answer short-circuits") {
  RuleVerifier v;
  const auto& q = queries().at(0);
  auto t = oracle(q);
  t.segments.pop_back();
  t.terminal = Terminal::TurnLimit;
  const auto rec = v.joint_reward(q, t);
  CHECK(rec.r == 0);
  CHECK(rec.turn_verdicts.empty());
  CHECK(rec.trajectory_verdict.conclusion == Conclusion::IncompleteAnswer);
  CHECK(v.counters().turn_phases == 0);
  CHECK(v.counters().turn_checks == 0);

  auto prose = oracle(q);
  prose.segments.back().body = "Have a great trip!";
  CHECK(v.verify_trajectory(q, prose).conclusion == Conclusion::IncompleteAnswer);
}

TEST_CASE("ungrounded answers are incomplete") {
  RuleVerifier v;
  const auto& q = queries().at(0);
  const auto t = oracle(q);
  Trajectory bare;
  bare.query_id = q.id;
  bare.segments.push_back(t.segments.back());
  bare.terminal = Terminal::Answered;
  CHECK(v.verify_trajectory(q, bare).conclusion == Conclusion::IncompleteAnswer);
}

TEST_CASE("return before outbound arrival is logically unreasonable") {
  RuleVerifier v;
  const auto& q = queries().at(0);
  const auto t = oracle(q);
  auto it = itinerary_of(t);
  REQUIRE(q.intents.nights() == 0);
  it.return_legs[0].depart = std::max(0, it.outbound[0].arrive - 120);
  it.return_legs[0].arrive = it.return_legs[0].depart + 60;
  it.return_legs[0].next_day = false;
  const auto verdict = v.verify_trajectory(q, with_itinerary(t, it));
  CHECK(verdict.conclusion == Conclusion::LogicUnreasonable);
  CHECK_FALSE(verdict.rubrics[2].pass);
}

TEST_CASE("wrong destination is a misread main requirement") {
  RuleVerifier v;
  const auto& q = queries().at(1);
  const auto t = oracle(q);
  auto it = itinerary_of(t);
  it.outbound[0].destination = "Atlantis";
  CHECK(v.verify_trajectory(q, with_itinerary(t, it)).conclusion == Conclusion::MainRequirementMisread);
}

TEST_CASE("budget below the itinerary cost is a basic constraint miss") {
  RuleVerifier v;
  for (size_t k = 0; k < 5; ++k) {
    const auto& q = queries().at(k);
    const auto t = oracle(q);
    const int64_t cost = itinerary_cost(itinerary_of(t)).computed;
    const auto tight = with_intents(q, [&](TripIntents& i) { i.budget = cost - 1; });
    const auto verdict = v.verify_trajectory(tight, t);
    CHECK(verdict.conclusion == Conclusion::BasicConstraintMiss);
    CHECK_FALSE(verdict.rubrics[3].pass);
    const auto exact = with_intents(q, [&](TripIntents& i) { i.budget = cost; });
    CHECK(v.verify_trajectory(exact, t).passed());
  }
}

TEST_CASE("missing contingency keeps the reward") {
  RuleVerifier v;
  const auto& q = queries().at(2);
  auto t = oracle(q);
  std::string& body = t.segments.back().body;
  const size_t b = body.find("```itinerary");
  body = body.substr(b, body.find("```", b + 3) + 3 - b);
  const auto rec = v.joint_reward(q, t);
  CHECK(rec.trajectory_verdict.conclusion == Conclusion::SatisfiedNoContingency);
  CHECK_FALSE(rec.trajectory_verdict.rubrics[5].pass);
  CHECK(rec.r == 1);
}

TEST_CASE("turn-level consistency") {
  RuleVerifier v;
  const auto& q = queries().at(3);
  const auto t = oracle(q);
  const auto turns = tool_turns(t);
  auto it = itinerary_of(t);

  SUBCASE("cited records with matching prices pass") {
    for (int turn : turns) CHECK(v.verify_turn(q, t, turn, &it).passed());
  }
  SUBCASE("a fabricated leg id fails at the latest turn of that tool") {
    it.outbound[0].id = "ZZ9999";
    const auto forged = with_itinerary(t, it);
    const auto rec = v.joint_reward(q, forged);
    CHECK(rec.trajectory_verdict.passed());
    CHECK(rec.r == 0);
    int failing = 0;
    for (const auto& tv : rec.turn_verdicts)
      if (!tv.consistency_ok) {
        ++failing;
        CHECK(tv.diagnostics.find("ZZ9999") != std::string::npos);
      }
    CHECK(failing == 1);
  }
  SUBCASE("a changed price fails") {
    it.outbound[0].price += 100;
    it.total_cost += 100;
    CHECK(v.joint_reward(q, with_itinerary(t, it)).r == 0);
  }
}

TEST_CASE("hotel search with inverted dates fails call logic") {
  RuleVerifier v;
  const Query* q = nullptr;
  for (const auto& c : queries())
    if (c.intents.nights() > 0) q = &c;
  if (!q) {
    static const auto longer = [] {
      IntentSpace s = base_intent_space();
      s.trip_lengths = {3};
      auto qs = fixtures::feasible_queries(40, s);
      std::erase_if(qs, [](const Query& c) { return c.intents.nights() == 0; });
      return qs;
    }();
    q = &longer.at(0);
  }
  auto t = oracle(*q);
  bool edited = false;
  for (auto& s : t.segments)
    if (s.kind == SegmentKind::ToolCall && s.body.rfind("hotel_search", 0) == 0) {
      const auto call = parse_tool_call(s.body).call;
      REQUIRE(call);
      s.body = "hotel_search(city_name=\"" + *call->get("city_name") + "\", checkin_date=\"" +
               *call->get("checkout_date") + "\", checkout_date=\"" + *call->get("checkin_date") + "\")";
      const auto verdict = v.verify_turn(*q, t, s.turn_index, nullptr);
      CHECK_FALSE(verdict.call_logic_ok);
      CHECK(verdict.diagnostics.find("checkout is not after checkin") != std::string::npos);
      edited = true;
    }
  CHECK(edited);
  CHECK(v.joint_reward(*q, t).r == 0);
}

TEST_CASE("call logic checks cities and dates") {
  RuleVerifier v;
  const auto& q = queries().at(0);
  auto t = oracle(q);
  for (auto& s : t.segments)
    if (s.kind == SegmentKind::ToolCall) {
      const auto call = parse_tool_call(s.body).call;
      if (call && call->tool == ToolKind::Flight) {
        s.body = "flight_search(\"" + q.intents.origin + "\", \"" + q.intents.destination + "\", \"" +
                 q.intents.depart.plus(1).iso() + "\")";
        CHECK_FALSE(v.verify_turn(q, t, s.turn_index, nullptr).call_logic_ok);
      }
      if (call && call->tool == ToolKind::Train) {
        s.body = "train_search(\"Kunming\", \"" + q.intents.destination + "\", \"" + q.intents.depart.iso() + "\")";
        CHECK_FALSE(v.verify_turn(q, t, s.turn_index, nullptr).call_logic_ok);
      }
    }
}

TEST_CASE("monotonicity under added constraints") {
  RuleVerifier v;
  Rng rng(17);
  for (const auto& q : queries()) {
    const auto t = oracle(q);
    const int base = v.joint_reward(q, t).r;
    for (int k = 0; k < 4; ++k) {
      const auto harder = with_intents(q, [&](TripIntents& i) {
        switch (rng.below(4)) {
          case 0: i.budget = 1000; break;
          case 1: i.arrival_deadline = 0; break;
          case 2: i.poi = "Nowhere Plaza"; break;
          default: i.mode = itinerary_of(t).outbound[0].mode == TransportMode::Flight ? TransportMode::Train : TransportMode::Flight;
        }
      });
      const int r = v.joint_reward(harder, t).r;
      CHECK(r <= base);
      CHECK(r == 0);
    }
  }
}

TEST_CASE("ablation switches") {
  const auto& q = queries().at(0);
  auto t = oracle(q);
  t.segments.back().body = "no plan";
  VerifierConfig cfg;
  cfg.force_trajectory_pass = true;
  RuleVerifier loose(cfg);
  CHECK(loose.verify_trajectory(q, t).passed());

  auto it = itinerary_of(oracle(q));
  it.outbound[0].id = "ZZ1";
  const auto forged = with_itinerary(oracle(q), it);
  VerifierConfig turn_off;
  turn_off.force_turn_pass = true;
  CHECK(RuleVerifier(turn_off).joint_reward(q, forged).r == 1);
  CHECK(RuleVerifier().joint_reward(q, forged).r == 0);
}

TEST_CASE("reward record JSON") {
  RuleVerifier v;
  const auto& q = queries().at(0);
  const auto j = to_json(v.joint_reward(q, oracle(q)));
  CHECK(j.at("r") == 1);
  CHECK(j.at("rubrics").size() == 6);
}

TEST_CASE("judge prompts and conclusion parsing") {
  const auto& q = queries().at(0);
  const auto t = oracle(q);
  const auto p = trajectory_judge_prompt(q, t);
  CHECK(p.find("Is the answer complete?") != std::string::npos);
  CHECK(p.find("Emergency backup plan?") != std::string::npos);
  CHECK(p.find(q.text) != std::string::npos);
  const auto tp = turn_judge_prompt(q, t, tool_turns(t).at(0));
  CHECK(tp.find("Is the tool call parameters/logic correct?") != std::string::npos);
  CHECK(tp.find("<tool_response>{") != std::string::npos);

  CHECK(parse_trajectory_conclusion("Reason...\nFinal Conclusion: {{{Very satisfied}}}") == Conclusion::VerySatisfied);
  CHECK(parse_trajectory_conclusion("Final Conclusion: {{{Very satisfied but did not address unexpected situations}}}") ==
        Conclusion::SatisfiedNoContingency);
  CHECK(parse_trajectory_conclusion("Final Conclusion: Dissatisfied, incomplete answer") == Conclusion::IncompleteAnswer);
  CHECK_FALSE(parse_trajectory_conclusion("I think it is fine."));
  CHECK_FALSE(parse_trajectory_conclusion("Final Conclusion: meh"));
  CHECK(parse_turn_conclusion("Final Conclusion: Satisfied") == true);
  CHECK(parse_turn_conclusion("Final Conclusion: Unsatisfied with tool call logic error.") == false);
  CHECK_FALSE(parse_turn_conclusion("Final Conclusion: maybe"));
}

TEST_CASE("external judge over a local endpoint") {
  httplib::Server server;
  server.Post("/complete", [](const httplib::Request& req, httplib::Response& res) {
    if (req.body.find("slow please") != std::string::npos) std::this_thread::sleep_for(std::chrono::milliseconds(800));
    if (req.body.find("garbled") != std::string::npos) {
      res.set_content("no verdict here", "text/plain");
      return;
    }
    const bool turn = req.body.find("Is the tool call parameters/logic correct?") != std::string::npos;
    if (turn) {
      res.set_content("Evaluation Reason: consistent.\nFinal Conclusion: Satisfied", "text/plain");
    } else if (req.body.find("```itinerary") == std::string::npos) {
      res.set_content("Evaluation Reason: nothing.\nFinal Conclusion: {{{Dissatisfied, incomplete answer}}}", "text/plain");
    } else {
      res.set_content("Evaluation Reason: fine.\nFinal Conclusion: {{{Very satisfied}}}", "text/plain");
    }
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  JudgeEndpoint ep;
  ep.port = port;
  ep.timeout_s = 0.3;
  ExternalJudge judge(ep);
  RuleVerifier rules;

  const auto& q = queries().at(0);
  const auto good = oracle(q);
  const auto rec = judge.joint_reward(q, good);
  CHECK_FALSE(rec.verifier_failed);
  CHECK(rec.r == 1);
  CHECK(rec.turn_verdicts.size() == tool_turns(good).size());

  auto broken = good;
  broken.segments.pop_back();
  broken.terminal = Terminal::TurnLimit;
  const auto a = judge.joint_reward(q, broken);
  const auto b = rules.joint_reward(q, broken);
  CHECK(a.trajectory_verdict.conclusion == Conclusion::IncompleteAnswer);
  CHECK(b.trajectory_verdict.conclusion == Conclusion::IncompleteAnswer);
  CHECK(a.r == 0);
  CHECK(a.turn_verdicts.empty());

  auto slow = good;
  slow.segments.back().body += "\nslow please";
  const auto timed_out = judge.joint_reward(q, slow);
  CHECK(timed_out.verifier_failed);
  CHECK(timed_out.r == 0);

  auto garbled = good;
  garbled.segments.back().body += "\ngarbled";
  CHECK(judge.joint_reward(q, garbled).verifier_failed);

  server.stop();
  th.join();

  const auto refused = judge.joint_reward(q, good);
  CHECK(refused.verifier_failed);
  CHECK(refused.r == 0);

  JudgeEndpoint bad;
  bad.timeout_s = 0;
  CHECK_THROWS_AS(ExternalJudge{bad}, ConfigError);
}
