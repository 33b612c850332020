#include "doctest.h"

#include <cmath>

#include "deeptravel/policy.hpp"
#include "deeptravel/verifier.hpp"
#include "fixtures.hpp"

using namespace deeptravel;

namespace {

uint32_t all_of(Head h) { return (1u << head_arity(h)) - 1u; }

// Straight log-sum-exp over the valid templates, written apart from the library.
double reference_log_softmax(const PolicyParams& p, Head h, int bucket, uint32_t valid, int choice) {
  double hi = -INFINITY;
  for (int c = 0; c < head_arity(h); ++c)
    if (valid >> c & 1u) hi = std::max(hi, p.at(h, bucket, c));
  double z = 0;
  for (int c = 0; c < head_arity(h); ++c)
    if (valid >> c & 1u) z += std::exp(p.at(h, bucket, c) - hi);
  return p.at(h, bucket, choice) - hi - std::log(z);
}

double reference_entropy(const PolicyParams& p, Head h, int bucket) {
  std::vector<double> e;
  double z = 0;
  for (int c = 0; c < head_arity(h); ++c) {
    e.push_back(std::exp(p.at(h, bucket, c)));
    z += e.back();
  }
  double s = 0;
  for (double x : e) s -= x / z * std::log(x / z);
  return s;
}

PolicyParams random_params(Rng& rng, double scale) {
  auto p = PolicyParams::zeros();
  for (auto& x : p.theta) x = scale * (2 * rng.uniform() - 1);
  return p;
}

std::vector<Trajectory> oracle_traces(const std::vector<Query>& qs) {
  Sandbox sb(fixtures::world());
  std::vector<Trajectory> out;
  for (const auto& q : qs) out.push_back(fixtures::oracle_run(sb, q));
  return out;
}

std::vector<std::string> tool_sequence(const Trajectory& t) {
  std::vector<std::string> s;
  for (const auto& g : t.segments)
    if (g.kind == SegmentKind::ToolCall) s.push_back(g.body.substr(0, g.body.find('(')));
  return s;
}

}  // namespace

TEST_CASE("parameter layout") {
  const auto p = PolicyParams::zeros();
  CHECK(p.theta.size() == PolicyParams::size());
  CHECK(PolicyParams::size() == static_cast<size_t>(head_arity(Head::Kind) * head_buckets(Head::Kind) +
                                                    head_arity(Head::Selector) * head_buckets(Head::Selector) +
                                                    head_arity(Head::Observation) * head_buckets(Head::Observation)));
  CHECK(PolicyParams::size() < 2000);
  CHECK(PolicyParams::index(Head::Kind, 0, 0) == 0);
  CHECK(PolicyParams::index(Head::Selector, 0, 0) == PolicyParams::offset(Head::Selector));
  Rng rng(1);
  auto q = random_params(rng, 3);
  q.version = 17;
  const auto back = PolicyParams::from_json(q.to_json());
  CHECK(back.theta == q.theta);
  CHECK(back.version == 17);
  auto j = q.to_json();
  const std::string kind(head_name(Head::Kind));
  j[kind][0][0] = "nan";
  CHECK_THROWS(PolicyParams::from_json(j));
  j = q.to_json();
  j[kind].erase(0);
  CHECK_THROWS_AS(PolicyParams::from_json(j), ConfigError);
}

TEST_CASE("two equal logits split evenly") {
  auto p = PolicyParams::zeros();
  const uint32_t two = 0b11;
  Rng rng(2024);
  int first = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto d = sample_decision(p, Head::Kind, 5, two, rng, false);
    REQUIRE((d.choice == 0 || d.choice == 1));
    first += d.choice == 0;
    REQUIRE(std::abs(d.log_prob - std::log(0.5)) < 1e-12);
  }
  CHECK(std::abs(first / 10000.0 - 0.5) < 0.02);
}

TEST_CASE("saturated logits pick the favourite") {
  auto p = PolicyParams::zeros();
  for (int c = 0; c < head_arity(Head::Kind); ++c) p.at(Head::Kind, 3, c) = -20;
  p.at(Head::Kind, 3, 4) = 20;
  Rng rng(8);
  int hits = 0;
  for (int i = 0; i < 10000; ++i) hits += sample_decision(p, Head::Kind, 3, all_of(Head::Kind), rng, false).choice == 4;
  CHECK(hits / 10000.0 > 0.999);
  CHECK(bucket_entropy(p, Head::Kind, 3) < 0.01);
}

TEST_CASE("recorded log_prob matches an independent log-softmax") {
  Rng rng(77);
  const auto p = random_params(rng, 4);
  for (int k = 0; k < 2000; ++k) {
    const Head h = static_cast<Head>(rng.below(kHeadCount));
    const int bucket = static_cast<int>(rng.below(static_cast<uint64_t>(head_buckets(h))));
    uint32_t valid = static_cast<uint32_t>(rng.below(1u << head_arity(h)));
    if (!valid) valid = 1;
    const auto d = sample_decision(p, h, bucket, valid, rng, rng.bernoulli(0.3));
    REQUIRE((valid >> d.choice & 1u));
    REQUIRE(d.log_prob <= 0);
    REQUIRE(std::abs(d.log_prob - reference_log_softmax(p, h, bucket, valid, d.choice)) < 1e-12);
    REQUIRE(std::abs(decision_log_prob(p, d) - d.log_prob) < 1e-12);
    const auto probs = bucket_probs(p, h, bucket, valid);
    for (int c = 0; c < head_arity(h); ++c)
      if (!(valid >> c & 1u)) REQUIRE(probs[static_cast<size_t>(c)] == 0.0);
  }
}

TEST_CASE("no valid template forces an answer") {
  const auto p = PolicyParams::zeros();
  Rng rng(1);
  const auto d = sample_decision(p, Head::Kind, 0, 0, rng, false);
  CHECK(d.choice == static_cast<int>(KindTemplate::EmitAnswer));
  const auto s = sample_decision(p, Head::Selector, 0, 0, rng, false);
  CHECK(s.choice == static_cast<int>(Selector::FirstListed));
}

TEST_CASE("trajectory_log_prob") {
  const auto p = PolicyParams::zeros();
  Trajectory masked;
  masked.decisions.push_back(DecisionRecord{Head::Kind, 1, 2, all_of(Head::Kind), -1.0, true});
  masked.decisions.push_back(DecisionRecord{Head::Observation, 0, 1, all_of(Head::Observation), -1.0, true});
  CHECK(trajectory_log_prob(p, masked) == 0.0);

  Trajectory one;
  one.decisions.push_back(DecisionRecord{Head::Selector, 2, 1, all_of(Head::Selector), 0, false});
  CHECK(std::abs(trajectory_log_prob(p, one) - std::log(0.25)) < 1e-15);

  Rng prng(5);
  const auto params = random_params(prng, 2);
  SoftmaxPolicy pol(params, false);
  Sandbox sb(fixtures::world());
  SandboxEnvironment env(sb);
  for (const auto& q : fixtures::feasible_queries(10)) {
    Rng rng(11);
    const auto t = run_episode(pol, env, q, EpisodeLimits{}, rng);
    double stored = 0;
    for (const auto& d : t.decisions)
      if (!d.masked) stored += d.log_prob;
    CHECK(std::abs(trajectory_log_prob(params, t) - stored) < 1e-12);
  }
}

TEST_CASE("entropy") {
  const auto p = PolicyParams::zeros();
  CHECK(std::abs(bucket_entropy(p, Head::Kind, 0) - std::log(7.0)) < 1e-12);
  CHECK(std::abs(policy_entropy(p, {{Head::Kind, 0}, {Head::Kind, 9}}) - std::log(7.0)) < 1e-12);
  Rng rng(3);
  const auto q = random_params(rng, 5);
  std::vector<BucketKey> keys;
  double sum = 0;
  for (int b = 0; b < 12; ++b) {
    keys.push_back({Head::Kind, b});
    keys.push_back({Head::Selector, b});
    sum += reference_entropy(q, Head::Kind, b) + reference_entropy(q, Head::Selector, b);
  }
  CHECK(std::abs(policy_entropy(q, keys) - sum / 24) < 1e-9);
}

TEST_CASE("analytic gradient matches central differences") {
  Rng prng(9);
  auto params = random_params(prng, 1.5);
  SoftmaxPolicy pol(params, false);
  Sandbox sb(fixtures::world());
  SandboxEnvironment env(sb);
  const auto qs = fixtures::feasible_queries(4);
  std::vector<Trajectory> ts;
  for (const auto& q : qs) {
    Rng rng(q.id.size());
    ts.push_back(run_episode(pol, env, q, EpisodeLimits{}, rng));
  }
  const double h = 1e-5;
  for (const auto& t : ts) {
    std::vector<double> grad(params.theta.size(), 0.0);
    accumulate_log_prob_grad(params, t, 1.0, grad);
    for (const auto& key : visited_buckets({&t})) {
      for (int c = 0; c < head_arity(key.first); ++c) {
        const size_t i = PolicyParams::index(key.first, key.second, c);
        auto plus = params, minus = params;
        plus.theta[i] += h;
        minus.theta[i] -= h;
        const double fd = (trajectory_log_prob(plus, t) - trajectory_log_prob(minus, t)) / (2 * h);
        const double scale = std::max({std::abs(fd), std::abs(grad[i]), 1e-3});
        REQUIRE(std::abs(fd - grad[i]) / scale < 1e-6);
      }
    }
    // Buckets the trajectory never touches get nothing.
    std::set<size_t> touched;
    for (const auto& key : visited_buckets({&t}))
      for (int c = 0; c < head_arity(key.first); ++c) touched.insert(PolicyParams::index(key.first, key.second, c));
    for (size_t i = 0; i < grad.size(); ++i)
      if (!touched.count(i)) REQUIRE(grad[i] == 0.0);
  }
}

TEST_CASE("masked decisions carry no gradient") {
  Trajectory t;
  t.decisions.push_back(DecisionRecord{Head::Kind, 4, 1, all_of(Head::Kind), 0, false});
  t.decisions.push_back(DecisionRecord{Head::Observation, 2, 0, all_of(Head::Observation), 0, true});
  t.decisions.push_back(DecisionRecord{Head::Kind, 9, 3, all_of(Head::Kind), 0, true});
  Rng rng(4);
  const auto p = random_params(rng, 2);
  std::vector<double> grad(p.theta.size(), 0.0);
  accumulate_log_prob_grad(p, t, 1.0, grad);
  for (int c = 0; c < head_arity(Head::Observation); ++c) CHECK(grad[PolicyParams::index(Head::Observation, 2, c)] == 0.0);
  for (int c = 0; c < head_arity(Head::Kind); ++c) CHECK(grad[PolicyParams::index(Head::Kind, 9, c)] == 0.0);

  auto perturbed = p;
  for (int c = 0; c < head_arity(Head::Kind); ++c) perturbed.at(Head::Kind, 9, c) += rng.uniform() * 10;
  for (int c = 0; c < head_arity(Head::Observation); ++c) perturbed.at(Head::Observation, 2, c) -= 3;
  CHECK(trajectory_log_prob(perturbed, t) == trajectory_log_prob(p, t));
  CHECK(visited_buckets({&t}) == std::vector<BucketKey>{{Head::Kind, 4}});
}

TEST_CASE("adding a constant to a bucket changes nothing") {
  Rng prng(12);
  const auto p = random_params(prng, 3);
  for (int trial = 0; trial < 50; ++trial) {
    const Head h = trial % 2 ? Head::Kind : Head::Selector;
    const int b = static_cast<int>(prng.below(static_cast<uint64_t>(head_buckets(h))));
    auto shifted = p;
    const double k = 40 * prng.uniform() - 20;
    for (int c = 0; c < head_arity(h); ++c) shifted.at(h, b, c) += k;
    const auto a = bucket_probs(p, h, b, all_of(h)), s = bucket_probs(shifted, h, b, all_of(h));
    for (size_t c = 0; c < a.size(); ++c) REQUIRE(std::abs(a[c] - s[c]) < 1e-12);
    Rng r1(trial), r2(trial);
    for (int i = 0; i < 100; ++i)
      REQUIRE(sample_decision(p, h, b, all_of(h), r1, false).choice ==
              sample_decision(shifted, h, b, all_of(h), r2, false).choice);
  }
}

TEST_CASE("same params, query and seed give the same trajectory") {
  Rng prng(6);
  const auto params = random_params(prng, 1);
  SoftmaxPolicy a(params, false), b(params, false);
  Sandbox s1(fixtures::world()), s2(fixtures::world());
  SandboxEnvironment e1(s1), e2(s2);
  for (const auto& q : fixtures::feasible_queries(8)) {
    Rng r1(42), r2(42);
    const auto t1 = run_episode(a, e1, q, EpisodeLimits{}, r1);
    const auto t2 = run_episode(b, e2, q, EpisodeLimits{}, r2);
    CHECK(render_trajectory(t1) == render_trajectory(t2));
    CHECK(t1.decisions == t2.decisions);
  }
}

TEST_CASE("argument binding is deterministic") {
  const auto q = fixtures::feasible_queries(1).at(0);
  EpisodeState st;
  st.query = &q;
  const auto ctx = analyze(st, 60);
  for (KindTemplate k : {KindTemplate::CallFlight, KindTemplate::CallTrain, KindTemplate::CallWeb}) {
    const auto c1 = bind_call(k, ctx), c2 = bind_call(k, analyze(st, 60));
    CHECK(c1 == c2);
  }
  const auto f = bind_call(KindTemplate::CallFlight, ctx);
  CHECK(f.get("depart_city") == q.intents.origin);
  CHECK(f.get("arrival_city") == q.intents.destination);
  CHECK(f.get("depart_date") == q.intents.depart.iso());
}

TEST_CASE("oracle call sequences") {
  SUBCASE("unconstrained multi-night trip searches transport and a hotel before answering") {
    IntentSpace s = base_intent_space();
    s.trip_lengths = {3};
    auto qs = fixtures::feasible_queries(60, s);
    std::erase_if(qs, [](const Query& q) { return q.intents.nights() == 0; });
    int seen = 0;
    for (const auto& t : oracle_traces(qs)) {
      const auto seq = tool_sequence(t);
      CHECK(std::find(seq.begin(), seq.end(), "hotel_search") != seq.end());
      CHECK((std::count(seq.begin(), seq.end(), "flight_search") + std::count(seq.begin(), seq.end(), "train_search")) >= 2);
      CHECK(t.terminal == Terminal::Answered);
      ++seen;
    }
    CHECK(seen > 0);
  }
  SUBCASE("a required POI is searched before the answer") {
    IntentSpace s = base_intent_space();
    s.poi_choices = 2;
    auto qs = fixtures::feasible_queries(200, s);
    std::erase_if(qs, [](const Query& q) { return !q.intents.poi; });
    REQUIRE_FALSE(qs.empty());
    for (const auto& t : oracle_traces(qs)) {
      const auto seq = tool_sequence(t);
      CHECK(std::find(seq.begin(), seq.end(), "poi_search") != seq.end());
      CHECK(t.terminal == Terminal::Answered);
    }
  }
}

TEST_CASE("budget below every combination still answers and scores zero") {
  const auto q0 = fixtures::feasible_queries(1).at(0);
  Sandbox sb(fixtures::world());
  // Cheapest transport each way by brute force over both modes.
  auto cheapest = [&](const std::string& from, const std::string& to, Date d) {
    int64_t best = INT64_MAX;
    for (TransportMode m : {TransportMode::Flight, TransportMode::Train})
      for (const auto& r : sb.world().transport(m, from, to, d)) best = std::min(best, r.price);
    return best;
  };
  const int64_t floor =
      cheapest(q0.intents.origin, q0.intents.destination, q0.intents.depart) +
      cheapest(q0.intents.destination, q0.intents.origin, q0.intents.return_day());
  REQUIRE(floor < INT64_MAX / 4);
  TripIntents t = q0.intents;
  t.budget = floor - 1;
  const auto q = Query::from_intents(t);
  const auto traj = fixtures::oracle_run(sb, q);
  CHECK(traj.terminal == Terminal::Answered);
  CHECK(RuleVerifier{}.joint_reward(q, traj).r == 0);
}

TEST_CASE("behavior cloning") {
  auto qs = fixtures::feasible_queries(300);
  const auto all = oracle_traces(qs);
  const std::vector<Trajectory> train(all.begin(), all.begin() + 200), held(all.begin() + 200, all.end());
  const auto init = PolicyParams::zeros();

  const auto frozen = behavior_clone(init, train, 3, 0.0);
  CHECK(frozen.params.theta == init.theta);

  const auto none = behavior_clone(init, {}, 3, 1.0);
  CHECK(none.params.theta == init.theta);
  CHECK(none.losses.empty());

  const double before = top1_agreement(init, held);
  const auto cloned = behavior_clone(init, train, 30, 1.0);
  REQUIRE(cloned.losses.size() == 31);
  for (size_t i = 1; i < cloned.losses.size(); ++i) CHECK(cloned.losses[i] <= cloned.losses[i - 1] + 1e-9);
  const double after = top1_agreement(cloned.params, held);
  CHECK(after > before);
  CHECK(after > 0.9);
  for (double x : cloned.params.theta) CHECK(std::isfinite(x));
}
