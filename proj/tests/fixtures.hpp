#pragma once

#include <vector>

#include "deeptravel/datagen.hpp"
#include "deeptravel/policy.hpp"
#include "deeptravel/sandbox.hpp"

namespace fixtures {

inline const deeptravel::WorldState& world() {
  static const deeptravel::WorldState w = deeptravel::generate_world(deeptravel::WorldConfig{});
  return w;
}

// Base (unconstrained) queries that have a witness itinerary, in enumeration order.
inline std::vector<deeptravel::Query> feasible_queries(size_t count, const deeptravel::IntentSpace& space) {
  deeptravel::Sandbox sb(world());
  std::vector<deeptravel::Query> out;
  deeptravel::enumerate_intents(world(), space, [&](const deeptravel::TripIntents& t) {
    if (deeptravel::feasibility_witness(sb, t)) out.push_back(deeptravel::Query::from_intents(t));
    return out.size() < count;
  });
  return out;
}

inline std::vector<deeptravel::Query> feasible_queries(size_t count) {
  return feasible_queries(count, deeptravel::base_intent_space());
}

inline deeptravel::Trajectory oracle_run(deeptravel::Sandbox& sb, const deeptravel::Query& q, uint64_t seed = 1) {
  deeptravel::OraclePolicy oracle;
  deeptravel::SandboxEnvironment env(sb);
  deeptravel::Rng rng(seed);
  return deeptravel::run_episode(oracle, env, q, deeptravel::EpisodeLimits{}, rng);
}

}  // namespace fixtures
