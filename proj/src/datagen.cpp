#include "deeptravel/datagen.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace deeptravel {

using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::vector<json> read_jsonl(const std::string& path) {
  std::vector<json> out;
  std::istringstream in(read_file(path));
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ConfigError(path + ":" + std::to_string(lineno) + ": invalid JSON");
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Intent space
// ---------------------------------------------------------------------------

void IntentSpace::validate() const {
  for (int d : depart_offsets)
    if (d < 0) throw ConfigError("depart offsets must be non-negative");
  for (int t : trip_lengths)
    if (t < 1) throw ConfigError("trip lengths must be at least one day");
  for (auto b : budgets)
    if (b <= 0) throw ConfigError("budgets must be positive");
  for (int d : deadlines)
    if (d < 0 || d >= 1440) throw ConfigError("deadlines must be minutes within a day");
  for (const auto& h : hotel_prefs)
    if (trim(h).empty()) throw ConfigError("hotel preferences must be non-empty");
  if (poi_choices < 0) throw ConfigError("poi_choices must be non-negative");
}

json IntentSpace::to_json() const {
  json modes_j = json::array();
  for (auto m : modes) modes_j.push_back(std::string(mode_name(m)));
  return json{{"cities", cities},   {"depart_offsets", depart_offsets}, {"trip_lengths", trip_lengths},
              {"budgets", budgets}, {"deadlines", deadlines},           {"hotel_prefs", hotel_prefs},
              {"modes", modes_j},   {"poi_choices", poi_choices}};
}

IntentSpace IntentSpace::from_json(const json& j) {
  IntentSpace s;
  for (const auto& [key, v] : j.items()) {
    if (key == "cities") s.cities = v.get<std::vector<std::string>>();
    else if (key == "depart_offsets") s.depart_offsets = v.get<std::vector<int>>();
    else if (key == "trip_lengths") s.trip_lengths = v.get<std::vector<int>>();
    else if (key == "budgets") s.budgets = v.get<std::vector<int64_t>>();
    else if (key == "deadlines") s.deadlines = v.get<std::vector<int>>();
    else if (key == "hotel_prefs") s.hotel_prefs = v.get<std::vector<std::string>>();
    else if (key == "modes") {
      s.modes.clear();
      for (const auto& m : v) {
        auto mode = mode_from_name(m.get<std::string>());
        if (!mode) throw ConfigError("unknown transport mode " + m.get<std::string>());
        s.modes.push_back(*mode);
      }
    } else if (key == "poi_choices") s.poi_choices = v.get<int>();
    else throw ConfigError("unknown intent space key: " + key);
  }
  s.validate();
  return s;
}

IntentSpace base_intent_space() {
  IntentSpace s;
  s.trip_lengths.clear();
  s.budgets.clear();
  s.deadlines.clear();
  s.hotel_prefs.clear();
  s.modes.clear();
  s.poi_choices = 0;
  return s;
}

namespace {

struct Radix {
  std::vector<std::string> cities;
  std::vector<int> offsets;
  int poi_slots = 0;
};

Radix radix_of(const WorldState& world, const IntentSpace& space) {
  space.validate();
  Radix r;
  if (space.cities.empty()) {
    for (const auto& c : world.cities) r.cities.push_back(c.name);
  } else {
    for (const auto& name : space.cities) {
      const City* c = world.find_city(name);
      if (!c) throw ConfigError("intent space names an unknown city: " + name);
      r.cities.push_back(c->name);
    }
  }
  if (r.cities.size() < 2) throw ConfigError("intent enumeration needs at least two cities");
  r.offsets = space.depart_offsets;
  if (r.offsets.empty()) {
    int longest = 1;
    for (int t : space.trip_lengths) longest = std::max(longest, t);
    for (int d = 0; d + longest <= world.config.horizon_days; ++d) r.offsets.push_back(d);
  }
  r.poi_slots = space.poi_choices;
  return r;
}

}  // namespace

uint64_t intent_space_size(const WorldState& world, const IntentSpace& space) {
  const Radix r = radix_of(world, space);
  const uint64_t c = r.cities.size();
  return c * c * r.offsets.size() * (1 + space.trip_lengths.size()) * (1 + space.budgets.size()) *
         (1 + space.deadlines.size()) * (1 + space.hotel_prefs.size()) * (1 + space.modes.size()) *
         (1 + static_cast<uint64_t>(r.poi_slots));
}

namespace {

std::optional<TripIntents> decode(const WorldState& world, const IntentSpace& space, const Radix& r, uint64_t index) {
  auto digit = [&index](uint64_t base) {
    const uint64_t d = index % base;
    index /= base;
    return static_cast<size_t>(d);
  };
  // Least significant digit first: the last slot varies fastest.
  const size_t poi = digit(1 + static_cast<uint64_t>(r.poi_slots));
  const size_t mode = digit(1 + space.modes.size());
  const size_t hotel = digit(1 + space.hotel_prefs.size());
  const size_t deadline = digit(1 + space.deadlines.size());
  const size_t budget = digit(1 + space.budgets.size());
  const size_t length = digit(1 + space.trip_lengths.size());
  const size_t depart = digit(r.offsets.size());
  const size_t dest = digit(r.cities.size());
  const size_t origin = digit(r.cities.size());
  if (index != 0 || origin == dest) return std::nullopt;

  TripIntents t;
  t.origin = r.cities[origin];
  t.destination = r.cities[dest];
  t.depart = world.first_day().plus(r.offsets[depart]);
  if (length) t.trip_length_days = space.trip_lengths[length - 1];
  if (budget) t.budget = space.budgets[budget - 1];
  if (deadline) t.arrival_deadline = space.deadlines[deadline - 1];
  if (hotel) t.hotel_preference = space.hotel_prefs[hotel - 1];
  if (mode) t.mode = space.modes[mode - 1];
  if (poi) {
    auto it = world.pois.find(t.destination);
    if (it == world.pois.end() || poi > it->second.size()) return std::nullopt;
    t.poi = it->second[poi - 1].name;
  }
  if (t.problem()) return std::nullopt;
  if (!world.in_horizon(t.depart) || !world.in_horizon(t.return_day())) return std::nullopt;
  if (t.hotel_preference && t.nights() == 0) return std::nullopt;
  return t;
}

}  // namespace

std::optional<TripIntents> decode_intents(const WorldState& world, const IntentSpace& space, uint64_t index) {
  const Radix r = radix_of(world, space);
  if (index >= intent_space_size(world, space)) return std::nullopt;
  return decode(world, space, r, index);
}

void enumerate_intents(const WorldState& world, const IntentSpace& space,
                       const std::function<bool(const TripIntents&)>& sink) {
  const Radix r = radix_of(world, space);
  const uint64_t total = intent_space_size(world, space);
  for (uint64_t i = 0; i < total; ++i)
    if (auto t = decode(world, space, r, i))
      if (!sink(*t)) return;
}

std::vector<TripIntents> enumerate_intents(const WorldState& world, const IntentSpace& space) {
  std::vector<TripIntents> out;
  enumerate_intents(world, space, [&](const TripIntents& t) {
    out.push_back(t);
    return true;
  });
  return out;
}

Query synthesize_query(const TripIntents& intents) {
  if (auto p = intents.problem()) throw ConfigError("invalid intent set: " + *p);
  return Query::from_intents(intents);
}

// ---------------------------------------------------------------------------
// Difficulty and feasibility
// ---------------------------------------------------------------------------

Difficulty classify_pass_fraction(double p, const DifficultyThresholds& th) {
  constexpr double tol = 1e-12;
  if (p + tol >= th.easy) return Difficulty::Easy;
  if (p + tol >= th.medium) return Difficulty::Medium;
  return Difficulty::Hard;
}

DifficultyScore score_difficulty(const Query& q, Policy& probe, int k, Sandbox& sandbox, Verifier& verifier,
                                 const EpisodeLimits& limits, uint64_t seed, const DifficultyThresholds& th) {
  if (k < 1) throw ConfigError("difficulty probe needs k >= 1");
  DifficultyScore s;
  for (int i = 0; i < k; ++i) {
    Rng rng = Rng::derive({seed, fnv1a(q.id), static_cast<uint64_t>(i)});
    SandboxEnvironment env(sandbox);
    const Trajectory t = run_episode(probe, env, q, limits, rng);
    s.passes += verifier.joint_reward(q, t).r;
  }
  s.pass_fraction = static_cast<double>(s.passes) / k;
  s.difficulty = classify_pass_fraction(s.pass_fraction, th);
  return s;
}

std::optional<Itinerary> feasibility_witness(Sandbox& sandbox, const TripIntents& q, int buffer) {
  CandidatePools pools;
  auto fold = [&](const ToolCall& c) {
    const ToolResponse r = sandbox.compute(c);
    if (r.ok) add_to_pools(pools, q, c, r.text);
  };
  for (ToolKind tool : {ToolKind::Flight, ToolKind::Train}) {
    fold(make_call(tool, {{"depart_city", q.origin}, {"arrival_city", q.destination}, {"depart_date", q.depart.iso()}}));
    fold(make_call(tool, {{"depart_city", q.destination},
                          {"arrival_city", q.origin},
                          {"depart_date", q.return_day().iso()}}));
  }
  if (q.nights() > 0)
    fold(make_call(ToolKind::Hotel,
                   {{"city_name", q.destination}, {"checkin_date", q.depart.iso()}, {"checkout_date", q.return_day().iso()}}));
  if (q.poi) fold(make_call(ToolKind::Poi, {{"query", *q.poi}, {"city_name", q.destination}}));
  return best_feasible_itinerary(q, pools, buffer);
}

QueryOverrides QueryOverrides::parse(std::string_view text) {
  QueryOverrides o;
  int lineno = 0;
  for (const auto& raw : split(text, '\n')) {
    ++lineno;
    std::string line = raw;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto space = line.find_first_of(" \t");
    if (space == std::string::npos) throw ConfigError("override line " + std::to_string(lineno) + ": expected '<allow|deny> <id>'");
    const std::string verb = line.substr(0, space), id = trim(line.substr(space + 1));
    if (verb == "allow") o.allow.insert(id);
    else if (verb == "deny") o.deny.insert(id);
    else throw ConfigError("override line " + std::to_string(lineno) + ": unknown verb " + verb);
  }
  return o;
}

// ---------------------------------------------------------------------------
// Split specifications
// ---------------------------------------------------------------------------

std::string_view split_kind_name(SplitKind k) {
  switch (k) {
    case SplitKind::Constrained: return "constrained";
    case SplitKind::Unconstrained: return "unconstrained";
    case SplitKind::Train: return "train";
    case SplitKind::ColdStart: return "cold-start";
  }
  return "";
}

std::string default_split_spec() {
  return "with-constraint:constrained=156/45/299;without-constraint:unconstrained=222/78/200;"
         "train:train=450;validation:train=50;cold-start:cold-start=1000";
}

std::vector<SplitSpec> parse_split_spec(std::string_view text) {
  std::string spec = trim(text);
  if (spec == "default") spec = default_split_spec();
  std::vector<SplitSpec> out;
  std::set<std::string> names;
  for (const auto& raw : split(spec, ';')) {
    const std::string entry = trim(raw);
    if (entry.empty()) continue;
    const auto colon = entry.find(':'), eq = entry.find('=');
    if (colon == std::string::npos || eq == std::string::npos || eq < colon)
      throw ConfigError("split entry '" + entry + "' is not name:kind=counts");
    SplitSpec s;
    s.name = trim(entry.substr(0, colon));
    const std::string kind = trim(entry.substr(colon + 1, eq - colon - 1));
    const std::string counts = trim(entry.substr(eq + 1));
    if (s.name.empty() || s.name.find_first_of("/\\ ") != std::string::npos)
      throw ConfigError("bad split name '" + s.name + "'");
    if (!names.insert(s.name).second) throw ConfigError("duplicate split name '" + s.name + "'");
    auto number = [&](const std::string& x) {
      try {
        size_t used = 0;
        const int v = std::stoi(x, &used);
        if (used != x.size() || v < 0) throw std::invalid_argument(x);
        return v;
      } catch (const std::exception&) {
        throw ConfigError("bad count '" + x + "' in split " + s.name);
      }
    };
    if (kind == "constrained" || kind == "unconstrained") {
      s.kind = kind == "constrained" ? SplitKind::Constrained : SplitKind::Unconstrained;
      const auto parts = split(counts, '/');
      if (parts.size() != 3) throw ConfigError("split " + s.name + " needs easy/medium/hard counts");
      s.easy = number(trim(parts[0]));
      s.medium = number(trim(parts[1]));
      s.hard = number(trim(parts[2]));
    } else if (kind == "train" || kind == "cold-start") {
      s.kind = kind == "train" ? SplitKind::Train : SplitKind::ColdStart;
      s.count = number(counts);
    } else {
      throw ConfigError("unknown split kind '" + kind + "'");
    }
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Split filling
// ---------------------------------------------------------------------------

namespace {

int difficulty_slot(Difficulty d) {
  switch (d) {
    case Difficulty::Easy: return 0;
    case Difficulty::Medium: return 1;
    case Difficulty::Hard: return 2;
    default: return -1;
  }
}

class SplitFiller {
 public:
  explicit SplitFiller(const std::vector<SplitSpec>& specs) : specs_(specs) {
    for (const auto& s : specs_) filled_[s.name];
  }

  /// Index of the split that wants this query, if any. Cold-start splits are
  /// answered by the caller after distillation succeeds.
  std::optional<size_t> wants(const Query& q, Difficulty d, bool feasible) const {
    for (size_t i = 0; i < specs_.size(); ++i) {
      const SplitSpec& s = specs_[i];
      const auto& have = filled_.at(s.name);
      switch (s.kind) {
        case SplitKind::Constrained:
        case SplitKind::Unconstrained: {
          if (q.constrained != (s.kind == SplitKind::Constrained)) break;
          const int slot = difficulty_slot(d);
          if (slot < 0) break;
          const int need = slot == 0 ? s.easy : slot == 1 ? s.medium : s.hard;
          if (count(have, d) < need) return i;
          break;
        }
        case SplitKind::Train:
        case SplitKind::ColdStart:
          if (feasible && static_cast<int>(have.size()) < s.count) return i;
          break;
      }
    }
    return std::nullopt;
  }

  void add(size_t split, Query q) { filled_[specs_[split].name].push_back(std::move(q)); }

  bool complete() const {
    for (const auto& s : specs_) {
      const auto& have = filled_.at(s.name);
      if (s.kind == SplitKind::Train || s.kind == SplitKind::ColdStart) {
        if (static_cast<int>(have.size()) < s.count) return false;
      } else if (count(have, Difficulty::Easy) < s.easy || count(have, Difficulty::Medium) < s.medium ||
                 count(have, Difficulty::Hard) < s.hard) {
        return false;
      }
    }
    return true;
  }

  std::vector<std::string> deficits() const {
    std::vector<std::string> out;
    for (const auto& s : specs_) {
      const auto& have = filled_.at(s.name);
      auto report = [&](const std::string& cell, int need, int got) {
        if (got < need)
          out.push_back(s.name + "/" + cell + ": need " + std::to_string(need) + ", have " + std::to_string(got));
      };
      if (s.kind == SplitKind::Train || s.kind == SplitKind::ColdStart) {
        report("all", s.count, static_cast<int>(have.size()));
      } else {
        report("easy", s.easy, count(have, Difficulty::Easy));
        report("medium", s.medium, count(have, Difficulty::Medium));
        report("hard", s.hard, count(have, Difficulty::Hard));
      }
    }
    return out;
  }

  const std::map<std::string, std::vector<Query>>& filled() const { return filled_; }

 private:
  static int count(const std::vector<Query>& qs, Difficulty d) {
    return static_cast<int>(std::count_if(qs.begin(), qs.end(), [&](const Query& q) { return q.difficulty == d; }));
  }

  const std::vector<SplitSpec>& specs_;
  std::map<std::string, std::vector<Query>> filled_;

 public:
  /// Whether some open split could take a query of this constraint status,
  /// before its difficulty or feasibility is known.
  bool may_want(bool constrained) const {
    for (const auto& s : specs_) {
      const auto& have = filled_.at(s.name);
      switch (s.kind) {
        case SplitKind::Constrained:
        case SplitKind::Unconstrained:
          if (constrained == (s.kind == SplitKind::Constrained) && static_cast<int>(have.size()) < s.total()) return true;
          break;
        case SplitKind::Train:
        case SplitKind::ColdStart:
          if (static_cast<int>(have.size()) < s.count) return true;
          break;
      }
    }
    return false;
  }
};

}  // namespace

std::map<std::string, std::vector<Query>> build_benchmark(const std::vector<ScoredQuery>& pool,
                                                          const std::vector<SplitSpec>& specs,
                                                          const std::set<std::string>& exclude) {
  std::set<std::string> names;
  for (const auto& s : specs) {
    if (!names.insert(s.name).second) throw ConfigError("duplicate split name '" + s.name + "'");
    if (s.kind == SplitKind::ColdStart) throw ConfigError("build_benchmark does not distill cold-start splits");
  }
  SplitFiller filler(specs);
  std::set<std::string> used;
  for (const auto& sq : pool) {
    if (filler.complete()) break;
    if (exclude.count(sq.query.id) || used.count(sq.query.id)) continue;
    if (auto split = filler.wants(sq.query, sq.score.difficulty, sq.feasible)) {
      Query q = sq.query;
      q.difficulty = sq.score.difficulty;
      used.insert(q.id);
      filler.add(*split, std::move(q));
    }
  }
  if (!filler.complete()) throw ConfigError("insufficient query pool: " + join(filler.deficits(), "; "));
  return filler.filled();
}

DistillResult distill_cold_start(Policy& teacher, const std::vector<Query>& queries, Sandbox& sandbox,
                                 Verifier& verifier, const EpisodeLimits& limits, uint64_t seed, size_t max_keep) {
  DistillResult out;
  for (const Query& q : queries) {
    if (out.trajectories.size() >= max_keep) break;
    ++out.attempted;
    Rng rng = Rng::derive({seed, fnv1a(q.id)});
    SandboxEnvironment env(sandbox);
    Trajectory t = run_episode(teacher, env, q, limits, rng);
    if (verifier.joint_reward(q, t).r != 1) {
      ++out.rejected_reward;
      continue;
    }
    if (!validate_format(t, limits).ok) {
      ++out.rejected_format;
      continue;
    }
    out.trajectories.push_back(std::move(t));
    out.sources.push_back(&q);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Whole pipeline
// ---------------------------------------------------------------------------

json GenDataConfig::to_json() const {
  return json{{"space", space.to_json()},
              {"easy_threshold", thresholds.easy},
              {"medium_threshold", thresholds.medium},
              {"probe_epsilon", probe_epsilon},
              {"probe_k", probe_k},
              {"seed", seed},
              {"max_turns", limits.max_turns},
              {"max_total_segments", limits.max_total_segments},
              {"transfer_buffer_min", transfer_buffer_min},
              {"max_candidates", max_candidates}};
}

GenDataResult generate_data(Sandbox& sandbox, const std::vector<SplitSpec>& specs, const GenDataConfig& cfg,
                            const QueryOverrides& overrides) {
  GenDataResult out;
  const WorldState& world = sandbox.world();
  {
    std::set<std::string> names;
    for (const auto& s : specs)
      if (!names.insert(s.name).second) throw ConfigError("duplicate split name '" + s.name + "'");
  }
  if (cfg.probe_k < 1) throw ConfigError("probe_k must be at least 1");

  SplitFiller filler(specs);
  NoisyOraclePolicy probe(cfg.probe_epsilon, cfg.transfer_buffer_min);
  OraclePolicy teacher(cfg.transfer_buffer_min);
  RuleVerifier verifier(VerifierConfig{cfg.transfer_buffer_min, false, false});
  // Unconstrained queries are a small corner of the full product, so draws
  // alternate with the subspace that has every constraint slot absent.
  IntentSpace plain = base_intent_space();
  plain.cities = cfg.space.cities;
  plain.depart_offsets = cfg.space.depart_offsets;
  plain.trip_lengths = cfg.space.trip_lengths;
  const uint64_t total = specs.empty() ? 0 : intent_space_size(world, cfg.space);
  const uint64_t plain_total = specs.empty() ? 0 : intent_space_size(world, plain);
  const Radix radix = radix_of(world, cfg.space);
  const Radix plain_radix = radix_of(world, plain);
  Rng draw = Rng::derive({cfg.seed, 0x63616e64ull});
  std::set<std::string> seen;
  std::map<std::string, std::vector<Trajectory>> teachers;
  std::map<std::string, std::vector<Query>> teacher_queries;
  size_t drawn = 0;
  constexpr size_t kChunk = 128;

  while (!specs.empty() && !filler.complete() && drawn < cfg.max_candidates) {
    std::vector<Query> chunk;
    while (chunk.size() < kChunk && drawn < cfg.max_candidates) {
      const bool from_plain = drawn % 2 == 1 && filler.may_want(false);
      ++drawn;
      auto t = from_plain ? decode(world, plain, plain_radix, draw.below(plain_total))
                          : decode(world, cfg.space, radix, draw.below(total));
      if (!t) continue;
      Query q = synthesize_query(*t);
      if (!filler.may_want(q.constrained) || overrides.deny.count(q.id) || !seen.insert(q.id).second) continue;
      chunk.push_back(std::move(q));
    }
    std::vector<ScoredQuery> scored(chunk.size());
    parallel_for(chunk.size(), cfg.threads, [&](size_t i) {
      scored[i].query = chunk[i];
      scored[i].feasible = overrides.allow.count(chunk[i].id) ||
                           feasibility_witness(sandbox, chunk[i].intents, cfg.transfer_buffer_min).has_value();
      scored[i].score = score_difficulty(chunk[i], probe, cfg.probe_k, sandbox, verifier, cfg.limits,
                                         mix_seed({cfg.seed, 0x70726f6265ull}), cfg.thresholds);
    });
    for (auto& sq : scored) {
      if (filler.complete()) break;
      sq.query.difficulty = sq.score.difficulty;
      auto split = filler.wants(sq.query, sq.score.difficulty, sq.feasible);
      if (!split) continue;
      const SplitSpec& spec = specs[*split];
      if (spec.kind == SplitKind::ColdStart) {
        std::vector<Query> one{sq.query};
        DistillResult d = distill_cold_start(teacher, one, sandbox, verifier, cfg.limits, cfg.seed);
        if (d.trajectories.empty()) continue;
        teachers[spec.name].push_back(std::move(d.trajectories.front()));
        teacher_queries[spec.name].push_back(sq.query);
      }
      filler.add(*split, sq.query);
    }
  }
  if (!filler.complete()) throw ConfigError("insufficient query pool: " + join(filler.deficits(), "; "));

  for (const auto& s : specs) {
    if (s.kind == SplitKind::ColdStart) {
      out.teachers[s.name] = std::move(teachers[s.name]);
      out.teacher_queries[s.name] = std::move(teacher_queries[s.name]);
    } else {
      out.queries[s.name] = filler.filled().at(s.name);
    }
  }
  json files = json::object();
  for (const auto& s : specs) files[s.name] = {{"kind", std::string(split_kind_name(s.kind))}};
  json spec_j = json::array();
  for (const auto& s : specs)
    spec_j.push_back({{"name", s.name},
                      {"kind", std::string(split_kind_name(s.kind))},
                      {"easy", s.easy},
                      {"medium", s.medium},
                      {"hard", s.hard},
                      {"count", s.count}});
  const json config_j = cfg.to_json();
  out.manifest = json{{"format", "deeptravel-data-manifest"},
                      {"schema", 1},
                      {"world_seed", world.config.seed},
                      {"world_digest", world.digest()},
                      {"config", config_j},
                      {"config_digest", hex64(fnv1a(config_j.dump()))},
                      {"specs", spec_j},
                      {"candidates_drawn", drawn},
                      {"files", files}};
  return out;
}

namespace {

json difficulty_counts(const std::vector<Query>& qs) {
  json c{{"easy", 0}, {"medium", 0}, {"hard", 0}, {"unrated", 0}};
  for (const auto& q : qs) c[std::string(difficulty_name(q.difficulty))] = c[std::string(difficulty_name(q.difficulty))].get<int>() + 1;
  return c;
}

}  // namespace

void write_data(const GenDataResult& data, const std::string& dir) {
  std::filesystem::create_directories(dir);
  json manifest = data.manifest;
  for (const auto& [name, qs] : data.queries) {
    std::string content;
    for (const auto& q : qs) content += to_json(q).dump() + "\n";
    const std::string file = name + ".jsonl";
    write_file(dir + "/" + file, content);
    auto& entry = manifest["files"][name];
    entry["file"] = file;
    entry["count"] = qs.size();
    entry["digest"] = hex64(fnv1a(content));
    entry["difficulty"] = difficulty_counts(qs);
  }
  for (const auto& [name, ts] : data.teachers) {
    const auto& sources = data.teacher_queries.at(name);
    std::string content;
    for (size_t i = 0; i < ts.size(); ++i) content += to_json(ts[i], &sources[i]).dump() + "\n";
    const std::string file = name + ".jsonl";
    write_file(dir + "/" + file, content);
    auto& entry = manifest["files"][name];
    entry["file"] = file;
    entry["count"] = ts.size();
    entry["digest"] = hex64(fnv1a(content));
  }
  write_file(dir + "/manifest.json", manifest.dump(2) + "\n");
}

std::vector<std::string> verify_manifest(const std::string& dir) {
  std::vector<std::string> problems;
  json manifest;
  try {
    manifest = json::parse(read_file(dir + "/manifest.json"));
  } catch (const std::exception& e) {
    return {std::string("manifest unreadable: ") + e.what()};
  }
  if (manifest.value("format", "") != "deeptravel-data-manifest") problems.push_back("manifest has the wrong format tag");
  std::map<std::string, std::string> owner;
  const json files = manifest.value("files", json::object());
  for (const auto& [name, entry] : files.items()) {
    const std::string file = entry.value("file", "");
    std::string content;
    try {
      content = read_file(dir + "/" + file);
    } catch (const std::exception&) {
      problems.push_back(name + ": file " + file + " missing");
      continue;
    }
    if (hex64(fnv1a(content)) != entry.value("digest", "")) problems.push_back(name + ": digest mismatch");
    size_t lines = 0;
    std::vector<Query> qs;
    for (const auto& j : read_jsonl(dir + "/" + file)) {
      ++lines;
      const std::string id = j.contains("query_id") ? j.at("query_id").get<std::string>() : j.at("id").get<std::string>();
      auto [it, fresh] = owner.emplace(id, name);
      if (!fresh) problems.push_back("query " + id + " appears in both " + it->second + " and " + name);
      if (!j.contains("query_id")) qs.push_back(query_from_json(j));
    }
    if (lines != entry.value("count", size_t{0})) problems.push_back(name + ": record count differs from manifest");
    if (entry.contains("difficulty") && difficulty_counts(qs) != entry["difficulty"])
      problems.push_back(name + ": difficulty counts differ from manifest");
  }
  for (const auto& s : manifest.value("specs", json::array())) {
    const std::string name = s.value("name", "");
    if (!files.contains(name)) {
      problems.push_back(name + ": listed in specs but has no file");
      continue;
    }
    const auto& entry = files[name];
    const std::string kind = s.value("kind", "");
    if (kind == "constrained" || kind == "unconstrained") {
      const json& d = entry.value("difficulty", json::object());
      if (d.value("easy", -1) != s.value("easy", 0) || d.value("medium", -1) != s.value("medium", 0) ||
          d.value("hard", -1) != s.value("hard", 0))
        problems.push_back(name + ": difficulty counts differ from the requested split");
    } else if (entry.value("count", size_t{0}) != s.value("count", size_t{0})) {
      problems.push_back(name + ": count differs from the requested split");
    }
  }
  return problems;
}

std::vector<Query> read_queries(const std::string& path) {
  std::vector<Query> out;
  for (const auto& j : read_jsonl(path)) {
    try {
      out.push_back(query_from_json(j));
    } catch (const json::exception& e) {
      throw ConfigError(path + ": bad query record: " + e.what());
    }
  }
  return out;
}

void write_queries(const std::string& path, const std::vector<Query>& queries) {
  std::string content;
  for (const auto& q : queries) content += to_json(q).dump() + "\n";
  write_file(path, content);
}

std::vector<Trajectory> read_trajectories(const std::string& path, const EpisodeLimits& limits) {
  std::vector<Trajectory> out;
  for (const auto& j : read_jsonl(path)) {
    try {
      out.push_back(trajectory_from_json(j, limits));
    } catch (const json::exception& e) {
      throw ConfigError(path + ": bad trajectory record: " + e.what());
    }
  }
  return out;
}

}  // namespace deeptravel
