#include "deeptravel/policy.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <set>

namespace deeptravel {

using nlohmann::json;

namespace {

bool same_place(std::string_view a, std::string_view b) { return normalize_key(a) == normalize_key(b); }

uint32_t full_mask(Head h) { return (1u << head_arity(h)) - 1u; }

std::optional<TransportRecord> transport_from_json(const json& r) {
  if (!r.is_object()) return std::nullopt;
  try {
    TransportRecord t;
    t.id = r.at("id");
    auto m = mode_from_name(r.at("mode").get<std::string>());
    if (!m) return std::nullopt;
    t.mode = *m;
    t.origin = r.at("origin");
    t.destination = r.at("destination");
    t.date = Date::from_iso(r.at("date").get<std::string>());
    auto dep = parse_clock(r.at("depart").get<std::string>());
    auto arr = parse_clock(r.at("arrive").get<std::string>());
    if (!dep || !arr) return std::nullopt;
    t.depart = *dep;
    t.arrive = *arr;
    t.next_day = r.at("next_day");
    t.price = r.at("price");
    t.seats = r.at("seats");
    return t;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

/// 0 outbound, 1 return, -1 unrelated to this trip.
int direction(const TripIntents& q, const ToolCall& c) {
  const std::string from = c.get("depart_city").value_or(""), to = c.get("arrival_city").value_or("");
  const auto d = Date::parse(c.get("depart_date").value_or(""));
  if (!d) return -1;
  if (same_place(from, q.origin) && same_place(to, q.destination) && *d == q.depart) return 0;
  if (same_place(from, q.destination) && same_place(to, q.origin) && *d == q.return_day()) return 1;
  return -1;
}

Leg as_leg(const TransportRecord& r) { return leg_from_record(r); }

bool chains(const TransportRecord& out, const TransportRecord& ret, int buffer) {
  return as_leg(ret).depart_abs() >= as_leg(out).arrive_abs() + buffer;
}

template <class T, class Key>
const T* argmin(const std::vector<T>& xs, Key key, const std::function<bool(const T&)>& keep = nullptr) {
  const T* best = nullptr;
  for (const auto& x : xs) {
    if (keep && !keep(x)) continue;
    if (!best || key(x) < key(*best)) best = &x;
  }
  return best;
}

std::string leg_line(const TransportRecord& r) {
  return "- " + r.id + " " + std::string(mode_name(r.mode)) + " " + r.origin + " -> " + r.destination + ", departs " +
         format_clock(r.depart) + ", arrives " + format_clock(r.arrive) + (r.next_day ? " (+1 day)" : "") + ", " +
         format_cents(r.price);
}

std::string leg_line(const Leg& l) {
  return "- " + l.id + " " + std::string(mode_name(l.mode)) + " " + l.origin + " -> " + l.destination + ", departs " +
         format_clock(l.depart) + ", arrives " + format_clock(l.arrive) + (l.next_day ? " (+1 day)" : "") + ", " +
         format_cents(l.price);
}

}  // namespace

std::string_view kind_template_name(KindTemplate k) {
  switch (k) {
    case KindTemplate::CallFlight: return "CallFlight";
    case KindTemplate::CallTrain: return "CallTrain";
    case KindTemplate::CallHotel: return "CallHotel";
    case KindTemplate::CallRoute: return "CallRoute";
    case KindTemplate::CallPoi: return "CallPoi";
    case KindTemplate::CallWeb: return "CallWeb";
    case KindTemplate::EmitAnswer: return "EmitAnswer";
  }
  return "";
}

std::string_view selector_name(Selector s) {
  switch (s) {
    case Selector::Cheapest: return "cheapest";
    case Selector::Fastest: return "fastest";
    case Selector::PreferenceMatched: return "preference-matched";
    case Selector::FirstListed: return "first-listed";
  }
  return "";
}

// ---------------------------------------------------------------------------
// Candidate pools and answers
// ---------------------------------------------------------------------------

void add_to_pools(CandidatePools& pools, const TripIntents& q, const ToolCall& call, std::string_view text) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object() || j.value("status", "") != "ok" || !j.contains("results") ||
      !j["results"].is_array())
    return;
  const json& results = j["results"];
  const size_t n = std::min(results.size(), kPoolCap);
  switch (call.tool) {
    case ToolKind::Flight:
    case ToolKind::Train: {
      const int dir = direction(q, call);
      if (dir < 0) return;
      auto& pool = dir == 0 ? pools.outbound : pools.inbound;
      for (size_t i = 0; i < n; ++i) {
        auto r = transport_from_json(results[i]);
        if (!r || r->seats <= 0) continue;
        if (std::any_of(pool.begin(), pool.end(), [&](const TransportRecord& x) { return x.id == r->id; })) continue;
        pool.push_back(std::move(*r));
      }
      return;
    }
    case ToolKind::Hotel: {
      if (q.nights() <= 0 || !same_place(call.get("city_name").value_or(""), q.destination)) return;
      if (Date::parse(call.get("checkin_date").value_or("")) != q.depart ||
          Date::parse(call.get("checkout_date").value_or("")) != q.return_day())
        return;
      for (size_t i = 0; i < n; ++i) {
        const json& r = results[i];
        try {
          HotelOption h;
          h.id = r.at("id");
          h.name = r.at("name");
          h.city = r.at("city");
          h.total_price = r.at("total_price");
          h.tags = r.at("tags").get<std::vector<std::string>>();
          h.location = {r.at("lat").get<double>(), r.at("lon").get<double>()};
          if (std::any_of(pools.hotels.begin(), pools.hotels.end(), [&](const HotelOption& x) { return x.id == h.id; }))
            continue;
          pools.hotels.push_back(std::move(h));
        } catch (const std::exception&) {
        }
      }
      return;
    }
    case ToolKind::Poi: {
      if (!q.poi || !same_place(call.get("city_name").value_or(""), q.destination)) return;
      for (size_t i = 0; i < n; ++i) {
        const json& r = results[i];
        if (!r.is_object() || !r.contains("name") || !r["name"].is_string()) continue;
        const std::string name = r["name"];
        if (same_place(name, *q.poi) && std::find(pools.pois.begin(), pools.pois.end(), name) == pools.pois.end())
          pools.pois.push_back(name);
      }
      return;
    }
    case ToolKind::Route:
    case ToolKind::Web: return;
  }
}

CandidatePools collect_pools(const TripIntents& q, const std::vector<Observation>& observations) {
  CandidatePools pools;
  for (const auto& o : observations)
    if (o.call && o.response.ok) add_to_pools(pools, q, *o.call, o.response.text);
  return pools;
}

Itinerary assemble_itinerary(const TripIntents& q, const TransportRecord* out, const TransportRecord* ret,
                             const HotelOption* hotel, const std::vector<std::string>& pois, int buffer) {
  Itinerary it;
  if (out) it.outbound.push_back(as_leg(*out));
  if (ret) it.return_legs.push_back(as_leg(*ret));
  if (hotel && q.nights() > 0)
    it.hotel = HotelStay{hotel->id, hotel->name, hotel->city, q.depart, q.return_day(), hotel->total_price, hotel->tags};
  if (q.poi && !pois.empty()) {
    if (auto slot = place_visit(q, it, buffer)) it.daily_plan.push_back(DayPlan{slot->first, {Visit{slot->second, pois.front()}}});
  }
  it.total_cost = itinerary_cost(it).computed;
  return it;
}

std::optional<Itinerary> best_feasible_itinerary(const TripIntents& q, const CandidatePools& pools, int buffer) {
  const bool need_hotel = q.nights() > 0;
  if (pools.outbound.empty() || pools.inbound.empty() || (need_hotel && pools.hotels.empty())) return std::nullopt;
  std::vector<const HotelOption*> hotels;
  if (need_hotel)
    for (const auto& h : pools.hotels) hotels.push_back(&h);
  else
    hotels.push_back(nullptr);
  std::optional<Itinerary> best;
  for (const auto& o : pools.outbound) {
    for (const auto& r : pools.inbound) {
      if (!chains(o, r, buffer)) continue;
      for (const HotelOption* h : hotels) {
        const int64_t cost = o.price + r.price + (h ? h->total_price : 0);
        if (best && cost >= best->total_cost) continue;
        Itinerary it = assemble_itinerary(q, &o, &r, h, pools.pois, buffer);
        if (audit_itinerary(q, it, buffer).feasible()) best = std::move(it);
      }
    }
  }
  return best;
}

Itinerary select_itinerary(const TripIntents& q, const CandidatePools& pools, Selector sel, int buffer) {
  if (sel == Selector::PreferenceMatched) {
    if (auto best = best_feasible_itinerary(q, pools, buffer)) return *best;
    sel = Selector::Cheapest;
  }
  const TransportRecord* out = nullptr;
  const HotelOption* hotel = nullptr;
  auto price = [](const TransportRecord& r) { return r.price; };
  auto arrival = [](const TransportRecord& r) { return as_leg(r).arrive_abs(); };
  auto first = [](const TransportRecord&) { return 0; };
  std::function<bool(const TransportRecord&)> none;
  switch (sel) {
    case Selector::Cheapest:
      out = argmin(pools.outbound, price, none);
      hotel = argmin(pools.hotels, [](const HotelOption& h) { return h.total_price; },
                     std::function<bool(const HotelOption&)>());
      break;
    case Selector::Fastest: {
      out = argmin(pools.outbound, arrival, none);
      if (!pools.hotels.empty()) {
        Coordinate c{0, 0};
        for (const auto& h : pools.hotels) {
          c.lat += h.location.lat;
          c.lon += h.location.lon;
        }
        c.lat /= static_cast<double>(pools.hotels.size());
        c.lon /= static_cast<double>(pools.hotels.size());
        hotel = argmin(pools.hotels, [&](const HotelOption& h) { return haversine_m(h.location, c); },
                       std::function<bool(const HotelOption&)>());
      }
      break;
    }
    case Selector::FirstListed:
    case Selector::PreferenceMatched:
      out = pools.outbound.empty() ? nullptr : &pools.outbound.front();
      hotel = pools.hotels.empty() ? nullptr : &pools.hotels.front();
      break;
  }
  const TransportRecord* ret = nullptr;
  std::function<bool(const TransportRecord&)> valid = [&](const TransportRecord& r) {
    return !out || chains(*out, r, buffer);
  };
  switch (sel) {
    case Selector::Cheapest: ret = argmin(pools.inbound, price, valid); break;
    case Selector::Fastest: ret = argmin(pools.inbound, arrival, valid); break;
    default: ret = argmin(pools.inbound, first, valid); break;
  }
  if (!ret && !pools.inbound.empty()) ret = &pools.inbound.front();
  return assemble_itinerary(q, out, ret, hotel, pools.pois, buffer);
}

std::string render_answer(const TripIntents& q, const Itinerary& it, const CandidatePools& pools) {
  std::string s = "Based on your request, we have planned a trip from " + q.origin + " to " + q.destination +
                  " from " + q.depart.iso() + " to " + q.return_day().iso() +
                  ". The specific arrangements are as follows:\n\n";
  s += "### Departure recommendations (" + q.depart.iso() + ")\n";
  if (it.outbound.empty()) s += "- No suitable departure was found.\n";
  for (const auto& l : it.outbound) s += leg_line(l) + "\n";
  if (q.nights() > 0) {
    s += "### Hotel recommendations\n";
    if (it.hotel)
      s += "- " + it.hotel->name + ", " + std::to_string(q.nights()) + " night(s), total " +
           format_cents(it.hotel->total_price) + "\n";
    else
      s += "- No available hotel was found.\n";
  }
  s += "### Return recommendations (" + q.return_day().iso() + ")\n";
  if (it.return_legs.empty()) s += "- No suitable return was found.\n";
  for (const auto& l : it.return_legs) s += leg_line(l) + "\n";
  for (const auto& d : it.daily_plan)
    for (const auto& v : d.visits) s += "- Visit " + v.poi + " on " + d.date.iso() + " at " + format_clock(v.time) + "\n";
  s += "\n**Friendly Tips**:\n";
  int tip = 1;
  for (const auto& r : pools.outbound) {
    if (!it.outbound.empty() && r.id == it.outbound.front().id) continue;
    s += std::to_string(tip++) + ". Alternative departure:\n" + leg_line(r) + "\n";
    break;
  }
  s += std::to_string(tip) + ". Allow time for transfers between stations, airports and the hotel.\n\n";
  s += render_itinerary_block(it);
  return s;
}

// ---------------------------------------------------------------------------
// Features and binding
// ---------------------------------------------------------------------------

ObservationStatus observation_status(const ToolResponse& r) {
  if (!r.ok) return ObservationStatus::Error;
  return r.result_count == 0 ? ObservationStatus::Empty : ObservationStatus::Ok;
}

int kind_bucket(const TripIntents& q, const CandidatePools& pools, const std::vector<Observation>& observations) {
  const int bits = (pools.outbound.empty() ? 1 : 0) | (pools.inbound.empty() ? 2 : 0) |
                   (q.nights() > 0 && pools.hotels.empty() ? 4 : 0) | (q.poi && pools.pois.empty() ? 8 : 0);
  const int mode = !q.mode ? 0 : (*q.mode == TransportMode::Flight ? 1 : 2);
  int last = 0;
  if (!observations.empty()) last = observation_status(observations.back().response) == ObservationStatus::Ok ? 1 : 2;
  return (bits * 3 + mode) * 3 + last;
}

int selector_bucket(const TripIntents& q) {
  const int mode = !q.mode ? 0 : (*q.mode == TransportMode::Flight ? 1 : 2);
  return (((q.budget ? 1 : 0) * 2 + (q.arrival_deadline ? 1 : 0)) * 2 + (q.hotel_preference ? 1 : 0)) * 3 + mode;
}

DecisionContext analyze(const EpisodeState& state, int) {
  if (!state.query) throw ContractError("episode state without a query");
  DecisionContext ctx;
  ctx.query = state.query;
  ctx.state = &state;
  const TripIntents& q = state.query->intents;
  ctx.pools = collect_pools(q, state.observations);
  for (const auto& o : state.observations) {
    if (!o.call) continue;
    switch (o.call->tool) {
      case ToolKind::Flight:
      case ToolKind::Train: {
        const int dir = direction(q, *o.call);
        if (dir >= 0) ctx.searched[o.call->tool == ToolKind::Flight ? 0 : 1][static_cast<size_t>(dir)] = true;
        break;
      }
      case ToolKind::Hotel: ctx.hotel_searched = true; break;
      case ToolKind::Poi: ctx.poi_searched = true; break;
      default: break;
    }
  }
  ctx.kind_bucket = kind_bucket(q, ctx.pools, state.observations);
  ctx.selector_bucket = selector_bucket(q);
  return ctx;
}

ToolCall bind_call(KindTemplate k, const DecisionContext& ctx) {
  const TripIntents& q = ctx.query->intents;
  switch (k) {
    case KindTemplate::CallFlight:
    case KindTemplate::CallTrain: {
      const size_t m = k == KindTemplate::CallFlight ? 0 : 1;
      const auto& done = ctx.searched[m];
      const bool out_missing = ctx.pools.outbound.empty(), ret_missing = ctx.pools.inbound.empty();
      int dir;
      if (out_missing && !done[0]) dir = 0;
      else if (ret_missing && !done[1]) dir = 1;
      else if (!done[0]) dir = 0;
      else if (!done[1]) dir = 1;
      else dir = !out_missing && ret_missing ? 1 : 0;
      const ToolKind tool = m == 0 ? ToolKind::Flight : ToolKind::Train;
      if (dir == 0)
        return make_call(tool, {{"depart_city", q.origin}, {"arrival_city", q.destination}, {"depart_date", q.depart.iso()}});
      return make_call(tool,
                       {{"depart_city", q.destination}, {"arrival_city", q.origin}, {"depart_date", q.return_day().iso()}});
    }
    case KindTemplate::CallHotel:
      return make_call(ToolKind::Hotel, {{"city_name", q.destination},
                                         {"checkin_date", q.depart.iso()},
                                         {"checkout_date", q.return_day().iso()}});
    case KindTemplate::CallRoute: {
      const bool by_train = !ctx.pools.outbound.empty() ? ctx.pools.outbound.front().mode == TransportMode::Train
                                                        : q.mode == TransportMode::Train;
      const std::string hub = q.destination + (by_train ? " Railway Station" : " Airport");
      const std::string target = q.poi ? *q.poi : q.destination + (by_train ? " Airport" : " Railway Station");
      return make_call(ToolKind::Route, {{"origin", hub}, {"destination", target}, {"city_name", q.destination}});
    }
    case KindTemplate::CallPoi:
      return make_call(ToolKind::Poi, {{"query", q.poi.value_or("")}, {"city_name", q.destination}});
    case KindTemplate::CallWeb:
      return make_call(ToolKind::Web, {{"query", "Introduction to " + q.destination}});
    case KindTemplate::EmitAnswer: break;
  }
  throw ContractError("EmitAnswer has no tool call");
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

size_t PolicyParams::offset(Head h) {
  size_t off = 0;
  for (Head x : {Head::Kind, Head::Selector, Head::Observation}) {
    if (x == h) return off;
    off += static_cast<size_t>(head_buckets(x) * head_arity(x));
  }
  return off;
}

size_t PolicyParams::size() { return offset(Head::Observation) + static_cast<size_t>(head_buckets(Head::Observation) * head_arity(Head::Observation)); }

size_t PolicyParams::index(Head h, int bucket, int choice) {
  if (bucket < 0 || bucket >= head_buckets(h) || choice < 0 || choice >= head_arity(h))
    throw ContractError("policy parameter index out of range");
  return offset(h) + static_cast<size_t>(bucket * head_arity(h) + choice);
}

PolicyParams PolicyParams::zeros() {
  PolicyParams p;
  p.theta.assign(size(), 0.0);
  return p;
}

json PolicyParams::to_json() const {
  json j{{"format", "deeptravel-params"}, {"schema", 1}, {"version", version}};
  for (Head h : {Head::Kind, Head::Selector, Head::Observation}) {
    json rows = json::array();
    for (int b = 0; b < head_buckets(h); ++b) {
      json row = json::array();
      for (int c = 0; c < head_arity(h); ++c) row.push_back(at(h, b, c));
      rows.push_back(std::move(row));
    }
    j[std::string(head_name(h))] = std::move(rows);
  }
  return j;
}

PolicyParams PolicyParams::from_json(const json& j) {
  if (j.value("format", "") != "deeptravel-params") throw ConfigError("not a params file");
  if (j.value("schema", 0) != 1) throw ConfigError("unsupported params schema");
  PolicyParams p = zeros();
  p.version = j.value("version", int64_t{0});
  for (Head h : {Head::Kind, Head::Selector, Head::Observation}) {
    const json& rows = j.at(std::string(head_name(h)));
    if (!rows.is_array() || rows.size() != static_cast<size_t>(head_buckets(h)))
      throw ConfigError("params head " + std::string(head_name(h)) + " has the wrong shape");
    for (int b = 0; b < head_buckets(h); ++b) {
      const json& row = rows[static_cast<size_t>(b)];
      if (!row.is_array() || row.size() != static_cast<size_t>(head_arity(h)))
        throw ConfigError("params head " + std::string(head_name(h)) + " has the wrong shape");
      for (int c = 0; c < head_arity(h); ++c) {
        const double v = row[static_cast<size_t>(c)].get<double>();
        if (!std::isfinite(v)) throw ConfigError("non-finite parameter");
        p.at(h, b, c) = v;
      }
    }
  }
  return p;
}

std::vector<double> bucket_probs(const PolicyParams& p, Head h, int bucket, uint32_t valid) {
  const int k = head_arity(h);
  valid &= full_mask(h);
  std::vector<double> probs(static_cast<size_t>(k), 0.0);
  if (!valid) return probs;
  const bool known = bucket >= 0 && bucket < head_buckets(h);
  double m = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < k; ++c)
    if (valid >> c & 1u) m = std::max(m, known ? p.at(h, bucket, c) : 0.0);
  double z = 0;
  for (int c = 0; c < k; ++c) {
    if (!(valid >> c & 1u)) continue;
    probs[static_cast<size_t>(c)] = std::exp((known ? p.at(h, bucket, c) : 0.0) - m);
    z += probs[static_cast<size_t>(c)];
  }
  for (auto& x : probs) x /= z;
  return probs;
}

double decision_log_prob(const PolicyParams& p, const DecisionRecord& d) {
  const uint32_t valid = d.valid & full_mask(d.head);
  if (!(valid >> d.choice & 1u)) throw ContractError("decision chose an invalid template");
  if (d.bucket < 0 || d.bucket >= head_buckets(d.head)) return -std::log(static_cast<double>(std::popcount(valid)));
  double m = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < head_arity(d.head); ++c)
    if (valid >> c & 1u) m = std::max(m, p.at(d.head, d.bucket, c));
  double z = 0;
  for (int c = 0; c < head_arity(d.head); ++c)
    if (valid >> c & 1u) z += std::exp(p.at(d.head, d.bucket, c) - m);
  return p.at(d.head, d.bucket, d.choice) - m - std::log(z);
}

DecisionRecord sample_decision(const PolicyParams& p, Head h, int bucket, uint32_t valid, Rng& rng, bool greedy) {
  DecisionRecord d;
  d.head = h;
  d.bucket = bucket;
  d.valid = valid & full_mask(h);
  if (!d.valid) {
    // Nothing available: fall back to answering with the first-listed selector.
    d.valid = full_mask(h);
    d.choice = h == Head::Kind ? static_cast<int>(KindTemplate::EmitAnswer)
                               : (h == Head::Selector ? static_cast<int>(Selector::FirstListed) : 0);
    d.log_prob = 0.0;
    d.masked = true;
    return d;
  }
  const auto probs = bucket_probs(p, h, bucket, d.valid);
  int choice = -1;
  if (greedy) {
    for (int c = 0; c < head_arity(h); ++c)
      if ((d.valid >> c & 1u) && (choice < 0 || probs[static_cast<size_t>(c)] > probs[static_cast<size_t>(choice)]))
        choice = c;
  } else {
    const double u = rng.uniform();
    double cum = 0;
    for (int c = 0; c < head_arity(h); ++c) {
      if (!(d.valid >> c & 1u)) continue;
      choice = c;
      cum += probs[static_cast<size_t>(c)];
      if (u < cum) break;
    }
  }
  d.choice = choice;
  d.log_prob = decision_log_prob(p, d);
  return d;
}

double trajectory_log_prob(const PolicyParams& p, const Trajectory& t) {
  double s = 0;
  for (const auto& d : t.decisions)
    if (!d.masked) s += decision_log_prob(p, d);
  return s;
}

void accumulate_log_prob_grad(const PolicyParams& p, const Trajectory& t, double scale, std::vector<double>& grad) {
  if (grad.size() != p.theta.size()) throw ContractError("gradient buffer has the wrong size");
  for (const auto& d : t.decisions) {
    if (d.masked || d.bucket < 0 || d.bucket >= head_buckets(d.head)) continue;
    const auto probs = bucket_probs(p, d.head, d.bucket, d.valid);
    for (int c = 0; c < head_arity(d.head); ++c) {
      if (!(d.valid >> c & 1u)) continue;
      grad[PolicyParams::index(d.head, d.bucket, c)] += scale * ((c == d.choice ? 1.0 : 0.0) - probs[static_cast<size_t>(c)]);
    }
  }
}

double bucket_entropy(const PolicyParams& p, Head h, int bucket) {
  double e = 0;
  for (double x : bucket_probs(p, h, bucket, full_mask(h)))
    if (x > 0) e -= x * std::log(x);
  return e;
}

double policy_entropy(const PolicyParams& p, const std::vector<BucketKey>& buckets) {
  if (buckets.empty()) return 0.0;
  double s = 0;
  for (const auto& [h, b] : buckets) s += bucket_entropy(p, h, b);
  return s / static_cast<double>(buckets.size());
}

std::vector<BucketKey> visited_buckets(const std::vector<const Trajectory*>& ts) {
  std::set<BucketKey> seen;
  for (const Trajectory* t : ts)
    for (const auto& d : t->decisions)
      if (!d.masked) seen.insert({d.head, d.bucket});
  return {seen.begin(), seen.end()};
}

CloneResult behavior_clone(const PolicyParams& init, const std::vector<Trajectory>& teacher, int epochs, double lr) {
  CloneResult r{init, {}};
  if (teacher.empty()) {
    std::cerr << "warning: behavior cloning on an empty dataset leaves the parameters unchanged\n";
    return r;
  }
  const double inv = 1.0 / static_cast<double>(teacher.size());
  auto loss = [&](const PolicyParams& p) {
    double s = 0;
    for (const auto& t : teacher) s -= trajectory_log_prob(p, t);
    return s * inv;
  };
  for (int e = 0; e < epochs; ++e) {
    r.losses.push_back(loss(r.params));
    if (lr == 0.0) continue;
    std::vector<double> grad(r.params.theta.size(), 0.0);
    for (const auto& t : teacher) accumulate_log_prob_grad(r.params, t, inv, grad);
    for (size_t i = 0; i < grad.size(); ++i) r.params.theta[i] += lr * grad[i];
    ++r.params.version;
  }
  r.losses.push_back(loss(r.params));
  return r;
}

double top1_agreement(const PolicyParams& p, const std::vector<Trajectory>& teacher) {
  size_t hit = 0, total = 0;
  for (const auto& t : teacher) {
    for (const auto& d : t.decisions) {
      if (d.masked) continue;
      const auto probs = bucket_probs(p, d.head, d.bucket, d.valid);
      int best = -1;
      for (int c = 0; c < head_arity(d.head); ++c)
        if ((d.valid >> c & 1u) && (best < 0 || probs[static_cast<size_t>(c)] > probs[static_cast<size_t>(best)])) best = c;
      ++total;
      if (best == d.choice) ++hit;
    }
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

// ---------------------------------------------------------------------------
// Policies
// ---------------------------------------------------------------------------

namespace {

std::string reflect(const Observation& o) {
  const std::string tool = o.call ? std::string(tool_name(o.call->tool)) : std::string("the call");
  const json j = json::parse(o.response.text, nullptr, false);
  if (!o.response.ok) {
    std::string why = !j.is_discarded() && j.is_object() ? j.value("error", "unknown error") : "unknown error";
    return tool + " failed: " + why + ".";
  }
  if (o.response.result_count == 0) return tool + " returned no results.";
  return tool + " returned " + std::to_string(o.response.result_count) + " result(s).";
}

std::string intent_summary(const TripIntents& q) {
  std::string s = "The user wants a trip from " + q.origin + " to " + q.destination + " departing " + q.depart.iso();
  if (q.return_day() != q.depart) s += " and returning " + q.return_day().iso();
  s += ".";
  std::vector<std::string> c;
  if (q.budget) c.push_back("budget " + format_cents(*q.budget));
  if (q.arrival_deadline) c.push_back("arrive before " + format_clock(*q.arrival_deadline));
  if (q.hotel_preference) c.push_back(*q.hotel_preference + " hotel");
  if (q.mode) c.push_back("travel by " + std::string(mode_name(*q.mode)));
  if (q.poi) c.push_back("visit " + *q.poi);
  if (!c.empty()) s += " Constraints: " + join(c, ", ") + ".";
  return s + " ";
}

std::string call_thought(KindTemplate k, const ToolCall& call) {
  switch (k) {
    case KindTemplate::CallFlight:
    case KindTemplate::CallTrain:
      return std::string("Search ") + (k == KindTemplate::CallFlight ? "flights" : "trains") + " from " +
             call.get("depart_city").value_or("") + " to " + call.get("arrival_city").value_or("") + " on " +
             call.get("depart_date").value_or("") + ".";
    case KindTemplate::CallHotel:
      return "Look for hotels in " + call.get("city_name").value_or("") + " for the stay.";
    case KindTemplate::CallRoute: return "Check the transfer from the arrival hub.";
    case KindTemplate::CallPoi: return "Locate the place the user wants to visit.";
    case KindTemplate::CallWeb: return "Read background information about the destination.";
    case KindTemplate::EmitAnswer: break;
  }
  return "";
}

}  // namespace

Action TemplatePolicy::act(const EpisodeState& state, Rng& rng) {
  const DecisionContext ctx = analyze(state, buffer_);
  const TripIntents& q = ctx.query->intents;
  Action a;
  if (!state.observations.empty()) a.reflection = reflect(state.observations.back());
  const DecisionRecord kd = choose_kind(ctx, rng);
  a.decisions.push_back(kd);
  const auto kind = static_cast<KindTemplate>(kd.choice);
  const std::string prefix = state.segments.empty() ? intent_summary(q) : std::string();
  if (kind == KindTemplate::EmitAnswer) {
    const DecisionRecord sd = choose_selector(ctx, rng);
    a.decisions.push_back(sd);
    const auto sel = static_cast<Selector>(sd.choice);
    const Itinerary it = select_itinerary(q, ctx.pools, sel, buffer_);
    a.answer = true;
    a.thought = prefix + "Compose the plan from the " + std::string(selector_name(sel)) + " options.";
    a.body = render_answer(q, it, ctx.pools);
  } else {
    const ToolCall call = bind_call(kind, ctx);
    a.thought = prefix + call_thought(kind, call);
    a.body = call.render();
  }
  return a;
}

std::vector<DecisionRecord> TemplatePolicy::observe(const EpisodeState&, const Observation& obs) {
  DecisionRecord d;
  d.head = Head::Observation;
  d.bucket = static_cast<int>(obs.call ? obs.call->tool : obs.response.tool);
  d.choice = static_cast<int>(observation_status(obs.response));
  d.valid = full_mask(Head::Observation);
  d.masked = true;
  d.log_prob = observation_log_prob(d);
  return {d};
}

KindTemplate OraclePolicy::plan(const DecisionContext& ctx) const {
  const TripIntents& q = ctx.query->intents;
  const EpisodeState& st = *ctx.state;
  if (st.tool_calls >= st.limits.max_turns) return KindTemplate::EmitAnswer;
  const TransportMode pref = q.mode.value_or(TransportMode::Flight);
  const TransportMode other = pref == TransportMode::Flight ? TransportMode::Train : TransportMode::Flight;
  auto call = [](TransportMode m) {
    return m == TransportMode::Flight ? KindTemplate::CallFlight : KindTemplate::CallTrain;
  };
  auto searched = [&](TransportMode m, int dir) {
    return ctx.searched[m == TransportMode::Flight ? 0 : 1][static_cast<size_t>(dir)];
  };
  for (int dir = 0; dir < 2; ++dir) {
    const bool missing = dir == 0 ? ctx.pools.outbound.empty() : ctx.pools.inbound.empty();
    if (!missing) continue;
    if (!searched(pref, dir)) return call(pref);
    if (!searched(other, dir)) return call(other);
  }
  if (q.nights() > 0 && ctx.pools.hotels.empty() && !ctx.hotel_searched) return KindTemplate::CallHotel;
  if (q.poi && ctx.pools.pois.empty() && !ctx.poi_searched) return KindTemplate::CallPoi;
  const Itinerary it = select_itinerary(q, ctx.pools, plan_selector(ctx), buffer());
  if (audit_itinerary(q, it, buffer()).feasible()) return KindTemplate::EmitAnswer;
  for (TransportMode m : {other, pref})
    for (int dir = 0; dir < 2; ++dir)
      if (!searched(m, dir)) return call(m);
  return KindTemplate::EmitAnswer;
}

Selector OraclePolicy::plan_selector(const DecisionContext& ctx) const {
  if (ctx.query->constrained) return Selector::PreferenceMatched;
  const TripIntents& q = ctx.query->intents;
  if (audit_itinerary(q, select_itinerary(q, ctx.pools, Selector::Cheapest, buffer()), buffer()).feasible())
    return Selector::Cheapest;
  return Selector::PreferenceMatched;
}

DecisionRecord OraclePolicy::choose_kind(const DecisionContext& ctx, Rng&) {
  DecisionRecord d;
  d.head = Head::Kind;
  d.bucket = ctx.kind_bucket;
  d.choice = static_cast<int>(plan(ctx));
  d.valid = full_mask(Head::Kind);
  return d;
}

DecisionRecord OraclePolicy::choose_selector(const DecisionContext& ctx, Rng&) {
  DecisionRecord d;
  d.head = Head::Selector;
  d.bucket = ctx.selector_bucket;
  d.choice = static_cast<int>(plan_selector(ctx));
  d.valid = full_mask(Head::Selector);
  return d;
}

NoisyOraclePolicy::NoisyOraclePolicy(double epsilon, int transfer_buffer_min)
    : OraclePolicy(transfer_buffer_min), epsilon_(epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("probe epsilon must lie in [0,1]");
}

DecisionRecord NoisyOraclePolicy::choose_kind(const DecisionContext& ctx, Rng& rng) {
  DecisionRecord d = OraclePolicy::choose_kind(ctx, rng);
  if (rng.uniform() < epsilon_) d.choice = static_cast<int>(rng.below(static_cast<uint64_t>(head_arity(Head::Kind))));
  return d;
}

DecisionRecord NoisyOraclePolicy::choose_selector(const DecisionContext& ctx, Rng& rng) {
  DecisionRecord d = OraclePolicy::choose_selector(ctx, rng);
  if (rng.uniform() < epsilon_)
    d.choice = static_cast<int>(rng.below(static_cast<uint64_t>(head_arity(Head::Selector))));
  return d;
}

DecisionRecord SoftmaxPolicy::choose_kind(const DecisionContext& ctx, Rng& rng) {
  return sample_decision(params_, Head::Kind, ctx.kind_bucket, full_mask(Head::Kind), rng, greedy_);
}

DecisionRecord SoftmaxPolicy::choose_selector(const DecisionContext& ctx, Rng& rng) {
  return sample_decision(params_, Head::Selector, ctx.selector_bucket, full_mask(Head::Selector), rng, greedy_);
}

}  // namespace deeptravel
