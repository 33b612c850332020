#include "deeptravel/sandbox.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <set>
#include <sstream>

#include "json.hpp"

namespace deeptravel {

using nlohmann::json;

namespace {

struct CitySeed {
  const char* name;
  double lat;
  double lon;
  std::vector<const char*> attractions;
};

const std::vector<CitySeed>& city_table() {
  static const std::vector<CitySeed> table = {
      {"Beijing", 39.9042, 116.4074,
       {"National Palace Museum", "The Great Wall", "Temple of Heaven", "Summer Palace", "Tiananmen Square"}},
      {"Shanghai", 31.2304, 121.4737, {"The Bund", "Yu Garden", "Oriental Pearl Tower", "Shanghai Museum"}},
      {"Suzhou", 31.2989, 120.5853, {"Humble Administrator's Garden", "Tiger Hill", "Pingjiang Road"}},
      {"Wuhan", 30.5928, 114.3055,
       {"Wuhan Conference Center", "Yellow Crane Tower", "East Lake", "Hankou Riverside Park"}},
      {"Guangzhou", 23.1291, 113.2644, {"Canton Tower", "Chen Clan Ancestral Hall", "Shamian Island"}},
      {"Shenzhen", 22.5431, 114.0579, {"Window of the World", "OCT Harbour", "Lianhuashan Park"}},
      {"Chengdu", 30.5728, 104.0668, {"Giant Panda Base", "Jinli Street", "Wuhou Shrine"}},
      {"Hangzhou", 30.2741, 120.1551, {"West Lake", "Lingyin Temple", "Hefang Street"}},
      {"Xi'an", 34.3416, 108.9398, {"Terracotta Army", "Big Wild Goose Pagoda", "Xi'an City Wall"}},
      {"Nanjing", 32.0603, 118.7969, {"Sun Yat-sen Mausoleum", "Confucius Temple", "Xuanwu Lake"}},
      {"Chongqing", 29.4316, 106.9123, {"Hongya Cave", "Ciqikou Old Town", "Jiefangbei"}},
      {"Tianjin", 39.3434, 117.3616, {"Tianjin Eye", "Italian Style Town", "Ancient Culture Street"}},
      {"Changsha", 28.2282, 112.9388, {"Orange Isle", "Yuelu Mountain", "Hunan Museum"}},
      {"Xiamen", 24.4798, 118.0894, {"Gulangyu Island", "Nanputuo Temple", "Zengcuoan"}},
      {"Qingdao", 36.0671, 120.3826, {"Zhanqiao Pier", "Badaguan", "Laoshan"}},
      {"Kunming", 25.0389, 102.7183, {"Green Lake Park", "Stone Forest", "Dianchi Lake"}},
  };
  return table;
}

const std::vector<const char*> kBrands = {"Hanting", "Jinjiang Inn", "Hilton", "Marriott", "Holiday Inn", "Ji Hotel",
                                          "Orange Hotel", "Vienna Hotel", "Novotel", "Crowne Plaza", "Home Inn"};
const std::vector<const char*> kDistricts = {"Riverside", "Central", "Station", "Old Town",
                                            "Lakeside", "Financial District", "University", "Airport"};
const std::vector<const char*> kExtraTags = {"business", "family", "quiet", "breakfast"};
const std::vector<const char*> kAirlines = {"CA", "MU", "CZ", "HU", "3U", "ZH", "FM", "MF"};

uint64_t tag(std::string_view s) { return fnv1a(s); }

std::vector<std::string> district_tags(std::string_view district) {
  if (district == "Riverside" || district == "Lakeside") return {"riverside"};
  if (district == "Station") return {"near-station"};
  if (district == "Central" || district == "Financial District") return {"city-center"};
  return {};
}

std::vector<std::string> tokenize_terms(std::string_view text) {
  static const std::set<std::string> stop = {"to", "the", "of", "in", "a", "an", "and", "for", "on", "at", "s"};
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty() && !stop.count(cur)) out.push_back(cur);
    cur.clear();
  };
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c)))
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    else
      flush();
  }
  flush();
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

int round5(double minutes) { return static_cast<int>(std::lround(minutes / 5.0)) * 5; }

int64_t round_price(double cents) { return std::max<int64_t>(100, std::llround(cents / 100.0) * 100); }

void apply_epoch(WorldState& w) {
  const auto& c = w.config;
  auto redraw = [&](std::map<RouteKey, std::vector<TransportRecord>>& table) {
    for (auto& [key, recs] : table) {
      for (auto& r : recs) {
        Rng rng = Rng::derive({c.seed, static_cast<uint64_t>(w.epoch), tag(r.id)});
        const bool fl = r.mode == TransportMode::Flight;
        r.price = round_price(rng.log_uniform(static_cast<double>(fl ? c.flight_price_min : c.train_price_min),
                                              static_cast<double>(fl ? c.flight_price_max : c.train_price_max)));
        r.seats = rng.bernoulli(c.sold_out_prob) ? 0 : rng.range(1, 30);
      }
    }
  };
  redraw(w.flights);
  redraw(w.trains);
  for (auto& [city, list] : w.hotels) {
    for (auto& h : list) {
      Rng rng = Rng::derive({c.seed, static_cast<uint64_t>(w.epoch), tag(h.id)});
      h.nightly_price = round_price(
          rng.log_uniform(static_cast<double>(c.hotel_price_min), static_cast<double>(c.hotel_price_max)));
      h.rooms.assign(static_cast<size_t>(c.horizon_days), 0);
      for (auto& r : h.rooms) r = rng.bernoulli(c.sold_out_prob) ? 0 : rng.range(1, 20);
    }
  }
}

json transport_json(const TransportRecord& r) {
  return json{{"id", r.id},
              {"mode", std::string(mode_name(r.mode))},
              {"origin", r.origin},
              {"destination", r.destination},
              {"date", r.date.iso()},
              {"depart", format_clock(r.depart)},
              {"arrive", format_clock(r.arrive)},
              {"next_day", r.next_day},
              {"price", r.price},
              {"seats", r.seats}};
}

ToolResponse ok_response(ToolKind tool, json results) {
  ToolResponse resp;
  resp.tool = tool;
  resp.ok = true;
  resp.result_count = results.size();
  resp.text = json{{"tool", std::string(tool_name(tool))}, {"status", "ok"}, {"results", std::move(results)}}.dump();
  return resp;
}

ToolResponse response_from_text(ToolKind tool, std::string text) {
  ToolResponse resp;
  resp.tool = tool;
  const json j = json::parse(text);
  resp.ok = j.value("status", "") == "ok";
  resp.result_count = resp.ok ? j.at("results").size() : 0;
  resp.text = std::move(text);
  return resp;
}

int64_t drifted(int64_t price, uint64_t drift, const std::string& id) {
  if (drift == 0) return price;
  Rng rng = Rng::derive({drift, tag(id)});
  return round_price(static_cast<double>(price) * (0.9 + 0.2 * rng.uniform()));
}

const PoiRecord* resolve_poi(const std::vector<PoiRecord>& pois, std::string_view name) {
  const std::string key = normalize_key(name);
  if (key.empty()) return nullptr;
  for (const auto& p : pois)
    if (casefold(p.name) == key) return &p;
  const PoiRecord* hit = nullptr;
  for (const auto& p : pois) {
    if (contains_folded(p.name, key)) {
      if (hit) return nullptr;  // ambiguous
      hit = &p;
    }
  }
  return hit;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tool metadata
// ---------------------------------------------------------------------------

std::string_view tool_name(ToolKind kind) {
  switch (kind) {
    case ToolKind::Flight: return "flight_search";
    case ToolKind::Train: return "train_search";
    case ToolKind::Route: return "route_planning";
    case ToolKind::Hotel: return "hotel_search";
    case ToolKind::Poi: return "poi_search";
    case ToolKind::Web: return "web_search";
  }
  return "web_search";
}

std::optional<ToolKind> tool_from_name(std::string_view name) {
  for (int i = 0; i < kToolCount; ++i) {
    auto k = static_cast<ToolKind>(i);
    if (tool_name(k) == name) return k;
  }
  return std::nullopt;
}

const ToolSignature& tool_signature(ToolKind kind) {
  static const std::array<ToolSignature, kToolCount> sigs = {{
      {ToolKind::Flight,
       {"depart_city", "arrival_city", "depart_date"},
       {},
       true,
       {{"depart_city_name", "depart_city"}, {"arrival_city_name", "arrival_city"}}},
      {ToolKind::Train,
       {"depart_city", "arrival_city", "depart_date"},
       {},
       true,
       {{"depart_city_name", "depart_city"},
        {"arrival_city_name", "arrival_city"},
        {"depart_station", "depart_city"},
        {"arrive_station", "arrival_city"},
        {"arrival_station", "arrival_city"}}},
      {ToolKind::Route,
       {"origin", "destination", "city_name"},
       {},
       false,
       {{"origin_name", "origin"}, {"destination_name", "destination"}}},
      {ToolKind::Hotel, {"city_name", "checkin_date", "checkout_date"}, {"hotel_name"}, true, {}},
      {ToolKind::Poi, {"query", "city_name"}, {}, true, {}},
      {ToolKind::Web, {"query"}, {}, false, {}},
  }};
  return sigs[static_cast<size_t>(kind)];
}

std::optional<std::string> ToolCall::get(std::string_view key) const {
  for (const auto& [k, v] : args)
    if (k == key) return v;
  return std::nullopt;
}

std::string ToolCall::cache_key() const {
  std::string key(tool_name(tool));
  key += '|';
  for (size_t i = 0; i < args.size(); ++i) {
    if (i) key += ';';
    key += args[i].first + '=' + normalize_key(args[i].second);
  }
  return key;
}

namespace {
std::string quote(std::string_view v) {
  std::string out = "\"";
  for (char c : v) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + '"';
}
}  // namespace

std::string ToolCall::render() const {
  std::string out(tool_name(tool));
  out += '(';
  bool first = true;
  for (const auto& [k, v] : args) {
    if (!first) out += ", ";
    first = false;
    out += k + '=' + quote(v);
  }
  for (const auto& [k, v] : extras) {
    if (!first) out += ", ";
    first = false;
    out += k + '=' + quote(v);
  }
  return out + ')';
}

ToolCall make_call(ToolKind tool, std::vector<std::pair<std::string, std::string>> args) {
  ToolCall c;
  c.tool = tool;
  const auto& sig = tool_signature(tool);
  for (const auto& name : sig.required)
    for (auto& [k, v] : args)
      if (k == name) c.args.emplace_back(k, v);
  for (const auto& name : sig.optional)
    for (auto& [k, v] : args)
      if (k == name) c.args.emplace_back(k, v);
  return c;
}

ToolResponse error_response(ToolKind tool, std::string_view message, bool transient) {
  ToolResponse resp;
  resp.tool = tool;
  resp.ok = false;
  resp.transient = transient;
  resp.text =
      json{{"tool", std::string(tool_name(tool))}, {"status", "error"}, {"error", std::string(message)}}.dump();
  return resp;
}

// ---------------------------------------------------------------------------
// World
// ---------------------------------------------------------------------------

double haversine_m(Coordinate a, Coordinate b) {
  constexpr double kEarthRadius = 6371000.0;
  constexpr double rad = std::numbers::pi / 180.0;
  const double dlat = (b.lat - a.lat) * rad;
  const double dlon = (b.lon - a.lon) * rad;
  const double h = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(a.lat * rad) * std::cos(b.lat * rad) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2 * kEarthRadius * std::asin(std::min(1.0, std::sqrt(h)));
}

std::string_view mode_name(TransportMode m) { return m == TransportMode::Flight ? "flight" : "train"; }

std::optional<TransportMode> mode_from_name(std::string_view s) {
  const std::string k = normalize_key(s);
  if (k == "flight") return TransportMode::Flight;
  if (k == "train") return TransportMode::Train;
  return std::nullopt;
}

void WorldConfig::validate() const {
  if (city_count < 2) throw ConfigError("city_count must be at least 2");
  if (horizon_days < 1) throw ConfigError("date horizon is empty");
  if (!Date::parse(start_date)) throw ConfigError("start_date is not an ISO date");
  if (min_options < 1 || max_options < min_options) throw ConfigError("invalid transport option range");
  if (min_hotels < 1 || max_hotels < min_hotels) throw ConfigError("invalid hotel count range");
  if (flight_price_min <= 0 || flight_price_max < flight_price_min || train_price_min <= 0 ||
      train_price_max < train_price_min || hotel_price_min <= 0 || hotel_price_max < hotel_price_min)
    throw ConfigError("invalid price range");
  if (flight_link_prob < 0 || flight_link_prob > 1 || train_link_prob < 0 || train_link_prob > 1 ||
      sold_out_prob < 0 || sold_out_prob >= 1)
    throw ConfigError("probabilities must lie in [0,1]");
  if (road_factor <= 0 || city_speed_kmh <= 0) throw ConfigError("route model parameters must be positive");
  if (web_top_k < 1) throw ConfigError("web_top_k must be positive");
}

const City* WorldState::find_city(std::string_view name) const {
  const std::string key = normalize_key(name);
  for (const auto& c : cities)
    if (casefold(c.name) == key) return &c;
  return nullptr;
}

const std::vector<TransportRecord>& WorldState::transport(TransportMode mode, const std::string& origin,
                                                          const std::string& destination, Date date) const {
  static const std::vector<TransportRecord> empty;
  const auto& table = mode == TransportMode::Flight ? flights : trains;
  auto it = table.find({origin, destination, date.day});
  return it == table.end() ? empty : it->second;
}

bool WorldState::has_link(TransportMode mode, const std::string& origin, const std::string& destination) const {
  return !transport(mode, origin, destination, first_day()).empty();
}

WorldState generate_world(const WorldConfig& config) {
  config.validate();
  WorldState w;
  w.config = config;
  const uint64_t seed = config.seed;
  const auto& table = city_table();

  for (int i = 0; i < config.city_count; ++i) {
    if (i < static_cast<int>(table.size())) {
      w.cities.push_back({table[i].name, {table[i].lat, table[i].lon}});
    } else {
      Rng rng = Rng::derive({seed, tag("city"), static_cast<uint64_t>(i)});
      w.cities.push_back({"City" + std::to_string(i + 1), {22.0 + 18.0 * rng.uniform(), 100.0 + 22.0 * rng.uniform()}});
    }
  }

  const Date first = w.first_day();
  int flight_counter = 1000;
  int train_counter = 100;
  for (size_t i = 0; i < w.cities.size(); ++i) {
    for (size_t j = 0; j < w.cities.size(); ++j) {
      if (i == j) continue;
      const City& a = w.cities[i];
      const City& b = w.cities[j];
      const double km = haversine_m(a.coord, b.coord) / 1000.0;
      Rng link = Rng::derive({seed, tag("link"), i, j});
      bool fl = link.bernoulli(config.flight_link_prob);
      const bool tr = link.bernoulli(km < 1400 ? config.train_link_prob : config.train_link_prob * 0.5);
      if (!fl && !tr) fl = true;
      for (int d = 0; d < config.horizon_days; ++d) {
        const Date date = first.plus(d);
        for (TransportMode mode : {TransportMode::Flight, TransportMode::Train}) {
          const bool flight = mode == TransportMode::Flight;
          if (flight ? !fl : !tr) continue;
          Rng rng = Rng::derive({seed, tag(flight ? "flight" : "train"), i, j, static_cast<uint64_t>(d)});
          const int n = rng.range(config.min_options, config.max_options);
          std::vector<TransportRecord> recs;
          for (int k = 0; k < n; ++k) {
            TransportRecord r;
            r.mode = mode;
            r.origin = a.name;
            r.destination = b.name;
            r.date = date;
            r.depart = 360 + 5 * rng.range(0, 192);
            const double dur = flight ? 45.0 + km / 750.0 * 60.0 + rng.range(0, 40)
                                      : 20.0 + km / 230.0 * 60.0 + rng.range(0, 60);
            int arrive = r.depart + std::max(30, round5(dur));
            r.next_day = arrive >= 1440;
            r.arrive = arrive % 1440;
            r.id = flight ? std::string(kAirlines[rng.below(kAirlines.size())]) : std::string(km < 900 ? "D" : "G");
            recs.push_back(std::move(r));
          }
          std::sort(recs.begin(), recs.end(), [](const auto& x, const auto& y) { return x.depart < y.depart; });
          for (auto& r : recs) r.id += std::to_string(flight ? flight_counter++ : train_counter++);
          (flight ? w.flights : w.trains)[{a.name, b.name, date.day}] = std::move(recs);
        }
      }
    }
  }

  for (size_t ci = 0; ci < w.cities.size(); ++ci) {
    const City& c = w.cities[ci];
    Rng rng = Rng::derive({seed, tag("hotel"), ci});
    const int n = rng.range(config.min_hotels, config.max_hotels);
    std::vector<const char*> brands = kBrands;
    for (size_t k = brands.size(); k > 1; --k) std::swap(brands[k - 1], brands[rng.below(k)]);
    std::vector<HotelRecord> list;
    for (int k = 0; k < n; ++k) {
      HotelRecord h;
      char id[16];
      std::snprintf(id, sizeof id, "HT%02zu%02d", ci, k + 1);
      h.id = id;
      const std::string brand = k == 0 ? "Atour" : brands[static_cast<size_t>(k - 1) % brands.size()];
      const std::string district = kDistricts[rng.below(kDistricts.size())];
      h.name = brand + " " + c.name + " " + district;
      h.city = c.name;
      h.location = {c.coord.lat + (rng.uniform() - 0.5) * 0.2, c.coord.lon + (rng.uniform() - 0.5) * 0.2};
      h.tags = district_tags(district);
      for (const char* t : kExtraTags)
        if (rng.bernoulli(0.35)) h.tags.emplace_back(t);
      std::sort(h.tags.begin(), h.tags.end());
      list.push_back(std::move(h));
    }
    w.hotels[c.name] = std::move(list);

    std::vector<std::string> names;
    if (ci < table.size())
      for (const char* a : table[ci].attractions) names.emplace_back(a);
    else
      names = {c.name + " Museum", c.name + " Central Park", c.name + " Old Town"};
    names.push_back(c.name + " Railway Station");
    names.push_back(c.name + " Airport");
    Rng prng = Rng::derive({seed, tag("poi"), ci});
    std::vector<PoiRecord> pois;
    for (size_t k = 0; k < names.size(); ++k) {
      PoiRecord p;
      char id[16];
      std::snprintf(id, sizeof id, "POI%02zu%02zu", ci, k + 1);
      p.id = id;
      p.name = names[k];
      p.city = c.name;
      p.location = {c.coord.lat + (prng.uniform() - 0.5) * 0.3, c.coord.lon + (prng.uniform() - 0.5) * 0.3};
      p.address = std::to_string(prng.range(1, 399)) + " " + names[k] + " Road, " + c.name;
      pois.push_back(std::move(p));
    }

    auto add_doc = [&](std::string title, std::string snippet) {
      WebDoc d;
      d.id = "DOC" + std::to_string(w.web_docs.size() + 1);
      d.title = std::move(title);
      d.url = "https://travel.example/" + casefold(c.name) + "/" + std::to_string(w.web_docs.size() + 1);
      d.snippet = std::move(snippet);
      d.terms = tokenize_terms(d.title);
      w.web_docs.push_back(std::move(d));
    };
    add_doc("Introduction to " + c.name, c.name + " is a major city; this page covers history, districts and seasons.");
    add_doc(c.name + " travel guide", "Suggested day plans and transport tips for visitors to " + c.name + ".");
    add_doc("Best food in " + c.name, "Local dishes and well-reviewed restaurants in " + c.name + ".");
    for (const auto& p : pois)
      if (p.name.find("Station") == std::string::npos && p.name.find("Airport") == std::string::npos)
        add_doc(p.name + " visitor guide", "Opening hours and tickets for " + p.name + " in " + c.name + ".");
    w.pois[c.name] = std::move(pois);
  }

  apply_epoch(w);
  return w;
}

WorldState advance_epoch(const WorldState& world) {
  WorldState next = world;
  next.epoch = world.epoch + 1;
  apply_epoch(next);
  return next;
}

std::optional<uint64_t> seed_from_env() {
  const char* v = std::getenv("DEEPTRAVEL_SEED");
  if (!v || !*v) return std::nullopt;
  try {
    size_t used = 0;
    const unsigned long long s = std::stoull(v, &used);
    if (used != std::string_view(v).size()) throw ConfigError("");
    return s;
  } catch (...) {
    throw ConfigError(std::string("DEEPTRAVEL_SEED is not an unsigned integer: ") + v);
  }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

json config_json(const WorldConfig& c) {
  return json{{"seed", c.seed},
              {"city_count", c.city_count},
              {"start_date", c.start_date},
              {"horizon_days", c.horizon_days},
              {"flight_link_prob", c.flight_link_prob},
              {"train_link_prob", c.train_link_prob},
              {"min_options", c.min_options},
              {"max_options", c.max_options},
              {"min_hotels", c.min_hotels},
              {"max_hotels", c.max_hotels},
              {"flight_price_min", c.flight_price_min},
              {"flight_price_max", c.flight_price_max},
              {"train_price_min", c.train_price_min},
              {"train_price_max", c.train_price_max},
              {"hotel_price_min", c.hotel_price_min},
              {"hotel_price_max", c.hotel_price_max},
              {"sold_out_prob", c.sold_out_prob},
              {"road_factor", c.road_factor},
              {"city_speed_kmh", c.city_speed_kmh},
              {"web_top_k", c.web_top_k}};
}

WorldConfig config_from_json(const json& j) {
  WorldConfig c;
  c.seed = j.at("seed").get<uint64_t>();
  c.city_count = j.at("city_count");
  c.start_date = j.at("start_date");
  c.horizon_days = j.at("horizon_days");
  c.flight_link_prob = j.at("flight_link_prob");
  c.train_link_prob = j.at("train_link_prob");
  c.min_options = j.at("min_options");
  c.max_options = j.at("max_options");
  c.min_hotels = j.at("min_hotels");
  c.max_hotels = j.at("max_hotels");
  c.flight_price_min = j.at("flight_price_min");
  c.flight_price_max = j.at("flight_price_max");
  c.train_price_min = j.at("train_price_min");
  c.train_price_max = j.at("train_price_max");
  c.hotel_price_min = j.at("hotel_price_min");
  c.hotel_price_max = j.at("hotel_price_max");
  c.sold_out_prob = j.at("sold_out_prob");
  c.road_factor = j.at("road_factor");
  c.city_speed_kmh = j.at("city_speed_kmh");
  c.web_top_k = j.at("web_top_k");
  return c;
}

json coord_json(Coordinate c) { return json::array({c.lat, c.lon}); }
Coordinate coord_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

}  // namespace

std::string WorldState::to_jsonl() const {
  std::ostringstream out;
  out << json{{"format", "deeptravel-world"}, {"version", 1}, {"seed", config.seed}, {"epoch", epoch},
              {"config", config_json(config)}}
             .dump()
      << '\n';
  for (const auto& c : cities)
    out << json{{"type", "city"}, {"name", c.name}, {"coord", coord_json(c.coord)}}.dump() << '\n';
  for (const auto* table : {&flights, &trains}) {
    for (const auto& [key, recs] : *table) {
      for (const auto& r : recs) {
        json j = transport_json(r);
        j["type"] = "transport";
        out << j.dump() << '\n';
      }
    }
  }
  for (const auto& [city, list] : hotels)
    for (const auto& h : list)
      out << json{{"type", "hotel"},  {"id", h.id},     {"name", h.name},
                  {"city", h.city},   {"nightly_price", h.nightly_price},
                  {"tags", h.tags},   {"location", coord_json(h.location)},
                  {"rooms", h.rooms}}
                 .dump()
          << '\n';
  for (const auto& [city, list] : pois)
    for (const auto& p : list)
      out << json{{"type", "poi"},         {"id", p.id},       {"name", p.name}, {"city", p.city},
                  {"address", p.address}, {"location", coord_json(p.location)}}
                 .dump()
          << '\n';
  for (const auto& d : web_docs)
    out << json{{"type", "doc"},      {"id", d.id},       {"title", d.title},
                {"url", d.url},       {"snippet", d.snippet}, {"terms", d.terms}}
               .dump()
        << '\n';
  return out.str();
}

WorldState WorldState::from_jsonl(std::string_view text) {
  WorldState w;
  bool header = false;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ConfigError("world file line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!header) {
      if (j.value("format", "") != "deeptravel-world") throw ConfigError("not a deeptravel world file");
      if (j.value("version", 0) != 1) throw ConfigError("unsupported world file version");
      w.config = config_from_json(j.at("config"));
      w.epoch = j.at("epoch");
      header = true;
      continue;
    }
    const std::string type = j.at("type");
    if (type == "city") {
      w.cities.push_back({j.at("name"), coord_from(j.at("coord"))});
    } else if (type == "transport") {
      TransportRecord r;
      r.id = j.at("id");
      r.mode = *mode_from_name(j.at("mode").get<std::string>());
      r.origin = j.at("origin");
      r.destination = j.at("destination");
      r.date = Date::from_iso(j.at("date").get<std::string>());
      r.depart = *parse_clock(j.at("depart").get<std::string>());
      r.arrive = *parse_clock(j.at("arrive").get<std::string>());
      r.next_day = j.at("next_day");
      r.price = j.at("price");
      r.seats = j.at("seats");
      auto& table = r.mode == TransportMode::Flight ? w.flights : w.trains;
      table[{r.origin, r.destination, r.date.day}].push_back(std::move(r));
    } else if (type == "hotel") {
      HotelRecord h;
      h.id = j.at("id");
      h.name = j.at("name");
      h.city = j.at("city");
      h.nightly_price = j.at("nightly_price");
      h.tags = j.at("tags").get<std::vector<std::string>>();
      h.location = coord_from(j.at("location"));
      h.rooms = j.at("rooms").get<std::vector<int>>();
      w.hotels[h.city].push_back(std::move(h));
    } else if (type == "poi") {
      PoiRecord p;
      p.id = j.at("id");
      p.name = j.at("name");
      p.city = j.at("city");
      p.address = j.at("address");
      p.location = coord_from(j.at("location"));
      w.pois[p.city].push_back(std::move(p));
    } else if (type == "doc") {
      WebDoc d;
      d.id = j.at("id");
      d.title = j.at("title");
      d.url = j.at("url");
      d.snippet = j.at("snippet");
      d.terms = j.at("terms").get<std::vector<std::string>>();
      w.web_docs.push_back(std::move(d));
    } else {
      throw ConfigError("unknown world record type: " + type);
    }
  }
  if (!header) throw ConfigError("world file has no header");
  return w;
}

std::string WorldState::digest() const { return hex64(fnv1a(to_jsonl())); }

// ---------------------------------------------------------------------------
// Cache
// ---------------------------------------------------------------------------

std::optional<std::string> CacheStore::lookup(const std::string& key, int epoch) const {
  std::shared_lock lock(mu_);
  auto it = entries_.find({key, epoch});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string CacheStore::insert(const std::string& key, int epoch, std::string value) {
  std::unique_lock lock(mu_);
  auto [it, inserted] = entries_.try_emplace({key, epoch}, std::move(value));
  if (inserted) log_.push_back({key, epoch});
  return it->second;
}

size_t CacheStore::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

std::vector<CacheLogEntry> CacheStore::log() const {
  std::shared_lock lock(mu_);
  return log_;
}

// ---------------------------------------------------------------------------
// Sandbox
// ---------------------------------------------------------------------------

Sandbox::Sandbox(WorldState world) : world_(std::move(world)) {}

ToolResponse Sandbox::call(const ToolCall& call) {
  const std::string key = call.cache_key();
  if (auto hit = cache_.lookup(key, world_.epoch)) return response_from_text(call.tool, std::move(*hit));
  ToolResponse fresh = compute(call);
  fresh.text = cache_.insert(key, world_.epoch, std::move(fresh.text));
  return fresh;
}

std::optional<std::string> Sandbox::cached(const ToolCall& call, int epoch) const {
  return cache_.lookup(call.cache_key(), epoch);
}

void Sandbox::advance_epoch() { world_ = deeptravel::advance_epoch(world_); }

ToolResponse Sandbox::compute(const ToolCall& call, uint64_t drift) const {
  const WorldState& w = world_;
  auto arg = [&](std::string_view k) { return call.get(k).value_or(""); };
  auto city_or_error = [&](const std::string& name) -> const City* { return w.find_city(name); };

  switch (call.tool) {
    case ToolKind::Flight:
    case ToolKind::Train: {
      const std::string from = arg("depart_city"), to = arg("arrival_city"), date = arg("depart_date");
      const City* a = city_or_error(from);
      if (!a) return error_response(call.tool, "unknown city: " + trim(from));
      const City* b = city_or_error(to);
      if (!b) return error_response(call.tool, "unknown city: " + trim(to));
      auto d = Date::parse(date);
      if (!d) return error_response(call.tool, "invalid date: " + trim(date));
      if (!w.in_horizon(*d)) return error_response(call.tool, "date out of horizon: " + d->iso());
      const auto mode = call.tool == ToolKind::Flight ? TransportMode::Flight : TransportMode::Train;
      json results = json::array();
      for (const auto& r : w.transport(mode, a->name, b->name, *d)) {
        TransportRecord copy = r;
        copy.price = drifted(r.price, drift, r.id);
        results.push_back(transport_json(copy));
      }
      return ok_response(call.tool, std::move(results));
    }
    case ToolKind::Hotel: {
      const City* c = city_or_error(arg("city_name"));
      if (!c) return error_response(call.tool, "unknown city: " + trim(arg("city_name")));
      auto in = Date::parse(arg("checkin_date"));
      auto out = Date::parse(arg("checkout_date"));
      if (!in || !out) return error_response(call.tool, "invalid date");
      if (*in >= *out) return error_response(call.tool, "invalid date range");
      if (*in < w.first_day() || *out > w.last_day().plus(1))
        return error_response(call.tool, "date out of horizon");
      const auto name_filter = call.get("hotel_name");
      const int nights = *out - *in;
      json results = json::array();
      auto it = w.hotels.find(c->name);
      if (it != w.hotels.end()) {
        for (const auto& h : it->second) {
          if (name_filter && !contains_folded(h.name, trim(*name_filter))) continue;
          int rooms = INT32_MAX;
          for (int n = 0; n < nights; ++n) rooms = std::min(rooms, h.rooms[static_cast<size_t>(*in - w.first_day() + n)]);
          if (rooms <= 0) continue;
          const int64_t nightly = drifted(h.nightly_price, drift, h.id);
          results.push_back(json{{"id", h.id},
                                 {"name", h.name},
                                 {"city", h.city},
                                 {"nightly_price", nightly},
                                 {"nights", nights},
                                 {"total_price", nightly * nights},
                                 {"rooms_available", rooms},
                                 {"tags", h.tags},
                                 {"lat", h.location.lat},
                                 {"lon", h.location.lon}});
        }
      }
      return ok_response(call.tool, std::move(results));
    }
    case ToolKind::Poi: {
      const City* c = city_or_error(arg("city_name"));
      if (!c) return error_response(call.tool, "unknown city: " + trim(arg("city_name")));
      const std::string q = trim(arg("query"));
      json results = json::array();
      auto it = w.pois.find(c->name);
      if (it != w.pois.end())
        for (const auto& p : it->second)
          if (q.empty() || contains_folded(p.name, q))
            results.push_back(json{{"id", p.id},
                                   {"name", p.name},
                                   {"city", p.city},
                                   {"address", p.address},
                                   {"lat", p.location.lat},
                                   {"lon", p.location.lon}});
      return ok_response(call.tool, std::move(results));
    }
    case ToolKind::Route: {
      const City* c = city_or_error(arg("city_name"));
      if (!c) return error_response(call.tool, "unknown city: " + trim(arg("city_name")));
      auto it = w.pois.find(c->name);
      static const std::vector<PoiRecord> none;
      const auto& pois = it == w.pois.end() ? none : it->second;
      const PoiRecord* from = resolve_poi(pois, arg("origin"));
      if (!from) return error_response(call.tool, "unresolvable origin: " + trim(arg("origin")));
      const PoiRecord* to = resolve_poi(pois, arg("destination"));
      if (!to) return error_response(call.tool, "unresolvable destination: " + trim(arg("destination")));
      const double metres = from == to ? 0.0 : haversine_m(from->location, to->location) * w.config.road_factor;
      const long distance = std::lround(metres);
      const long minutes = std::lround(metres / 1000.0 / w.config.city_speed_kmh * 60.0);
      return ok_response(call.tool, json::array({json{{"origin", from->name},
                                                      {"destination", to->name},
                                                      {"city", c->name},
                                                      {"distance_m", distance},
                                                      {"duration_min", minutes}}}));
    }
    case ToolKind::Web: {
      const auto q = tokenize_terms(arg("query"));
      std::vector<std::pair<int, const WebDoc*>> scored;
      for (const auto& d : w.web_docs) {
        int s = 0;
        for (const auto& t : q)
          if (std::binary_search(d.terms.begin(), d.terms.end(), t)) ++s;
        if (s > 0) scored.emplace_back(s, &d);
      }
      std::stable_sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
      json results = json::array();
      for (size_t i = 0; i < scored.size() && static_cast<int>(i) < w.config.web_top_k; ++i) {
        const WebDoc& d = *scored[i].second;
        results.push_back(json{{"id", d.id}, {"title", d.title}, {"url", d.url}, {"snippet", d.snippet}});
      }
      return ok_response(call.tool, std::move(results));
    }
  }
  return error_response(call.tool, "unknown tool");
}

ToolResponse Sandbox::flight_search(std::string_view depart_city, std::string_view arrival_city,
                                    std::string_view depart_date) {
  return call(make_call(ToolKind::Flight, {{"depart_city", std::string(depart_city)},
                                           {"arrival_city", std::string(arrival_city)},
                                           {"depart_date", std::string(depart_date)}}));
}

ToolResponse Sandbox::train_search(std::string_view depart_city, std::string_view arrival_city,
                                   std::string_view depart_date) {
  return call(make_call(ToolKind::Train, {{"depart_city", std::string(depart_city)},
                                          {"arrival_city", std::string(arrival_city)},
                                          {"depart_date", std::string(depart_date)}}));
}

ToolResponse Sandbox::route_planning(std::string_view origin, std::string_view destination,
                                     std::string_view city_name) {
  return call(make_call(ToolKind::Route, {{"origin", std::string(origin)},
                                          {"destination", std::string(destination)},
                                          {"city_name", std::string(city_name)}}));
}

ToolResponse Sandbox::hotel_search(std::string_view city_name, std::string_view checkin_date,
                                   std::string_view checkout_date, std::optional<std::string_view> hotel_name) {
  std::vector<std::pair<std::string, std::string>> args = {{"city_name", std::string(city_name)},
                                                           {"checkin_date", std::string(checkin_date)},
                                                           {"checkout_date", std::string(checkout_date)}};
  if (hotel_name) args.emplace_back("hotel_name", std::string(*hotel_name));
  return call(make_call(ToolKind::Hotel, std::move(args)));
}

ToolResponse Sandbox::poi_search(std::string_view query, std::string_view city_name) {
  return call(make_call(ToolKind::Poi, {{"query", std::string(query)}, {"city_name", std::string(city_name)}}));
}

ToolResponse Sandbox::web_search(std::string_view query) {
  return call(make_call(ToolKind::Web, {{"query", std::string(query)}}));
}

ToolResponse call_tool_live(Sandbox& sandbox, const LiveModeConfig& cfg, const ToolCall& call, Rng& rng) {
  if (cfg.failure_rate > 0 && rng.uniform() < cfg.failure_rate)
    return error_response(call.tool, "transient failure: upstream service unavailable", true);
  if (cfg.drift_rate > 0 && rng.uniform() < cfg.drift_rate) return sandbox.compute(call, rng.next() | 1);
  return sandbox.call(call);
}

}  // namespace deeptravel
