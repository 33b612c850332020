#pragma once

// Deterministic synthetic travel world plus the six-tool sandbox that serves it.
//
// A world is a pure function of (seed, epoch, WorldConfig). Schedules and
// record identifiers depend on the seed only; prices, seats and rooms are
// redrawn per epoch. Tool responses are compact JSON strings cached per
// (tool, canonical arguments, epoch).

#include <array>
#include <atomic>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "deeptravel/common.hpp"

namespace deeptravel {

// ---------------------------------------------------------------------------
// Tools
// ---------------------------------------------------------------------------

enum class ToolKind { Flight, Train, Route, Hotel, Poi, Web };
inline constexpr int kToolCount = 6;

std::string_view tool_name(ToolKind kind);
std::optional<ToolKind> tool_from_name(std::string_view name);

struct ToolSignature {
  ToolKind kind;
  std::vector<std::string> required;  // canonical keyword order
  std::vector<std::string> optional;
  bool accepts_extra_kwargs;
  std::vector<std::pair<std::string, std::string>> aliases;  // alias -> canonical
};

const ToolSignature& tool_signature(ToolKind kind);

/// A call in canonical form: arguments in signature keyword order, unknown
/// keyword arguments kept aside for tools that take **kwargs.
struct ToolCall {
  ToolKind tool = ToolKind::Web;
  std::vector<std::pair<std::string, std::string>> args;
  std::map<std::string, std::string> extras;

  std::optional<std::string> get(std::string_view key) const;
  /// tool|key=value;... over trimmed, case-folded recognised arguments.
  std::string cache_key() const;
  /// Keyword-style call text, e.g. flight_search(depart_city="A", ...).
  std::string render() const;

  friend bool operator==(const ToolCall&, const ToolCall&) = default;
};

ToolCall make_call(ToolKind tool, std::vector<std::pair<std::string, std::string>> args);

/// A tool observation. Errors are in-band: `ok` is false and `text` carries a
/// JSON error object, so an episode can always continue.
struct ToolResponse {
  ToolKind tool = ToolKind::Web;
  bool ok = false;
  bool transient = false;  // injected live-mode failure
  size_t result_count = 0;
  std::string text;
};

// ---------------------------------------------------------------------------
// World records
// ---------------------------------------------------------------------------

struct Coordinate {
  double lat = 0;
  double lon = 0;
};

/// Great-circle distance in metres.
double haversine_m(Coordinate a, Coordinate b);

struct City {
  std::string name;
  Coordinate coord;
};

enum class TransportMode { Flight, Train };
std::string_view mode_name(TransportMode m);
std::optional<TransportMode> mode_from_name(std::string_view s);

struct TransportRecord {
  std::string id;
  TransportMode mode = TransportMode::Flight;
  std::string origin;
  std::string destination;
  Date date;
  int depart = 0;  // minutes of day
  int arrive = 0;  // minutes of day, on date + next_day
  bool next_day = false;
  int64_t price = 0;  // cents, epoch-dependent
  int seats = 0;      // epoch-dependent
};

struct HotelRecord {
  std::string id;
  std::string name;
  std::string city;
  int64_t nightly_price = 0;  // epoch-dependent
  Coordinate location;
  std::vector<std::string> tags;
  std::vector<int> rooms;  // per horizon day, epoch-dependent
};

struct PoiRecord {
  std::string id;
  std::string name;
  std::string city;
  std::string address;
  Coordinate location;
};

struct WebDoc {
  std::string id;
  std::string title;
  std::string url;
  std::string snippet;
  std::vector<std::string> terms;  // case-folded topic terms
};

struct WorldConfig {
  uint64_t seed = 7;
  int city_count = 8;
  std::string start_date = "2025-06-20";
  int horizon_days = 30;
  double flight_link_prob = 0.85;
  double train_link_prob = 0.8;
  int min_options = 2;
  int max_options = 6;
  int min_hotels = 3;
  int max_hotels = 10;
  int64_t flight_price_min = 40000, flight_price_max = 250000;
  int64_t train_price_min = 8000, train_price_max = 90000;
  int64_t hotel_price_min = 18000, hotel_price_max = 150000;
  double sold_out_prob = 0.08;
  double road_factor = 1.3;
  double city_speed_kmh = 40.0;
  int web_top_k = 5;

  /// Throws ConfigError on degenerate settings.
  void validate() const;
};

using RouteKey = std::tuple<std::string, std::string, int>;  // origin, destination, day

class WorldState {
 public:
  WorldConfig config;
  int epoch = 0;
  std::vector<City> cities;
  std::map<RouteKey, std::vector<TransportRecord>> flights;
  std::map<RouteKey, std::vector<TransportRecord>> trains;
  std::map<std::string, std::vector<HotelRecord>> hotels;  // by city
  std::map<std::string, std::vector<PoiRecord>> pois;      // by city
  std::vector<WebDoc> web_docs;

  Date first_day() const { return Date::from_iso(config.start_date); }
  Date last_day() const { return first_day().plus(config.horizon_days - 1); }
  bool in_horizon(Date d) const { return d >= first_day() && d <= last_day(); }

  const City* find_city(std::string_view name) const;  // case-insensitive
  const std::vector<TransportRecord>& transport(TransportMode mode, const std::string& origin,
                                                const std::string& destination, Date date) const;
  bool has_link(TransportMode mode, const std::string& origin, const std::string& destination) const;

  /// Versioned JSON-lines: header line then one entity per line.
  std::string to_jsonl() const;
  static WorldState from_jsonl(std::string_view text);
  /// FNV-1a over to_jsonl().
  std::string digest() const;
};

WorldState generate_world(const WorldConfig& config);
/// Next day-epoch: ids and schedules kept, prices and availability redrawn.
WorldState advance_epoch(const WorldState& world);
/// Reads DEEPTRAVEL_SEED when set.
std::optional<uint64_t> seed_from_env();

// ---------------------------------------------------------------------------
// Cache and sandbox
// ---------------------------------------------------------------------------

struct CacheLogEntry {
  std::string key;
  int epoch;
};

/// On-demand response cache. Within an epoch a key maps to one value; the
/// first writer wins and later inserts are no-ops. Entries are never evicted.
class CacheStore {
 public:
  std::optional<std::string> lookup(const std::string& key, int epoch) const;
  /// Returns the stored value (the existing one if another writer got there first).
  std::string insert(const std::string& key, int epoch, std::string value);
  size_t size() const;
  std::vector<CacheLogEntry> log() const;

 private:
  mutable std::shared_mutex mu_;
  std::map<std::pair<std::string, int>, std::string> entries_;
  std::vector<CacheLogEntry> log_;
};

struct LiveModeConfig {
  double failure_rate = 0.0;
  double drift_rate = 0.0;
};

class Sandbox {
 public:
  explicit Sandbox(WorldState world);

  const WorldState& world() const { return world_; }
  int epoch() const { return world_.epoch; }
  const CacheStore& cache() const { return cache_; }

  /// Cached execution at the current epoch.
  ToolResponse call(const ToolCall& call);
  /// Bypasses the cache; `drift` != 0 perturbs prices deterministically.
  ToolResponse compute(const ToolCall& call, uint64_t drift = 0) const;
  /// Response stored for an earlier epoch, if that call was ever made.
  std::optional<std::string> cached(const ToolCall& call, int epoch) const;

  /// Requires exclusive access; cached entries of older epochs are kept.
  void advance_epoch();

  ToolResponse flight_search(std::string_view depart_city, std::string_view arrival_city,
                             std::string_view depart_date);
  ToolResponse train_search(std::string_view depart_city, std::string_view arrival_city,
                            std::string_view depart_date);
  ToolResponse route_planning(std::string_view origin, std::string_view destination,
                              std::string_view city_name);
  ToolResponse hotel_search(std::string_view city_name, std::string_view checkin_date,
                            std::string_view checkout_date,
                            std::optional<std::string_view> hotel_name = std::nullopt);
  ToolResponse poi_search(std::string_view query, std::string_view city_name);
  ToolResponse web_search(std::string_view query);

 private:
  WorldState world_;
  CacheStore cache_;
};

/// Live-API stand-in: injects transient failures and response drift.
ToolResponse call_tool_live(Sandbox& sandbox, const LiveModeConfig& cfg, const ToolCall& call,
                            Rng& rng);

ToolResponse error_response(ToolKind tool, std::string_view message, bool transient = false);

}  // namespace deeptravel
