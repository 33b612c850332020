#pragma once

// Queries, atomic intents and structured itineraries shared by the verifier,
// the policies and the data pipeline. Money is integer cents throughout.

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "deeptravel/common.hpp"
#include "deeptravel/sandbox.hpp"
#include "json.hpp"

namespace deeptravel {

enum class Slot {
  Origin,
  Destination,
  DepartDate,
  ReturnDate,
  ArrivalDeadline,
  BudgetTotal,
  HotelPreference,
  TransportModePreference,
  PoiRequirement,
  TripLengthDays,
};

std::string_view slot_name(Slot s);

/// Strings for places and tags, Date for dates, integers for cents/minutes/days.
using SlotValue = std::variant<std::string, Date, int64_t, TransportMode>;

struct AtomicIntent {
  Slot slot;
  SlotValue value;
  friend bool operator==(const AtomicIntent&, const AtomicIntent&) = default;
};

/// Typed view of an intent set. At most one value per slot.
struct TripIntents {
  std::string origin;
  std::string destination;
  Date depart;
  std::optional<Date> return_date;
  std::optional<int> arrival_deadline;  // minutes of day on the departure date
  std::optional<int64_t> budget;        // cents
  std::optional<std::string> hotel_preference;
  std::optional<TransportMode> mode;
  std::optional<std::string> poi;
  std::optional<int> trip_length_days;

  /// Return travel date: explicit, derived from trip length, or same day.
  Date return_day() const;
  int nights() const { return return_day() - depart; }
  bool constrained() const {
    return budget || hotel_preference || mode || poi || arrival_deadline;
  }
  /// Empty when consistent; otherwise the first problem found.
  std::optional<std::string> problem() const;

  friend bool operator==(const TripIntents&, const TripIntents&) = default;
};

std::vector<AtomicIntent> to_atoms(const TripIntents& intents);
/// Throws ConfigError on duplicate slots, slot/value type mismatch, missing
/// origin/destination/depart_date, or inconsistent values.
TripIntents from_atoms(const std::vector<AtomicIntent>& atoms);

enum class Difficulty { Easy, Medium, Hard, Unrated };
std::string_view difficulty_name(Difficulty d);
std::optional<Difficulty> difficulty_from_name(std::string_view s);

struct Query {
  std::string id;
  std::string text;
  TripIntents intents;
  bool constrained = false;
  Difficulty difficulty = Difficulty::Unrated;

  /// Renders text, sets the constrained flag and derives a stable id.
  static Query from_intents(TripIntents intents);
};

/// Deterministic template rendering; injective per intent set.
std::string canonical_text(const TripIntents& intents);
/// Inverse of canonical_text for template-generated text.
std::optional<TripIntents> parse_query_text(std::string_view text);

// ---------------------------------------------------------------------------
// Itinerary
// ---------------------------------------------------------------------------

struct Leg {
  std::string id;
  TransportMode mode = TransportMode::Flight;
  std::string origin;
  std::string destination;
  Date date;
  int depart = 0;
  int arrive = 0;
  bool next_day = false;
  int64_t price = 0;

  int depart_abs() const { return date.day * 1440 + depart; }
  int arrive_abs() const { return date.day * 1440 + arrive + (next_day ? 1440 : 0); }
  friend bool operator==(const Leg&, const Leg&) = default;
};

struct HotelStay {
  std::string id;
  std::string name;
  std::string city;
  Date checkin;
  Date checkout;
  int64_t total_price = 0;
  std::vector<std::string> tags;
  friend bool operator==(const HotelStay&, const HotelStay&) = default;
};

struct Visit {
  int time = 0;  // minutes of day
  std::string poi;
  friend bool operator==(const Visit&, const Visit&) = default;
};

struct DayPlan {
  Date date;
  std::vector<Visit> visits;
  friend bool operator==(const DayPlan&, const DayPlan&) = default;
};

struct Itinerary {
  std::vector<Leg> outbound;
  std::optional<HotelStay> hotel;
  std::vector<Leg> return_legs;
  std::vector<DayPlan> daily_plan;
  int64_t total_cost = 0;
  friend bool operator==(const Itinerary&, const Itinerary&) = default;
};

Leg leg_from_record(const TransportRecord& r);

struct CostCheck {
  int64_t computed = 0;
  bool matches = true;
};

/// Sum of leg prices and hotel total, compared against the stored total.
CostCheck itinerary_cost(const Itinerary& it);

/// Internal ordering/consistency problems of an itinerary on its own.
std::vector<std::string> itinerary_invariant_violations(const Itinerary& it, int transfer_buffer_min);

/// Fenced ```itinerary block carried inside the answer.
std::string render_itinerary_block(const Itinerary& it);

struct ItineraryParse {
  std::optional<Itinerary> itinerary;
  std::string error;
};
ItineraryParse parse_itinerary_block(std::string_view answer_body);

/// Per-rubric findings of the itinerary against a query. Each list is empty
/// when that group of checks passes.
struct ItineraryAudit {
  std::vector<std::string> completeness;
  std::vector<std::string> main_requirement;
  std::vector<std::string> logic;
  std::vector<std::string> other_constraints;  // budget, arrival deadline
  std::vector<std::string> specific;           // POIs, hotel tag, transport mode

  bool feasible() const {
    return completeness.empty() && main_requirement.empty() && logic.empty() && other_constraints.empty() &&
           specific.empty();
  }
};

ItineraryAudit audit_itinerary(const TripIntents& q, const Itinerary& it, int transfer_buffer_min);

/// Earliest valid slot for a POI visit, or nullopt when the trip leaves none.
std::optional<std::pair<Date, int>> place_visit(const TripIntents& q, const Itinerary& it, int transfer_buffer_min);

// JSON forms used by the JSON-lines files.
nlohmann::json to_json(const TripIntents& i);
TripIntents intents_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Query& q);
Query query_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Itinerary& it);
Itinerary itinerary_from_json(const nlohmann::json& j);

}  // namespace deeptravel
