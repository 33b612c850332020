#include "deeptravel/domain.hpp"

#include <algorithm>
#include <array>
#include <regex>
#include <sstream>

namespace deeptravel {

using nlohmann::json;

namespace {

constexpr int kVisitMinutes = 120;
constexpr int kDayStart = 9 * 60;
constexpr int kLatestVisitStart = 20 * 60;

const std::array<const char*, 11> kNumberWords = {"zero", "one", "two",   "three", "four", "five",
                                                  "six",  "seven", "eight", "nine",  "ten"};

std::string number_word(int n) {
  if (n >= 0 && n < static_cast<int>(kNumberWords.size())) return kNumberWords[static_cast<size_t>(n)];
  return std::to_string(n);
}

std::optional<int> parse_number_word(const std::string& s) {
  for (size_t i = 0; i < kNumberWords.size(); ++i)
    if (s == kNumberWords[i]) return static_cast<int>(i);
  if (!s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); }))
    return std::stoi(s);
  return std::nullopt;
}

bool same_place(const std::string& a, const std::string& b) { return normalize_key(a) == normalize_key(b); }

}  // namespace

std::string_view slot_name(Slot s) {
  switch (s) {
    case Slot::Origin: return "origin";
    case Slot::Destination: return "destination";
    case Slot::DepartDate: return "depart_date";
    case Slot::ReturnDate: return "return_date";
    case Slot::ArrivalDeadline: return "arrival_deadline";
    case Slot::BudgetTotal: return "budget_total";
    case Slot::HotelPreference: return "hotel_preference";
    case Slot::TransportModePreference: return "transport_mode_preference";
    case Slot::PoiRequirement: return "poi_requirement";
    case Slot::TripLengthDays: return "trip_length_days";
  }
  return "";
}

Date TripIntents::return_day() const {
  if (return_date) return *return_date;
  if (trip_length_days) return depart.plus(*trip_length_days - 1);
  return depart;
}

std::optional<std::string> TripIntents::problem() const {
  if (trim(origin).empty()) return "origin is empty";
  if (trim(destination).empty()) return "destination is empty";
  if (same_place(origin, destination)) return "origin equals destination";
  if (trip_length_days && *trip_length_days < 1) return "trip length must be at least one day";
  if (return_date && *return_date < depart) return "return date precedes departure";
  if (return_date && trip_length_days && depart.plus(*trip_length_days - 1) != *return_date)
    return "return date disagrees with trip length";
  if (arrival_deadline && (*arrival_deadline < 0 || *arrival_deadline >= 1440)) return "arrival deadline out of day";
  if (budget && *budget <= 0) return "budget must be positive";
  if (hotel_preference && trim(*hotel_preference).empty()) return "hotel preference is empty";
  if (poi && trim(*poi).empty()) return "poi requirement is empty";
  return std::nullopt;
}

std::vector<AtomicIntent> to_atoms(const TripIntents& i) {
  std::vector<AtomicIntent> out = {
      {Slot::Origin, i.origin}, {Slot::Destination, i.destination}, {Slot::DepartDate, i.depart}};
  if (i.return_date) out.push_back({Slot::ReturnDate, *i.return_date});
  if (i.arrival_deadline) out.push_back({Slot::ArrivalDeadline, static_cast<int64_t>(*i.arrival_deadline)});
  if (i.budget) out.push_back({Slot::BudgetTotal, *i.budget});
  if (i.hotel_preference) out.push_back({Slot::HotelPreference, *i.hotel_preference});
  if (i.mode) out.push_back({Slot::TransportModePreference, *i.mode});
  if (i.poi) out.push_back({Slot::PoiRequirement, *i.poi});
  if (i.trip_length_days) out.push_back({Slot::TripLengthDays, static_cast<int64_t>(*i.trip_length_days)});
  return out;
}

TripIntents from_atoms(const std::vector<AtomicIntent>& atoms) {
  TripIntents t;
  std::vector<Slot> seen;
  auto expect = [](const AtomicIntent& a, auto* type_tag) {
    using T = std::remove_pointer_t<decltype(type_tag)>;
    if (!std::holds_alternative<T>(a.value))
      throw ConfigError("slot " + std::string(slot_name(a.slot)) + " has a value of the wrong type");
    return std::get<T>(a.value);
  };
  for (const auto& a : atoms) {
    if (std::find(seen.begin(), seen.end(), a.slot) != seen.end())
      throw ConfigError("duplicate slot " + std::string(slot_name(a.slot)));
    seen.push_back(a.slot);
    switch (a.slot) {
      case Slot::Origin: t.origin = expect(a, static_cast<std::string*>(nullptr)); break;
      case Slot::Destination: t.destination = expect(a, static_cast<std::string*>(nullptr)); break;
      case Slot::DepartDate: t.depart = expect(a, static_cast<Date*>(nullptr)); break;
      case Slot::ReturnDate: t.return_date = expect(a, static_cast<Date*>(nullptr)); break;
      case Slot::ArrivalDeadline:
        t.arrival_deadline = static_cast<int>(expect(a, static_cast<int64_t*>(nullptr)));
        break;
      case Slot::BudgetTotal: t.budget = expect(a, static_cast<int64_t*>(nullptr)); break;
      case Slot::HotelPreference: t.hotel_preference = expect(a, static_cast<std::string*>(nullptr)); break;
      case Slot::TransportModePreference: t.mode = expect(a, static_cast<TransportMode*>(nullptr)); break;
      case Slot::PoiRequirement: t.poi = expect(a, static_cast<std::string*>(nullptr)); break;
      case Slot::TripLengthDays:
        t.trip_length_days = static_cast<int>(expect(a, static_cast<int64_t*>(nullptr)));
        break;
    }
  }
  for (Slot required : {Slot::Origin, Slot::Destination, Slot::DepartDate})
    if (std::find(seen.begin(), seen.end(), required) == seen.end())
      throw ConfigError("missing required slot " + std::string(slot_name(required)));
  if (auto p = t.problem()) throw ConfigError(*p);
  return t;
}

std::string_view difficulty_name(Difficulty d) {
  switch (d) {
    case Difficulty::Easy: return "easy";
    case Difficulty::Medium: return "medium";
    case Difficulty::Hard: return "hard";
    case Difficulty::Unrated: return "unrated";
  }
  return "unrated";
}

std::optional<Difficulty> difficulty_from_name(std::string_view s) {
  for (Difficulty d : {Difficulty::Easy, Difficulty::Medium, Difficulty::Hard, Difficulty::Unrated})
    if (difficulty_name(d) == s) return d;
  return std::nullopt;
}

Query Query::from_intents(TripIntents intents) {
  if (auto p = intents.problem()) throw ConfigError("invalid intent set: " + *p);
  Query q;
  q.text = canonical_text(intents);
  q.constrained = intents.constrained();
  q.id = "q" + hex64(fnv1a(q.text));
  q.intents = std::move(intents);
  return q;
}

std::string canonical_text(const TripIntents& i) {
  std::string s = "Please help schedule a ";
  if (i.trip_length_days) s += number_word(*i.trip_length_days) + " day's ";
  if (i.mode) s += *i.mode == TransportMode::Flight ? "airport " : "train ";
  s += "trip from " + i.origin + " to " + i.destination + ", departing on " + i.depart.iso();
  if (i.return_date) s += ", returning on " + i.return_date->iso();
  if (i.arrival_deadline) s += ", arriving before " + format_clock(*i.arrival_deadline);
  if (i.budget) s += ", with a total budget of " + format_cents(*i.budget);
  if (i.hotel_preference) s += ", staying at a " + *i.hotel_preference + " hotel";
  if (i.poi) s += ", and visiting " + *i.poi;
  return s + ".";
}

std::optional<TripIntents> parse_query_text(std::string_view text) {
  static const std::regex re(
      R"(^Please help schedule a (?:(\w+) day's )?(?:(airport|train) )?trip from (.+?) to (.+?), departing on (\d{4}-\d{2}-\d{2}))"
      R"((?:, returning on (\d{4}-\d{2}-\d{2}))?(?:, arriving before (\d{2}:\d{2}))?(?:, with a total budget of (\d+)\.(\d{2}))?)"
      R"((?:, staying at a (.+?) hotel)?(?:, and visiting (.+?))?\.$)");
  std::smatch m;
  const std::string s(text);
  if (!std::regex_match(s, m, re)) return std::nullopt;
  TripIntents t;
  if (m[1].matched) {
    auto n = parse_number_word(m[1]);
    if (!n) return std::nullopt;
    t.trip_length_days = *n;
  }
  if (m[2].matched) t.mode = m[2] == "airport" ? TransportMode::Flight : TransportMode::Train;
  t.origin = m[3];
  t.destination = m[4];
  auto dep = Date::parse(m[5].str());
  if (!dep) return std::nullopt;
  t.depart = *dep;
  if (m[6].matched) t.return_date = Date::parse(m[6].str());
  if (m[7].matched) t.arrival_deadline = parse_clock(m[7].str());
  if (m[8].matched) t.budget = std::stoll(m[8]) * 100 + std::stoll(m[9]);
  if (m[10].matched) t.hotel_preference = m[10];
  if (m[11].matched) t.poi = m[11];
  if (t.problem()) return std::nullopt;
  return t;
}

// ---------------------------------------------------------------------------
// Itinerary
// ---------------------------------------------------------------------------

Leg leg_from_record(const TransportRecord& r) {
  return Leg{r.id, r.mode, r.origin, r.destination, r.date, r.depart, r.arrive, r.next_day, r.price};
}

CostCheck itinerary_cost(const Itinerary& it) {
  CostCheck c;
  for (const auto& l : it.outbound) c.computed += l.price;
  for (const auto& l : it.return_legs) c.computed += l.price;
  if (it.hotel) c.computed += it.hotel->total_price;
  c.matches = c.computed == it.total_cost;
  return c;
}

std::vector<std::string> itinerary_invariant_violations(const Itinerary& it, int buffer) {
  std::vector<std::string> v;
  auto check_legs = [&](const std::vector<Leg>& legs, const char* what) {
    for (size_t k = 0; k < legs.size(); ++k) {
      const Leg& l = legs[k];
      if (l.depart_abs() >= l.arrive_abs()) v.push_back(std::string(what) + " leg " + l.id + " arrives before it departs");
      if (same_place(l.origin, l.destination)) v.push_back(std::string(what) + " leg " + l.id + " goes nowhere");
      if (k > 0) {
        const Leg& p = legs[k - 1];
        if (!same_place(p.destination, l.origin))
          v.push_back(std::string(what) + " legs " + p.id + " and " + l.id + " do not connect");
        if (l.depart_abs() < p.arrive_abs() + buffer)
          v.push_back(std::string(what) + " leg " + l.id + " departs before the previous leg arrives plus buffer");
      }
    }
  };
  check_legs(it.outbound, "outbound");
  check_legs(it.return_legs, "return");
  if (!it.outbound.empty() && !it.return_legs.empty() &&
      it.return_legs.front().depart_abs() < it.outbound.back().arrive_abs() + buffer)
    v.push_back("return departs before outbound arrival plus buffer");
  if (it.hotel) {
    const HotelStay& h = *it.hotel;
    if (h.checkin >= h.checkout) v.push_back("hotel checkout is not after checkin");
    if (!it.outbound.empty() && it.outbound.back().arrive_abs() >= (h.checkin.day + 1) * 1440)
      v.push_back("outbound arrives after the hotel checkin day");
    if (!it.return_legs.empty() && it.return_legs.front().date < h.checkout)
      v.push_back("return departs before hotel checkout");
  }
  for (const auto& day : it.daily_plan) {
    for (size_t k = 1; k < day.visits.size(); ++k)
      if (day.visits[k].time < day.visits[k - 1].time) v.push_back("visits on " + day.date.iso() + " are out of order");
    for (const auto& visit : day.visits) {
      const int abs = day.date.day * 1440 + visit.time;
      if (!it.outbound.empty() && abs < it.outbound.back().arrive_abs() + buffer)
        v.push_back("visit to " + visit.poi + " before arrival");
      if (!it.return_legs.empty() && abs + kVisitMinutes > it.return_legs.front().depart_abs() - buffer)
        v.push_back("visit to " + visit.poi + " runs into the return departure");
    }
  }
  if (!itinerary_cost(it).matches) v.push_back("total cost does not match the sum of components");
  return v;
}

std::optional<std::pair<Date, int>> place_visit(const TripIntents& q, const Itinerary& it, int buffer) {
  if (it.outbound.empty() || it.return_legs.empty()) return std::nullopt;
  const int arrive = it.outbound.back().arrive_abs();
  const int leave = it.return_legs.front().depart_abs();
  for (Date d = q.depart; d <= q.return_day(); d = d.plus(1)) {
    int start = std::max(d.day * 1440 + kDayStart, arrive + buffer);
    start = (start + 14) / 15 * 15;
    if (start - d.day * 1440 > kLatestVisitStart) continue;
    if (start + kVisitMinutes > leave - buffer) continue;
    return std::make_pair(d, start - d.day * 1440);
  }
  return std::nullopt;
}

ItineraryAudit audit_itinerary(const TripIntents& q, const Itinerary& it, int buffer) {
  ItineraryAudit a;
  const int nights = q.nights();
  if (it.outbound.empty()) a.completeness.push_back("no outbound transport");
  if (it.return_legs.empty()) a.completeness.push_back("no return transport");
  if (nights > 0 && !it.hotel) a.completeness.push_back("no hotel for a trip spanning nights");

  if (!it.outbound.empty()) {
    if (!same_place(it.outbound.front().origin, q.origin)) a.main_requirement.push_back("outbound starts elsewhere");
    if (!same_place(it.outbound.back().destination, q.destination))
      a.main_requirement.push_back("outbound ends elsewhere");
    if (it.outbound.front().date != q.depart) a.main_requirement.push_back("outbound on the wrong date");
  }
  if (!it.return_legs.empty()) {
    if (!same_place(it.return_legs.front().origin, q.destination))
      a.main_requirement.push_back("return starts elsewhere");
    if (!same_place(it.return_legs.back().destination, q.origin)) a.main_requirement.push_back("return ends elsewhere");
    if (it.return_legs.front().date != q.return_day()) a.main_requirement.push_back("return on the wrong date");
  }
  if (it.hotel && nights > 0) {
    if (it.hotel->checkin != q.depart || it.hotel->checkout != q.return_day())
      a.main_requirement.push_back("hotel dates do not cover the trip");
  }

  a.logic = itinerary_invariant_violations(it, buffer);
  if (it.hotel && !same_place(it.hotel->city, q.destination)) a.logic.push_back("hotel is not in the destination city");
  for (const auto& day : it.daily_plan)
    if (day.date < q.depart || day.date > q.return_day()) a.logic.push_back("daily plan outside the trip dates");

  if (q.budget && itinerary_cost(it).computed > *q.budget)
    a.other_constraints.push_back("total cost " + format_cents(itinerary_cost(it).computed) + " exceeds budget " +
                                  format_cents(*q.budget));
  if (q.arrival_deadline && !it.outbound.empty() &&
      it.outbound.back().arrive_abs() > q.depart.day * 1440 + *q.arrival_deadline)
    a.other_constraints.push_back("arrives after " + format_clock(*q.arrival_deadline));

  if (q.poi) {
    bool found = false;
    for (const auto& day : it.daily_plan)
      for (const auto& v : day.visits) found = found || same_place(v.poi, *q.poi);
    if (!found) a.specific.push_back("required POI " + *q.poi + " missing from daily plan");
  }
  if (q.hotel_preference && nights > 0) {
    const bool ok = it.hotel && std::any_of(it.hotel->tags.begin(), it.hotel->tags.end(), [&](const std::string& t) {
                      return same_place(t, *q.hotel_preference);
                    });
    if (!ok) a.specific.push_back("hotel lacks preference " + *q.hotel_preference);
  }
  if (q.mode) {
    for (const auto* legs : {&it.outbound, &it.return_legs})
      for (const auto& l : *legs)
        if (l.mode != *q.mode) {
          a.specific.push_back("leg " + l.id + " is not by " + std::string(mode_name(*q.mode)));
        }
  }
  return a;
}

// ---------------------------------------------------------------------------
// Structured block
// ---------------------------------------------------------------------------

namespace {

std::string q(std::string_view v) {
  std::string out = "\"";
  for (char c : v) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out + '"';
}

std::string leg_line(const char* kind, const Leg& l) {
  return std::string(kind) + " id=" + q(l.id) + " mode=" + q(mode_name(l.mode)) + " from=" + q(l.origin) +
         " to=" + q(l.destination) + " date=" + q(l.date.iso()) + " depart=" + q(format_clock(l.depart)) +
         " arrive=" + q(format_clock(l.arrive)) + " next_day=" + q(l.next_day ? "1" : "0") +
         " price=" + q(std::to_string(l.price));
}

using Fields = std::vector<std::pair<std::string, std::string>>;

std::optional<std::pair<std::string, Fields>> split_record(std::string_view line, std::string& err) {
  size_t i = 0;
  auto skip_ws = [&] {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  };
  skip_ws();
  size_t start = i;
  while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
  std::string kind(line.substr(start, i - start));
  Fields fields;
  for (;;) {
    skip_ws();
    if (i >= line.size()) break;
    start = i;
    while (i < line.size() && line[i] != '=') ++i;
    if (i >= line.size()) {
      err = "expected key=value";
      return std::nullopt;
    }
    std::string key(line.substr(start, i - start));
    ++i;
    std::string value;
    if (i < line.size() && line[i] == '"') {
      ++i;
      bool closed = false;
      while (i < line.size()) {
        char c = line[i++];
        if (c == '\\' && i < line.size()) {
          char e = line[i++];
          value += e == 'n' ? '\n' : e;
        } else if (c == '"') {
          closed = true;
          break;
        } else {
          value += c;
        }
      }
      if (!closed) {
        err = "unterminated quote";
        return std::nullopt;
      }
    } else {
      start = i;
      while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
      value = std::string(line.substr(start, i - start));
    }
    fields.emplace_back(std::move(key), std::move(value));
  }
  return std::make_pair(std::move(kind), std::move(fields));
}

const std::string* field(const Fields& f, std::string_view key) {
  for (const auto& [k, v] : f)
    if (k == key) return &v;
  return nullptr;
}

struct FieldError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

const std::string& need(const Fields& f, std::string_view key) {
  const std::string* v = field(f, key);
  if (!v) throw FieldError("missing field " + std::string(key));
  return *v;
}

Date need_date(const Fields& f, std::string_view key) {
  auto d = Date::parse(need(f, key));
  if (!d) throw FieldError("bad date in " + std::string(key));
  return *d;
}

int need_clock(const Fields& f, std::string_view key) {
  auto c = parse_clock(need(f, key));
  if (!c) throw FieldError("bad time in " + std::string(key));
  return *c;
}

int64_t need_int(const Fields& f, std::string_view key) {
  const std::string& s = need(f, key);
  try {
    size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw FieldError("");
    return v;
  } catch (...) {
    throw FieldError("bad integer in " + std::string(key));
  }
}

Leg parse_leg(const Fields& f) {
  Leg l;
  l.id = need(f, "id");
  auto m = mode_from_name(need(f, "mode"));
  if (!m) throw FieldError("bad mode");
  l.mode = *m;
  l.origin = need(f, "from");
  l.destination = need(f, "to");
  l.date = need_date(f, "date");
  l.depart = need_clock(f, "depart");
  l.arrive = need_clock(f, "arrive");
  l.next_day = need_int(f, "next_day") != 0;
  l.price = need_int(f, "price");
  return l;
}

}  // namespace

std::string render_itinerary_block(const Itinerary& it) {
  std::string s = "```itinerary\n";
  for (const auto& l : it.outbound) s += leg_line("outbound", l) + "\n";
  if (it.hotel) {
    const auto& h = *it.hotel;
    s += "hotel id=" + q(h.id) + " name=" + q(h.name) + " city=" + q(h.city) + " checkin=" + q(h.checkin.iso()) +
         " checkout=" + q(h.checkout.iso()) + " total=" + q(std::to_string(h.total_price)) +
         " tags=" + q(join(h.tags, ",")) + "\n";
  }
  for (const auto& l : it.return_legs) s += leg_line("return", l) + "\n";
  for (const auto& d : it.daily_plan) {
    s += "day date=" + q(d.date.iso()) + "\n";
    for (const auto& v : d.visits)
      s += "visit date=" + q(d.date.iso()) + " time=" + q(format_clock(v.time)) + " poi=" + q(v.poi) + "\n";
  }
  s += "total cost=" + q(std::to_string(it.total_cost)) + "\n```";
  return s;
}

ItineraryParse parse_itinerary_block(std::string_view body) {
  ItineraryParse out;
  const std::string open = "```itinerary\n";
  const size_t b = body.find(open);
  if (b == std::string_view::npos) {
    out.error = "no itinerary block";
    return out;
  }
  const size_t start = b + open.size();
  const size_t e = body.find("```", start);
  if (e == std::string_view::npos) {
    out.error = "unterminated itinerary block";
    return out;
  }
  Itinerary it;
  bool total_seen = false;
  int lineno = 0;
  try {
    for (const auto& raw : split(body.substr(start, e - start), '\n')) {
      ++lineno;
      if (trim(raw).empty()) continue;
      std::string err;
      auto rec = split_record(raw, err);
      if (!rec) throw FieldError(err);
      const auto& [kind, f] = *rec;
      if (kind == "outbound") {
        it.outbound.push_back(parse_leg(f));
      } else if (kind == "return") {
        it.return_legs.push_back(parse_leg(f));
      } else if (kind == "hotel") {
        if (it.hotel) throw FieldError("second hotel record");
        HotelStay h;
        h.id = need(f, "id");
        h.name = need(f, "name");
        h.city = need(f, "city");
        h.checkin = need_date(f, "checkin");
        h.checkout = need_date(f, "checkout");
        h.total_price = need_int(f, "total");
        const std::string& tags = need(f, "tags");
        if (!tags.empty()) h.tags = split(tags, ',');
        it.hotel = std::move(h);
      } else if (kind == "day") {
        it.daily_plan.push_back(DayPlan{need_date(f, "date"), {}});
      } else if (kind == "visit") {
        const Date d = need_date(f, "date");
        if (it.daily_plan.empty() || it.daily_plan.back().date != d) it.daily_plan.push_back(DayPlan{d, {}});
        it.daily_plan.back().visits.push_back(Visit{need_clock(f, "time"), need(f, "poi")});
      } else if (kind == "total") {
        it.total_cost = need_int(f, "cost");
        total_seen = true;
      } else {
        throw FieldError("unknown record " + kind);
      }
    }
  } catch (const FieldError& ex) {
    out.error = "malformed itinerary line " + std::to_string(lineno) + ": " + ex.what();
    return out;
  }
  if (!total_seen) {
    out.error = "itinerary block has no total";
    return out;
  }
  out.itinerary = std::move(it);
  return out;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

json to_json(const TripIntents& i) {
  json j{{"origin", i.origin}, {"destination", i.destination}, {"depart_date", i.depart.iso()}};
  if (i.return_date) j["return_date"] = i.return_date->iso();
  if (i.arrival_deadline) j["arrival_deadline"] = format_clock(*i.arrival_deadline);
  if (i.budget) j["budget_total"] = *i.budget;
  if (i.hotel_preference) j["hotel_preference"] = *i.hotel_preference;
  if (i.mode) j["transport_mode_preference"] = std::string(mode_name(*i.mode));
  if (i.poi) j["poi_requirement"] = *i.poi;
  if (i.trip_length_days) j["trip_length_days"] = *i.trip_length_days;
  return j;
}

TripIntents intents_from_json(const json& j) {
  TripIntents i;
  i.origin = j.at("origin");
  i.destination = j.at("destination");
  i.depart = Date::from_iso(j.at("depart_date").get<std::string>());
  if (j.contains("return_date")) i.return_date = Date::from_iso(j["return_date"].get<std::string>());
  if (j.contains("arrival_deadline")) {
    auto c = parse_clock(j["arrival_deadline"].get<std::string>());
    if (!c) throw ConfigError("bad arrival_deadline");
    i.arrival_deadline = *c;
  }
  if (j.contains("budget_total")) i.budget = j["budget_total"].get<int64_t>();
  if (j.contains("hotel_preference")) i.hotel_preference = j["hotel_preference"].get<std::string>();
  if (j.contains("transport_mode_preference")) {
    auto m = mode_from_name(j["transport_mode_preference"].get<std::string>());
    if (!m) throw ConfigError("bad transport_mode_preference");
    i.mode = *m;
  }
  if (j.contains("poi_requirement")) i.poi = j["poi_requirement"].get<std::string>();
  if (j.contains("trip_length_days")) i.trip_length_days = j["trip_length_days"].get<int>();
  if (auto p = i.problem()) throw ConfigError("invalid intents: " + *p);
  return i;
}

json to_json(const Query& q) {
  return json{{"id", q.id},
              {"text", q.text},
              {"intents", to_json(q.intents)},
              {"constrained", q.constrained},
              {"difficulty", std::string(difficulty_name(q.difficulty))}};
}

Query query_from_json(const json& j) {
  Query q;
  q.id = j.at("id");
  q.text = j.at("text");
  q.intents = intents_from_json(j.at("intents"));
  q.constrained = j.value("constrained", q.intents.constrained());
  q.difficulty = difficulty_from_name(j.value("difficulty", "unrated")).value_or(Difficulty::Unrated);
  return q;
}

namespace {
json leg_json(const Leg& l) {
  return json{{"id", l.id},         {"mode", std::string(mode_name(l.mode))},
              {"origin", l.origin}, {"destination", l.destination},
              {"date", l.date.iso()}, {"depart", format_clock(l.depart)},
              {"arrive", format_clock(l.arrive)}, {"next_day", l.next_day},
              {"price", l.price}};
}
Leg leg_from_json(const json& j) {
  Leg l;
  l.id = j.at("id");
  l.mode = mode_from_name(j.at("mode").get<std::string>()).value();
  l.origin = j.at("origin");
  l.destination = j.at("destination");
  l.date = Date::from_iso(j.at("date").get<std::string>());
  l.depart = parse_clock(j.at("depart").get<std::string>()).value();
  l.arrive = parse_clock(j.at("arrive").get<std::string>()).value();
  l.next_day = j.at("next_day");
  l.price = j.at("price");
  return l;
}
}  // namespace

json to_json(const Itinerary& it) {
  json j;
  j["outbound"] = json::array();
  for (const auto& l : it.outbound) j["outbound"].push_back(leg_json(l));
  j["return"] = json::array();
  for (const auto& l : it.return_legs) j["return"].push_back(leg_json(l));
  if (it.hotel) {
    const auto& h = *it.hotel;
    j["hotel"] = json{{"id", h.id},
                      {"name", h.name},
                      {"city", h.city},
                      {"checkin", h.checkin.iso()},
                      {"checkout", h.checkout.iso()},
                      {"total_price", h.total_price},
                      {"tags", h.tags}};
  } else {
    j["hotel"] = nullptr;
  }
  j["daily_plan"] = json::array();
  for (const auto& d : it.daily_plan) {
    json visits = json::array();
    for (const auto& v : d.visits) visits.push_back(json{{"time", format_clock(v.time)}, {"poi", v.poi}});
    j["daily_plan"].push_back(json{{"date", d.date.iso()}, {"visits", visits}});
  }
  j["total_cost"] = it.total_cost;
  return j;
}

Itinerary itinerary_from_json(const json& j) {
  Itinerary it;
  for (const auto& l : j.at("outbound")) it.outbound.push_back(leg_from_json(l));
  for (const auto& l : j.at("return")) it.return_legs.push_back(leg_from_json(l));
  if (!j.at("hotel").is_null()) {
    const auto& h = j["hotel"];
    it.hotel = HotelStay{h.at("id"),
                         h.at("name"),
                         h.at("city"),
                         Date::from_iso(h.at("checkin").get<std::string>()),
                         Date::from_iso(h.at("checkout").get<std::string>()),
                         h.at("total_price").get<int64_t>(),
                         h.at("tags").get<std::vector<std::string>>()};
  }
  for (const auto& d : j.at("daily_plan")) {
    DayPlan p{Date::from_iso(d.at("date").get<std::string>()), {}};
    for (const auto& v : d.at("visits"))
      p.visits.push_back(Visit{parse_clock(v.at("time").get<std::string>()).value(), v.at("poi")});
    it.daily_plan.push_back(std::move(p));
  }
  it.total_cost = j.at("total_cost");
  return it;
}

}  // namespace deeptravel
