#include "doctest.h"

#include <set>

#include "deeptravel/datagen.hpp"
#include "deeptravel/domain.hpp"
#include "fixtures.hpp"

using namespace deeptravel;

namespace {

TripIntents def1_example() {
  TripIntents t;
  t.origin = "Shanghai";
  t.destination = "Beijing";
  t.depart = Date::from_iso("2025-07-02");
  t.trip_length_days = 3;
  t.mode = TransportMode::Flight;
  return t;
}

Leg make_leg(std::string id, std::string from, std::string to, const char* date, int dep, int arr, int64_t price) {
  Leg l;
  l.id = std::move(id);
  l.origin = std::move(from);
  l.destination = std::move(to);
  l.date = Date::from_iso(date);
  l.depart = dep;
  l.arrive = arr;
  l.price = price;
  return l;
}

// Shanghai -> Beijing, 2025-07-02 .. 2025-07-04.
Itinerary sample_itinerary() {
  Itinerary it;
  it.outbound.push_back(make_leg("MU1001", "Shanghai", "Beijing", "2025-07-02", 480, 615, 50000));
  it.hotel = HotelStay{"HT0001", "Atour Beijing Central", "Beijing", Date::from_iso("2025-07-02"),
                       Date::from_iso("2025-07-04"), 60000, {"city-center"}};
  it.return_legs.push_back(make_leg("MU1002", "Beijing", "Shanghai", "2025-07-04", 1080, 1215, 45000));
  it.daily_plan.push_back(DayPlan{Date::from_iso("2025-07-03"), {Visit{600, "The Great Wall"}}});
  it.total_cost = 155000;
  return it;
}

}  // namespace

TEST_CASE("canonical_text renders the three-day airport trip example") {
  const std::string text = canonical_text(def1_example());
  CHECK(text.find("Please help schedule a three day's airport trip from Shanghai to Beijing") == 0);
  CHECK(canonical_text(def1_example()) == text);
  auto a = def1_example(), b = def1_example();
  a.budget = 250000;
  b.budget = 450000;
  CHECK(canonical_text(a) != canonical_text(b));
  CHECK(canonical_text(a).find("2500.00") != std::string::npos);
}

TEST_CASE("canonical_text is injective and parses back over the enumerated space") {
  IntentSpace space;
  space.depart_offsets = {0, 5};
  std::set<std::string> texts;
  size_t n = 0;
  enumerate_intents(fixtures::world(), space, [&](const TripIntents& t) {
    const std::string s = canonical_text(t);
    REQUIRE(texts.insert(s).second);
    const auto back = parse_query_text(s);
    REQUIRE(back);
    REQUIRE(*back == t);
    ++n;
    return n < 20000;
  });
  CHECK(n > 1000);
  CHECK_FALSE(parse_query_text("Book me something nice."));
}

TEST_CASE("atoms round trip and reject invalid sets") {
  auto t = def1_example();
  t.budget = 120000;
  t.poi = "The Great Wall";
  CHECK(from_atoms(to_atoms(t)) == t);

  auto atoms = to_atoms(t);
  atoms.push_back({Slot::BudgetTotal, int64_t{1}});
  CHECK_THROWS_AS(from_atoms(atoms), ConfigError);

  CHECK_THROWS_AS(from_atoms({{Slot::Origin, std::string("A")}, {Slot::Destination, std::string("B")}}), ConfigError);
  CHECK_THROWS_AS(from_atoms({{Slot::Origin, std::string("A")},
                              {Slot::Destination, std::string("B")},
                              {Slot::DepartDate, std::string("2025-07-02")}}),
                  ConfigError);
  CHECK_THROWS_AS(from_atoms({{Slot::Origin, std::string("A")},
                              {Slot::Destination, std::string("a")},
                              {Slot::DepartDate, Date::from_iso("2025-07-02")}}),
                  ConfigError);
}

TEST_CASE("query flags and ids") {
  auto t = def1_example();
  const auto q = Query::from_intents(t);
  CHECK(q.constrained);
  CHECK(q.text == canonical_text(t));
  CHECK(Query::from_intents(t).id == q.id);
  t.mode.reset();
  const auto u = Query::from_intents(t);
  CHECK_FALSE(u.constrained);
  CHECK(u.id != q.id);
  CHECK(query_from_json(to_json(q)).intents == q.intents);
  CHECK(query_from_json(to_json(q)).id == q.id);
}

TEST_CASE("trip dates") {
  auto t = def1_example();
  CHECK(t.return_day().iso() == "2025-07-04");
  CHECK(t.nights() == 2);
  t.trip_length_days.reset();
  CHECK(t.nights() == 0);
  t.return_date = Date::from_iso("2025-07-01");
  CHECK(t.problem());
}

TEST_CASE("itinerary_cost") {
  CHECK(itinerary_cost(Itinerary{}).computed == 0);
  CHECK(itinerary_cost(Itinerary{}).matches);

  Itinerary it;
  it.outbound.push_back(make_leg("CA1", "Shanghai", "Beijing", "2025-07-02", 480, 600, 50000));
  it.hotel = HotelStay{"H", "H", "Beijing", Date::from_iso("2025-07-02"), Date::from_iso("2025-07-05"), 3 * 30000, {}};
  it.total_cost = 140000;
  CHECK(itinerary_cost(it).computed == 140000);
  CHECK(itinerary_cost(it).matches);
  it.total_cost = 139999;
  CHECK_FALSE(itinerary_cost(it).matches);
}

TEST_CASE("itinerary invariants") {
  const auto ok = sample_itinerary();
  CHECK(itinerary_invariant_violations(ok, 60).empty());
  CHECK(audit_itinerary(def1_example(), ok, 60).feasible());

  auto bad = ok;
  bad.return_legs[0].date = Date::from_iso("2025-07-02");
  bad.return_legs[0].depart = 300;
  CHECK_FALSE(itinerary_invariant_violations(bad, 60).empty());
  CHECK_FALSE(audit_itinerary(def1_example(), bad, 60).logic.empty());

  auto swapped = ok;
  swapped.hotel->checkout = Date::from_iso("2025-07-01");
  CHECK_FALSE(itinerary_invariant_violations(swapped, 60).empty());

  auto unordered = ok;
  unordered.daily_plan[0].visits.push_back(Visit{540, "Temple of Heaven"});
  CHECK_FALSE(itinerary_invariant_violations(unordered, 60).empty());

  auto tight = ok;
  tight.return_legs[0].date = Date::from_iso("2025-07-02");
  tight.return_legs[0].depart = 615 + 30;
  CHECK(itinerary_invariant_violations(tight, 0).size() < itinerary_invariant_violations(tight, 60).size());
}

TEST_CASE("audit groups") {
  auto q = def1_example();
  auto it = sample_itinerary();

  q.budget = 100000;
  CHECK_FALSE(audit_itinerary(q, it, 60).other_constraints.empty());
  q.budget = 155000;
  CHECK(audit_itinerary(q, it, 60).other_constraints.empty());

  q.arrival_deadline = 600;
  CHECK_FALSE(audit_itinerary(q, it, 60).other_constraints.empty());
  q.arrival_deadline.reset();

  q.poi = "Temple of Heaven";
  CHECK_FALSE(audit_itinerary(q, it, 60).specific.empty());
  q.poi = "the great wall";
  CHECK(audit_itinerary(q, it, 60).specific.empty());

  q.hotel_preference = "riverside";
  CHECK_FALSE(audit_itinerary(q, it, 60).specific.empty());
  q.hotel_preference.reset();

  q.mode = TransportMode::Train;
  CHECK_FALSE(audit_itinerary(q, it, 60).specific.empty());
  q.mode = TransportMode::Flight;

  auto wrong_city = it;
  wrong_city.outbound[0].destination = "Wuhan";
  CHECK_FALSE(audit_itinerary(q, wrong_city, 60).main_requirement.empty());

  auto no_hotel = it;
  no_hotel.hotel.reset();
  no_hotel.total_cost -= 60000;
  CHECK_FALSE(audit_itinerary(q, no_hotel, 60).completeness.empty());
}

TEST_CASE("place_visit finds the earliest slot after arrival") {
  const auto q = def1_example();
  const auto it = sample_itinerary();
  const auto slot = place_visit(q, it, 60);
  REQUIRE(slot);
  CHECK(slot->first == q.depart);
  CHECK(slot->second >= 615 + 60);
  CHECK(slot->second % 15 == 0);
  auto placed = it;
  placed.daily_plan = {DayPlan{slot->first, {Visit{slot->second, "The Great Wall"}}}};
  CHECK(itinerary_invariant_violations(placed, 60).empty());
}

TEST_CASE("itinerary block and JSON round trip") {
  const auto it = sample_itinerary();
  const std::string block = render_itinerary_block(it);
  const auto back = parse_itinerary_block("Here is your plan.\n" + block + "\nEnjoy.");
  REQUIRE(back.itinerary);
  CHECK(*back.itinerary == it);
  CHECK(itinerary_from_json(to_json(it)) == it);

  Itinerary odd = it;
  odd.hotel->name = "Quote \"Inn\" \\ back";
  odd.hotel->tags.clear();
  const auto odd_back = parse_itinerary_block(render_itinerary_block(odd));
  REQUIRE(odd_back.itinerary);
  CHECK(*odd_back.itinerary == odd);

  CHECK_FALSE(parse_itinerary_block("prose only").itinerary);
  CHECK_FALSE(parse_itinerary_block("```itinerary\noutbound id=\"x\"\ntotal cost=\"1\"\n```").itinerary);
  CHECK_FALSE(parse_itinerary_block("```itinerary\nouttbound id=\"x\"\n```").itinerary);
  CHECK_FALSE(parse_itinerary_block("```itinerary\noutbound id=\"x\"").itinerary);
}

TEST_CASE("random itineraries round trip through the block") {
  Rng rng(21);
  for (int k = 0; k < 500; ++k) {
    Itinerary it;
    const int legs = rng.range(0, 2);
    for (int i = 0; i < legs; ++i)
      it.outbound.push_back(make_leg("X" + std::to_string(rng.below(1000)), "A b", "C'd", "2025-07-01",
                                     rng.range(0, 1439), rng.range(0, 1439), rng.range(1, 900000)));
    if (rng.bernoulli(0.5))
      it.hotel = HotelStay{"H" + std::to_string(k), "Name " + std::to_string(k), "C'd", Date::from_iso("2025-07-01"),
                           Date::from_iso("2025-07-03"), rng.range(1, 500000), {"riverside", "breakfast"}};
    for (int i = 0; i < rng.range(0, 2); ++i)
      it.return_legs.push_back(make_leg("R" + std::to_string(i), "C'd", "A b", "2025-07-03", rng.range(0, 1439),
                                        rng.range(0, 1439), rng.range(1, 900000)));
    if (rng.bernoulli(0.5)) it.daily_plan.push_back(DayPlan{Date::from_iso("2025-07-02"), {Visit{rng.range(0, 1439), "Yu Garden"}}});
    it.total_cost = itinerary_cost(it).computed;
    const auto back = parse_itinerary_block(render_itinerary_block(it));
    REQUIRE(back.itinerary);
    REQUIRE(*back.itinerary == it);
  }
}
