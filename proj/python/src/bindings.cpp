#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <sstream>

#include "deeptravel/cli.hpp"
#include "deeptravel/datagen.hpp"
#include "deeptravel/trainer.hpp"

namespace py = pybind11;
using namespace deeptravel;

namespace {

// Owns the world and its sandbox together so Python sees one object.
class World {
 public:
  explicit World(WorldState w) : sandbox_(std::move(w)) {}

  static std::unique_ptr<World> generate(uint64_t seed, int cities) {
    WorldConfig c;
    c.seed = seed;
    c.city_count = cities;
    return std::make_unique<World>(generate_world(c));
  }

  std::string digest() const { return sandbox_.world().digest(); }
  std::string to_jsonl() const { return sandbox_.world().to_jsonl(); }
  std::vector<std::string> cities() const {
    std::vector<std::string> out;
    for (const auto& c : sandbox_.world().cities) out.push_back(c.name);
    return out;
  }

  py::tuple call(const std::string& tool, const std::vector<std::pair<std::string, std::string>>& args) {
    const auto kind = tool_from_name(tool);
    if (!kind) throw py::value_error("unknown tool: " + tool);
    const auto r = sandbox_.call(make_call(*kind, args));
    return py::make_tuple(r.ok, r.text);
  }

  // Runs the oracle on one query text and returns (reward, rendered trajectory).
  py::tuple oracle_episode(const std::string& text) {
    const auto intents = parse_query_text(text);
    if (!intents) throw py::value_error("not a template query: " + text);
    const Query q = Query::from_intents(*intents);
    OraclePolicy oracle;
    SandboxEnvironment env(sandbox_);
    Rng rng(1);
    const Trajectory t = run_episode(oracle, env, q, EpisodeLimits{}, rng);
    RuleVerifier v;
    return py::make_tuple(v.joint_reward(q, t).r, render_trajectory(t));
  }

  Sandbox& sandbox() { return sandbox_; }

 private:
  Sandbox sandbox_;
};

py::tuple cli(const std::vector<std::string>& args) {
  std::vector<std::string> full{"deeptravel"};
  full.insert(full.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : full) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code;
  {
    py::gil_scoped_release release;
    code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::class_<World>(m, "World")
      .def_static("generate", &World::generate, py::arg("seed") = 7, py::arg("cities") = 8)
      .def_static("from_jsonl", [](const std::string& s) { return std::make_unique<World>(WorldState::from_jsonl(s)); })
      .def_property_readonly("digest", &World::digest)
      .def_property_readonly("cities", &World::cities)
      .def("to_jsonl", &World::to_jsonl)
      .def("call", &World::call, py::arg("tool"), py::arg("args"))
      .def("oracle_episode", &World::oracle_episode, py::arg("query"));

  m.def("compute_advantages", &compute_advantages, py::arg("rewards"));
  m.def("keep_filter", &keep_filter, py::arg("rewards"), py::arg("eta") = 0.1);
  m.def("population_std", &population_std, py::arg("rewards"));
  m.def("sample_queries", [](World& w, size_t count, uint64_t seed) {
    IntentSpace space = base_intent_space();
    space.trip_lengths = {2, 3};
    std::vector<std::string> out;
    auto intents = enumerate_intents(w.sandbox().world(), space);
    Rng rng(seed);
    while (out.size() < count && !intents.empty()) {
      const size_t i = rng.below(intents.size());
      if (feasibility_witness(w.sandbox(), intents[i])) out.push_back(synthesize_query(intents[i]).text);
      intents.erase(intents.begin() + static_cast<std::ptrdiff_t>(i));
    }
    return out;
  }, py::arg("world"), py::arg("count"), py::arg("seed") = 1);
  m.def("cli", &cli, py::arg("args"), "Runs the command-line tool in-process; returns (code, stdout, stderr).");
}
