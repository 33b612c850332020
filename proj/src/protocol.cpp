#include "deeptravel/protocol.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace deeptravel {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, kSegmentKindCount> kTags = {
    "think", "tool_call_thinking", "tool_call", "tool_response", "tool_response_thinking", "answer"};

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool only_space(std::string_view s) { return std::all_of(s.begin(), s.end(), is_space); }

bool contains_tag_delimiter(std::string_view body) {
  for (auto tag : kTags) {
    const std::string open = "<" + std::string(tag) + ">";
    const std::string close = "</" + std::string(tag) + ">";
    if (body.find(open) != std::string_view::npos || body.find(close) != std::string_view::npos) return true;
  }
  return false;
}

bool starts_turn(SegmentKind k) {
  return k == SegmentKind::Think || k == SegmentKind::ToolCallThinking || k == SegmentKind::ToolCall ||
         k == SegmentKind::Answer;
}

bool is_action(SegmentKind k) { return k == SegmentKind::ToolCall || k == SegmentKind::Answer; }

void assign_turns(std::vector<Segment>& segs) {
  int turn = 1;
  bool acted = false;
  for (auto& s : segs) {
    if (starts_turn(s.kind) && acted) {
      ++turn;
      acted = false;
    }
    s.turn_index = turn;
    if (is_action(s.kind)) acted = true;
  }
}

Terminal infer_terminal(const std::vector<Segment>& segs, const EpisodeLimits& limits) {
  if (!segs.empty() && segs.back().kind == SegmentKind::Answer) return Terminal::Answered;
  const auto calls = std::count_if(segs.begin(), segs.end(), [](const Segment& s) { return s.kind == SegmentKind::ToolCall; });
  if (calls >= limits.max_turns) return Terminal::TurnLimit;
  return Terminal::LengthLimit;
}

}  // namespace

std::string_view segment_tag(SegmentKind kind) { return kTags[static_cast<size_t>(kind)]; }

std::optional<SegmentKind> segment_from_tag(std::string_view tag) {
  for (size_t i = 0; i < kTags.size(); ++i)
    if (kTags[i] == tag) return static_cast<SegmentKind>(i);
  return std::nullopt;
}

std::string_view terminal_name(Terminal t) {
  switch (t) {
    case Terminal::Answered: return "answered";
    case Terminal::TurnLimit: return "turn_limit";
    case Terminal::LengthLimit: return "length_limit";
    case Terminal::Malformed: return "malformed";
  }
  return "malformed";
}

std::optional<Terminal> terminal_from_name(std::string_view s) {
  for (Terminal t : {Terminal::Answered, Terminal::TurnLimit, Terminal::LengthLimit, Terminal::Malformed})
    if (terminal_name(t) == s) return t;
  return std::nullopt;
}

void EpisodeLimits::validate() const {
  if (max_turns < 0) throw ConfigError("max_turns must be non-negative");
  if (max_total_segments < 1) throw ConfigError("max_total_segments must be positive");
}

std::string_view head_name(Head h) {
  switch (h) {
    case Head::Kind: return "kind";
    case Head::Selector: return "selector";
    case Head::Observation: return "observation";
  }
  return "kind";
}

int head_arity(Head h) {
  switch (h) {
    case Head::Kind: return 7;
    case Head::Selector: return 4;
    case Head::Observation: return 3;
  }
  return 0;
}

int head_buckets(Head h) {
  switch (h) {
    case Head::Kind: return 144;
    case Head::Selector: return 24;
    case Head::Observation: return kToolCount;
  }
  return 0;
}

const Segment* Trajectory::answer() const {
  if (!segments.empty() && segments.back().kind == SegmentKind::Answer) return &segments.back();
  return nullptr;
}

int Trajectory::tool_call_count() const {
  return static_cast<int>(
      std::count_if(segments.begin(), segments.end(), [](const Segment& s) { return s.kind == SegmentKind::ToolCall; }));
}

int Trajectory::turn_count() const {
  return static_cast<int>(
      std::count_if(segments.begin(), segments.end(), [](const Segment& s) { return is_action(s.kind); }));
}

std::vector<std::string> structural_problems(const std::vector<Segment>& segs) {
  std::vector<std::string> out;
  int answers = 0;
  for (size_t k = 0; k < segs.size(); ++k) {
    const SegmentKind kind = segs[k].kind;
    const bool after_call = k > 0 && segs[k - 1].kind == SegmentKind::ToolCall;
    const bool after_response = k > 0 && segs[k - 1].kind == SegmentKind::ToolResponse;
    if (kind == SegmentKind::ToolResponse && !after_call)
      out.push_back("tool_response at segment " + std::to_string(k) + " does not follow a tool_call");
    if (kind == SegmentKind::ToolCall && (k + 1 == segs.size() || segs[k + 1].kind != SegmentKind::ToolResponse))
      out.push_back("tool_call at segment " + std::to_string(k) + " has no tool_response");
    if (kind == SegmentKind::ToolResponseThinking && !after_response)
      out.push_back("tool_response_thinking at segment " + std::to_string(k) + " does not follow a tool_response");
    if (kind == SegmentKind::Answer) {
      if (++answers > 1) out.push_back("more than one answer");
      else if (k + 1 != segs.size()) out.push_back("answer is not the final segment");
    }
  }
  return out;
}

Trajectory parse_trajectory(std::string_view text, const EpisodeLimits& limits) {
  Trajectory t;
  auto fail = [&](std::string why) {
    assign_turns(t.segments);
    t.terminal = Terminal::Malformed;
    t.diagnostic = std::move(why);
    return t;
  };
  size_t i = 0;
  for (;;) {
    const size_t ws = i;
    while (i < text.size() && is_space(text[i])) ++i;
    if (i == text.size()) {
      t.tail = std::string(text.substr(ws));
      break;
    }
    if (text[i] != '<') return fail("text outside tags at offset " + std::to_string(i));
    const size_t gt = text.find('>', i);
    if (gt == std::string_view::npos) return fail("unterminated tag at offset " + std::to_string(i));
    const std::string_view name = text.substr(i + 1, gt - i - 1);
    if (!name.empty() && name.front() == '/') return fail("unexpected closing tag <" + std::string(name) + ">");
    const auto kind = segment_from_tag(name);
    if (!kind) return fail("unknown tag <" + std::string(name) + ">");
    const std::string close = "</" + std::string(name) + ">";
    const size_t end = text.find(close, gt + 1);
    if (end == std::string_view::npos) return fail("unbalanced <" + std::string(name) + ">");
    const std::string_view body = text.substr(gt + 1, end - gt - 1);
    if (contains_tag_delimiter(body)) return fail("tags interleaved inside <" + std::string(name) + ">");
    t.segments.push_back(Segment{*kind, std::string(body), 0, std::string(text.substr(ws, i - ws))});
    i = end + close.size();
  }
  assign_turns(t.segments);
  if (auto problems = structural_problems(t.segments); !problems.empty()) return fail(problems.front());
  t.terminal = infer_terminal(t.segments, limits);
  return t;
}

std::string render_trajectory(const Trajectory& t) {
  if (auto problems = structural_problems(t.segments); !problems.empty())
    throw ContractError("cannot render trajectory: " + problems.front());
  if (!only_space(t.tail)) throw ContractError("cannot render trajectory: non-whitespace tail");
  std::string out;
  for (const auto& s : t.segments) {
    if (!only_space(s.lead)) throw ContractError("cannot render trajectory: non-whitespace between tags");
    if (contains_tag_delimiter(s.body))
      throw ContractError("cannot render trajectory: body of <" + std::string(segment_tag(s.kind)) +
                          "> contains a tag delimiter");
    const auto tag = segment_tag(s.kind);
    out += s.lead;
    out += '<';
    out += tag;
    out += '>';
    out += s.body;
    out += "</";
    out += tag;
    out += '>';
  }
  return out + t.tail;
}

FormatReport validate_format(const Trajectory& t, const EpisodeLimits& limits) {
  FormatReport r;
  if (t.terminal == Terminal::Malformed)
    r.diagnostics.push_back(t.diagnostic.empty() ? "malformed trajectory" : t.diagnostic);
  for (auto& p : structural_problems(t.segments)) r.diagnostics.push_back(std::move(p));
  for (const auto& s : t.segments)
    if (contains_tag_delimiter(s.body) || !only_space(s.lead))
      r.diagnostics.push_back("bad tag nesting in <" + std::string(segment_tag(s.kind)) + ">");
  if (t.terminal != Terminal::Answered || !t.answer()) r.diagnostics.push_back("missing answer");
  for (const auto& s : t.segments) {
    if (s.kind != SegmentKind::ToolCall) continue;
    const CallParse p = parse_tool_call(s.body);
    if (!p.call) r.diagnostics.push_back(std::string(call_error_name(p.error)) + ": " + p.diagnostic);
  }
  if (t.tool_call_count() > limits.max_turns) r.diagnostics.push_back("too many tool calls");
  if (static_cast<int>(t.segments.size()) > limits.max_total_segments) r.diagnostics.push_back("too many segments");
  r.ok = r.diagnostics.empty();
  return r;
}

// ---------------------------------------------------------------------------
// Tool call parsing
// ---------------------------------------------------------------------------

std::string_view call_error_name(CallErrorKind k) {
  switch (k) {
    case CallErrorKind::None: return "ok";
    case CallErrorKind::Syntax: return "syntax error";
    case CallErrorKind::UnknownTool: return "unknown tool";
    case CallErrorKind::Arity: return "arity mismatch";
    case CallErrorKind::Keyword: return "keyword mismatch";
  }
  return "ok";
}

namespace {

struct RawArg {
  std::string key;  // empty for positional
  std::string value;
};

class CallLexer {
 public:
  explicit CallLexer(std::string_view s) : s_(s) {}

  void skip() {
    while (i_ < s_.size() && is_space(s_[i_])) ++i_;
  }
  bool done() const { return i_ >= s_.size(); }
  char peek() const { return done() ? '\0' : s_[i_]; }
  bool eat(char c) {
    skip();
    if (peek() != c) return false;
    ++i_;
    return true;
  }
  std::optional<std::string> ident() {
    skip();
    const size_t b = i_;
    if (done() || !(std::isalpha(static_cast<unsigned char>(peek())) || peek() == '_')) return std::nullopt;
    while (!done() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_')) ++i_;
    return std::string(s_.substr(b, i_ - b));
  }
  std::optional<std::string> value(std::string& err) {
    skip();
    if (peek() == '"' || peek() == '\'') {
      const char q = s_[i_++];
      std::string out;
      while (!done()) {
        char c = s_[i_++];
        if (c == '\\' && !done()) {
          out += s_[i_++];
        } else if (c == q) {
          return out;
        } else {
          out += c;
        }
      }
      err = "unterminated string";
      return std::nullopt;
    }
    const size_t b = i_;
    while (!done() && peek() != ',' && peek() != ')' && peek() != '(' && peek() != '=' && peek() != '"' &&
           peek() != '\'')
      ++i_;
    std::string out = trim(s_.substr(b, i_ - b));
    if (out.empty()) {
      err = "expected a value";
      return std::nullopt;
    }
    return out;
  }
  size_t pos() const { return i_; }
  void seek(size_t p) { i_ = p; }

 private:
  std::string_view s_;
  size_t i_ = 0;
};

}  // namespace

CallParse parse_tool_call(std::string_view body) {
  CallParse out;
  auto fail = [&](CallErrorKind k, std::string msg) {
    out.call.reset();
    out.error = k;
    out.diagnostic = std::move(msg);
    return out;
  };
  CallLexer lx(body);
  auto name = lx.ident();
  if (!name) return fail(CallErrorKind::Syntax, "expected a tool name");
  out.tool_name = *name;
  if (!lx.eat('(')) return fail(CallErrorKind::Syntax, "expected '(' after " + *name);

  std::vector<RawArg> raw;
  bool seen_keyword = false;
  for (;;) {
    if (lx.eat(')')) break;
    RawArg a;
    const size_t mark = lx.pos();
    if (auto key = lx.ident(); key && lx.eat('=')) {
      a.key = *key;
      seen_keyword = true;
    } else {
      lx.seek(mark);
      if (seen_keyword) return fail(CallErrorKind::Syntax, "positional argument after keyword argument");
    }
    std::string err;
    auto v = lx.value(err);
    if (!v) return fail(CallErrorKind::Syntax, err);
    a.value = std::move(*v);
    raw.push_back(std::move(a));
    if (lx.eat(',')) continue;
    if (lx.eat(')')) break;
    return fail(CallErrorKind::Syntax, "expected ',' or ')'");
  }
  lx.skip();
  if (!lx.done()) return fail(CallErrorKind::Syntax, "unexpected text after ')'");

  const auto kind = tool_from_name(*name);
  if (!kind) return fail(CallErrorKind::UnknownTool, "unknown tool: " + *name);
  const ToolSignature& sig = tool_signature(*kind);

  std::vector<std::string> order = sig.required;
  order.insert(order.end(), sig.optional.begin(), sig.optional.end());
  std::vector<const RawArg*> positional;
  for (const auto& a : raw)
    if (a.key.empty()) positional.push_back(&a);
  if (*kind == ToolKind::Hotel && positional.size() == 4)
    order = {"city_name", "hotel_name", "checkin_date", "checkout_date"};
  if (positional.size() > order.size())
    return fail(CallErrorKind::Arity, *name + " takes at most " + std::to_string(order.size()) +
                                          " positional arguments, got " + std::to_string(positional.size()));

  std::map<std::string, std::string> bound;
  for (size_t k = 0; k < positional.size(); ++k) bound[order[k]] = positional[k]->value;
  ToolCall call;
  call.tool = *kind;
  auto known = [&](const std::string& key) {
    return std::find(sig.required.begin(), sig.required.end(), key) != sig.required.end() ||
           std::find(sig.optional.begin(), sig.optional.end(), key) != sig.optional.end();
  };
  for (const auto& a : raw) {
    if (a.key.empty()) continue;
    std::string key = a.key;
    for (const auto& [alias, canonical] : sig.aliases)
      if (alias == key) key = canonical;
    if (known(key)) {
      if (!bound.emplace(key, a.value).second)
        return fail(CallErrorKind::Keyword, *name + " got multiple values for " + key);
    } else if (sig.accepts_extra_kwargs) {
      if (!call.extras.emplace(a.key, a.value).second)
        return fail(CallErrorKind::Keyword, *name + " got multiple values for " + a.key);
    } else {
      return fail(CallErrorKind::Keyword, *name + " got an unexpected keyword argument " + a.key);
    }
  }
  std::vector<std::string> missing;
  for (const auto& r : sig.required)
    if (!bound.count(r)) missing.push_back(r);
  if (!missing.empty()) return fail(CallErrorKind::Arity, *name + " missing required " + join(missing, ", "));
  for (const auto& k : order)
    if (auto it = bound.find(k); it != bound.end()) call.args.emplace_back(k, it->second);
  // A four-argument positional hotel call lists keys in a different order; restore canonical order.
  if (*kind == ToolKind::Hotel) {
    std::vector<std::pair<std::string, std::string>> canon;
    for (const auto& k : {"city_name", "checkin_date", "checkout_date", "hotel_name"})
      if (auto v = call.get(k)) canon.emplace_back(k, *v);
    call.args = std::move(canon);
  }
  out.call = std::move(call);
  return out;
}

ItineraryParse extract_itinerary(std::string_view answer_body) { return parse_itinerary_block(answer_body); }

// ---------------------------------------------------------------------------
// Episode loop
// ---------------------------------------------------------------------------

ToolResponse SandboxEnvironment::execute(const ToolCall& call, Rng& rng) {
  if (live_.failure_rate <= 0 && live_.drift_rate <= 0) return sandbox_.call(call);
  return call_tool_live(sandbox_, live_, call, rng);
}

ToolResponse call_error_response(const CallParse& parsed) {
  ToolResponse r;
  r.tool = tool_from_name(parsed.tool_name).value_or(ToolKind::Web);
  r.ok = false;
  r.text = json{{"tool", parsed.tool_name},
                {"status", "error"},
                {"error", std::string(call_error_name(parsed.error)) + ": " + parsed.diagnostic}}
               .dump();
  return r;
}

Trajectory run_episode(Policy& policy, Environment& env, const Query& query, const EpisodeLimits& limits, Rng& rng) {
  limits.validate();
  Trajectory t;
  t.query_id = query.id;
  EpisodeState st;
  st.query = &query;
  st.limits = limits;
  int turn = 0;
  try {
    for (;;) {
      Action a = policy.act(st, rng);
      for (auto& d : a.decisions) t.decisions.push_back(d);
      if (!a.answer && st.tool_calls >= limits.max_turns) {
        t.terminal = Terminal::TurnLimit;
        break;
      }
      const bool reflect = !a.reflection.empty() && !st.segments.empty() &&
                           st.segments.back().kind == SegmentKind::ToolResponse;
      const size_t needed = (reflect ? 1 : 0) + (a.thought.empty() ? 0 : 1) + (a.answer ? 1 : 2);
      if (st.segments.size() + needed > static_cast<size_t>(limits.max_total_segments)) {
        t.terminal = Terminal::LengthLimit;
        break;
      }
      if (reflect) st.segments.push_back(Segment{SegmentKind::ToolResponseThinking, a.reflection, turn, ""});
      ++turn;
      if (!a.thought.empty()) {
        const auto kind = turn == 1 || a.answer ? SegmentKind::Think : SegmentKind::ToolCallThinking;
        st.segments.push_back(Segment{kind, a.thought, turn, ""});
      }
      if (a.answer) {
        st.segments.push_back(Segment{SegmentKind::Answer, a.body, turn, ""});
        t.terminal = Terminal::Answered;
        break;
      }
      st.segments.push_back(Segment{SegmentKind::ToolCall, a.body, turn, ""});
      ++st.tool_calls;
      const CallParse parsed = parse_tool_call(a.body);
      ToolResponse resp = parsed.call ? env.execute(*parsed.call, rng) : call_error_response(parsed);
      st.segments.push_back(Segment{SegmentKind::ToolResponse, resp.text, turn, ""});
      st.observations.push_back(Observation{turn, parsed.call, std::move(resp)});
      for (auto d : policy.observe(st, st.observations.back())) {
        d.masked = true;
        t.decisions.push_back(d);
      }
    }
  } catch (const std::exception& e) {
    t.terminal = Terminal::Malformed;
    t.diagnostic = std::string("episode failed: ") + e.what();
  }
  t.segments = std::move(st.segments);
  return t;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

json to_json(const DecisionRecord& d) {
  return json{{"head", std::string(head_name(d.head))}, {"bucket", d.bucket},     {"choice", d.choice},
              {"valid", d.valid},                       {"log_prob", d.log_prob}, {"masked", d.masked}};
}

DecisionRecord decision_from_json(const json& j) {
  DecisionRecord d;
  const std::string h = j.at("head");
  bool found = false;
  for (Head cand : {Head::Kind, Head::Selector, Head::Observation})
    if (head_name(cand) == h) {
      d.head = cand;
      found = true;
    }
  if (!found) throw ConfigError("unknown decision head: " + h);
  d.bucket = j.at("bucket");
  d.choice = j.at("choice");
  d.valid = j.value("valid", 0xffffffffu);
  d.log_prob = j.at("log_prob");
  d.masked = j.at("masked");
  if (d.bucket < 0 || d.bucket >= head_buckets(d.head) || d.choice < 0 || d.choice >= head_arity(d.head))
    throw ConfigError("decision record out of range");
  return d;
}

json to_json(const Trajectory& t, const Query* query) {
  json j{{"query_id", t.query_id}, {"text", render_trajectory(t)}, {"terminal", std::string(terminal_name(t.terminal))}};
  j["decisions"] = json::array();
  for (const auto& d : t.decisions) j["decisions"].push_back(to_json(d));
  if (!t.diagnostic.empty()) j["diagnostic"] = t.diagnostic;
  if (query) j["query"] = to_json(*query);
  return j;
}

Trajectory trajectory_from_json(const json& j, const EpisodeLimits& limits) {
  Trajectory t = parse_trajectory(j.at("text").get<std::string>(), limits);
  t.query_id = j.at("query_id");
  const auto term = terminal_from_name(j.at("terminal").get<std::string>());
  if (!term) throw ConfigError("unknown terminal state");
  if (t.terminal != Terminal::Malformed) t.terminal = *term;
  if (j.contains("diagnostic")) t.diagnostic = j["diagnostic"];
  for (const auto& d : j.at("decisions")) t.decisions.push_back(decision_from_json(d));
  return t;
}

}  // namespace deeptravel
