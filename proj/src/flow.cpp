#include "tutee/flow.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "tutee/curriculum.hpp"
#include "tutee/error.hpp"

namespace tutee {
namespace {

using nlohmann::json;

struct NameTable {
  Expectation value;
  std::string_view name;
};

constexpr NameTable kExpectations[] = {
    {Expectation::free_text, "free_text"},
    {Expectation::sentence_selection, "sentence_selection"},
    {Expectation::entity_selection, "entity_selection"},
    {Expectation::category_selection, "category_selection"},
    {Expectation::feature_selection, "feature_selection"},
    {Expectation::notebook_entry_selection, "notebook_entry_selection"},
    {Expectation::image_click, "image_click"},
    {Expectation::none, "none"},
};

constexpr std::pair<Effect, std::string_view> kEffects[] = {
    {Effect::none, "none"},
    {Effect::assert_category, "assert_category"},
    {Effect::assert_feature, "assert_feature"},
    {Effect::assert_explanation, "assert_explanation"},
    {Effect::assert_comparison, "assert_comparison"},
    {Effect::add_fun_fact, "add_fun_fact"},
    {Effect::correct_note, "correct_note"},
    {Effect::classify, "classify"},
};

constexpr std::pair<GuardKind, std::string_view> kGuards[] = {
    {GuardKind::always, "always"},
    {GuardKind::known_entity, "known_entity"},
    {GuardKind::unknown_entity, "unknown_entity"},
    {GuardKind::has_notes, "has_notes"},
    {GuardKind::classified_correctly, "classified_correctly"},
    {GuardKind::classified_incorrectly, "classified_incorrectly"},
    {GuardKind::attempts_exhausted, "attempts_exhausted"},
    {GuardKind::selected_note_is, "selected_note_is"},
};

Effect parse_effect(std::string_view text) {
  for (const auto& [e, name] : kEffects) {
    if (name == text) return e;
  }
  throw Error(Errc::schema, "unknown effect '" + std::string(text) + "'");
}

CognitiveLevel parse_level(std::string_view text) {
  if (text.empty() || text == "none") return CognitiveLevel::none;
  if (text == "low") return CognitiveLevel::low;
  if (text == "high") return CognitiveLevel::high;
  throw Error(Errc::schema, "unknown cognitive level '" + std::string(text) + "'");
}

const char* to_string(CognitiveLevel level) {
  switch (level) {
    case CognitiveLevel::low: return "low";
    case CognitiveLevel::high: return "high";
    case CognitiveLevel::none: break;
  }
  return "none";
}

PromptVariant parse_variant(const json& j) {
  if (!j.is_object() || !j.contains("text") || !j.at("text").is_string()) {
    throw Error(Errc::schema, "prompt variant needs a text");
  }
  PromptVariant v;
  v.text = j.at("text").get<std::string>();
  v.emotion = j.value("emotion", std::string("neutral"));
  v.level = parse_level(j.value("level", std::string{}));
  return v;
}

std::vector<PromptLine> parse_lines(const json& arr) {
  if (!arr.is_array()) throw Error(Errc::schema, "prompts must be an array");
  std::vector<PromptLine> lines;
  for (const auto& item : arr) {
    PromptLine line;
    if (item.is_object() && item.contains("variants")) {
      for (const auto& v : item.at("variants")) line.variants.push_back(parse_variant(v));
    } else {
      line.variants.push_back(parse_variant(item));
    }
    if (line.variants.empty()) throw Error(Errc::schema, "prompt line without variants");
    lines.push_back(std::move(line));
  }
  return lines;
}

json lines_to_json(const std::vector<PromptLine>& lines) {
  json arr = json::array();
  for (const auto& line : lines) {
    auto one = [](const PromptVariant& v) {
      json j{{"text", v.text}, {"emotion", v.emotion}};
      if (v.level != CognitiveLevel::none) j["level"] = to_string(v.level);
      return j;
    };
    if (line.variants.size() == 1) {
      arr.push_back(one(line.variants.front()));
    } else {
      json vs = json::array();
      for (const auto& v : line.variants) vs.push_back(one(v));
      arr.push_back({{"variants", std::move(vs)}});
    }
  }
  return arr;
}

// Slots an effect reads once its state's input is bound.
std::vector<std::string> effect_inputs(Effect e) {
  switch (e) {
    case Effect::assert_category: return {"entity", "category"};
    case Effect::assert_feature: return {"entity", "feature"};
    case Effect::assert_explanation: return {"entity", "sentence", "text"};
    case Effect::assert_comparison: return {"entity_a", "entity_b", "feature_a", "feature_b"};
    case Effect::add_fun_fact: return {"entity", "fact", "reason"};
    case Effect::correct_note: return {"note"};
    case Effect::classify: return {"entity"};
    case Effect::none: break;
  }
  return {};
}

std::string slot_key(std::string_view placeholder) {
  std::string key(placeholder);
  if (!key.empty()) key[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(key[0])));
  return key;
}

class Checker {
 public:
  Checker(const FlowDefinition& flow, const FlowLimits& limits) : flow_(flow), limits_(limits) {}

  void run() {
    std::set<std::string> bound(std::begin(kGlobalSlots), std::end(kGlobalSlots));
    walk(flow_.entry, bound, 0);
    for (const auto& [id, _] : flow_.states) {
      if (visited_.count(id) == 0) {
        throw Error(Errc::unreachable_state, flow_.id + ": state '" + id + "' is unreachable from entry");
      }
    }
  }

 private:
  void require(const std::set<std::string>& bound, std::string_view tmpl, const std::string& state) {
    for (const auto& slot : template_slots(tmpl)) {
      if (bound.count(slot_key(slot)) == 0) {
        throw Error(Errc::missing_slot,
                    flow_.id + "/" + state + ": slot {" + slot + "} may be unbound in \"" + std::string(tmpl) + "\"");
      }
    }
  }

  void walk(const std::string& id, std::set<std::string> bound, int rounds) {
    auto it = flow_.states.find(id);
    if (it == flow_.states.end()) {
      throw Error(Errc::unreachable_state, flow_.id + ": transition to missing state '" + id + "'");
    }
    if (on_path_.count(id) != 0) {
      throw Error(Errc::unbounded_flow, flow_.id + ": cycle through state '" + id + "'");
    }
    visited_.insert(id);
    const auto& s = it->second;

    for (const auto* lines : {&s.prompts, &s.retry}) {
      for (const auto& line : *lines) {
        for (const auto& v : line.variants) require(bound, v.text, id);
      }
    }
    require(bound, s.expected_target, id);

    if (s.expect != Expectation::none) {
      ++rounds;
      bound.insert(s.bind);
      if (s.expect == Expectation::category_selection) bound.insert(s.bind + "_plural");
    }
    if (s.effect == Effect::classify) {
      bound.insert("verdict");
      bound.insert("verdict_plural");
    }
    if (rounds > limits_.max_rounds) {
      throw Error(Errc::unbounded_flow, flow_.id + ": more than " + std::to_string(limits_.max_rounds) +
                                            " input rounds on a path through '" + id + "'");
    }
    for (const auto& slot : effect_inputs(s.effect)) {
      if (bound.count(slot) == 0) {
        throw Error(Errc::missing_slot, flow_.id + "/" + id + ": effect " + to_string(s.effect) +
                                            " needs slot '" + slot + "'");
      }
    }
    if (s.effect == Effect::correct_note && s.expect != Expectation::category_selection &&
        s.expect != Expectation::feature_selection && s.expect != Expectation::free_text) {
      throw Error(Errc::schema, flow_.id + "/" + id + ": correct_note needs a category, feature or text input");
    }
    if (!s.distinct_from.empty() && bound.count(s.distinct_from) == 0) {
      throw Error(Errc::missing_slot, flow_.id + "/" + id + ": distinct_from slot is unbound");
    }

    on_path_.insert(id);
    for (const auto& t : s.transitions) {
      if (t.guard.kind == GuardKind::has_notes && t.guard.arg != "*" && bound.count(t.guard.arg) == 0) {
        throw Error(Errc::missing_slot, flow_.id + "/" + id + ": guard " + t.guard.str() + " reads an unbound slot");
      }
      walk(t.to, bound, rounds);
    }
    on_path_.erase(id);
  }

  const FlowDefinition& flow_;
  const FlowLimits& limits_;
  std::set<std::string> visited_;
  std::set<std::string> on_path_;
};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

const char* to_string(Expectation e) {
  for (const auto& [value, name] : kExpectations) {
    if (value == e) return name.data();
  }
  return "none";
}

Expectation parse_expectation(std::string_view text) {
  for (const auto& [value, name] : kExpectations) {
    if (name == text) return value;
  }
  throw Error(Errc::schema, "unknown expectation '" + std::string(text) + "'");
}

const char* to_string(Effect e) {
  for (const auto& [value, name] : kEffects) {
    if (value == e) return name.data();
  }
  return "none";
}

Guard Guard::parse(std::string_view text) {
  Guard g;
  std::string_view head = text;
  if (const auto open = text.find('('); open != std::string_view::npos) {
    if (text.back() != ')') throw Error(Errc::schema, "malformed guard '" + std::string(text) + "'");
    head = text.substr(0, open);
    g.arg = std::string(text.substr(open + 1, text.size() - open - 2));
  }
  const auto it = std::find_if(std::begin(kGuards), std::end(kGuards),
                               [&](const auto& entry) { return entry.second == head; });
  if (it == std::end(kGuards)) throw Error(Errc::schema, "unknown guard '" + std::string(text) + "'");
  g.kind = it->first;

  const bool takes_arg = g.kind == GuardKind::has_notes || g.kind == GuardKind::selected_note_is;
  if (takes_arg == g.arg.empty()) {
    throw Error(Errc::schema, "guard '" + std::string(text) + "' has the wrong arity");
  }
  if (g.kind == GuardKind::selected_note_is && g.arg != "category" && g.arg != "feature" &&
      g.arg != "explanation") {
    throw Error(Errc::schema, "selected_note_is takes category, feature or explanation");
  }
  return g;
}

std::string Guard::str() const {
  const auto it = std::find_if(std::begin(kGuards), std::end(kGuards),
                               [&](const auto& entry) { return entry.first == kind; });
  std::string out(it->second);
  if (!arg.empty()) out += "(" + arg + ")";
  return out;
}

const StateSpec& FlowDefinition::state(std::string_view state_id) const {
  auto it = states.find(std::string(state_id));
  if (it == states.end()) throw Error(Errc::unreachable_state, id + ": no state '" + std::string(state_id) + "'");
  return it->second;
}

std::string default_slot(Expectation e) {
  switch (e) {
    case Expectation::free_text: return "text";
    case Expectation::sentence_selection: return "sentence";
    case Expectation::entity_selection: return "entity";
    case Expectation::category_selection: return "category";
    case Expectation::feature_selection: return "feature";
    case Expectation::notebook_entry_selection: return "note";
    case Expectation::image_click: return "entity";
    case Expectation::none: break;
  }
  return {};
}

FlowDefinition parse_flow(const json& doc) {
  FlowDefinition flow;
  try {
    if (!doc.is_object()) throw Error(Errc::schema, "flow document must be an object");
    flow.id = doc.at("flow_id").get<std::string>();
    flow.condition = doc.value("condition", std::string("baseline"));
    flow.entry = doc.at("entry").get<std::string>();
    flow.original_wording = doc.value("original", false);
    for (const auto& [id, body] : doc.at("states").items()) {
      StateSpec s;
      s.id = id;
      s.prompts = parse_lines(body.value("prompts", json::array()));
      s.expect = parse_expectation(body.value("expect", std::string("none")));
      s.bind = body.value("bind", default_slot(s.expect));
      if (body.contains("effect") && !body.at("effect").is_null()) {
        s.effect = parse_effect(body.at("effect").get<std::string>());
      }
      s.expected_target = body.value("expected_target", std::string{});
      s.distinct_from = body.value("distinct_from", std::string{});
      s.retry = parse_lines(body.value("retry", json::array()));
      for (const auto& t : body.value("transitions", json::array())) {
        s.transitions.push_back({Guard::parse(t.at("guard").get<std::string>()), t.at("to").get<std::string>()});
      }
      flow.states.emplace(id, std::move(s));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::schema, std::string("flow document: ") + e.what());
  }
  if (flow.id.empty()) throw Error(Errc::schema, "flow_id must not be empty");
  return flow;
}

json to_json(const FlowDefinition& flow) {
  json states = json::object();
  for (const auto& [id, s] : flow.states) {
    json body{{"prompts", lines_to_json(s.prompts)}, {"expect", to_string(s.expect)}};
    if (s.expect != Expectation::none) body["bind"] = s.bind;
    if (s.effect != Effect::none) body["effect"] = to_string(s.effect);
    if (!s.expected_target.empty()) body["expected_target"] = s.expected_target;
    if (!s.distinct_from.empty()) body["distinct_from"] = s.distinct_from;
    if (!s.retry.empty()) body["retry"] = lines_to_json(s.retry);
    body["transitions"] = json::array();
    for (const auto& t : s.transitions) body["transitions"].push_back({{"guard", t.guard.str()}, {"to", t.to}});
    states[id] = std::move(body);
  }
  return {{"flow_id", flow.id},   {"condition", flow.condition}, {"entry", flow.entry},
          {"original", flow.original_wording}, {"states", std::move(states)}};
}

void validate_flow(const FlowDefinition& flow, const FlowLimits& limits) {
  if (flow.states.count(flow.entry) == 0) {
    throw Error(Errc::unreachable_state, flow.id + ": entry state '" + flow.entry + "' does not exist");
  }
  for (const auto& [id, s] : flow.states) {
    for (const auto* lines : {&s.prompts, &s.retry}) {
      for (const auto& line : *lines) {
        for (const auto& v : line.variants) {
          if (limits.emotions.count(v.emotion) == 0) {
            throw Error(Errc::schema, flow.id + "/" + id + ": emotion '" + v.emotion + "' is not in the vocabulary");
          }
        }
      }
    }
    if (s.terminal()) {
      if (s.expect != Expectation::none) {
        throw Error(Errc::schema, flow.id + "/" + id + ": a terminal state cannot wait for input");
      }
    } else if (std::none_of(s.transitions.begin(), s.transitions.end(),
                            [](const Transition& t) { return t.guard.kind == GuardKind::always; })) {
      throw Error(Errc::schema, flow.id + "/" + id + ": no default 'always' transition");
    }
    if (s.expect == Expectation::none && s.effect != Effect::none) {
      throw Error(Errc::schema, flow.id + "/" + id + ": effects run on input, but the state takes none");
    }
    if (s.expect != Expectation::sentence_selection && !s.expected_target.empty()) {
      throw Error(Errc::schema, flow.id + "/" + id + ": expected_target only applies to sentence selection");
    }
  }
  Checker(flow, limits).run();
}

FlowSet load_flows(std::span<const json> documents, std::string_view condition, const FlowLimits& limits) {
  FlowSet chosen;
  FlowSet fallback;
  for (const auto& doc : documents) {
    auto flow = parse_flow(doc);
    validate_flow(flow, limits);
    if (flow.condition == condition) {
      if (chosen.count(flow.id) != 0) {
        throw Error(Errc::schema, "flow '" + flow.id + "' defined twice for condition '" + flow.condition + "'");
      }
      chosen.emplace(flow.id, std::move(flow));
    } else if (flow.condition == "baseline") {
      fallback.emplace(flow.id, std::move(flow));
    }
  }
  for (auto& [id, flow] : fallback) chosen.try_emplace(id, std::move(flow));
  return chosen;
}

std::vector<json> read_flow_documents(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<json> docs;
  for (const auto& f : files) {
    std::ifstream in(f);
    try {
      docs.push_back(json::parse(in));
    } catch (const json::exception& e) {
      throw Error(Errc::schema, f.string() + ": " + e.what());
    }
  }
  return docs;
}

bool same_graph(const FlowDefinition& a, const FlowDefinition& b) {
  if (a.id != b.id || a.entry != b.entry || a.states.size() != b.states.size()) return false;
  for (const auto& [id, sa] : a.states) {
    auto it = b.states.find(id);
    if (it == b.states.end()) return false;
    const auto& sb = it->second;
    if (sa.expect != sb.expect || sa.bind != sb.bind || sa.effect != sb.effect ||
        sa.expected_target != sb.expected_target || sa.distinct_from != sb.distinct_from ||
        sa.transitions != sb.transitions || sa.prompts.size() != sb.prompts.size()) {
      return false;
    }
  }
  return true;
}

std::vector<std::string> template_slots(std::string_view tmpl) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while ((pos = tmpl.find('{', pos)) != std::string_view::npos) {
    const auto close = tmpl.find('}', pos);
    if (close == std::string_view::npos) break;
    out.emplace_back(tmpl.substr(pos + 1, close - pos - 1));
    pos = close + 1;
  }
  return out;
}

std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find('{', pos);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    const auto close = tmpl.find('}', open);
    if (close == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    out.append(tmpl.substr(pos, open - pos));
    const auto name = tmpl.substr(open + 1, close - open - 1);
    const auto key = slot_key(name);
    auto it = values.find(key);
    if (it == values.end()) throw Error(Errc::missing_slot, "template slot {" + std::string(name) + "} is unbound");
    const bool upper = !name.empty() && std::isupper(static_cast<unsigned char>(name.front()));
    out += upper ? capitalize(it->second) : it->second;
    pos = close + 1;
  }
  return out;
}

const PromptVariant& select_variant(std::span<const PromptVariant> variants, std::uint64_t seed,
                                    std::uint64_t turn) {
  if (variants.empty()) throw Error(Errc::invalid_argument, "no prompt variants to choose from");
  if (variants.size() == 1) return variants.front();
  const auto draw = splitmix64(seed ^ splitmix64(turn));
  return variants[draw % variants.size()];
}

}  // namespace tutee
