#include <gtest/gtest.h>

#include <functional>

#include "support.hpp"
#include "tutee/error.hpp"

using namespace tutee;
using nlohmann::json;
using testing_support::flow_documents;
using testing_support::flows;

namespace {

json tiny_flow() {
  return json::parse(R"({
    "flow_id": "tiny", "condition": "baseline", "entry": "a",
    "states": {
      "a": {"prompts": [{"text": "Which {noun}?", "emotion": "curious", "level": "low"}],
            "expect": "entity_selection", "transitions": [{"guard": "always", "to": "b"}]},
      "b": {"prompts": [{"text": "Thanks, {entity}.", "emotion": "happy"}]}
    }})");
}

Errc error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::schema;
}

std::set<CognitiveLevel> levels(const FlowDefinition& f) {
  std::set<CognitiveLevel> out;
  for (const auto& [id, s] : f.states) {
    for (const auto& line : s.prompts) {
      for (const auto& v : line.variants) out.insert(v.level);
    }
  }
  return out;
}

}  // namespace

TEST(Flows, StockSetLoadsForEveryCondition) {
  for (const char* cond : {"baseline", "humour"}) {
    const auto set = flows(cond);
    for (auto id : kStockFlows) EXPECT_TRUE(set.count(std::string(id))) << cond << ' ' << id;
  }
  EXPECT_EQ(flows("humour").at("describe").condition, "baseline");
  EXPECT_EQ(flows("humour").at("explain").condition, "humour");
  EXPECT_EQ(flows("no-such-condition").at("explain").condition, "baseline");
}

TEST(Flows, BaselineKeepsEnthusiasticWording) {
  const auto set = flows();
  const auto& done = set.at("explain").state("done");
  EXPECT_EQ(done.prompts.at(1).variants.at(0).text, "I'm really interested in {topic}.");
}

TEST(Flows, ConditionsShareStateGraphs) {
  const auto base = flows("baseline");
  const auto humour = flows("humour");
  int differing = 0;
  for (const auto& [id, f] : base) {
    EXPECT_TRUE(same_graph(f, humour.at(id))) << id;
    differing += to_json(f) != to_json(humour.at(id));
  }
  EXPECT_GE(differing, 1);
}

TEST(Flows, SameGraphDetectsShapeChanges) {
  const auto a = parse_flow(tiny_flow());
  auto doc = tiny_flow();
  doc["states"]["b"]["prompts"][0]["text"] = "Cheers.";
  EXPECT_TRUE(same_graph(a, parse_flow(doc)));
  doc["states"]["a"]["expect"] = "category_selection";
  EXPECT_FALSE(same_graph(a, parse_flow(doc)));
}

TEST(Flows, CognitiveLevels) {
  const auto set = flows();
  const auto describe = levels(set.at("describe"));
  EXPECT_EQ(describe, std::set<CognitiveLevel>{CognitiveLevel::low});
  EXPECT_TRUE(levels(set.at("explain")).count(CognitiveLevel::high));
  EXPECT_TRUE(levels(set.at("compare")).count(CognitiveLevel::high));
}

TEST(Flows, TelljokeHasNoEffects) {
  const auto set = flows();
  for (const auto& [id, s] : set.at("telljoke").states) EXPECT_EQ(s.effect, Effect::none) << id;
}

TEST(Flows, EveryPathEndsInATerminalState) {
  // Exhaustive walk: all paths are finite and end in a state with no transitions.
  for (const auto& [fid, f] : flows()) {
    std::function<void(const std::string&, int)> walk = [&](const std::string& id, int depth) {
      ASSERT_LT(depth, 32) << fid;
      const auto& s = f.state(id);
      if (s.terminal()) {
        EXPECT_EQ(s.expect, Expectation::none) << fid << '/' << id;
        return;
      }
      for (const auto& t : s.transitions) walk(t.to, depth + 1);
    };
    walk(f.entry, 0);
  }
}

TEST(Validate, RejectsBrokenFlows) {
  auto doc = tiny_flow();
  EXPECT_NO_THROW(validate_flow(parse_flow(doc)));

  doc["states"]["a"]["transitions"][0]["to"] = "nowhere";
  EXPECT_EQ(error_of([&] { validate_flow(parse_flow(doc)); }), Errc::unreachable_state);

  doc = tiny_flow();
  doc["states"]["orphan"] = {{"prompts", json::array()}};
  EXPECT_EQ(error_of([&] { validate_flow(parse_flow(doc)); }), Errc::unreachable_state);

  doc = tiny_flow();
  doc["states"]["b"]["expect"] = "free_text";
  doc["states"]["b"]["transitions"] = {{{"guard", "always"}, {"to", "a"}}};
  EXPECT_EQ(error_of([&] { validate_flow(parse_flow(doc)); }), Errc::unbounded_flow);

  doc = tiny_flow();
  doc["states"]["a"]["transitions"] = {{{"guard", "known_entity"}, {"to", "b"}}};
  EXPECT_EQ(error_of([&] { validate_flow(parse_flow(doc)); }), Errc::schema);

  doc = tiny_flow();
  doc["states"]["b"]["prompts"][0]["emotion"] = "furious";
  EXPECT_EQ(error_of([&] { validate_flow(parse_flow(doc)); }), Errc::schema);

  doc = tiny_flow();
  doc["states"]["a"]["prompts"][0]["text"] = "Which {category}?";
  EXPECT_EQ(error_of([&] { validate_flow(parse_flow(doc)); }), Errc::missing_slot);

  doc = tiny_flow();
  doc["states"]["a"]["transitions"][0]["guard"] = "bogus_guard";
  EXPECT_EQ(error_of([&] { parse_flow(doc); }), Errc::schema);
}

TEST(Validate, RoundLimit) {
  json doc{{"flow_id", "long"}, {"entry", "s0"}, {"states", json::object()}};
  for (int i = 0; i < 7; ++i) {
    doc["states"]["s" + std::to_string(i)] = {
        {"prompts", {{{"text", "Tell me more."}, {"emotion", "curious"}}}},
        {"expect", "free_text"},
        {"transitions", {{{"guard", "always"}, {"to", "s" + std::to_string(i + 1)}}}}};
  }
  doc["states"]["s7"] = {{"prompts", {{{"text", "Done."}}}}};
  EXPECT_EQ(error_of([&] { validate_flow(parse_flow(doc)); }), Errc::unbounded_flow);
  doc["states"].erase("s6");
  doc["states"]["s5"]["transitions"][0]["to"] = "s7";
  EXPECT_NO_THROW(validate_flow(parse_flow(doc)));
}

TEST(Validate, DuplicateFlowInOneCondition) {
  std::vector<json> docs{tiny_flow(), tiny_flow()};
  EXPECT_EQ(error_of([&] { load_flows(docs, "baseline"); }), Errc::schema);
}

TEST(Template, Fill) {
  EXPECT_EQ(fill_template("What category does {entity} belong to?", {{"entity", "shale"}}),
            "What category does shale belong to?");
  EXPECT_EQ(fill_template("No slots here.", {}), "No slots here.");
  EXPECT_EQ(fill_template("What does the skin of {category_plural} look like?", {{"category_plural", "mammals"}}),
            "What does the skin of mammals look like?");
  EXPECT_EQ(fill_template("{Entity} has holes", {{"entity", "pumice"}}), "Pumice has holes");
  EXPECT_EQ(error_of([] { fill_template("Hi {entity}", {}); }), Errc::missing_slot);
}

TEST(Variants, SingleAndDeterministic) {
  const std::vector<PromptVariant> one{{"only", "neutral"}};
  EXPECT_EQ(select_variant(one, 5, 9).text, "only");
  const std::vector<PromptVariant> three{{"a"}, {"b"}, {"c"}};
  for (std::uint64_t t = 0; t < 50; ++t) EXPECT_EQ(&select_variant(three, 42, t), &select_variant(three, 42, t));
  EXPECT_THROW(select_variant(std::span<const PromptVariant>{}, 1, 1), Error);
}

TEST(Variants, FrequenciesAreUniform) {
  for (std::size_t k = 2; k <= 5; ++k) {
    std::vector<PromptVariant> vs;
    for (std::size_t i = 0; i < k; ++i) vs.push_back({std::to_string(i)});
    std::vector<int> counts(k);
    const int draws = 10'000;
    for (int i = 0; i < draws; ++i) {
      const auto& v = select_variant(vs, static_cast<std::uint64_t>(i / 100), static_cast<std::uint64_t>(i % 100));
      ++counts[static_cast<std::size_t>(&v - vs.data())];
    }
    for (int c : counts) EXPECT_NEAR(static_cast<double>(c) / draws, 1.0 / k, 0.05) << "k=" << k;
  }
}

TEST(Documents, EveryShippedFileParses) {
  const auto docs = flow_documents();
  EXPECT_EQ(docs.size(), 10u);
  for (const auto& d : docs) EXPECT_NO_THROW(validate_flow(parse_flow(d))) << d.value("flow_id", "?");
}
