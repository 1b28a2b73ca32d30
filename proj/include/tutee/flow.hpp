#pragma once
// Declarative conversation flows. Each button-initiated conversation is a
// small state machine loaded from JSON: states emit prompts, wait for one
// kind of input, run at most one knowledge-store effect, then follow the
// first transition whose guard holds.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace tutee {

enum class Expectation {
  free_text,
  sentence_selection,
  entity_selection,
  category_selection,
  feature_selection,
  notebook_entry_selection,
  image_click,
  none,
};

const char* to_string(Expectation e);
Expectation parse_expectation(std::string_view text);

// Gallagher-Aschner style question level: low = cognitive memory,
// high = convergent thinking. Monologue lines carry none.
enum class CognitiveLevel { none, low, high };

struct PromptVariant {
  std::string text;
  std::string emotion = "neutral";
  CognitiveLevel level = CognitiveLevel::none;
};

// One emitted line; several variants means the wording is drawn per session.
struct PromptLine {
  std::vector<PromptVariant> variants;
};

enum class Effect {
  none,
  assert_category,
  assert_feature,
  assert_explanation,
  assert_comparison,
  add_fun_fact,
  correct_note,
  classify,
};

const char* to_string(Effect e);

enum class GuardKind {
  always,
  known_entity,
  unknown_entity,
  has_notes,
  classified_correctly,
  classified_incorrectly,
  attempts_exhausted,
  selected_note_is,
};

struct Guard {
  GuardKind kind = GuardKind::always;
  std::string arg;  // has_notes(slot | *), selected_note_is(kind)

  static Guard parse(std::string_view text);
  std::string str() const;
  bool operator==(const Guard&) const = default;
};

struct Transition {
  Guard guard;
  std::string to;
  bool operator==(const Transition&) const = default;
};

struct StateSpec {
  std::string id;
  std::vector<PromptLine> prompts;
  Expectation expect = Expectation::none;
  std::string bind;  // slot the input is stored under
  Effect effect = Effect::none;
  std::string expected_target;  // fact template for sentence relevance
  std::string distinct_from;    // entity slot the input must differ from
  std::vector<PromptLine> retry;
  std::vector<Transition> transitions;

  bool terminal() const { return transitions.empty(); }
};

struct FlowDefinition {
  std::string id;
  std::string condition = "baseline";
  std::string entry;
  std::map<std::string, StateSpec> states;
  bool original_wording = false;

  const StateSpec& state(std::string_view id) const;
};

using FlowSet = std::map<std::string, FlowDefinition>;

inline constexpr std::string_view kStockFlows[] = {"describe", "explain", "compare", "correct",
                                                   "quiz", "funfact", "telljoke"};

struct FlowLimits {
  int max_rounds = 6;
  std::set<std::string> emotions{"neutral", "curious", "happy", "excited",
                                 "confused", "grateful", "amused"};
};

// Slot available to every prompt without being bound by an input.
inline constexpr std::string_view kGlobalSlots[] = {"known_entities", "noun", "topic", "agent"};

// Default slot an expectation binds when a state has no explicit `bind`.
std::string default_slot(Expectation e);

FlowDefinition parse_flow(const nlohmann::json& doc);
nlohmann::json to_json(const FlowDefinition& flow);

// Reachability, guard totality, bounded length, emotion vocabulary, and a
// static check that every prompt renders on every path.
void validate_flow(const FlowDefinition& flow, const FlowLimits& limits = {});

FlowSet load_flows(std::span<const nlohmann::json> documents, std::string_view condition,
                   const FlowLimits& limits = {});
std::vector<nlohmann::json> read_flow_documents(const std::filesystem::path& dir);

// Two flows have the same shape when states, expectations, effects, bindings
// and transitions agree; only prompt text may differ.
bool same_graph(const FlowDefinition& a, const FlowDefinition& b);

// Substitutes {slot} placeholders. A placeholder starting with an uppercase
// letter capitalizes the value of the lowercase slot ({Entity} -> "Shale").
std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& values);
std::vector<std::string> template_slots(std::string_view tmpl);

// Pure function of (seed, turn, variants).
const PromptVariant& select_variant(std::span<const PromptVariant> variants, std::uint64_t seed,
                                    std::uint64_t turn);

}  // namespace tutee
