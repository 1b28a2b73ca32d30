#pragma once
// Runtime side of a flow: one button-initiated conversation, from its entry
// prompts to the terminal state that releases the lock.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tutee/curriculum.hpp"
#include "tutee/flow.hpp"
#include "tutee/knowledge.hpp"

namespace tutee {

struct UserInput {
  Expectation kind = Expectation::free_text;
  std::string value;    // entity/category/feature/sentence id, note id, or text
  std::string display;  // chat echo; a default is rendered when empty
};

struct Utterance {
  std::string text;
  std::string emotion = "neutral";
  CognitiveLevel level = CognitiveLevel::none;
  std::optional<int> note_id;  // set on the first line after a notebook change
};

struct EffectRecord {
  Effect effect = Effect::none;
  nlohmann::json args;
  std::optional<int> note_id;
};

struct QuizResult {
  std::string entity;
  std::optional<std::string> verdict;
  bool correct = false;
};

struct AdvanceResult {
  std::string user_echo;
  std::vector<Utterance> utterances;
  std::vector<EffectRecord> effects;
  std::optional<QuizResult> quiz;
  bool stuck = false;
  bool relevant = true;
  bool probe = false;        // a feedback probe was emitted and awaits a reply
  bool probe_reply = false;  // this input answered a probe
  bool completed = false;
  Expectation next = Expectation::none;
};

struct EngineConfig {
  int stuck_threshold = 2;
  int probe_cadence = 0;  // every N effects; 0 disables feedback probes
  std::vector<PromptVariant> probes{
      {"Am I smart?", "curious"},
      {"Am I learning?", "curious"},
      {"Do you think I know more now than before?", "curious"},
      {"Will I do well in a test?", "curious"},
  };
  std::vector<PromptVariant> retry{
      {"Hmm, I don't think that sentence is about what I asked. Can you pick another one?", "confused"},
  };
  std::string agent_name = "Gamma";
};

// Consecutive irrelevant picks; fires once per `threshold` misses in a row.
class StuckDetector {
 public:
  explicit StuckDetector(int threshold = 2) : threshold_(threshold < 1 ? 1 : threshold) {}

  bool observe(bool relevant) {
    if (relevant) {
      misses_ = 0;
      return false;
    }
    if (++misses_ < threshold_) return false;
    misses_ = 0;
    return true;
  }

  int misses() const { return misses_; }

 private:
  int threshold_;
  int misses_ = 0;
};

struct Binding {
  Expectation kind = Expectation::none;
  std::string value;
};

struct EngineContext {
  KnowledgeBase& kb;
  const EngineConfig& config;
  int& effect_count;  // session-wide; drives the probe cadence
};

class ConversationSession {
 public:
  ConversationSession(FlowDefinition flow, std::uint64_t seed, const EngineConfig& config);

  AdvanceResult start(EngineContext& ctx);
  AdvanceResult advance(EngineContext& ctx, const UserInput& input);

  // Relevance check for a sentence pick in the current state; updates the
  // consecutive-miss counter and reports whether the member is stuck.
  bool detect_stuck(const Curriculum& curriculum, const UserInput& input);

  Expectation expectation() const;
  const std::string& current_state() const { return state_; }
  bool locked() const { return locked_; }
  const FlowDefinition& flow() const { return flow_; }
  const std::map<std::string, Binding>& bindings() const { return bindings_; }
  std::uint64_t seed() const { return seed_; }

  // Choices the client can offer for the current expectation.
  nlohmann::json options(const KnowledgeBase& kb) const;

 private:
  void enter(EngineContext& ctx, const std::string& state_id, AdvanceResult& out);
  void emit(const std::vector<PromptLine>& lines, const KnowledgeBase& kb, AdvanceResult& out);
  void emit_variant(const PromptVariant& v, const KnowledgeBase& kb, AdvanceResult& out);
  std::string follow(const StateSpec& state, const KnowledgeBase& kb, bool exhausted) const;
  bool guard_holds(const Guard& g, const KnowledgeBase& kb, bool exhausted) const;
  std::map<std::string, std::string> render_values(const KnowledgeBase& kb) const;
  std::map<std::string, std::string> id_values() const;
  Binding resolve(const StateSpec& state, const KnowledgeBase& kb, const UserInput& input) const;
  std::string echo(const Binding& b, const KnowledgeBase& kb, const UserInput& input) const;
  EffectRecord run_effect(const StateSpec& state, EngineContext& ctx, AdvanceResult& out);

  FlowDefinition flow_;
  std::uint64_t seed_;
  EngineConfig config_;
  std::string state_;
  std::map<std::string, Binding> bindings_;
  StuckDetector stuck_;
  std::uint64_t lines_ = 0;
  bool locked_ = false;
  bool probe_pending_ = false;
  std::string pending_next_;
  std::optional<int> pending_note_;
};

}  // namespace tutee
