#include "tutee/conversation.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include "tutee/error.hpp"

namespace tutee {
namespace {

using nlohmann::json;

std::string trimmed(std::string_view text) {
  auto b = text.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(b, e - b + 1));
}

std::optional<int> parse_int(std::string_view text) {
  int value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  return value;
}

const std::string& slot(const std::map<std::string, Binding>& bindings, const std::string& name) {
  auto it = bindings.find(name);
  if (it == bindings.end()) throw Error(Errc::missing_slot, "slot '" + name + "' is unbound");
  return it->second.value;
}

bool on_category(const Note& n) {
  return !n.linked_facts.empty() && n.linked_facts.front().kind == FactKind::category &&
         (n.kind == NoteKind::category || n.kind == NoteKind::explanation);
}

bool on_feature(const Note& n) {
  return !n.linked_facts.empty() && n.linked_facts.front().kind == FactKind::feature &&
         (n.kind == NoteKind::feature || n.kind == NoteKind::explanation);
}

}  // namespace

ConversationSession::ConversationSession(FlowDefinition flow, std::uint64_t seed, const EngineConfig& config)
    : flow_(std::move(flow)), seed_(seed), config_(config), stuck_(config.stuck_threshold) {}

Expectation ConversationSession::expectation() const {
  if (!locked_) return Expectation::none;
  if (probe_pending_) return Expectation::free_text;
  return flow_.state(state_).expect;
}

std::map<std::string, std::string> ConversationSession::render_values(const KnowledgeBase& kb) const {
  const auto& cur = kb.curriculum();
  std::map<std::string, std::string> values;
  std::string known;
  for (const auto& e : kb.taught_entities()) {
    if (!known.empty()) known += ", ";
    known += "'" + cur.entity(e).name + "'";
  }
  values["known_entities"] = known;
  values["noun"] = cur.noun;
  values["topic"] = cur.name;
  values["agent"] = config_.agent_name;

  for (const auto& [name, b] : bindings_) {
    switch (b.kind) {
      case Expectation::entity_selection:
      case Expectation::image_click:
        values[name] = cur.entity(b.value).name;
        break;
      case Expectation::category_selection:
        if (b.value.empty()) {
          values[name] = "unknown";
          values[name + "_plural"] = "unknown";
        } else {
          values[name] = cur.category(b.value).name;
          values[name + "_plural"] = cur.category(b.value).plural;
        }
        break;
      case Expectation::feature_selection:
        values[name] = cur.feature(b.value).phrase;
        break;
      case Expectation::sentence_selection:
        values[name] = cur.find_sentence(b.value)->text;
        break;
      case Expectation::notebook_entry_selection:
        values[name] = kb.note(*parse_int(b.value)).text;
        break;
      case Expectation::free_text:
      case Expectation::none:
        values[name] = b.value;
        break;
    }
  }
  return values;
}

std::map<std::string, std::string> ConversationSession::id_values() const {
  std::map<std::string, std::string> values;
  for (const auto& [name, b] : bindings_) values[name] = b.value;
  return values;
}

void ConversationSession::emit_variant(const PromptVariant& v, const KnowledgeBase& kb, AdvanceResult& out) {
  Utterance u;
  u.text = fill_template(v.text, render_values(kb));
  u.emotion = v.emotion;
  u.level = v.level;
  if (pending_note_) {
    u.note_id = pending_note_;
    pending_note_.reset();
  }
  out.utterances.push_back(std::move(u));
}

void ConversationSession::emit(const std::vector<PromptLine>& lines, const KnowledgeBase& kb, AdvanceResult& out) {
  for (const auto& line : lines) {
    emit_variant(select_variant(line.variants, seed_, lines_++), kb, out);
  }
}

bool ConversationSession::guard_holds(const Guard& g, const KnowledgeBase& kb, bool exhausted) const {
  switch (g.kind) {
    case GuardKind::always:
      return true;
    case GuardKind::known_entity:
      return kb.classify(slot(bindings_, "entity")).known();
    case GuardKind::unknown_entity:
      return !kb.classify(slot(bindings_, "entity")).known();
    case GuardKind::has_notes:
      if (g.arg == "*") return !kb.taught_entities().empty();
      return kb.has_notes(slot(bindings_, g.arg));
    case GuardKind::classified_correctly:
    case GuardKind::classified_incorrectly: {
      const auto& verdict = slot(bindings_, "verdict");
      const bool correct = !verdict.empty() && verdict == kb.curriculum().true_category(slot(bindings_, "entity"));
      return g.kind == GuardKind::classified_correctly ? correct : !verdict.empty() && !correct;
    }
    case GuardKind::attempts_exhausted:
      return exhausted;
    case GuardKind::selected_note_is: {
      const auto& n = kb.note(*parse_int(slot(bindings_, "note")));
      if (g.arg == "category") return on_category(n);
      if (g.arg == "feature") return on_feature(n);
      return n.kind == NoteKind::explanation;
    }
  }
  return false;
}

std::string ConversationSession::follow(const StateSpec& state, const KnowledgeBase& kb, bool exhausted) const {
  for (const auto& t : state.transitions) {
    // After an irrelevant pick only the give-up transition may fire.
    if (exhausted && t.guard.kind != GuardKind::attempts_exhausted) continue;
    if (guard_holds(t.guard, kb, exhausted)) return t.to;
  }
  return {};
}

void ConversationSession::enter(EngineContext& ctx, const std::string& state_id, AdvanceResult& out) {
  state_ = state_id;
  while (true) {
    const auto& s = flow_.state(state_);
    emit(s.prompts, ctx.kb, out);
    if (s.terminal()) {
      locked_ = false;
      out.completed = true;
      out.next = Expectation::none;
      return;
    }
    if (s.expect != Expectation::none) {
      out.next = s.expect;
      return;
    }
    state_ = follow(s, ctx.kb, false);
  }
}

AdvanceResult ConversationSession::start(EngineContext& ctx) {
  if (locked_ || !state_.empty()) throw Error(Errc::conversation_locked, "conversation already started");
  locked_ = true;
  AdvanceResult out;
  enter(ctx, flow_.entry, out);
  return out;
}

Binding ConversationSession::resolve(const StateSpec& state, const KnowledgeBase& kb, const UserInput& input) const {
  const auto& cur = kb.curriculum();
  Binding b{input.kind, {}};
  const auto unknown = [&](const std::string& what) {
    return Error(Errc::unknown_selection, what + " '" + input.value + "' is not in the curriculum");
  };
  switch (input.kind) {
    case Expectation::entity_selection:
    case Expectation::image_click: {
      const auto* e = cur.resolve_entity(trimmed(input.value));
      if (e == nullptr) throw unknown("entity");
      if (!state.distinct_from.empty() && bindings_.count(state.distinct_from) != 0 &&
          bindings_.at(state.distinct_from).value == e->id) {
        throw Error(Errc::unknown_selection, "pick a different " + cur.noun + " than before");
      }
      b.value = e->id;
      break;
    }
    case Expectation::category_selection: {
      const auto* c = cur.resolve_category(trimmed(input.value));
      if (c == nullptr) throw unknown("category");
      b.value = c->id;
      break;
    }
    case Expectation::feature_selection: {
      const auto* f = cur.resolve_feature(trimmed(input.value));
      if (f == nullptr) throw unknown("feature");
      b.value = f->id;
      break;
    }
    case Expectation::sentence_selection:
      if (cur.find_sentence(input.value) == nullptr) throw unknown("sentence");
      b.value = input.value;
      break;
    case Expectation::notebook_entry_selection: {
      const auto id = parse_int(trimmed(input.value));
      const auto* n = id ? kb.find_note(*id) : nullptr;
      if (n == nullptr) throw Error(Errc::unknown_selection, "no notebook entry '" + input.value + "'");
      if (bindings_.count("entity") != 0) {
        const auto& entity = bindings_.at("entity").value;
        if (n->entity != entity && n->other_entity != entity) {
          throw Error(Errc::unknown_selection, "that notebook entry is about a different " + cur.noun);
        }
      }
      b.value = std::to_string(*id);
      break;
    }
    case Expectation::free_text:
      b.value = trimmed(input.value);
      if (b.value.empty()) throw Error(Errc::empty_text, "empty reply");
      break;
    case Expectation::none:
      throw Error(Errc::expectation_mismatch, "no input expected");
  }
  return b;
}

std::string ConversationSession::echo(const Binding& b, const KnowledgeBase& kb, const UserInput& input) const {
  if (!input.display.empty()) return input.display;
  const auto& cur = kb.curriculum();
  switch (b.kind) {
    case Expectation::entity_selection: return capitalize(cur.entity(b.value).name);
    case Expectation::image_click:
      return "Do you know what kind of " + cur.noun + " " + cur.entity(b.value).name + " is?";
    case Expectation::category_selection: return capitalize(cur.category(b.value).name);
    case Expectation::feature_selection: return capitalize(cur.feature(b.value).phrase);
    case Expectation::sentence_selection: return cur.find_sentence(b.value)->text;
    case Expectation::notebook_entry_selection:
      return "I think that '" + kb.note(*parse_int(b.value)).text + "' is wrong.";
    case Expectation::free_text:
    case Expectation::none:
      break;
  }
  return b.value;
}

bool ConversationSession::detect_stuck(const Curriculum& curriculum, const UserInput& input) {
  const auto& s = flow_.state(state_);
  if (s.expect != Expectation::sentence_selection || s.expected_target.empty()) return false;
  const auto target = FactRef::parse(fill_template(s.expected_target, id_values()));
  return stuck_.observe(sentence_relevance(curriculum, input.value, target));
}

EffectRecord ConversationSession::run_effect(const StateSpec& state, EngineContext& ctx, AdvanceResult& out) {
  auto& kb = ctx.kb;
  const auto& b = bindings_;
  EffectRecord rec{state.effect, json::object(), std::nullopt};
  switch (state.effect) {
    case Effect::none:
      break;
    case Effect::assert_category:
      rec.args = {{"entity", slot(b, "entity")}, {"category", slot(b, "category")}};
      rec.note_id = kb.assert_category(slot(b, "entity"), slot(b, "category")).id;
      break;
    case Effect::assert_feature:
      rec.args = {{"entity", slot(b, "entity")}, {"feature", slot(b, "feature")}};
      rec.note_id = kb.assert_feature(slot(b, "entity"), slot(b, "feature")).id;
      break;
    case Effect::assert_explanation: {
      const auto& entity = slot(b, "entity");
      const auto& text = slot(b, "text");
      const auto& cur = kb.curriculum();
      std::optional<std::string> feature;
      std::optional<std::string> category;
      const auto* mapping = cur.find_mapping(slot(b, "sentence"));
      const bool usable = mapping != nullptr && mapping->status != MappingStatus::rejected &&
                          (!cur.relevance_verified_only || mapping->status == MappingStatus::verified);
      if (usable) {
        for (const auto& t : mapping->targets) {
          if (!t.entity.empty() && t.entity != entity) continue;
          if (t.kind == FactKind::feature && !feature) feature = t.value;
          if (t.kind == FactKind::category && !category) category = t.value;
        }
      }
      rec.args = {{"entity", entity}, {"sentence", slot(b, "sentence")}, {"text", text}};
      if (feature) {
        rec.args["feature"] = *feature;
        rec.note_id = kb.assert_feature(entity, *feature, text).id;
      } else if (auto it = kb.category_facts().find(entity); it != kb.category_facts().end()) {
        const auto held = it->second.category;
        rec.args["category"] = held;
        rec.note_id = kb.assert_category(entity, held, text).id;
      } else if (category) {
        rec.args["category"] = *category;
        rec.note_id = kb.assert_category(entity, *category, text).id;
      }
      break;
    }
    case Effect::assert_comparison: {
      const auto& fa = slot(b, "feature_a");
      const auto& fb = slot(b, "feature_b");
      const bool same = fa == fb;
      rec.args = {{"entity_a", slot(b, "entity_a")}, {"entity_b", slot(b, "entity_b")},
                  {"relation", same ? "same" : "different"}, {"feature_a", fa}};
      if (!same) rec.args["feature_b"] = fb;
      rec.note_id = kb.assert_comparison(slot(b, "entity_a"), slot(b, "entity_b"),
                                         same ? Relation::same : Relation::different, fa,
                                         same ? std::nullopt : std::optional<std::string_view>(fb))
                        .id;
      break;
    }
    case Effect::add_fun_fact:
      rec.args = {{"entity", slot(b, "entity")}, {"fact", slot(b, "fact")}, {"reason", slot(b, "reason")}};
      rec.note_id = kb.add_fun_fact(slot(b, "entity"), slot(b, "fact"), slot(b, "reason")).id;
      break;
    case Effect::correct_note: {
      const int note_id = *parse_int(slot(b, "note"));
      const auto& value = slot(b, state.bind);
      Replacement r;
      rec.args = {{"note", note_id}};
      if (state.expect == Expectation::category_selection) {
        r = CategoryReplacement{value};
        rec.args["category"] = value;
      } else if (state.expect == Expectation::feature_selection) {
        r = FeatureReplacement{value};
        rec.args["feature"] = value;
      } else {
        r = ExplanationReplacement{value};
        rec.args["explanation"] = value;
      }
      rec.note_id = kb.correct_note(note_id, r).id;
      break;
    }
    case Effect::classify: {
      const auto& entity = slot(b, "entity");
      const auto answer = kb.classify(entity);
      bindings_["verdict"] = Binding{Expectation::category_selection, answer.category.value_or("")};
      QuizResult quiz{entity, answer.category,
                      answer.category && *answer.category == kb.curriculum().true_category(entity)};
      rec.args = {{"entity", entity}, {"verdict", answer.category ? json(*answer.category) : json(nullptr)},
                  {"correct", quiz.correct}};
      out.quiz = std::move(quiz);
      break;
    }
  }
  return rec;
}

AdvanceResult ConversationSession::advance(EngineContext& ctx, const UserInput& input) {
  if (!locked_) throw Error(Errc::expectation_mismatch, "the conversation has finished");
  AdvanceResult out;

  if (probe_pending_) {
    if (input.kind != Expectation::free_text) {
      throw Error(Errc::expectation_mismatch, "expected a free_text reply to the question");
    }
    const auto reply = trimmed(input.value);
    if (reply.empty()) throw Error(Errc::empty_text, "empty reply");
    out.user_echo = input.display.empty() ? reply : input.display;
    out.probe_reply = true;
    probe_pending_ = false;
    enter(ctx, pending_next_, out);
    return out;
  }

  const auto& s = flow_.state(state_);
  if (input.kind != s.expect) {
    throw Error(Errc::expectation_mismatch, std::string("expected ") + to_string(s.expect) + ", got " +
                                                to_string(input.kind));
  }
  const Binding bound = resolve(s, ctx.kb, input);
  out.user_echo = echo(bound, ctx.kb, input);

  if (s.expect == Expectation::sentence_selection && !s.expected_target.empty()) {
    const auto target = FactRef::parse(fill_template(s.expected_target, id_values()));
    out.relevant = sentence_relevance(ctx.kb.curriculum(), bound.value, target);
    out.stuck = stuck_.observe(out.relevant);
    if (!out.relevant) {
      const auto give_up = out.stuck ? follow(s, ctx.kb, true) : std::string{};
      if (give_up.empty()) {
        if (s.retry.empty()) {
          emit_variant(select_variant(config_.retry, seed_, lines_++), ctx.kb, out);
        } else {
          emit(s.retry, ctx.kb, out);
        }
        out.next = s.expect;
        return out;
      }
      enter(ctx, give_up, out);
      return out;
    }
  }

  // Effects see the new binding; on failure the conversation is left as it was.
  auto saved = bindings_;
  bindings_[s.bind] = bound;
  EffectRecord rec;
  try {
    rec = run_effect(s, ctx, out);
  } catch (...) {
    bindings_ = std::move(saved);
    throw;
  }
  const auto next = follow(s, ctx.kb, false);

  if (s.effect != Effect::none) {
    if (rec.note_id) pending_note_ = rec.note_id;
    out.effects.push_back(std::move(rec));
    ++ctx.effect_count;
    if (config_.probe_cadence > 0 && ctx.effect_count % config_.probe_cadence == 0 &&
        !flow_.state(next).terminal()) {
      emit_variant(select_variant(config_.probes, seed_, static_cast<std::uint64_t>(ctx.effect_count)), ctx.kb,
                   out);
      probe_pending_ = true;
      pending_next_ = next;
      out.probe = true;
      out.next = Expectation::free_text;
      return out;
    }
  }
  enter(ctx, next, out);
  return out;
}

json ConversationSession::options(const KnowledgeBase& kb) const {
  const auto& cur = kb.curriculum();
  json out = json::array();
  switch (expectation()) {
    case Expectation::entity_selection:
      for (const auto& e : cur.entities) out.push_back({{"id", e.id}, {"label", capitalize(e.name)}});
      break;
    case Expectation::image_click:
      for (const auto& e : cur.entities) {
        out.push_back({{"id", e.id}, {"label", capitalize(e.name)}, {"image", e.image}});
      }
      break;
    case Expectation::category_selection:
      for (const auto& c : cur.categories) out.push_back({{"id", c.id}, {"label", capitalize(c.name)}});
      break;
    case Expectation::feature_selection:
      for (const auto& f : cur.features) out.push_back({{"id", f.id}, {"label", f.phrase}});
      break;
    case Expectation::notebook_entry_selection: {
      const auto& entity = bindings_.at("entity").value;
      for (const auto* n : kb.notes_about(entity)) out.push_back({{"id", n->id}, {"label", n->text}});
      break;
    }
    default:
      break;
  }
  return out;
}

}  // namespace tutee
