#include "tutee/knowledge.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "tutee/error.hpp"

namespace tutee {
namespace {

using nlohmann::json;

std::string trim(std::string_view text) {
  auto begin = text.begin();
  auto end = text.end();
  while (begin != end && std::isspace(static_cast<unsigned char>(*begin))) ++begin;
  while (end != begin && std::isspace(static_cast<unsigned char>(*(end - 1)))) --end;
  return std::string(begin, end);
}

// Clauses are spliced into a longer sentence, so a closing period is dropped.
std::string clause(std::string_view text) {
  auto out = trim(text);
  if (!out.empty() && out.back() == '.') out.pop_back();
  return trim(out);
}

const char* to_string(PageKind kind) {
  switch (kind) {
    case PageKind::contents: return "contents";
    case PageKind::entity: return "entity";
    case PageKind::fun_facts: return "fun_facts";
  }
  return "contents";
}

FactRef category_ref(std::string_view entity, std::string_view category) {
  return {FactKind::category, std::string(entity), std::string(category)};
}

FactRef feature_ref(std::string_view entity, std::string_view feature) {
  return {FactKind::feature, std::string(entity), std::string(feature)};
}

}  // namespace

const char* to_string(NoteKind kind) {
  switch (kind) {
    case NoteKind::category: return "category";
    case NoteKind::feature: return "feature";
    case NoteKind::explanation: return "explanation";
    case NoteKind::comparison: return "comparison";
    case NoteKind::funfact: return "funfact";
  }
  return "category";
}

json to_json(const NotebookDocument& doc) {
  json pages = json::array();
  for (const auto& page : doc.pages) {
    json p{{"kind", to_string(page.kind)}, {"title", page.title}};
    if (page.kind == PageKind::contents) {
      p["entries"] = json::array();
      for (const auto& e : page.contents) {
        p["entries"].push_back({{"entity", e.entity}, {"title", e.title}, {"page", e.page}});
      }
    } else {
      if (page.kind == PageKind::entity) p["entity"] = page.entity;
      p["notes"] = json::array();
      for (const auto& n : page.notes) {
        p["notes"].push_back({{"id", n.note_id}, {"kind", to_string(n.kind)}, {"text", n.text}});
      }
    }
    pages.push_back(std::move(p));
  }
  return {{"version", doc.version}, {"pages", std::move(pages)}};
}

json to_json(const FactRecord& record) {
  return {{"op", record.op}, {"args", record.args}, {"turn", record.turn}, {"actor", record.actor}};
}

KnowledgeBase::KnowledgeBase(std::shared_ptr<const Curriculum> curriculum, std::string agent_id)
    : curriculum_(std::move(curriculum)), agent_id_(std::move(agent_id)) {
  if (!curriculum_) throw Error(Errc::invalid_argument, "knowledge base needs a curriculum");
}

void KnowledgeBase::set_context(int turn, std::string actor) {
  turn_ = turn;
  actor_ = std::move(actor);
}

void KnowledgeBase::record(std::string op, json args) {
  log_.push_back({std::move(op), std::move(args), turn_, actor_});
}

Note& KnowledgeBase::new_note(NoteKind kind, std::string entity) {
  Note note;
  note.id = static_cast<int>(notes_.size()) + 1;
  note.kind = kind;
  note.entity = std::move(entity);
  note.created_turn = turn_;
  notes_.push_back(std::move(note));
  return notes_.back();
}

Note& KnowledgeBase::mutable_note(int note_id) {
  if (note_id < 1 || note_id > static_cast<int>(notes_.size())) {
    throw Error(Errc::unknown_note, "unknown note " + std::to_string(note_id));
  }
  return notes_[static_cast<std::size_t>(note_id - 1)];
}

const Note* KnowledgeBase::find_note(int note_id) const {
  if (note_id < 1 || note_id > static_cast<int>(notes_.size())) return nullptr;
  return &notes_[static_cast<std::size_t>(note_id - 1)];
}

const Note& KnowledgeBase::note(int note_id) const {
  if (const auto* n = find_note(note_id)) return *n;
  throw Error(Errc::unknown_note, "unknown note " + std::to_string(note_id));
}

FeatureFact* KnowledgeBase::find_feature_fact(std::string_view entity, std::string_view feature) {
  auto it = feature_facts_.find(std::string(entity));
  if (it == feature_facts_.end()) return nullptr;
  for (auto& f : it->second) {
    if (f.feature == feature) return &f;
  }
  return nullptr;
}

std::string KnowledgeBase::entity_title(std::string_view entity) const {
  return capitalize(curriculum_->entity(entity).name);
}

std::string KnowledgeBase::feature_clause(std::string_view entity, std::string_view feature,
                                          bool with_explanation) const {
  std::string out = entity_title(entity) + " " + curriculum_->feature(feature).phrase;
  if (with_explanation) {
    auto it = feature_facts_.find(std::string(entity));
    if (it != feature_facts_.end()) {
      for (const auto& f : it->second) {
        if (f.feature == feature && !f.explanation.empty()) out += " because " + f.explanation;
      }
    }
  }
  return out;
}

void KnowledgeBase::rerender(Note& note) {
  switch (note.kind) {
    case NoteKind::category:
    case NoteKind::explanation:
      if (!note.linked_facts.empty() && note.linked_facts.front().kind == FactKind::category) {
        const auto& fact = category_facts_.at(note.entity);
        const auto& cat = curriculum_->category(fact.category);
        note.text = entity_title(note.entity) + " is " + indefinite_article(cat.name) + " " +
                    capitalize(cat.name) + " " + curriculum_->noun;
        if (!fact.explanation.empty()) note.text += " because " + fact.explanation;
        note.kind = fact.explanation.empty() ? NoteKind::category : NoteKind::explanation;
        break;
      }
      [[fallthrough]];
    case NoteKind::feature: {
      const auto& ref = note.linked_facts.front();
      note.text = feature_clause(ref.entity, ref.value, true);
      const auto* fact = find_feature_fact(ref.entity, ref.value);
      note.kind = fact != nullptr && !fact->explanation.empty() ? NoteKind::explanation : NoteKind::feature;
      break;
    }
    case NoteKind::comparison: {
      const auto& a = note.linked_facts.at(0);
      const auto& b = note.linked_facts.at(1);
      const char* joiner = note.relation == Relation::same ? " and " : " while ";
      note.text = feature_clause(a.entity, a.value, false) + joiner + feature_clause(b.entity, b.value, false);
      break;
    }
    case NoteKind::funfact: {
      const auto it = std::find_if(fun_facts_.begin(), fun_facts_.end(),
                                   [&](const FunFact& f) { return f.note_id == note.id; });
      note.text = it->fact_text + " (Reason: " + it->reason_text + ")";
      break;
    }
  }
  ++version_;
}

bool KnowledgeBase::linked_elsewhere(const FactRef& fact, int except_note) const {
  return std::any_of(notes_.begin(), notes_.end(), [&](const Note& n) {
    return n.id != except_note &&
           std::find(n.linked_facts.begin(), n.linked_facts.end(), fact) != n.linked_facts.end();
  });
}

const Note& KnowledgeBase::assert_category(std::string_view entity, std::string_view category,
                                           std::string_view explanation) {
  curriculum_->entity(entity);
  curriculum_->category(category);
  const auto why = clause(explanation);
  json args{{"entity", entity}, {"category", category}};
  if (!why.empty()) args["explanation"] = why;

  auto it = category_facts_.find(std::string(entity));
  if (it != category_facts_.end()) {
    auto& fact = it->second;
    Note& n = mutable_note(fact.note_id);
    record("assert_category", std::move(args));
    if (fact.category == category && (why.empty() || why == fact.explanation)) return n;
    if (fact.category != category) fact.explanation.clear();
    fact.category = std::string(category);
    if (!why.empty()) fact.explanation = why;
    n.linked_facts = {category_ref(entity, category)};
    rerender(n);
    return n;
  }

  Note& n = new_note(NoteKind::category, std::string(entity));
  n.linked_facts = {category_ref(entity, category)};
  category_facts_[std::string(entity)] = CategoryFact{std::string(category), why, n.id};
  record("assert_category", std::move(args));
  rerender(n);
  return n;
}

const Note& KnowledgeBase::assert_feature(std::string_view entity, std::string_view feature,
                                          std::optional<std::string_view> explanation) {
  curriculum_->entity(entity);
  curriculum_->feature(feature);
  const auto why = explanation ? clause(*explanation) : std::string{};
  json args{{"entity", entity}, {"feature", feature}};
  if (!why.empty()) args["explanation"] = why;

  if (auto* fact = find_feature_fact(entity, feature)) {
    record("assert_feature", std::move(args));
    Note& primary = mutable_note(fact->note_id);
    if (why.empty() || why == fact->explanation) return primary;
    fact->explanation = why;
    if (primary.kind == NoteKind::comparison) {
      // The fact came from a comparison; its explanation gets a note of its own.
      Note& n = new_note(NoteKind::explanation, std::string(entity));
      n.linked_facts = {feature_ref(entity, feature)};
      fact->note_id = n.id;
      rerender(n);
      return n;
    }
    rerender(primary);
    return primary;
  }

  Note& n = new_note(NoteKind::feature, std::string(entity));
  n.linked_facts = {feature_ref(entity, feature)};
  feature_facts_[std::string(entity)].push_back(FeatureFact{std::string(feature), why, n.id});
  record("assert_feature", std::move(args));
  rerender(n);
  return n;
}

const Note& KnowledgeBase::assert_comparison(std::string_view entity_a, std::string_view entity_b,
                                             Relation relation, std::string_view feature_a,
                                             std::optional<std::string_view> feature_b) {
  curriculum_->entity(entity_a);
  curriculum_->entity(entity_b);
  curriculum_->feature(feature_a);
  if (feature_b) curriculum_->feature(*feature_b);
  if (entity_a == entity_b) throw Error(Errc::arity, "an entity cannot be compared with itself");
  if (relation == Relation::same && feature_b) {
    throw Error(Errc::arity, "a 'same' comparison takes a single feature");
  }
  if (relation == Relation::different && !feature_b) {
    throw Error(Errc::arity, "a 'different' comparison needs a feature for each entity");
  }
  const std::string fb(feature_b ? *feature_b : feature_a);
  const std::vector<FactRef> facts{feature_ref(entity_a, feature_a), feature_ref(entity_b, fb)};

  json args{{"entity_a", entity_a}, {"entity_b", entity_b},
            {"relation", relation == Relation::same ? "same" : "different"}, {"feature_a", feature_a}};
  if (feature_b) args["feature_b"] = *feature_b;
  record("assert_comparison", std::move(args));

  for (auto& n : notes_) {
    if (n.kind == NoteKind::comparison && n.relation == relation && n.linked_facts == facts) return n;
  }

  Note& n = new_note(NoteKind::comparison, std::string(entity_a));
  n.other_entity = std::string(entity_b);
  n.relation = relation;
  n.linked_facts = facts;
  for (const auto& f : facts) {
    if (find_feature_fact(f.entity, f.value) == nullptr) {
      feature_facts_[f.entity].push_back(FeatureFact{f.value, {}, n.id});
    }
  }
  rerender(n);
  return n;
}

const Note& KnowledgeBase::add_fun_fact(std::string_view entity, std::string_view fact_text,
                                        std::string_view reason_text) {
  curriculum_->entity(entity);
  const auto fact = trim(fact_text);
  const auto reason = clause(reason_text);
  if (fact.empty() || reason.empty()) throw Error(Errc::empty_text, "a fun fact needs both a fact and a reason");

  Note& n = new_note(NoteKind::funfact, std::string(entity));
  fun_facts_.push_back(FunFact{std::string(entity), fact, reason, n.id});
  record("add_fun_fact", {{"entity", entity}, {"fact", fact}, {"reason", reason}});
  rerender(n);
  return n;
}

// Legal pairs, by the fact a note is built on:
//   category note            <- category
//   feature note             <- feature
//   explanation (on category) <- category | explanation
//   explanation (on feature)  <- feature | explanation
//   comparison, funfact      <- nothing
const Note& KnowledgeBase::correct_note(int note_id, const Replacement& replacement) {
  Note& n = mutable_note(note_id);
  if (n.kind == NoteKind::comparison || n.kind == NoteKind::funfact) {
    throw Error(Errc::kind_mismatch, std::string("a ") + to_string(n.kind) + " note cannot be corrected");
  }
  const FactRef base = n.linked_facts.front();
  const bool is_explanation = n.kind == NoteKind::explanation;

  if (const auto* cat = std::get_if<CategoryReplacement>(&replacement)) {
    if (base.kind != FactKind::category) {
      throw Error(Errc::kind_mismatch, "a category replacement needs a category note");
    }
    curriculum_->category(cat->category);
    record("correct_note", {{"note", note_id}, {"category", cat->category}});
    auto& fact = category_facts_.at(n.entity);
    if (fact.category == cat->category) return n;
    fact.category = cat->category;
    fact.explanation.clear();
    n.linked_facts = {category_ref(n.entity, cat->category)};
    rerender(n);
    return n;
  }

  if (const auto* feat = std::get_if<FeatureReplacement>(&replacement)) {
    if (base.kind != FactKind::feature) {
      throw Error(Errc::kind_mismatch, "a feature replacement needs a feature note");
    }
    curriculum_->feature(feat->feature);
    record("correct_note", {{"note", note_id}, {"feature", feat->feature}});
    if (base.value == feat->feature) return n;

    const FactRef next = feature_ref(base.entity, feat->feature);
    auto& facts = feature_facts_[base.entity];
    n.linked_facts = {next};
    if (linked_elsewhere(base, note_id)) {
      // Another note still asserts the old fact; hand it that note.
      for (const auto& other : notes_) {
        if (other.id != note_id &&
            std::find(other.linked_facts.begin(), other.linked_facts.end(), base) != other.linked_facts.end()) {
          find_feature_fact(base.entity, base.value)->note_id = other.id;
          break;
        }
      }
    } else {
      std::erase_if(facts, [&](const FeatureFact& f) { return f.feature == base.value; });
    }
    if (find_feature_fact(base.entity, feat->feature) == nullptr) {
      facts.push_back(FeatureFact{feat->feature, {}, note_id});
    }
    rerender(n);
    return n;
  }

  const auto& expl = std::get<ExplanationReplacement>(replacement);
  if (!is_explanation) {
    throw Error(Errc::kind_mismatch, "only explanation notes take an explanation replacement");
  }
  const auto why = clause(expl.text);
  if (why.empty()) throw Error(Errc::empty_text, "an explanation cannot be empty");
  record("correct_note", {{"note", note_id}, {"explanation", why}});
  std::string* current = base.kind == FactKind::category
                             ? &category_facts_.at(n.entity).explanation
                             : &find_feature_fact(base.entity, base.value)->explanation;
  if (*current == why) return n;
  *current = why;
  rerender(n);
  return n;
}

ClassificationAnswer KnowledgeBase::classify(std::string_view entity) const {
  curriculum_->entity(entity);
  ClassificationAnswer answer;
  if (auto it = category_facts_.find(std::string(entity)); it != category_facts_.end()) {
    answer.category = it->second.category;
    answer.basis.push_back(category_ref(entity, it->second.category));
    return answer;
  }
  auto own = feature_facts_.find(std::string(entity));
  if (own == feature_facts_.end()) return answer;

  // Each taught feature votes once for every category held by another
  // entity that shares it.
  std::map<std::string, int> votes;
  std::vector<FactRef> basis;
  for (const auto& f : own->second) {
    std::set<std::string> voted;
    for (const auto& [other, facts] : feature_facts_) {
      if (other == entity) continue;
      auto cat = category_facts_.find(other);
      if (cat == category_facts_.end()) continue;
      const bool shares = std::any_of(facts.begin(), facts.end(),
                                      [&](const FeatureFact& g) { return g.feature == f.feature; });
      if (shares) voted.insert(cat->second.category);
    }
    for (const auto& c : voted) ++votes[c];
    if (!voted.empty()) basis.push_back(feature_ref(entity, f.feature));
  }
  if (votes.empty()) return answer;
  auto best = std::max_element(votes.begin(), votes.end(),
                               [](const auto& a, const auto& b) { return a.second < b.second; });
  const auto ties = std::count_if(votes.begin(), votes.end(),
                                  [&](const auto& v) { return v.second == best->second; });
  if (ties > 1) return answer;
  answer.category = best->first;
  answer.basis = std::move(basis);
  return answer;
}

std::vector<const Note*> KnowledgeBase::notes_about(std::string_view entity) const {
  std::vector<const Note*> out;
  for (const auto& n : notes_) {
    if (n.kind == NoteKind::funfact) continue;
    if (n.entity == entity || n.other_entity == entity) out.push_back(&n);
  }
  return out;
}

bool KnowledgeBase::has_notes(std::string_view entity) const { return !notes_about(entity).empty(); }

std::vector<std::string> KnowledgeBase::taught_entities() const {
  std::vector<std::string> out;
  auto add = [&](const std::string& e) {
    if (!e.empty() && std::find(out.begin(), out.end(), e) == out.end()) out.push_back(e);
  };
  for (const auto& n : notes_) {
    if (n.kind == NoteKind::funfact) continue;
    add(n.entity);
    add(n.other_entity);
  }
  return out;
}

NotebookDocument KnowledgeBase::render_notebook() const {
  NotebookDocument doc;
  doc.version = version_;
  NotebookPage toc;
  toc.kind = PageKind::contents;
  toc.title = "Contents";
  doc.pages.push_back(toc);

  int page_no = 2;
  for (const auto& entity : taught_entities()) {
    NotebookPage page;
    page.kind = PageKind::entity;
    page.entity = entity;
    page.title = entity_title(entity);
    for (const auto* n : notes_about(entity)) page.notes.push_back({n->id, n->kind, n->text});
    doc.pages.front().contents.push_back({entity, page.title, page_no++});
    doc.pages.push_back(std::move(page));
  }

  if (!fun_facts_.empty()) {
    NotebookPage page;
    page.kind = PageKind::fun_facts;
    page.title = "Fun Facts";
    for (const auto& f : fun_facts_) {
      const auto& n = notes_[static_cast<std::size_t>(f.note_id - 1)];
      page.notes.push_back({n.id, n.kind, n.text});
    }
    doc.pages.push_back(std::move(page));
  }
  return doc;
}

}  // namespace tutee
