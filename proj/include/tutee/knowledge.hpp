#pragma once
// What the agent has been taught: entity->category and entity->feature facts,
// the notebook notes generated from them, and classification that consults
// nothing but those facts.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "tutee/curriculum.hpp"

namespace tutee {

enum class NoteKind { category, feature, explanation, comparison, funfact };
enum class Relation { same, different };

const char* to_string(NoteKind kind);

struct Note {
  int id = 0;
  std::string entity;
  std::string other_entity;  // comparison partner
  NoteKind kind = NoteKind::category;
  std::optional<Relation> relation;
  std::string text;
  std::vector<FactRef> linked_facts;
  int created_turn = 0;
};

struct CategoryFact {
  std::string category;
  std::string explanation;
  int note_id = 0;
};

struct FeatureFact {
  std::string feature;
  std::string explanation;
  int note_id = 0;  // primary note: the one that first recorded the fact
};

struct FunFact {
  std::string entity;
  std::string fact_text;
  std::string reason_text;
  int note_id = 0;
};

struct ClassificationAnswer {
  std::optional<std::string> category;  // nullopt = Unknown
  std::vector<FactRef> basis;

  bool known() const { return category.has_value(); }
};

struct CategoryReplacement { std::string category; };
struct FeatureReplacement { std::string feature; };
struct ExplanationReplacement { std::string text; };
using Replacement = std::variant<CategoryReplacement, FeatureReplacement, ExplanationReplacement>;

// One record per mutating operation, in the order applied.
struct FactRecord {
  std::string op;
  nlohmann::json args;
  int turn = 0;
  std::string actor;
};

enum class PageKind { contents, entity, fun_facts };

struct NotebookEntry {
  int note_id = 0;
  NoteKind kind = NoteKind::category;
  std::string text;
};

struct TocEntry {
  std::string entity;
  std::string title;
  int page = 0;
};

struct NotebookPage {
  PageKind kind = PageKind::contents;
  std::string title;
  std::string entity;
  std::vector<TocEntry> contents;
  std::vector<NotebookEntry> notes;
};

struct NotebookDocument {
  std::uint64_t version = 0;
  std::vector<NotebookPage> pages;
};

nlohmann::json to_json(const NotebookDocument& doc);
nlohmann::json to_json(const FactRecord& record);

class KnowledgeBase {
 public:
  explicit KnowledgeBase(std::shared_ptr<const Curriculum> curriculum, std::string agent_id = "gamma");

  // Turn and actor stamped on subsequent fact records and notes.
  void set_context(int turn, std::string actor);

  const Note& assert_category(std::string_view entity, std::string_view category,
                              std::string_view explanation = {});
  const Note& assert_feature(std::string_view entity, std::string_view feature,
                             std::optional<std::string_view> explanation = std::nullopt);
  const Note& assert_comparison(std::string_view entity_a, std::string_view entity_b, Relation relation,
                                std::string_view feature_a,
                                std::optional<std::string_view> feature_b = std::nullopt);
  const Note& add_fun_fact(std::string_view entity, std::string_view fact_text,
                           std::string_view reason_text);
  const Note& correct_note(int note_id, const Replacement& replacement);

  ClassificationAnswer classify(std::string_view entity) const;
  NotebookDocument render_notebook() const;

  const Note* find_note(int note_id) const;
  const Note& note(int note_id) const;  // UnknownNote
  std::vector<const Note*> notes_about(std::string_view entity) const;
  bool has_notes(std::string_view entity) const;
  // Entities with notebook pages, in page order (first taught first).
  std::vector<std::string> taught_entities() const;

  const std::vector<Note>& notes() const { return notes_; }
  const std::map<std::string, CategoryFact>& category_facts() const { return category_facts_; }
  const std::map<std::string, std::vector<FeatureFact>>& feature_facts() const { return feature_facts_; }
  const std::vector<FunFact>& fun_facts() const { return fun_facts_; }
  const std::vector<FactRecord>& fact_log() const { return log_; }
  const std::string& agent_id() const { return agent_id_; }
  const Curriculum& curriculum() const { return *curriculum_; }
  std::uint64_t version() const { return version_; }

 private:
  Note& new_note(NoteKind kind, std::string entity);
  Note& mutable_note(int note_id);
  FeatureFact* find_feature_fact(std::string_view entity, std::string_view feature);
  void rerender(Note& note);
  std::string entity_title(std::string_view entity) const;
  std::string feature_clause(std::string_view entity, std::string_view feature, bool with_explanation) const;
  void record(std::string op, nlohmann::json args);
  bool linked_elsewhere(const FactRef& fact, int except_note) const;

  std::shared_ptr<const Curriculum> curriculum_;
  std::string agent_id_;
  std::map<std::string, CategoryFact> category_facts_;
  std::map<std::string, std::vector<FeatureFact>> feature_facts_;
  std::vector<FunFact> fun_facts_;
  std::vector<Note> notes_;
  std::vector<FactRecord> log_;
  std::uint64_t version_ = 0;
  int turn_ = 0;
  std::string actor_;
};

}  // namespace tutee
