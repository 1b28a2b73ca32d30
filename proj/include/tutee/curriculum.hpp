#pragma once
// Teachable subject matter: one classification topic with its entities,
// categories, features, reading articles and the sentence -> fact mappings
// used to judge whether a selected sentence is on topic.

#include <compare>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace tutee {

struct Category {
  std::string id;
  std::string name;    // "igneous"
  std::string plural;  // "igneous rocks" / "mammals"
};

struct Entity {
  std::string id;
  std::string name;  // lowercase display form, capitalized by templates
  std::string true_category;
  std::string image;
  std::optional<std::string> taught_image;
};

struct Feature {
  std::string id;
  std::string phrase;  // "has holes"
  std::vector<std::string> keywords;
};

struct Sentence {
  std::string id;
  std::string text;
};

struct Article {
  std::string id;
  std::string title;
  std::vector<Sentence> sentences;
  std::vector<std::string> images;
};

enum class FactKind { category, feature };

// A relational fact reference. An empty entity is a wildcard: a mapping that
// only knows "this sentence is about holes" matches any entity's has_holes.
struct FactRef {
  FactKind kind = FactKind::feature;
  std::string entity;
  std::string value;

  bool matches(const FactRef& other) const;
  std::string str() const;  // "feature:gabbro/has_holes", "category:igneous"
  static FactRef parse(std::string_view text);

  auto operator<=>(const FactRef&) const = default;
};

enum class MappingStatus { auto_proposed, verified, rejected };

const char* to_string(MappingStatus status);
MappingStatus parse_mapping_status(std::string_view text);

struct SentenceMapping {
  std::string sentence_id;
  std::set<FactRef> targets;
  MappingStatus status = MappingStatus::auto_proposed;

  bool operator==(const SentenceMapping&) const = default;
};

class Curriculum {
 public:
  std::string topic;  // "rocks"
  std::string name;
  std::string noun;   // singular item noun used in notes: "rock"
  bool relevance_verified_only = false;
  std::vector<Category> categories;
  std::vector<Entity> entities;
  std::vector<Feature> features;
  std::vector<Article> articles;
  std::vector<SentenceMapping> mappings;

  const Entity* find_entity(std::string_view id) const;
  const Category* find_category(std::string_view id) const;
  const Feature* find_feature(std::string_view id) const;
  const Sentence* find_sentence(std::string_view id) const;
  const Article* find_article(std::string_view id) const;
  const SentenceMapping* find_mapping(std::string_view sentence_id) const;

  // Throwing lookups (UnknownEntity / UnknownCategory / UnknownFeature).
  const Entity& entity(std::string_view id) const;
  const Category& category(std::string_view id) const;
  const Feature& feature(std::string_view id) const;

  // Resolves free-typed names ("Shale", "shale") as well as ids.
  const Entity* resolve_entity(std::string_view text) const;
  const Category* resolve_category(std::string_view text) const;
  const Feature* resolve_feature(std::string_view text) const;

  const std::string& true_category(std::string_view entity_id) const;

  // Throws IntegrityError if the reference names something not in the topic.
  void check_fact(const FactRef& fact) const;

  // Checks every invariant; load_curriculum calls this.
  void validate() const;

  bool operator==(const Curriculum&) const;
};

bool operator==(const Category&, const Category&);
bool operator==(const Entity&, const Entity&);
bool operator==(const Feature&, const Feature&);
bool operator==(const Sentence&, const Sentence&);
bool operator==(const Article&, const Article&);

// `asset_root`, when given, is where image paths must exist on disk.
Curriculum load_curriculum(const nlohmann::json& doc,
                           const std::filesystem::path& asset_root = {});
Curriculum load_curriculum_file(const std::filesystem::path& path,
                                const std::filesystem::path& asset_root = {});
nlohmann::json to_json(const Curriculum& curriculum);

// Case-insensitive whole-word keyword scan. Multi-word keywords match a run
// of consecutive words.
std::vector<SentenceMapping> scan_sentence_features(const Article& article,
                                                    std::span<const Feature> features);

SentenceMapping verify_mapping(const Curriculum& curriculum, SentenceMapping mapping,
                               MappingStatus decision,
                               const std::optional<std::set<FactRef>>& edited_targets = {});

bool sentence_relevance(const Curriculum& curriculum, std::string_view sentence_id,
                        const FactRef& expected);

// New curriculum version with `mapping` replacing any mapping for the same sentence.
Curriculum with_mapping(const Curriculum& curriculum, SentenceMapping mapping);

std::string capitalize(std::string_view text);
std::string to_lower(std::string_view text);
std::string indefinite_article(std::string_view word);  // "a" / "an"

}  // namespace tutee
