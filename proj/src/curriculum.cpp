#include "tutee/curriculum.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>
#include <unordered_set>

#include "tutee/error.hpp"

namespace tutee {
namespace {

using nlohmann::json;

bool is_word_char(unsigned char c) { return std::isalnum(c) != 0; }

std::vector<std::string> words_of(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (unsigned char c : text) {
    if (is_word_char(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      words.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

bool contains_word_run(const std::vector<std::string>& words,
                       const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > words.size()) return false;
  return std::search(words.begin(), words.end(), needle.begin(), needle.end()) != words.end();
}

void require_id(const std::string& id, std::string_view what) {
  static const std::regex snake("^[a-z0-9]+(_[a-z0-9]+)*$");
  if (!std::regex_match(id, snake)) {
    throw Error(Errc::schema, std::string(what) + " id '" + id + "' is not lowercase snake_case");
  }
}

std::string req_string(const json& obj, const char* key, std::string_view where) {
  if (!obj.is_object() || !obj.contains(key) || !obj.at(key).is_string()) {
    throw Error(Errc::schema, std::string(where) + ": missing string field '" + key + "'");
  }
  return obj.at(key).get<std::string>();
}

const json& req_array(const json& obj, const char* key) {
  if (!obj.contains(key) || !obj.at(key).is_array()) {
    throw Error(Errc::schema, std::string("curriculum: missing array '") + key + "'");
  }
  return obj.at(key);
}

template <typename T>
void require_unique(const std::vector<T>& items, auto key, std::string_view what) {
  std::unordered_set<std::string> seen;
  for (const auto& item : items) {
    if (!seen.insert(key(item)).second) {
      throw Error(Errc::integrity, "duplicate " + std::string(what) + " '" + key(item) + "'");
    }
  }
}

}  // namespace

std::string capitalize(std::string_view text) {
  std::string out(text);
  if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  return out;
}

std::string indefinite_article(std::string_view word) {
  if (word.empty()) return "a";
  switch (std::tolower(static_cast<unsigned char>(word.front()))) {
    case 'a': case 'e': case 'i': case 'o': case 'u': return "an";
    default: return "a";
  }
}

std::string to_lower(std::string_view text) {
  std::string out(text);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool FactRef::matches(const FactRef& other) const {
  if (kind != other.kind || value != other.value) return false;
  return entity.empty() || other.entity.empty() || entity == other.entity;
}

std::string FactRef::str() const {
  std::string out = kind == FactKind::category ? "category:" : "feature:";
  if (!entity.empty()) out += entity + "/";
  return out + value;
}

FactRef FactRef::parse(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw Error(Errc::schema, "fact reference '" + std::string(text) + "' lacks a kind prefix");
  }
  FactRef ref;
  const auto kind = text.substr(0, colon);
  if (kind == "category") {
    ref.kind = FactKind::category;
  } else if (kind == "feature") {
    ref.kind = FactKind::feature;
  } else {
    throw Error(Errc::schema, "unknown fact kind '" + std::string(kind) + "'");
  }
  auto rest = text.substr(colon + 1);
  if (const auto slash = rest.find('/'); slash != std::string_view::npos) {
    ref.entity = std::string(rest.substr(0, slash));
    rest = rest.substr(slash + 1);
  }
  ref.value = std::string(rest);
  if (ref.value.empty()) throw Error(Errc::schema, "empty fact reference value");
  return ref;
}

const char* to_string(MappingStatus status) {
  switch (status) {
    case MappingStatus::auto_proposed: return "auto_proposed";
    case MappingStatus::verified: return "verified";
    case MappingStatus::rejected: return "rejected";
  }
  return "auto_proposed";
}

MappingStatus parse_mapping_status(std::string_view text) {
  if (text == "auto_proposed") return MappingStatus::auto_proposed;
  if (text == "verified") return MappingStatus::verified;
  if (text == "rejected") return MappingStatus::rejected;
  throw Error(Errc::schema, "unknown mapping status '" + std::string(text) + "'");
}

bool operator==(const Category& a, const Category& b) {
  return a.id == b.id && a.name == b.name && a.plural == b.plural;
}
bool operator==(const Entity& a, const Entity& b) {
  return a.id == b.id && a.name == b.name && a.true_category == b.true_category &&
         a.image == b.image && a.taught_image == b.taught_image;
}
bool operator==(const Feature& a, const Feature& b) {
  return a.id == b.id && a.phrase == b.phrase && a.keywords == b.keywords;
}
bool operator==(const Sentence& a, const Sentence& b) { return a.id == b.id && a.text == b.text; }
bool operator==(const Article& a, const Article& b) {
  return a.id == b.id && a.title == b.title && a.sentences == b.sentences && a.images == b.images;
}

bool Curriculum::operator==(const Curriculum& o) const {
  return topic == o.topic && name == o.name && noun == o.noun &&
         relevance_verified_only == o.relevance_verified_only && categories == o.categories &&
         entities == o.entities && features == o.features && articles == o.articles &&
         mappings == o.mappings;
}

const Entity* Curriculum::find_entity(std::string_view id) const {
  auto it = std::find_if(entities.begin(), entities.end(), [&](const Entity& e) { return e.id == id; });
  return it == entities.end() ? nullptr : &*it;
}

const Category* Curriculum::find_category(std::string_view id) const {
  auto it = std::find_if(categories.begin(), categories.end(), [&](const Category& c) { return c.id == id; });
  return it == categories.end() ? nullptr : &*it;
}

const Feature* Curriculum::find_feature(std::string_view id) const {
  auto it = std::find_if(features.begin(), features.end(), [&](const Feature& f) { return f.id == id; });
  return it == features.end() ? nullptr : &*it;
}

const Sentence* Curriculum::find_sentence(std::string_view id) const {
  for (const auto& article : articles) {
    for (const auto& sentence : article.sentences) {
      if (sentence.id == id) return &sentence;
    }
  }
  return nullptr;
}

const Article* Curriculum::find_article(std::string_view id) const {
  auto it = std::find_if(articles.begin(), articles.end(), [&](const Article& a) { return a.id == id; });
  return it == articles.end() ? nullptr : &*it;
}

const SentenceMapping* Curriculum::find_mapping(std::string_view sentence_id) const {
  auto it = std::find_if(mappings.begin(), mappings.end(),
                         [&](const SentenceMapping& m) { return m.sentence_id == sentence_id; });
  return it == mappings.end() ? nullptr : &*it;
}

const Entity& Curriculum::entity(std::string_view id) const {
  if (const auto* e = find_entity(id)) return *e;
  throw Error(Errc::unknown_entity, "unknown entity '" + std::string(id) + "'");
}

const Category& Curriculum::category(std::string_view id) const {
  if (const auto* c = find_category(id)) return *c;
  throw Error(Errc::unknown_category, "unknown category '" + std::string(id) + "'");
}

const Feature& Curriculum::feature(std::string_view id) const {
  if (const auto* f = find_feature(id)) return *f;
  throw Error(Errc::unknown_feature, "unknown feature '" + std::string(id) + "'");
}

const Entity* Curriculum::resolve_entity(std::string_view text) const {
  const auto wanted = to_lower(text);
  for (const auto& e : entities) {
    if (e.id == wanted || to_lower(e.name) == wanted) return &e;
  }
  return nullptr;
}

const Category* Curriculum::resolve_category(std::string_view text) const {
  const auto wanted = to_lower(text);
  for (const auto& c : categories) {
    if (c.id == wanted || to_lower(c.name) == wanted) return &c;
  }
  return nullptr;
}

const Feature* Curriculum::resolve_feature(std::string_view text) const {
  const auto wanted = to_lower(text);
  for (const auto& f : features) {
    if (f.id == wanted || to_lower(f.phrase) == wanted) return &f;
  }
  return nullptr;
}

const std::string& Curriculum::true_category(std::string_view entity_id) const {
  return entity(entity_id).true_category;
}

void Curriculum::check_fact(const FactRef& fact) const {
  if (!fact.entity.empty() && find_entity(fact.entity) == nullptr) {
    throw Error(Errc::integrity, "fact " + fact.str() + " names an unknown entity");
  }
  const bool known = fact.kind == FactKind::category ? find_category(fact.value) != nullptr
                                                     : find_feature(fact.value) != nullptr;
  if (!known) throw Error(Errc::integrity, "fact " + fact.str() + " names an unknown target");
}

void Curriculum::validate() const {
  require_id(topic, "topic");
  if (categories.empty()) throw Error(Errc::integrity, "a classification task needs categories");
  if (entities.empty()) throw Error(Errc::integrity, "a classification task needs at least one entity");

  require_unique(categories, [](const Category& c) { return c.id; }, "category");
  require_unique(categories, [](const Category& c) { return c.name; }, "category name");
  require_unique(entities, [](const Entity& e) { return e.id; }, "entity");
  require_unique(entities, [](const Entity& e) { return e.name; }, "entity name");
  require_unique(features, [](const Feature& f) { return f.id; }, "feature");
  require_unique(features, [](const Feature& f) { return f.phrase; }, "feature phrase");
  require_unique(articles, [](const Article& a) { return a.id; }, "article");

  for (const auto& c : categories) require_id(c.id, "category");
  for (const auto& e : entities) {
    require_id(e.id, "entity");
    if (e.name.empty()) throw Error(Errc::integrity, "entity '" + e.id + "' has an empty name");
    if (e.image.empty()) throw Error(Errc::integrity, "entity '" + e.id + "' has no image");
    if (find_category(e.true_category) == nullptr) {
      throw Error(Errc::integrity,
                  "entity '" + e.id + "' references unknown category '" + e.true_category + "'");
    }
  }
  for (const auto& f : features) {
    require_id(f.id, "feature");
    if (f.keywords.empty()) throw Error(Errc::integrity, "feature '" + f.id + "' has no keywords");
  }

  std::unordered_set<std::string> sentence_ids;
  for (const auto& a : articles) {
    require_id(a.id, "article");
    for (const auto& s : a.sentences) {
      if (s.id.empty() || !sentence_ids.insert(s.id).second) {
        throw Error(Errc::integrity, "sentence id '" + s.id + "' is empty or reused");
      }
    }
  }

  std::unordered_set<std::string> mapped;
  for (const auto& m : mappings) {
    if (sentence_ids.count(m.sentence_id) == 0) {
      throw Error(Errc::integrity, "mapping for unknown sentence '" + m.sentence_id + "'");
    }
    if (!mapped.insert(m.sentence_id).second) {
      throw Error(Errc::integrity, "sentence '" + m.sentence_id + "' mapped twice");
    }
    for (const auto& t : m.targets) check_fact(t);
  }
}

Curriculum load_curriculum(const json& doc, const std::filesystem::path& asset_root) {
  if (!doc.is_object()) throw Error(Errc::schema, "curriculum document must be an object");
  Curriculum c;
  c.topic = req_string(doc, "topic", "curriculum");
  c.name = doc.value("name", c.topic);
  c.noun = doc.value("noun", std::string{});
  if (c.noun.empty()) {
    c.noun = c.topic;
    if (!c.noun.empty() && c.noun.back() == 's') c.noun.pop_back();
  }
  c.relevance_verified_only = doc.value("relevance_verified_only", false);

  try {
    for (const auto& item : req_array(doc, "categories")) {
      Category cat;
      if (item.is_string()) {
        cat.id = item.get<std::string>();
      } else {
        cat.id = req_string(item, "id", "category");
        cat.name = item.value("name", std::string{});
        cat.plural = item.value("plural", std::string{});
      }
      if (cat.name.empty()) cat.name = cat.id;
      if (cat.plural.empty()) cat.plural = cat.name + "s";
      c.categories.push_back(std::move(cat));
    }
    for (const auto& item : req_array(doc, "entities")) {
      Entity e;
      e.id = req_string(item, "id", "entity");
      e.name = req_string(item, "name", "entity");
      e.true_category = req_string(item, "true_category", "entity");
      e.image = item.value("image", std::string{});
      if (item.contains("taught_image")) e.taught_image = item.at("taught_image").get<std::string>();
      c.entities.push_back(std::move(e));
    }
    for (const auto& item : req_array(doc, "features")) {
      Feature f;
      f.id = req_string(item, "id", "feature");
      f.phrase = req_string(item, "phrase", "feature");
      f.keywords = item.value("keywords", std::vector<std::string>{});
      c.features.push_back(std::move(f));
    }
    if (doc.contains("articles")) {
      for (const auto& item : req_array(doc, "articles")) {
        Article a;
        a.id = req_string(item, "id", "article");
        a.title = item.value("title", a.id);
        a.images = item.value("images", std::vector<std::string>{});
        for (const auto& s : req_array(item, "sentences")) {
          a.sentences.push_back({req_string(s, "id", "sentence"), req_string(s, "text", "sentence")});
        }
        c.articles.push_back(std::move(a));
      }
    }
    if (doc.contains("mappings")) {
      for (const auto& item : req_array(doc, "mappings")) {
        SentenceMapping m;
        m.sentence_id = req_string(item, "sentence_id", "mapping");
        for (const auto& t : item.value("targets", std::vector<std::string>{})) {
          m.targets.insert(FactRef::parse(t));
        }
        m.status = parse_mapping_status(item.value("status", std::string("auto_proposed")));
        c.mappings.push_back(std::move(m));
      }
    }
  } catch (const json::exception& e) {
    throw Error(Errc::schema, std::string("curriculum: ") + e.what());
  }

  c.validate();

  if (!asset_root.empty()) {
    auto check = [&](const std::string& ref) {
      if (!std::filesystem::exists(asset_root / ref)) {
        throw Error(Errc::integrity, "asset '" + ref + "' does not resolve under " + asset_root.string());
      }
    };
    for (const auto& e : c.entities) {
      check(e.image);
      if (e.taught_image) check(*e.taught_image);
    }
    for (const auto& a : c.articles) {
      for (const auto& img : a.images) check(img);
    }
  }
  return c;
}

Curriculum load_curriculum_file(const std::filesystem::path& path,
                                const std::filesystem::path& asset_root) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::not_found, "cannot open curriculum " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::schema, path.string() + ": " + e.what());
  }
  return load_curriculum(doc, asset_root);
}

json to_json(const Curriculum& c) {
  json doc;
  doc["topic"] = c.topic;
  doc["name"] = c.name;
  doc["noun"] = c.noun;
  doc["relevance_verified_only"] = c.relevance_verified_only;
  doc["categories"] = json::array();
  for (const auto& cat : c.categories) {
    doc["categories"].push_back({{"id", cat.id}, {"name", cat.name}, {"plural", cat.plural}});
  }
  doc["entities"] = json::array();
  for (const auto& e : c.entities) {
    json item{{"id", e.id}, {"name", e.name}, {"true_category", e.true_category}, {"image", e.image}};
    if (e.taught_image) item["taught_image"] = *e.taught_image;
    doc["entities"].push_back(std::move(item));
  }
  doc["features"] = json::array();
  for (const auto& f : c.features) {
    doc["features"].push_back({{"id", f.id}, {"phrase", f.phrase}, {"keywords", f.keywords}});
  }
  doc["articles"] = json::array();
  for (const auto& a : c.articles) {
    json sentences = json::array();
    for (const auto& s : a.sentences) sentences.push_back({{"id", s.id}, {"text", s.text}});
    doc["articles"].push_back(
        {{"id", a.id}, {"title", a.title}, {"images", a.images}, {"sentences", std::move(sentences)}});
  }
  doc["mappings"] = json::array();
  for (const auto& m : c.mappings) {
    json targets = json::array();
    for (const auto& t : m.targets) targets.push_back(t.str());
    doc["mappings"].push_back(
        {{"sentence_id", m.sentence_id}, {"targets", std::move(targets)}, {"status", to_string(m.status)}});
  }
  return doc;
}

std::vector<SentenceMapping> scan_sentence_features(const Article& article,
                                                    std::span<const Feature> features) {
  std::vector<std::pair<const Feature*, std::vector<std::vector<std::string>>>> lexicons;
  for (const auto& f : features) {
    std::vector<std::vector<std::string>> phrases;
    for (const auto& k : f.keywords) {
      auto w = words_of(k);
      if (!w.empty()) phrases.push_back(std::move(w));
    }
    lexicons.emplace_back(&f, std::move(phrases));
  }

  std::vector<SentenceMapping> out;
  for (const auto& sentence : article.sentences) {
    const auto words = words_of(sentence.text);
    SentenceMapping mapping{sentence.id, {}, MappingStatus::auto_proposed};
    for (const auto& [feature, phrases] : lexicons) {
      const bool hit = std::any_of(phrases.begin(), phrases.end(),
                                   [&](const auto& p) { return contains_word_run(words, p); });
      if (hit) mapping.targets.insert(FactRef{FactKind::feature, {}, feature->id});
    }
    if (!mapping.targets.empty()) out.push_back(std::move(mapping));
  }
  return out;
}

SentenceMapping verify_mapping(const Curriculum& curriculum, SentenceMapping mapping,
                               MappingStatus decision,
                               const std::optional<std::set<FactRef>>& edited_targets) {
  if (decision == MappingStatus::auto_proposed) {
    throw Error(Errc::invalid_argument, "a verification decision is verified or rejected");
  }
  if (edited_targets) {
    for (const auto& t : *edited_targets) curriculum.check_fact(t);
    mapping.targets = *edited_targets;
  }
  mapping.status = decision;
  return mapping;
}

bool sentence_relevance(const Curriculum& curriculum, std::string_view sentence_id,
                        const FactRef& expected) {
  if (curriculum.find_sentence(sentence_id) == nullptr) {
    throw Error(Errc::unknown_sentence, "unknown sentence '" + std::string(sentence_id) + "'");
  }
  const auto* mapping = curriculum.find_mapping(sentence_id);
  if (mapping == nullptr || mapping->status == MappingStatus::rejected) return false;
  if (curriculum.relevance_verified_only && mapping->status != MappingStatus::verified) return false;
  return std::any_of(mapping->targets.begin(), mapping->targets.end(),
                     [&](const FactRef& t) { return t.matches(expected); });
}

Curriculum with_mapping(const Curriculum& curriculum, SentenceMapping mapping) {
  if (curriculum.find_sentence(mapping.sentence_id) == nullptr) {
    throw Error(Errc::unknown_sentence, "unknown sentence '" + mapping.sentence_id + "'");
  }
  for (const auto& t : mapping.targets) curriculum.check_fact(t);
  Curriculum next = curriculum;
  auto it = std::find_if(next.mappings.begin(), next.mappings.end(),
                         [&](const SentenceMapping& m) { return m.sentence_id == mapping.sentence_id; });
  if (it != next.mappings.end()) {
    *it = std::move(mapping);
  } else {
    next.mappings.push_back(std::move(mapping));
  }
  return next;
}

}  // namespace tutee
