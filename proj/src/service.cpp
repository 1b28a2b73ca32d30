#include "tutee/service.hpp"

#include <openssl/evp.h>
#include <openssl/rand.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "tutee/embodiment.hpp"
#include "tutee/error.hpp"

namespace tutee {

namespace fs = std::filesystem;
using nlohmann::json;

struct Service::Live {
  mutable std::mutex mu;
  mutable std::condition_variable cv;
  std::unique_ptr<GroupSession> gs;
  std::string group;
  std::set<std::string> roster;
  std::string embodiment_hash;
  fs::path dir;
  std::ofstream commands;
  std::ofstream facts;
  std::ofstream transcript;
};

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::not_found, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::schema, path.string() + ": " + e.what());
  }
}

void write_json_atomic(const fs::path& path, const json& doc) {
  fs::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << doc.dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

std::string req_str(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key) || !j.at(key).is_string() || j.at(key).get<std::string>().empty()) {
    throw Error(Errc::invalid_argument, std::string("missing string field '") + key + "'");
  }
  return j.at(key).get<std::string>();
}

std::vector<std::string> str_list(const json& j, const char* key) {
  std::vector<std::string> out;
  if (!j.contains(key)) return out;
  if (!j.at(key).is_array()) throw Error(Errc::invalid_argument, std::string("'") + key + "' must be a list");
  for (const auto& v : j.at(key)) {
    if (!v.is_string()) throw Error(Errc::invalid_argument, std::string("'") + key + "' must hold strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

// Ids end up in URLs and file names.
void require_id(const std::string& id) {
  const bool ok = !id.empty() && id.size() <= 64 && std::all_of(id.begin(), id.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-' || c == '.';
  }) && id[0] != '.';
  if (!ok) throw Error(Errc::invalid_argument, "bad id '" + id + "'");
}

json user_json(const User& u) { return {{"id", u.id}, {"name", u.display_name}, {"role", to_string(u.role)}}; }

json group_json(const Group& g) {
  return {{"id", g.id},           {"name", g.name},          {"members", g.members},
          {"agent", g.agent_name}, {"curriculum", g.curriculum}, {"experiment", g.experiment}};
}

json experiment_json(const Experiment& e) {
  return {{"id", e.id}, {"name", e.name}, {"conditions", e.conditions}, {"assignments", e.assignments}};
}

std::uint64_t random_seed() {
  std::uint64_t seed = 0;
  if (RAND_bytes(reinterpret_cast<unsigned char*>(&seed), sizeof seed) != 1) {
    throw Error(Errc::integrity, "no randomness available");
  }
  return seed;
}

// Lines of an append-only log; a torn final line from a crash is dropped.
std::vector<json> read_ndjson(const fs::path& path) {
  std::vector<json> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      if (in.peek() == EOF) break;
      throw Error(Errc::schema, path.string() + ": corrupt record");
    }
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace

const char* to_string(Role r) { return r == Role::researcher ? "researcher" : "tutor"; }

Role parse_role(std::string_view text) {
  if (text == "tutor") return Role::tutor;
  if (text == "researcher") return Role::researcher;
  throw Error(Errc::invalid_argument, "unknown role '" + std::string(text) + "'");
}

std::string sha256_hex(std::string_view text) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(Errc::integrity, "sha256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string random_token(std::size_t bytes) {
  std::vector<unsigned char> buf(bytes);
  if (RAND_bytes(buf.data(), static_cast<int>(buf.size())) != 1) throw Error(Errc::integrity, "no randomness available");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (auto b : buf) {
    out += hex[b >> 4];
    out += hex[b & 15];
  }
  return out;
}

Service::Service(ServiceConfig config) : config_(std::move(config)) {
  for (const auto& entry : fs::directory_iterator(config_.data_dir / "curricula")) {
    if (entry.path().extension() != ".json") continue;
    auto c = std::make_shared<const Curriculum>(load_curriculum_file(entry.path(), config_.data_dir));
    curricula_[c->topic] = c;
  }
  flow_docs_ = read_flow_documents(config_.data_dir / "flows");
  load_flows(flow_docs_, "baseline");  // fail fast on a broken flow set

  if (config_.state_dir.empty()) {
    telemetry_ = std::make_unique<EventLog>();
    return;
  }
  fs::create_directories(config_.state_dir / "sessions");
  if (fs::exists(config_.state_dir / "curricula")) {
    for (const auto& entry : fs::directory_iterator(config_.state_dir / "curricula")) {
      if (entry.path().extension() != ".json") continue;
      auto c = std::make_shared<const Curriculum>(load_curriculum_file(entry.path()));
      curricula_[c->topic] = c;
    }
  }
  load_admin();
  telemetry_ = std::make_unique<EventLog>(config_.state_dir / "telemetry.ndjson");
  recover();
}

Service::~Service() = default;

double Service::now() const {
  if (config_.clock) return config_.clock();
  using namespace std::chrono;
  return duration<double>(system_clock::now().time_since_epoch()).count();
}

// ---- administration -------------------------------------------------------

void Service::load_admin() {
  const auto path = config_.state_dir / "admin.json";
  if (!fs::exists(path)) return;
  const auto doc = read_json(path);
  for (const auto& u : doc.value("users", json::array())) {
    User user{u.at("id"), u.value("name", ""), parse_role(u.value("role", "tutor")), u.value("token_hash", "")};
    users_[user.id] = user;
  }
  for (const auto& g : doc.value("groups", json::array())) {
    Group group{g.at("id"), g.value("name", ""), str_list(g, "members"), g.value("agent", "Gamma"),
                g.value("curriculum", "rocks"), g.value("experiment", "")};
    groups_[group.id] = group;
  }
  for (const auto& e : doc.value("experiments", json::array())) {
    Experiment ex{e.at("id"), e.value("name", ""), str_list(e, "conditions"), {}};
    for (const auto& [user, cond] : e.value("assignments", json::object()).items()) ex.assignments[user] = cond;
    experiments_[ex.id] = ex;
  }
}

void Service::save_admin() const {
  if (config_.state_dir.empty()) return;
  json doc{{"users", json::array()}, {"groups", json::array()}, {"experiments", json::array()}};
  for (const auto& [id, u] : users_) {
    auto j = user_json(u);
    j["token_hash"] = u.token_hash;
    doc["users"].push_back(j);
  }
  for (const auto& [id, g] : groups_) doc["groups"].push_back(group_json(g));
  for (const auto& [id, e] : experiments_) doc["experiments"].push_back(experiment_json(e));
  write_json_atomic(config_.state_dir / "admin.json", doc);
}

void Service::audit(const Caller& caller, std::string_view resource, std::string_view action, const json& payload) {
  if (config_.state_dir.empty()) return;
  json rec{{"ts", now()}, {"actor", caller.user_id}, {"resource", resource}, {"action", action}};
  auto redacted = payload;
  if (redacted.is_object()) redacted.erase("token");
  rec["payload"] = redacted;
  std::ofstream out(config_.state_dir / "audit.ndjson", std::ios::app);
  out << rec.dump() << '\n';
}

Caller Service::authenticate(std::string_view token) const {
  if (token.empty()) throw Error(Errc::unauthorized, "missing bearer token");
  if (!config_.admin_token.empty() && token == config_.admin_token) return {"admin", Role::researcher};
  const auto hash = sha256_hex(token);
  std::lock_guard lock(admin_mu_);
  for (const auto& [id, u] : users_) {
    if (u.token_hash == hash) return {u.id, u.role};
  }
  throw Error(Errc::unauthorized, "unknown token");
}

void Service::require_researcher(const Caller& caller) const {
  if (caller.role != Role::researcher) throw Error(Errc::forbidden, "researchers only");
}

json Service::admin(const Caller& caller, std::string_view resource, std::string_view action, const json& payload) {
  require_researcher(caller);
  if (action != "list" && action != "create" && action != "update" && action != "delete") {
    throw Error(Errc::invalid_argument, "unknown action '" + std::string(action) + "'");
  }
  std::lock_guard lock(admin_mu_);
  json out;
  if (resource == "users") {
    out = admin_users(action, payload);
  } else if (resource == "groups") {
    out = admin_groups(action, payload);
  } else if (resource == "experiments") {
    out = admin_experiments(action, payload);
  } else if (resource == "conditions") {
    out = admin_conditions(action, payload);
  } else if (resource == "assignments") {
    out = admin_assignments(action, payload);
  } else {
    throw Error(Errc::not_found, "unknown resource '" + std::string(resource) + "'");
  }
  if (action != "list") {
    save_admin();
    audit(caller, resource, action, payload);
  }
  return out;
}

json Service::admin_users(std::string_view action, const json& p) {
  if (action == "list") {
    json out = json::array();
    for (const auto& [id, u] : users_) out.push_back(user_json(u));
    return out;
  }
  const auto id = req_str(p, "id");
  if (action == "create") {
    require_id(id);
    if (id == "admin" || users_.count(id) != 0) throw Error(Errc::integrity, "user '" + id + "' already exists");
    const auto token = random_token();
    User u{id, p.value("name", id), parse_role(p.value("role", "tutor")), sha256_hex(token)};
    users_[id] = u;
    auto out = user_json(u);
    out["token"] = token;
    return out;
  }
  auto it = users_.find(id);
  if (it == users_.end()) throw Error(Errc::not_found, "no user '" + id + "'");
  if (action == "update") {
    auto& u = it->second;
    if (p.contains("name")) u.display_name = req_str(p, "name");
    if (p.contains("role")) u.role = parse_role(req_str(p, "role"));
    auto out = user_json(u);
    if (p.value("rotate_token", false)) {
      const auto token = random_token();
      u.token_hash = sha256_hex(token);
      out["token"] = token;
    }
    return out;
  }
  for (const auto& [gid, g] : groups_) {
    if (std::find(g.members.begin(), g.members.end(), id) != g.members.end()) {
      throw Error(Errc::integrity, "user '" + id + "' is a member of group '" + gid + "'");
    }
  }
  for (auto& [eid, e] : experiments_) e.assignments.erase(id);
  users_.erase(it);
  return {{"deleted", id}};
}

json Service::admin_groups(std::string_view action, const json& p) {
  if (action == "list") {
    json out = json::array();
    for (const auto& [id, g] : groups_) out.push_back(group_json(g));
    return out;
  }
  const auto id = req_str(p, "id");
  auto check = [&](const Group& g) {
    if (g.members.empty()) throw Error(Errc::integrity, "a group needs at least one member");
    std::set<std::string> seen;
    for (const auto& m : g.members) {
      if (users_.count(m) == 0) throw Error(Errc::integrity, "no user '" + m + "'");
      if (!seen.insert(m).second) throw Error(Errc::integrity, "duplicate member '" + m + "'");
    }
    if (curricula_.count(g.curriculum) == 0) throw Error(Errc::integrity, "no curriculum '" + g.curriculum + "'");
    if (!g.experiment.empty() && experiments_.count(g.experiment) == 0) {
      throw Error(Errc::integrity, "no experiment '" + g.experiment + "'");
    }
  };
  if (action == "create") {
    require_id(id);
    if (groups_.count(id) != 0) throw Error(Errc::integrity, "group '" + id + "' already exists");
    Group g{id, p.value("name", id), str_list(p, "members"), p.value("agent", "Gamma"),
            p.value("curriculum", "rocks"), p.value("experiment", "")};
    check(g);
    groups_[id] = g;
    return group_json(g);
  }
  auto it = groups_.find(id);
  if (it == groups_.end()) throw Error(Errc::not_found, "no group '" + id + "'");
  if (action == "update") {
    Group g = it->second;
    if (p.contains("name")) g.name = req_str(p, "name");
    if (p.contains("members")) g.members = str_list(p, "members");
    if (p.contains("agent")) g.agent_name = req_str(p, "agent");
    if (p.contains("curriculum")) g.curriculum = req_str(p, "curriculum");
    if (p.contains("experiment")) g.experiment = p.at("experiment").is_string() ? p.at("experiment").get<std::string>() : "";
    check(g);
    it->second = g;
    return group_json(g);
  }
  if (group_running(id)) throw Error(Errc::integrity, "group '" + id + "' has a running session");
  groups_.erase(it);
  return {{"deleted", id}};
}

json Service::admin_experiments(std::string_view action, const json& p) {
  if (action == "list") {
    json out = json::array();
    for (const auto& [id, e] : experiments_) out.push_back(experiment_json(e));
    return out;
  }
  const auto id = req_str(p, "id");
  if (action == "create") {
    require_id(id);
    if (experiments_.count(id) != 0) throw Error(Errc::integrity, "experiment '" + id + "' already exists");
    Experiment e{id, p.value("name", id), str_list(p, "conditions"), {}};
    std::set<std::string> seen;
    for (const auto& c : e.conditions) {
      require_id(c);
      if (!seen.insert(c).second) throw Error(Errc::integrity, "duplicate condition '" + c + "'");
    }
    experiments_[id] = e;
    return experiment_json(e);
  }
  auto it = experiments_.find(id);
  if (it == experiments_.end()) throw Error(Errc::not_found, "no experiment '" + id + "'");
  if (action == "update") {
    if (p.contains("name")) it->second.name = req_str(p, "name");
    return experiment_json(it->second);
  }
  for (const auto& [gid, g] : groups_) {
    if (g.experiment == id) throw Error(Errc::integrity, "group '" + gid + "' belongs to experiment '" + id + "'");
  }
  experiments_.erase(it);
  return {{"deleted", id}};
}

json Service::admin_conditions(std::string_view action, const json& p) {
  const auto exp_id = req_str(p, "experiment");
  auto it = experiments_.find(exp_id);
  if (it == experiments_.end()) throw Error(Errc::not_found, "no experiment '" + exp_id + "'");
  auto& e = it->second;
  if (action == "list") return e.conditions;
  const auto id = req_str(p, "id");
  const auto pos = std::find(e.conditions.begin(), e.conditions.end(), id);
  if (action == "create") {
    require_id(id);
    if (pos != e.conditions.end()) throw Error(Errc::integrity, "condition '" + id + "' already exists");
    e.conditions.push_back(id);
    return experiment_json(e);
  }
  if (pos == e.conditions.end()) throw Error(Errc::not_found, "no condition '" + id + "'");
  if (action == "update") throw Error(Errc::invalid_argument, "conditions cannot be renamed");
  for (const auto& [user, cond] : e.assignments) {
    if (cond == id) throw Error(Errc::integrity, "condition '" + id + "' is assigned to '" + user + "'");
  }
  e.conditions.erase(pos);
  return experiment_json(e);
}

json Service::admin_assignments(std::string_view action, const json& p) {
  const auto exp_id = req_str(p, "experiment");
  auto it = experiments_.find(exp_id);
  if (it == experiments_.end()) throw Error(Errc::not_found, "no experiment '" + exp_id + "'");
  auto& e = it->second;
  if (action == "list") return e.assignments;
  const auto user = req_str(p, "user");
  if (action == "delete") {
    if (e.assignments.erase(user) == 0) throw Error(Errc::not_found, "'" + user + "' has no assignment");
    return experiment_json(e);
  }
  if (users_.count(user) == 0) throw Error(Errc::integrity, "no user '" + user + "'");
  const auto cond = req_str(p, "condition");
  if (std::find(e.conditions.begin(), e.conditions.end(), cond) == e.conditions.end()) {
    throw Error(Errc::integrity, "experiment '" + exp_id + "' has no condition '" + cond + "'");
  }
  if (action == "create" && e.assignments.count(user) != 0) {
    throw Error(Errc::integrity, "'" + user + "' already has a condition in '" + exp_id + "'");
  }
  if (action == "update" && e.assignments.count(user) == 0) {
    throw Error(Errc::not_found, "'" + user + "' has no assignment");
  }
  e.assignments[user] = cond;
  return experiment_json(e);
}

std::string Service::condition_for(const Group& group) const {
  std::set<std::string> found;
  std::set<std::string> unassigned;
  for (const auto& m : group.members) {
    std::set<std::string> mine;
    for (const auto& [eid, e] : experiments_) {
      if (!group.experiment.empty() && eid != group.experiment) continue;
      if (auto a = e.assignments.find(m); a != e.assignments.end()) mine.insert(a->second);
    }
    if (mine.size() > 1) throw Error(Errc::integrity, "'" + m + "' is assigned to several conditions");
    if (mine.empty()) unassigned.insert(m);
    found.insert(mine.begin(), mine.end());
  }
  if (found.empty()) return "baseline";
  if (found.size() > 1 || !unassigned.empty()) {
    throw Error(Errc::integrity, "members of group '" + group.id + "' are in different conditions");
  }
  return *found.begin();
}

// ---- curricula and flows --------------------------------------------------

std::shared_ptr<const Curriculum> Service::curriculum_ptr(std::string_view topic) const {
  auto it = curricula_.find(std::string(topic));
  if (it == curricula_.end()) throw Error(Errc::not_found, "no curriculum '" + std::string(topic) + "'");
  return it->second;
}

json Service::curricula() const {
  std::lock_guard lock(admin_mu_);
  json out = json::array();
  for (const auto& [topic, c] : curricula_) {
    out.push_back({{"topic", topic}, {"name", c->name}, {"entities", c->entities.size()},
                   {"articles", c->articles.size()}});
  }
  return out;
}

json Service::curriculum(std::string_view topic) const {
  std::lock_guard lock(admin_mu_);
  return to_json(*curriculum_ptr(topic));
}

json Service::scan_article(const Caller& caller, std::string_view topic, std::string_view article) {
  require_researcher(caller);
  std::lock_guard lock(admin_mu_);
  const auto c = curriculum_ptr(topic);
  const auto* a = c->find_article(article);
  if (a == nullptr) throw Error(Errc::not_found, "no article '" + std::string(article) + "'");
  json out = json::array();
  for (const auto& m : scan_sentence_features(*a, c->features)) {
    json targets = json::array();
    for (const auto& t : m.targets) targets.push_back(t.str());
    out.push_back({{"sentence_id", m.sentence_id}, {"targets", targets}, {"status", to_string(m.status)}});
  }
  return out;
}

json Service::review_mapping(const Caller& caller, std::string_view topic, const json& body) {
  require_researcher(caller);
  std::lock_guard lock(admin_mu_);
  auto c = curriculum_ptr(topic);
  const auto sentence = req_str(body, "sentence_id");
  const auto decision = parse_mapping_status(req_str(body, "decision"));
  SentenceMapping base;
  if (const auto* m = c->find_mapping(sentence)) {
    base = *m;
  } else {
    if (c->find_sentence(sentence) == nullptr) throw Error(Errc::unknown_sentence, "no sentence '" + sentence + "'");
    base.sentence_id = sentence;
  }
  std::optional<std::set<FactRef>> edited;
  if (body.contains("targets")) {
    edited.emplace();
    for (const auto& t : str_list(body, "targets")) edited->insert(FactRef::parse(t));
  }
  auto next = std::make_shared<const Curriculum>(with_mapping(*c, verify_mapping(*c, base, decision, edited)));
  curricula_[std::string(topic)] = next;
  if (!config_.state_dir.empty()) {
    write_json_atomic(config_.state_dir / "curricula" / (std::string(topic) + ".json"), to_json(*next));
  }
  audit(caller, "mappings", "update", body);
  const auto* m = next->find_mapping(sentence);
  json targets = json::array();
  for (const auto& t : m->targets) targets.push_back(t.str());
  return {{"sentence_id", sentence}, {"targets", targets}, {"status", to_string(m->status)}};
}

json Service::flows(std::string_view condition) const {
  json out = json::object();
  for (const auto& [id, f] : load_flows(flow_docs_, condition)) out[id] = to_json(f);
  return out;
}

// ---- sessions -------------------------------------------------------------

bool Service::group_running(std::string_view group_id) const {
  std::lock_guard lock(sessions_mu_);
  for (const auto& [id, s] : sessions_) {
    std::lock_guard sl(s->mu);
    if (s->group == group_id && !s->gs->ended()) return true;
  }
  return false;
}

std::shared_ptr<Service::Live> Service::live(std::string_view session) const {
  std::lock_guard lock(sessions_mu_);
  auto it = sessions_.find(session);
  if (it == sessions_.end()) throw Error(Errc::not_found, "no session '" + std::string(session) + "'");
  return it->second;
}

std::shared_ptr<Service::Live> Service::member_session(const Caller& caller, std::string_view session) const {
  auto s = live(session);
  if (caller.role != Role::researcher && s->roster.count(caller.user_id) == 0) {
    throw Error(Errc::forbidden, "not a member of this session");
  }
  return s;
}

void Service::attach_sinks(Live& s) {
  auto* live = &s;
  s.gs->set_telemetry_sink([this](const InteractionEvent& e) { telemetry_->append(e); });
  s.gs->set_event_sink([live](const SessionEvent& e) {
    if (e.type == EventType::chat && live->transcript.is_open()) {
      live->transcript << to_json(e).dump() << '\n';
      live->transcript.flush();
    }
    live->cv.notify_all();
  });
  if (s.dir.empty()) return;
  s.gs->set_command_sink([live](const json& cmd) {
    live->commands << cmd.dump() << '\n';
    live->commands.flush();
  });
  const auto sid = s.gs->id();
  s.gs->set_fact_sink([live, sid](const FactRecord& r) {
    auto j = to_json(r);
    j["session"] = sid;
    live->facts << j.dump() << '\n';
    live->facts.flush();
  });
}

json Service::start_session(const Caller& caller, std::string_view group_id) {
  std::lock_guard admin_lock(admin_mu_);
  auto g = groups_.find(std::string(group_id));
  if (g == groups_.end()) throw Error(Errc::not_found, "no group '" + std::string(group_id) + "'");
  const auto& group = g->second;
  if (caller.role != Role::researcher &&
      std::find(group.members.begin(), group.members.end(), caller.user_id) == group.members.end()) {
    throw Error(Errc::forbidden, "not a member of group '" + group.id + "'");
  }
  if (group_running(group.id)) throw Error(Errc::already_running, "group '" + group.id + "' already has a session");

  const auto condition = condition_for(group);
  auto curriculum = curriculum_ptr(group.curriculum);
  auto flows = load_flows(flow_docs_, condition);

  SessionConfig cfg;
  cfg.id = random_token(16);
  cfg.condition = condition;
  cfg.seed = random_seed();
  cfg.started_at = now();
  cfg.duration_limit = config_.session_minutes * 60;
  cfg.policy.idle_window = config_.idle_window;
  cfg.policy.stuck_threshold = config_.stuck_threshold;
  cfg.engine.stuck_threshold = config_.stuck_threshold;
  cfg.engine.probe_cadence = config_.probe_cadence;
  cfg.engine.agent_name = group.agent_name;

  std::vector<RosterEntry> roster;
  json roster_json = json::array();
  for (const auto& m : group.members) {
    roster.push_back({m, users_.at(m).display_name});
    roster_json.push_back({{"user", m}, {"name", users_.at(m).display_name}});
  }

  const auto token = random_token();
  auto s = std::make_shared<Live>();
  s->group = group.id;
  s->roster = {group.members.begin(), group.members.end()};
  s->embodiment_hash = sha256_hex(token);

  if (!config_.state_dir.empty()) {
    s->dir = config_.state_dir / "sessions" / cfg.id;
    fs::create_directories(s->dir);
    json meta{{"id", cfg.id},
              {"group", group.id},
              {"condition", condition},
              {"seed", cfg.seed},
              {"started_at", cfg.started_at},
              {"duration_limit", cfg.duration_limit},
              {"idle_window", cfg.policy.idle_window},
              {"stuck_threshold", cfg.policy.stuck_threshold},
              {"probe_cadence", cfg.engine.probe_cadence},
              {"agent_name", cfg.engine.agent_name},
              {"roster", roster_json},
              {"embodiment_hash", s->embodiment_hash}};
    json flow_docs = json::array();
    for (const auto& [id, f] : flows) flow_docs.push_back(to_json(f));
    write_json_atomic(s->dir / "curriculum.json", to_json(*curriculum));
    write_json_atomic(s->dir / "flows.json", flow_docs);
    write_json_atomic(s->dir / "meta.json", meta);
    s->commands.open(s->dir / "commands.ndjson", std::ios::app);
    s->facts.open(s->dir / "facts.ndjson", std::ios::app);
    s->transcript.open(s->dir / "transcript.ndjson", std::ios::app);
  }
  s->gs = std::make_unique<GroupSession>(cfg, curriculum, std::move(flows), std::move(roster));
  attach_sinks(*s);
  {
    std::lock_guard lock(sessions_mu_);
    sessions_[cfg.id] = s;
  }
  return {{"session", cfg.id}, {"embodiment_token", token}, {"condition", condition}, {"group", group.id}};
}

void Service::recover() {
  for (const auto& entry : fs::directory_iterator(config_.state_dir / "sessions")) {
    if (!entry.is_directory() || !fs::exists(entry.path() / "meta.json")) continue;
    const auto& dir = entry.path();
    try {
      const auto meta = read_json(dir / "meta.json");
      SessionConfig cfg;
      cfg.id = meta.at("id");
      cfg.condition = meta.at("condition");
      cfg.seed = meta.at("seed");
      cfg.started_at = meta.at("started_at");
      cfg.duration_limit = meta.at("duration_limit");
      cfg.policy.idle_window = meta.at("idle_window");
      cfg.policy.stuck_threshold = meta.at("stuck_threshold");
      cfg.engine.stuck_threshold = cfg.policy.stuck_threshold;
      cfg.engine.probe_cadence = meta.at("probe_cadence");
      cfg.engine.agent_name = meta.at("agent_name");
      std::vector<RosterEntry> roster;
      for (const auto& r : meta.at("roster")) roster.push_back({r.at("user"), r.at("name")});
      auto curriculum = std::make_shared<const Curriculum>(load_curriculum(read_json(dir / "curriculum.json")));
      FlowSet flows;
      for (const auto& doc : read_json(dir / "flows.json")) {
        auto f = parse_flow(doc);
        validate_flow(f);
        flows[f.id] = std::move(f);
      }

      auto s = std::make_shared<Live>();
      s->group = meta.at("group");
      for (const auto& r : roster) s->roster.insert(r.user_id);
      s->embodiment_hash = meta.at("embodiment_hash");
      s->dir = dir;
      s->gs = std::make_unique<GroupSession>(cfg, curriculum, std::move(flows), std::move(roster));
      for (const auto& cmd : read_ndjson(dir / "commands.ndjson")) s->gs->apply(cmd);

      // Derived logs are regenerated from the replay.
      {
        std::ofstream facts(dir / "facts.ndjson", std::ios::trunc);
        for (const auto& r : s->gs->knowledge().fact_log()) {
          auto j = to_json(r);
          j["session"] = cfg.id;
          facts << j.dump() << '\n';
        }
        std::ofstream transcript(dir / "transcript.ndjson", std::ios::trunc);
        for (const auto& e : s->gs->transcript()) transcript << to_json(e).dump() << '\n';
      }
      // Drop a torn final command line so new records start on a fresh line.
      {
        std::ofstream rewrite(dir / "commands.ndjson.tmp", std::ios::trunc);
        for (const auto& cmd : read_ndjson(dir / "commands.ndjson")) rewrite << cmd.dump() << '\n';
      }
      fs::rename(dir / "commands.ndjson.tmp", dir / "commands.ndjson");
      s->commands.open(dir / "commands.ndjson", std::ios::app);
      s->facts.open(dir / "facts.ndjson", std::ios::app);
      s->transcript.open(dir / "transcript.ndjson", std::ios::app);
      attach_sinks(*s);
      std::lock_guard lock(sessions_mu_);
      sessions_[cfg.id] = s;
    } catch (const std::exception& e) {
      std::cerr << "skipping session " << dir.filename().string() << ": " << e.what() << '\n';
    }
  }
}

json Service::list_sessions(const Caller& caller) const {
  json out = json::array();
  std::lock_guard lock(sessions_mu_);
  for (const auto& [id, s] : sessions_) {
    if (caller.role != Role::researcher && s->roster.count(caller.user_id) == 0) continue;
    std::lock_guard sl(s->mu);
    out.push_back({{"session", id},
                   {"group", s->group},
                   {"condition", s->gs->config().condition},
                   {"ended", s->gs->ended()},
                   {"head", s->gs->head()}});
  }
  return out;
}

template <class F>
json Service::with_session(const Caller& caller, std::string_view session, F&& f) {
  auto s = member_session(caller, session);
  std::lock_guard lock(s->mu);
  const auto before = s->gs->head();
  json out = f(*s->gs);
  if (out.is_null()) out = json::object();
  out["head"] = s->gs->head();
  out["events"] = json::array();
  for (const auto& e : s->gs->events_since(before)) out["events"].push_back(to_json(e));
  return out;
}

json Service::join(const Caller& caller, std::string_view session) {
  const double t = now();
  return with_session(caller, session, [&](GroupSession& gs) {
    gs.join(caller.user_id, t);
    return gs.snapshot(0);
  });
}

json Service::leave(const Caller& caller, std::string_view session) {
  const double t = now();
  return with_session(caller, session, [&](GroupSession& gs) {
    gs.leave(caller.user_id, t);
    return json::object();
  });
}

json Service::press_button(const Caller& caller, std::string_view session, const std::string& flow) {
  const double t = now();
  return with_session(caller, session, [&](GroupSession& gs) {
    gs.start_conversation(caller.user_id, flow, t);
    return json{{"expect", to_string(gs.expectation())}};
  });
}

json Service::submit_input(const Caller& caller, std::string_view session, const json& body) {
  UserInput in;
  in.kind = parse_expectation(req_str(body, "kind"));
  if (!body.contains("value")) throw Error(Errc::invalid_argument, "missing field 'value'");
  in.value = body.at("value").is_string() ? body.at("value").get<std::string>() : body.at("value").dump();
  in.display = body.value("display", std::string{});
  const double t = now();
  return with_session(caller, session, [&](GroupSession& gs) {
    const auto r = gs.submit(caller.user_id, in, t);
    return json{{"expect", to_string(gs.expectation())},
                {"completed", r.completed},
                {"stuck", r.stuck},
                {"relevant", r.relevant}};
  });
}

json Service::chat(const Caller& caller, std::string_view session, const std::string& text) {
  const double t = now();
  return with_session(caller, session, [&](GroupSession& gs) {
    gs.chat(caller.user_id, text, t);
    return json::object();
  });
}

json Service::sync_view(const Caller& caller, std::string_view session, const std::string& view) {
  const double t = now();
  return with_session(caller, session, [&](GroupSession& gs) {
    gs.sync_view(caller.user_id, view, t);
    return json{{"view", gs.current_view()}};
  });
}

json Service::state(const Caller& caller, std::string_view session, std::uint64_t since) const {
  auto s = member_session(caller, session);
  std::lock_guard lock(s->mu);
  return s->gs->snapshot(since);
}

json Service::notebook(const Caller& caller, std::string_view session) const {
  auto s = member_session(caller, session);
  std::lock_guard lock(s->mu);
  return s->gs->notebook();
}

json Service::wait_events(const Caller& caller, std::string_view session, std::uint64_t after, int wait_ms) const {
  auto s = member_session(caller, session);
  std::unique_lock lock(s->mu);
  s->cv.wait_for(lock, std::chrono::milliseconds(std::clamp(wait_ms, 0, 60'000)),
                 [&] { return s->gs->head() > after; });
  json out{{"head", s->gs->head()}, {"events", json::array()}};
  for (const auto& e : s->gs->events_since(after)) out["events"].push_back(to_json(e));
  return out;
}

json Service::poll_utterances(std::string_view token, std::string_view session, std::uint64_t after,
                              std::size_t max) const {
  auto s = live(session);
  if (sha256_hex(token) != s->embodiment_hash) throw Error(Errc::unauthorized, "bad embodiment token");
  std::lock_guard lock(s->mu);
  json out = json::array();
  for (const auto& u : tutee::poll_utterances(*s->gs, after, max)) out.push_back(to_json(u));
  return out;
}

json Service::push_event(std::string_view token, std::string_view session, const json& body) {
  auto s = live(session);
  if (sha256_hex(token) != s->embodiment_hash) throw Error(Errc::unauthorized, "bad embodiment token");
  const auto source = req_str(body, "source");
  const auto payload = body.value("payload", json::object());
  const double t = now();
  std::lock_guard lock(s->mu);
  const bool spoke = s->gs->push_sensing(source, payload, t);
  return {{"accepted", true}, {"utterance", spoke}, {"head", s->gs->head()}};
}

void Service::tick() {
  std::vector<std::shared_ptr<Live>> all;
  {
    std::lock_guard lock(sessions_mu_);
    for (const auto& [id, s] : sessions_) all.push_back(s);
  }
  const double t = now();
  for (const auto& s : all) {
    std::lock_guard lock(s->mu);
    s->gs->tick(t);
  }
}

}  // namespace tutee
