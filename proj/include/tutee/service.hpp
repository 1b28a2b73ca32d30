#pragma once
// The deployable service core, independent of HTTP: administration, curricula
// and flows, live group sessions with their per-session locks, persistence
// and crash recovery.
//
// On disk (state_dir):
//   admin.json                    users, groups, experiments
//   audit.ndjson                  one record per admin change
//   telemetry.ndjson              interaction events from every session
//   curricula/<topic>.json        curricula edited through mapping review
//   sessions/<id>/meta.json       roster, seed, limits, token hash
//   sessions/<id>/curriculum.json the curriculum version the session runs on
//   sessions/<id>/flows.json      the flow set of the session's condition
//   sessions/<id>/commands.ndjson write-ahead command log (replayed on start)
//   sessions/<id>/facts.ndjson    knowledge-store records
//   sessions/<id>/transcript.ndjson chat events

#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tutee/curriculum.hpp"
#include "tutee/flow.hpp"
#include "tutee/session.hpp"
#include "tutee/telemetry.hpp"

namespace tutee {

enum class Role { tutor, researcher };

const char* to_string(Role r);
Role parse_role(std::string_view text);

std::string sha256_hex(std::string_view text);
std::string random_token(std::size_t bytes = 24);

struct User {
  std::string id;
  std::string display_name;
  Role role = Role::tutor;
  std::string token_hash;
};

struct Group {
  std::string id;
  std::string name;
  std::vector<std::string> members;
  std::string agent_name = "Gamma";
  std::string curriculum = "rocks";
  std::string experiment;  // optional
};

struct Experiment {
  std::string id;
  std::string name;
  std::vector<std::string> conditions;
  std::map<std::string, std::string> assignments;  // user -> condition
};

struct Caller {
  std::string user_id;
  Role role = Role::tutor;
};

struct ServiceConfig {
  std::filesystem::path data_dir;   // curricula/, flows/<condition>/, assets/
  std::filesystem::path state_dir;  // empty keeps everything in memory
  std::string admin_token;          // bootstrap researcher "admin"
  double session_minutes = 40;
  double idle_window = 120;
  int stuck_threshold = 2;
  int probe_cadence = 0;
  std::function<double()> clock;  // seconds; wall clock when empty
};

class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  Caller authenticate(std::string_view token) const;  // Unauthorized

  // resource: users | groups | experiments | conditions | assignments
  // action:   list | create | update | delete
  nlohmann::json admin(const Caller& caller, std::string_view resource, std::string_view action,
                       const nlohmann::json& payload);

  nlohmann::json curricula() const;
  nlohmann::json curriculum(std::string_view topic) const;
  nlohmann::json scan_article(const Caller& caller, std::string_view topic, std::string_view article);
  nlohmann::json review_mapping(const Caller& caller, std::string_view topic, const nlohmann::json& body);
  nlohmann::json flows(std::string_view condition) const;
  // Condition a group's sessions run under.
  std::string condition_for(const Group& group) const;

  nlohmann::json start_session(const Caller& caller, std::string_view group_id);
  nlohmann::json list_sessions(const Caller& caller) const;
  nlohmann::json join(const Caller& caller, std::string_view session);
  nlohmann::json leave(const Caller& caller, std::string_view session);
  nlohmann::json press_button(const Caller& caller, std::string_view session, const std::string& flow);
  nlohmann::json submit_input(const Caller& caller, std::string_view session, const nlohmann::json& body);
  nlohmann::json chat(const Caller& caller, std::string_view session, const std::string& text);
  nlohmann::json sync_view(const Caller& caller, std::string_view session, const std::string& view);
  nlohmann::json state(const Caller& caller, std::string_view session, std::uint64_t since) const;
  nlohmann::json notebook(const Caller& caller, std::string_view session) const;
  // Long poll: events after `after`, waiting up to `wait_ms` for the first one.
  nlohmann::json wait_events(const Caller& caller, std::string_view session, std::uint64_t after, int wait_ms) const;

  nlohmann::json poll_utterances(std::string_view token, std::string_view session, std::uint64_t after,
                                 std::size_t max) const;
  nlohmann::json push_event(std::string_view token, std::string_view session, const nlohmann::json& body);

  // Enforces session time limits; the server calls this periodically.
  void tick();

  std::filesystem::path asset_dir() const { return config_.data_dir / "assets"; }
  const EventLog& telemetry() const { return *telemetry_; }
  double now() const;

 private:
  struct Live;

  void load_admin();
  void save_admin() const;
  void audit(const Caller& caller, std::string_view resource, std::string_view action, const nlohmann::json& payload);
  void require_researcher(const Caller& caller) const;
  std::shared_ptr<Live> live(std::string_view session) const;  // NotFound
  std::shared_ptr<Live> member_session(const Caller& caller, std::string_view session) const;
  void attach_sinks(Live& s);
  void recover();
  std::shared_ptr<const Curriculum> curriculum_ptr(std::string_view topic) const;
  void add_flow_documents(const std::filesystem::path& dir);
  nlohmann::json admin_users(std::string_view action, const nlohmann::json& payload);
  nlohmann::json admin_groups(std::string_view action, const nlohmann::json& payload);
  nlohmann::json admin_experiments(std::string_view action, const nlohmann::json& payload);
  nlohmann::json admin_conditions(std::string_view action, const nlohmann::json& payload);
  nlohmann::json admin_assignments(std::string_view action, const nlohmann::json& payload);
  bool group_running(std::string_view group_id) const;

  template <class F>
  nlohmann::json with_session(const Caller& caller, std::string_view session, F&& f);

  ServiceConfig config_;
  mutable std::mutex admin_mu_;
  std::map<std::string, User> users_;
  std::map<std::string, Group> groups_;
  std::map<std::string, Experiment> experiments_;
  std::map<std::string, std::shared_ptr<const Curriculum>> curricula_;
  std::vector<nlohmann::json> flow_docs_;
  mutable std::mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Live>, std::less<>> sessions_;
  std::unique_ptr<EventLog> telemetry_;
};

}  // namespace tutee
