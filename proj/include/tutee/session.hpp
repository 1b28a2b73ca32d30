#pragma once
// One group teaching one agent: membership and presence, the least-turns-first
// turn policy, the single active conversation, view sync, and a sequenced
// event stream that clients and embodiments consume by cursor.
//
// Not thread-safe; the owner serializes calls. Every mutating call takes the
// current time so that a recorded command stream replays identically.

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tutee/conversation.hpp"
#include "tutee/curriculum.hpp"
#include "tutee/flow.hpp"
#include "tutee/knowledge.hpp"
#include "tutee/telemetry.hpp"

namespace tutee {

struct Member {
  std::string user_id;
  std::string display_name;
  bool online = false;
  double last_active = -std::numeric_limits<double>::infinity();
  int turn_count = 0;
  int join_order = -1;  // -1 until the member first joins
};

struct TurnPolicy {
  double idle_window = 120;  // seconds since last interaction to count as active
  int stuck_threshold = 2;
};

bool is_active(const Member& m, double now, double idle_window);

// Least turn_count among online, active members not in `exclude`; ties go to
// the earliest join_order. Throws NoActiveMembers.
const Member& next_teacher(std::span<const Member> members, double now, double idle_window,
                           const std::set<std::string>& exclude = {});
std::optional<std::string> try_next_teacher(std::span<const Member> members, double now, double idle_window,
                                            const std::set<std::string>& exclude = {});

// UnknownMember if absent.
void record_turn(std::vector<Member>& members, std::string_view user_id);

enum class EventType { chat, navigation, turn_assigned, notebook_updated, expectation };
const char* to_string(EventType t);

struct SessionEvent {
  std::uint64_t seq = 0;
  EventType type = EventType::chat;
  double ts = 0;
  nlohmann::json data;
};

nlohmann::json to_json(const SessionEvent& e);

inline constexpr std::string_view kDefaultSensingSources[] = {"head_touch", "hand_touch", "foot_touch"};

struct SessionConfig {
  std::string id;
  std::string condition = "baseline";
  std::uint64_t seed = 0;
  double started_at = 0;
  double duration_limit = 40 * 60;  // seconds; <= 0 disables the limit
  TurnPolicy policy;
  EngineConfig engine;
  std::set<std::string> sensing_sources{std::begin(kDefaultSensingSources), std::end(kDefaultSensingSources)};
  std::string closing_text = "Our time is up! Thank you so much for teaching me today.";
  std::string praise_thanks = "Thank you! I'm happy I got that one right.";
};

struct RosterEntry {
  std::string user_id;
  std::string display_name;
};

class GroupSession {
 public:
  using TelemetrySink = std::function<void(const InteractionEvent&)>;
  using CommandSink = std::function<void(const nlohmann::json&)>;
  using EventSink = std::function<void(const SessionEvent&)>;
  using FactSink = std::function<void(const FactRecord&)>;

  GroupSession(SessionConfig config, std::shared_ptr<const Curriculum> curriculum, FlowSet flows,
               std::vector<RosterEntry> roster);

  void join(const std::string& user, double now);
  void leave(const std::string& user, double now);
  void start_conversation(const std::string& user, const std::string& flow_id, double now);
  AdvanceResult submit(const std::string& user, const UserInput& input, double now);
  // Chat that does not advance the flow; any member may send it.
  void chat(const std::string& user, const std::string& text, double now);
  void sync_view(const std::string& user, const std::string& view, double now);
  // Returns true when the event produced an agent utterance.
  bool push_sensing(const std::string& source, const nlohmann::json& payload, double now);
  // Ends the session once the duration limit has passed; true if it ended now.
  bool tick(double now);

  // Re-executes a record produced by the command sink.
  void apply(const nlohmann::json& command);

  std::vector<SessionEvent> events_since(std::uint64_t seq,
                                         std::size_t max = std::numeric_limits<std::size_t>::max()) const;
  std::vector<SessionEvent> transcript() const;
  std::uint64_t head() const { return seq_; }
  nlohmann::json snapshot(std::uint64_t since) const;
  nlohmann::json notebook() const;

  const SessionConfig& config() const { return config_; }
  const std::string& id() const { return config_.id; }
  const KnowledgeBase& knowledge() const { return kb_; }
  const std::vector<Member>& members() const { return members_; }
  const Member& member(std::string_view user) const;  // UnknownMember
  const std::optional<std::string>& turn_holder() const { return holder_; }
  const std::string& current_view() const { return view_; }
  const ConversationSession* conversation() const { return conversation_ ? &*conversation_ : nullptr; }
  bool locked() const { return conversation_.has_value(); }
  bool ended() const { return ended_; }
  Expectation expectation() const;
  int completed_conversations() const { return completed_; }

  void set_telemetry_sink(TelemetrySink sink) { telemetry_ = std::move(sink); }
  void set_command_sink(CommandSink sink) { commands_ = std::move(sink); }
  void set_event_sink(EventSink sink) { event_sink_ = std::move(sink); }
  void set_fact_sink(FactSink sink) { facts_ = std::move(sink); }

 private:
  Member& member_mut(std::string_view user);
  void ensure_running(double now);
  void touch(Member& m, double now);
  void refresh_holder(double now);
  void assign_holder(std::optional<std::string> user, double now);
  void publish(EventType type, nlohmann::json data, double now);
  void agent_say(const Utterance& u, const std::string& kind, double now);
  void agent_say(const std::string& text, const std::string& emotion, const std::string& kind, double now);
  void user_said(const std::string& user, const std::string& text, const std::string& kind, double now);
  void publish_expectation(double now);
  void log_event(const std::string& user, const std::string& kind, nlohmann::json payload, double now);
  void record(nlohmann::json command, double now);
  void flush_facts();
  void handle_stuck(const std::string& stuck_user, double now);
  std::string hint_text() const;
  std::string name_of(const std::string& user) const;
  void end_session(double now);

  SessionConfig config_;
  std::shared_ptr<const Curriculum> curriculum_;
  FlowSet flows_;
  KnowledgeBase kb_;
  std::vector<Member> members_;
  std::optional<std::string> holder_;
  std::optional<ConversationSession> conversation_;
  std::string view_ = "teaching";
  std::vector<SessionEvent> events_;
  std::uint64_t seq_ = 0;
  int effect_count_ = 0;
  int completed_ = 0;
  int conversations_started_ = 0;
  int next_join_ = 0;
  std::size_t facts_flushed_ = 0;
  bool praise_pending_ = false;
  bool ended_ = false;

  TelemetrySink telemetry_;
  CommandSink commands_;
  EventSink event_sink_;
  FactSink facts_;
};

}  // namespace tutee
