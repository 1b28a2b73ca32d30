#include "tutee/session.hpp"

#include <algorithm>

#include "tutee/error.hpp"

namespace tutee {

using nlohmann::json;

bool is_active(const Member& m, double now, double idle_window) {
  return m.online && now - m.last_active <= idle_window;
}

std::optional<std::string> try_next_teacher(std::span<const Member> members, double now, double idle_window,
                                            const std::set<std::string>& exclude) {
  const Member* best = nullptr;
  for (const auto& m : members) {
    if (!is_active(m, now, idle_window) || exclude.count(m.user_id) != 0) continue;
    if (best == nullptr || m.turn_count < best->turn_count ||
        (m.turn_count == best->turn_count && m.join_order < best->join_order)) {
      best = &m;
    }
  }
  if (best == nullptr) return std::nullopt;
  return best->user_id;
}

const Member& next_teacher(std::span<const Member> members, double now, double idle_window,
                           const std::set<std::string>& exclude) {
  const auto id = try_next_teacher(members, now, idle_window, exclude);
  if (!id) throw Error(Errc::no_active_members, "no online and active member can take the turn");
  return *std::find_if(members.begin(), members.end(), [&](const Member& m) { return m.user_id == *id; });
}

void record_turn(std::vector<Member>& members, std::string_view user_id) {
  auto it = std::find_if(members.begin(), members.end(), [&](const Member& m) { return m.user_id == user_id; });
  if (it == members.end()) throw Error(Errc::unknown_member, "'" + std::string(user_id) + "' is not a member");
  ++it->turn_count;
}

const char* to_string(EventType t) {
  switch (t) {
    case EventType::chat: return "chat";
    case EventType::navigation: return "navigation";
    case EventType::turn_assigned: return "turn_assigned";
    case EventType::notebook_updated: return "notebook_updated";
    case EventType::expectation: return "expectation";
  }
  return "chat";
}

json to_json(const SessionEvent& e) {
  return {{"seq", e.seq}, {"type", to_string(e.type)}, {"ts", e.ts}, {"data", e.data}};
}

GroupSession::GroupSession(SessionConfig config, std::shared_ptr<const Curriculum> curriculum, FlowSet flows,
                           std::vector<RosterEntry> roster)
    : config_(std::move(config)), curriculum_(std::move(curriculum)), flows_(std::move(flows)), kb_(curriculum_) {
  if (roster.empty()) throw Error(Errc::invalid_argument, "a group session needs at least one member");
  std::set<std::string> seen;
  for (auto& r : roster) {
    if (!seen.insert(r.user_id).second) throw Error(Errc::integrity, "duplicate member '" + r.user_id + "'");
    Member m;
    m.user_id = r.user_id;
    m.display_name = r.display_name.empty() ? r.user_id : r.display_name;
    members_.push_back(std::move(m));
  }
}

const Member& GroupSession::member(std::string_view user) const {
  for (const auto& m : members_) {
    if (m.user_id == user) return m;
  }
  throw Error(Errc::unknown_member, "'" + std::string(user) + "' is not a member of this session");
}

Member& GroupSession::member_mut(std::string_view user) { return const_cast<Member&>(member(user)); }

std::string GroupSession::name_of(const std::string& user) const { return member(user).display_name; }

Expectation GroupSession::expectation() const {
  return conversation_ ? conversation_->expectation() : Expectation::none;
}

void GroupSession::record(json command, double now) {
  command["t"] = now;
  if (commands_) commands_(command);
}

void GroupSession::flush_facts() {
  const auto& log = kb_.fact_log();
  for (; facts_flushed_ < log.size(); ++facts_flushed_) {
    if (facts_) facts_(log[facts_flushed_]);
  }
}

void GroupSession::publish(EventType type, json data, double now) {
  events_.push_back(SessionEvent{++seq_, type, now, std::move(data)});
  if (event_sink_) event_sink_(events_.back());
}

void GroupSession::log_event(const std::string& user, const std::string& kind, json payload, double now) {
  if (telemetry_) telemetry_(InteractionEvent{now, user, config_.id, kind, std::move(payload)});
}

void GroupSession::agent_say(const Utterance& u, const std::string& kind, double now) {
  json data{{"role", "agent"}, {"text", u.text}, {"emotion", u.emotion}, {"kind", kind}};
  if (u.level != CognitiveLevel::none) data["level"] = u.level == CognitiveLevel::low ? "low" : "high";
  if (u.note_id) data["note_id"] = *u.note_id;
  publish(EventType::chat, data, now);
  log_event(kb_.agent_id(), "chat_agent", {{"text", u.text}, {"emotion", u.emotion}, {"kind", kind}}, now);
}

void GroupSession::agent_say(const std::string& text, const std::string& emotion, const std::string& kind,
                             double now) {
  Utterance u;
  u.text = text;
  u.emotion = emotion;
  agent_say(u, kind, now);
}

void GroupSession::user_said(const std::string& user, const std::string& text, const std::string& kind,
                             double now) {
  publish(EventType::chat,
          {{"role", "user"}, {"user", user}, {"name", name_of(user)}, {"text", text}, {"kind", kind}}, now);
}

void GroupSession::publish_expectation(double now) {
  json data{{"locked", locked()}, {"expect", to_string(expectation())}};
  data["holder"] = holder_ ? json(*holder_) : json(nullptr);
  if (conversation_) {
    data["flow"] = conversation_->flow().id;
    data["state"] = conversation_->current_state();
    data["options"] = conversation_->options(kb_);
  }
  publish(EventType::expectation, std::move(data), now);
}

void GroupSession::touch(Member& m, double now) { m.last_active = std::max(m.last_active, now); }

void GroupSession::assign_holder(std::optional<std::string> user, double now) {
  holder_ = std::move(user);
  json data{{"user", holder_ ? json(*holder_) : json(nullptr)}};
  if (holder_) data["name"] = name_of(*holder_);
  publish(EventType::turn_assigned, std::move(data), now);
}

void GroupSession::refresh_holder(double now) {
  if (holder_ && is_active(member(*holder_), now, config_.policy.idle_window)) return;
  auto pick = try_next_teacher(members_, now, config_.policy.idle_window);
  if (!pick) pick = try_next_teacher(members_, now, std::numeric_limits<double>::infinity());
  if (!pick && holder_ && member(*holder_).online) return;
  if (pick != holder_) assign_holder(pick, now);
}

bool GroupSession::tick(double now) {
  if (ended_ || config_.duration_limit <= 0 || now - config_.started_at < config_.duration_limit) return false;
  end_session(now);
  record({{"op", "tick"}}, now);
  return true;
}

void GroupSession::ensure_running(double now) {
  if (ended_ || tick(now)) throw Error(Errc::session_ended, "the session has ended");
}

void GroupSession::end_session(double now) {
  conversation_.reset();
  ended_ = true;
  praise_pending_ = false;
  agent_say(config_.closing_text, "grateful", "closing", now);
  publish_expectation(now);
}

void GroupSession::join(const std::string& user, double now) {
  auto& m = member_mut(user);
  tick(now);
  m.online = true;
  if (m.join_order < 0) m.join_order = next_join_++;
  touch(m, now);
  if (!ended_ && (!locked() || !holder_ || !member(*holder_).online)) refresh_holder(now);
  record({{"op", "join"}, {"user", user}}, now);
}

void GroupSession::leave(const std::string& user, double now) {
  auto& m = member_mut(user);
  tick(now);
  m.online = false;
  if (!ended_ && holder_ == user) {
    auto next = try_next_teacher(members_, now, config_.policy.idle_window);
    if (!next) next = try_next_teacher(members_, now, std::numeric_limits<double>::infinity());
    assign_holder(next, now);
  }
  record({{"op", "leave"}, {"user", user}}, now);
}

void GroupSession::start_conversation(const std::string& user, const std::string& flow_id, double now) {
  ensure_running(now);
  auto& m = member_mut(user);
  if (conversation_) throw Error(Errc::conversation_locked, "a conversation is already in progress");
  auto flow = flows_.find(flow_id);
  if (flow == flows_.end()) throw Error(Errc::not_found, "no conversation type '" + flow_id + "'");
  if (!m.online) throw Error(Errc::not_your_turn, "join the session first");
  const auto before = holder_;
  refresh_holder(now);
  if (holder_ != before) record({{"op", "refresh"}}, now);
  if (holder_ != user) {
    throw Error(Errc::not_your_turn, holder_ ? "it is " + name_of(*holder_) + "'s turn" : "nobody holds the turn");
  }

  praise_pending_ = false;
  ++conversations_started_;
  kb_.set_context(conversations_started_, user);
  conversation_.emplace(flow->second, config_.seed + static_cast<std::uint64_t>(conversations_started_),
                        config_.engine);
  touch(m, now);
  log_event(user, "button_click", {{"flow", flow_id}}, now);
  EngineContext ctx{kb_, config_.engine, effect_count_};
  auto result = conversation_->start(ctx);
  for (const auto& u : result.utterances) agent_say(u, "flow", now);
  if (result.completed) {
    record_turn(members_, user);
    ++completed_;
    conversation_.reset();
    assign_holder(try_next_teacher(members_, now, config_.policy.idle_window), now);
  }
  publish_expectation(now);
  flush_facts();
  record({{"op", "start"}, {"user", user}, {"flow", flow_id}}, now);
}

AdvanceResult GroupSession::submit(const std::string& user, const UserInput& input, double now) {
  ensure_running(now);
  auto& m = member_mut(user);
  if (!conversation_) throw Error(Errc::expectation_mismatch, "no conversation is in progress");
  if (holder_ != user) {
    throw Error(Errc::not_your_turn, "only " + (holder_ ? name_of(*holder_) : std::string("the turn holder")) +
                                         " can answer right now");
  }
  kb_.set_context(conversations_started_, user);
  EngineContext ctx{kb_, config_.engine, effect_count_};
  auto result = conversation_->advance(ctx, input);
  touch(m, now);

  user_said(user, result.user_echo, result.probe_reply ? "probe_reply" : "flow", now);
  log_event(user, "chat_user",
            {{"text", result.user_echo}, {"input", to_string(input.kind)}, {"value", input.value},
             {"probe_reply", result.probe_reply}},
            now);
  if (input.kind == Expectation::sentence_selection && !result.probe_reply) {
    log_event(user, "sentence_select", {{"sentence", input.value}, {"relevant", result.relevant}}, now);
  }
  for (const auto& e : result.effects) {
    if (e.effect == Effect::correct_note) log_event(user, "correction", e.args, now);
    if (e.note_id) publish(EventType::notebook_updated, {{"version", kb_.version()}, {"note_id", *e.note_id}}, now);
  }
  if (result.quiz) {
    const auto& q = *result.quiz;
    log_event(user, "quiz_result",
              {{"entity", q.entity}, {"verdict", q.verdict ? json(*q.verdict) : json(nullptr)},
               {"correct", q.correct}},
              now);
    praise_pending_ = q.correct;
  }
  for (std::size_t i = 0; i < result.utterances.size(); ++i) {
    const bool probe = result.probe && i + 1 == result.utterances.size();
    agent_say(result.utterances[i], probe ? "probe" : "flow", now);
  }
  if (result.stuck) handle_stuck(user, now);
  if (result.completed) {
    record_turn(members_, user);
    ++completed_;
    conversation_.reset();
    assign_holder(try_next_teacher(members_, now, config_.policy.idle_window), now);
  }
  publish_expectation(now);
  flush_facts();
  record({{"op", "input"},
          {"user", user},
          {"kind", to_string(input.kind)},
          {"value", input.value},
          {"display", input.display}},
         now);
  return result;
}

std::string GroupSession::hint_text() const {
  const auto& s = conversation_->flow().state(conversation_->current_state());
  if (!s.expected_target.empty()) {
    std::map<std::string, std::string> ids;
    for (const auto& [k, b] : conversation_->bindings()) ids[k] = b.value;
    const auto target = FactRef::parse(fill_template(s.expected_target, ids));
    for (const auto& a : curriculum_->articles) {
      for (const auto& sentence : a.sentences) {
        if (sentence_relevance(*curriculum_, sentence.id, target)) {
          return "Here's a hint: have a look at the article \"" + a.title + "\".";
        }
      }
    }
  }
  return "Here's a hint: read the articles again and look for a sentence about what I asked.";
}

void GroupSession::handle_stuck(const std::string& stuck_user, double now) {
  const auto helper = try_next_teacher(members_, now, config_.policy.idle_window, {stuck_user});
  if (!helper) {
    agent_say(hint_text(), "neutral", "hint", now);
    return;
  }
  agent_say(name_of(*helper) + ", can you help " + name_of(stuck_user) + " find a sentence for me?", "curious",
            "help_request", now);
  assign_holder(helper, now);
}

void GroupSession::chat(const std::string& user, const std::string& text, double now) {
  ensure_running(now);
  auto& m = member_mut(user);
  const auto b = text.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) throw Error(Errc::empty_text, "empty chat message");
  touch(m, now);
  user_said(user, text, "helper", now);
  log_event(user, "chat_user", {{"text", text}, {"helper", true}}, now);
  record({{"op", "chat"}, {"user", user}, {"text", text}}, now);
}

void GroupSession::sync_view(const std::string& user, const std::string& view, double now) {
  ensure_running(now);
  auto& m = member_mut(user);
  std::string article;
  if (view.rfind("article:", 0) == 0) {
    article = view.substr(8);
    if (curriculum_->find_article(article) == nullptr) throw Error(Errc::unknown_view, "no article '" + article + "'");
  } else if (view != "teaching" && view != "quiz" && view != "notebook") {
    throw Error(Errc::unknown_view, "unknown view '" + view + "'");
  }
  touch(m, now);
  const auto from = view_;
  view_ = view;
  publish(EventType::navigation, {{"view", view}, {"by", user}}, now);
  log_event(user, "view_change", {{"from", from}, {"to", view}}, now);
  if (view == "notebook") log_event(user, "notebook_open", json::object(), now);
  if (!article.empty()) log_event(user, "article_click", {{"article", article}}, now);
  record({{"op", "view"}, {"user", user}, {"view", view}}, now);
}

bool GroupSession::push_sensing(const std::string& source, const json& payload, double now) {
  if (config_.sensing_sources.count(source) == 0) {
    throw Error(Errc::unknown_source, "unknown sensing source '" + source + "'");
  }
  tick(now);
  log_event("embodiment", "sensing", {{"source", source}, {"payload", payload}}, now);
  bool spoke = false;
  if (source == "head_touch" && praise_pending_ && !ended_) {
    agent_say(config_.praise_thanks, "happy", "feedback", now);
    praise_pending_ = false;
    spoke = true;
  }
  record({{"op", "sensing"}, {"source", source}, {"payload", payload}}, now);
  return spoke;
}

void GroupSession::apply(const json& command) {
  const auto op = command.at("op").get<std::string>();
  const double t = command.at("t").get<double>();
  if (op == "join") {
    join(command.at("user"), t);
  } else if (op == "leave") {
    leave(command.at("user"), t);
  } else if (op == "start") {
    start_conversation(command.at("user"), command.at("flow"), t);
  } else if (op == "input") {
    UserInput in{parse_expectation(command.at("kind").get<std::string>()), command.at("value"),
                 command.value("display", std::string{})};
    submit(command.at("user"), in, t);
  } else if (op == "chat") {
    chat(command.at("user"), command.at("text"), t);
  } else if (op == "view") {
    sync_view(command.at("user"), command.at("view"), t);
  } else if (op == "sensing") {
    push_sensing(command.at("source"), command.value("payload", json::object()), t);
  } else if (op == "tick") {
    tick(t);
  } else if (op == "refresh") {
    refresh_holder(t);
  } else {
    throw Error(Errc::schema, "unknown command '" + op + "'");
  }
}

std::vector<SessionEvent> GroupSession::events_since(std::uint64_t seq, std::size_t max) const {
  std::vector<SessionEvent> out;
  // seq numbers are dense from 1, so the event with seq n sits at index n - 1.
  for (auto i = static_cast<std::size_t>(std::min<std::uint64_t>(seq, events_.size()));
       i < events_.size() && out.size() < max; ++i) {
    out.push_back(events_[i]);
  }
  return out;
}

std::vector<SessionEvent> GroupSession::transcript() const {
  std::vector<SessionEvent> out;
  for (const auto& e : events_) {
    if (e.type == EventType::chat) out.push_back(e);
  }
  return out;
}

json GroupSession::snapshot(std::uint64_t since) const {
  json s{{"session", config_.id},
         {"condition", config_.condition},
         {"head", seq_},
         {"ended", ended_},
         {"view", view_},
         {"locked", locked()},
         {"expect", to_string(expectation())},
         {"notebook_version", kb_.version()},
         {"completed_conversations", completed_}};
  s["holder"] = holder_ ? json(*holder_) : json(nullptr);
  if (conversation_) {
    s["flow"] = conversation_->flow().id;
    s["state"] = conversation_->current_state();
    s["options"] = conversation_->options(kb_);
  }
  s["members"] = json::array();
  for (const auto& m : members_) {
    s["members"].push_back({{"user", m.user_id},
                            {"name", m.display_name},
                            {"online", m.online},
                            {"turn_count", m.turn_count},
                            {"join_order", m.join_order}});
  }
  s["events"] = json::array();
  for (const auto& e : events_since(since)) s["events"].push_back(to_json(e));
  return s;
}

json GroupSession::notebook() const { return to_json(kb_.render_notebook()); }

}  // namespace tutee
