#pragma once
// Append-only interaction log, one JSON object per line:
//   {"ts": 1700000000.25, "user": "u1", "session": "s1", "kind": "button_click", "payload": {...}}

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace tutee {

inline constexpr std::string_view kEventKinds[] = {
    "button_click", "notebook_open", "article_click", "sentence_select", "chat_user",
    "chat_agent",   "quiz_result",   "view_change",   "correction",      "sensing",
};

bool known_event_kind(std::string_view kind);

struct InteractionEvent {
  double ts = 0;  // seconds since the epoch
  std::string user;
  std::string session;
  std::string kind;
  nlohmann::json payload = nlohmann::json::object();

  bool operator==(const InteractionEvent&) const = default;
};

nlohmann::json to_json(const InteractionEvent& e);
InteractionEvent event_from_json(const nlohmann::json& j);  // SchemaError

// Reads an NDJSON log; blank lines are skipped, malformed lines are errors.
std::vector<InteractionEvent> read_event_log(const std::filesystem::path& path);
std::vector<InteractionEvent> parse_event_log(std::string_view text);

// Thread-safe appender. Without a path it only keeps events in memory.
class EventLog {
 public:
  EventLog() = default;
  explicit EventLog(const std::filesystem::path& path);

  void append(const InteractionEvent& e);
  std::vector<InteractionEvent> snapshot() const;
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::ofstream out_;
  std::vector<InteractionEvent> events_;
};

}  // namespace tutee
