#include "tutee/telemetry.hpp"

#include <algorithm>
#include <sstream>

#include "tutee/error.hpp"

namespace tutee {

using nlohmann::json;

bool known_event_kind(std::string_view kind) {
  return std::find(std::begin(kEventKinds), std::end(kEventKinds), kind) != std::end(kEventKinds);
}

json to_json(const InteractionEvent& e) {
  return {{"ts", e.ts}, {"user", e.user}, {"session", e.session}, {"kind", e.kind}, {"payload", e.payload}};
}

InteractionEvent event_from_json(const json& j) {
  InteractionEvent e;
  try {
    e.ts = j.at("ts").get<double>();
    e.user = j.at("user").get<std::string>();
    e.session = j.at("session").get<std::string>();
    e.kind = j.at("kind").get<std::string>();
    e.payload = j.value("payload", json::object());
  } catch (const json::exception& ex) {
    throw Error(Errc::schema, std::string("event record: ") + ex.what());
  }
  if (!known_event_kind(e.kind)) throw Error(Errc::schema, "unknown event kind '" + e.kind + "'");
  return e;
}

std::vector<InteractionEvent> parse_event_log(std::string_view text) {
  std::vector<InteractionEvent> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(Errc::schema, "event log line " + std::to_string(lineno) + " is not JSON");
    out.push_back(event_from_json(j));
  }
  return out;
}

std::vector<InteractionEvent> read_event_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::not_found, "cannot open event log " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_event_log(buf.str());
}

EventLog::EventLog(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::app);
  if (!out_) throw Error(Errc::not_found, "cannot open event log " + path.string());
}

void EventLog::append(const InteractionEvent& e) {
  std::lock_guard lock(mu_);
  if (out_.is_open()) {
    out_ << to_json(e).dump() << '\n';
    out_.flush();
  }
  events_.push_back(e);
}

std::vector<InteractionEvent> EventLog::snapshot() const {
  std::lock_guard lock(mu_);
  return events_;
}

std::size_t EventLog::size() const {
  std::lock_guard lock(mu_);
  return events_.size();
}

}  // namespace tutee
