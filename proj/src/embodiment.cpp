#include "tutee/embodiment.hpp"

namespace tutee {

nlohmann::json to_json(const OutboundUtterance& u) {
  return {{"seq", u.seq}, {"text", u.text}, {"emotion", u.emotion}};
}

std::vector<OutboundUtterance> poll_utterances(const GroupSession& session, std::uint64_t after, std::size_t max) {
  std::vector<OutboundUtterance> out;
  for (const auto& e : session.events_since(after)) {
    if (out.size() >= max) break;
    if (e.type != EventType::chat || e.data.value("role", "") != "agent") continue;
    out.push_back({session.id(), e.seq, e.data.value("text", ""), e.data.value("emotion", "neutral"), e.ts});
  }
  return out;
}

}  // namespace tutee
