#pragma once
// Wire-level view of a session for external embodiments (robots, voice
// clients): agent utterances fetched by cursor, sensing events pushed back.

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tutee/flow.hpp"
#include "tutee/session.hpp"

namespace tutee {

struct OutboundUtterance {
  std::string session_id;
  std::uint64_t seq = 0;
  std::string text;
  std::string emotion = "neutral";
  double created_at = 0;
};

nlohmann::json to_json(const OutboundUtterance& u);  // {seq, text, emotion}

// Agent utterances with seq > after, in order, at most `max`. Repeated calls
// with the same cursor return the same batch.
std::vector<OutboundUtterance> poll_utterances(const GroupSession& session, std::uint64_t after,
                                               std::size_t max = std::numeric_limits<std::size_t>::max());

inline const std::string& emotion_of(const PromptVariant& prompt) { return prompt.emotion; }

}  // namespace tutee
