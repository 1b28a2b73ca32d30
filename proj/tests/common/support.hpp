#pragma once
// Shared fixtures: the bundled rocks curriculum and flow sets.

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "tutee/conversation.hpp"
#include "tutee/curriculum.hpp"
#include "tutee/flow.hpp"
#include "tutee/knowledge.hpp"
#include "tutee/session.hpp"

namespace testing_support {

inline std::filesystem::path data_dir() { return TUTEE_DATA_DIR; }

inline std::shared_ptr<const tutee::Curriculum> rocks() {
  static const auto c = std::make_shared<const tutee::Curriculum>(
      tutee::load_curriculum_file(data_dir() / "curricula" / "rocks.json", data_dir()));
  return c;
}

inline std::vector<nlohmann::json> flow_documents() {
  std::vector<nlohmann::json> docs;
  for (const char* cond : {"baseline", "humour"}) {
    auto d = tutee::read_flow_documents(data_dir() / "flows" / cond);
    docs.insert(docs.end(), d.begin(), d.end());
  }
  return docs;
}

inline tutee::FlowSet flows(const std::string& condition = "baseline") {
  const auto docs = flow_documents();
  return tutee::load_flows(docs, condition);
}

// Drives one conversation directly against a knowledge base.
struct Driver {
  tutee::KnowledgeBase kb;
  tutee::EngineConfig config;
  int effects = 0;
  tutee::EngineContext ctx{kb, config, effects};
  std::vector<std::string> lines;  // "Gamma: ..." / "User: ..."

  Driver() : kb(rocks()) {}

  tutee::ConversationSession start(const std::string& flow, std::uint64_t seed = 1) {
    tutee::ConversationSession s(flows().at(flow), seed, config);
    collect(s.start(ctx));
    return s;
  }

  tutee::AdvanceResult say(tutee::ConversationSession& s, tutee::Expectation kind, const std::string& value,
                           const std::string& display = {}) {
    auto r = s.advance(ctx, {kind, value, display});
    collect(r);
    return r;
  }

  void collect(const tutee::AdvanceResult& r) {
    if (!r.user_echo.empty()) lines.push_back("User: " + r.user_echo);
    for (const auto& u : r.utterances) lines.push_back("Gamma: " + u.text);
  }
};

}  // namespace testing_support
