#include <gtest/gtest.h>

#include "support.hpp"
#include "tutee/embodiment.hpp"
#include "tutee/error.hpp"

using namespace tutee;
using nlohmann::json;
using E = Expectation;

namespace {

std::unique_ptr<GroupSession> solo() {
  SessionConfig cfg;
  cfg.id = "emb";
  auto s = std::make_unique<GroupSession>(cfg, testing_support::rocks(), testing_support::flows(),
                                          std::vector<RosterEntry>{{"a", "Ana"}});
  s->join("a", 0);
  return s;
}

std::vector<std::string> agent_lines(const GroupSession& s) {
  std::vector<std::string> out;
  for (const auto& e : s.transcript()) {
    if (e.data["role"] == "agent") out.push_back(e.data["text"]);
  }
  return out;
}

struct Poller {
  std::uint64_t cursor = 0;
  std::size_t batch = 1;
  std::vector<OutboundUtterance> got;

  void drain(const GroupSession& s) {
    for (;;) {
      const auto b = poll_utterances(s, cursor, batch);
      if (b.empty()) return;
      // Polling twice with an unacknowledged cursor returns the same batch.
      const auto again = poll_utterances(s, cursor, batch);
      ASSERT_EQ(again.size(), b.size());
      for (std::size_t i = 0; i < b.size(); ++i) ASSERT_EQ(again[i].seq, b[i].seq);
      for (const auto& u : b) {
        ASSERT_GT(u.seq, cursor);
        got.push_back(u);
        cursor = u.seq;
      }
    }
  }
};

}  // namespace

TEST(Poll, CursorSemantics) {
  auto s = solo();
  s->start_conversation("a", "explain", 1);
  const auto all = poll_utterances(*s, 0);
  ASSERT_EQ(all.size(), 2u);
  EXPECT_EQ(all[0].text, "It's good to understand better why rocks look the way they do.");
  EXPECT_LT(all[0].seq, all[1].seq);
  EXPECT_TRUE(poll_utterances(*s, s->head()).empty());
  EXPECT_EQ(poll_utterances(*s, 0, 1).size(), 1u);
  EXPECT_EQ(to_json(all[1]), (json{{"seq", all[1].seq}, {"text", all[1].text}, {"emotion", "curious"}}));
}

TEST(Poll, TwoPollersEachSeeEverythingOnce) {
  auto s = solo();
  Poller fast{0, 1, {}}, slow{0, 4, {}};
  s->start_conversation("a", "explain", 1);
  fast.drain(*s);
  s->submit("a", {E::entity_selection, "shale"}, 2);
  s->submit("a", {E::category_selection, "sedimentary"}, 3);
  fast.drain(*s);
  slow.drain(*s);
  s->submit("a", {E::sentence_selection, "sedimentary_rocks_3"}, 4);
  s->submit("a", {E::free_text, "Packed sediment."}, 5);
  fast.drain(*s);
  slow.drain(*s);
  const auto want = agent_lines(*s);
  for (const auto* p : {&fast, &slow}) {
    std::vector<std::string> texts;
    for (const auto& u : p->got) texts.push_back(u.text);
    EXPECT_EQ(texts, want);
  }
}

TEST(Emotion, TagsSurviveTemplateFilling) {
  auto s = solo();
  s->start_conversation("a", "explain", 1);
  s->submit("a", {E::entity_selection, "shale"}, 2);
  s->submit("a", {E::category_selection, "sedimentary"}, 3);
  s->submit("a", {E::sentence_selection, "sedimentary_rocks_3"}, 4);
  s->submit("a", {E::free_text, "Packed sediment."}, 5);
  for (const auto& u : poll_utterances(*s, 0)) {
    if (u.text == "I'm really interested in rocks.") {
      EXPECT_EQ(u.emotion, "curious");
    }
  }
  // Every stock prompt keeps its authored tag once rendered.
  for (const auto& [fid, flow] : testing_support::flows()) {
    for (const auto& [sid, st] : flow.states) {
      for (const auto& line : st.prompts) {
        for (const auto& v : line.variants) {
          PromptVariant filled = v;
          std::map<std::string, std::string> values;
          for (const auto& slot : template_slots(v.text)) values[to_lower(slot)] = "x";
          filled.text = fill_template(v.text, values);
          EXPECT_EQ(emotion_of(filled), emotion_of(v)) << fid << '/' << sid;
        }
      }
    }
  }
  EXPECT_EQ(emotion_of(PromptVariant{"untagged"}), "neutral");
}

TEST(Sensing, HeadTouchAfterCorrectQuiz) {
  auto s = solo();
  s->start_conversation("a", "describe", 1);
  s->submit("a", {E::entity_selection, "granite"}, 2);
  s->submit("a", {E::category_selection, "igneous"}, 3);
  s->submit("a", {E::feature_selection, "large_crystals"}, 4);
  s->start_conversation("a", "quiz", 5);
  s->submit("a", {E::image_click, "granite"}, 6);

  const auto facts = s->knowledge().fact_log().size();
  const auto before = poll_utterances(*s, 0).size();
  EXPECT_TRUE(s->push_sensing("head_touch", {{"sensor", "front"}}, 7));
  EXPECT_FALSE(s->push_sensing("head_touch", {}, 8));
  const auto after = poll_utterances(*s, 0);
  ASSERT_EQ(after.size(), before + 1);
  EXPECT_EQ(after.back().text, "Thank you! I'm happy I got that one right.");
  EXPECT_EQ(s->knowledge().fact_log().size(), facts);
}

TEST(Sensing, OutsideAQuizIsLoggedOnly) {
  auto s = solo();
  std::vector<InteractionEvent> log;
  s->set_telemetry_sink([&](const InteractionEvent& e) { log.push_back(e); });
  const auto head = s->head();
  EXPECT_FALSE(s->push_sensing("hand_touch", {}, 1));
  EXPECT_FALSE(s->push_sensing("head_touch", {}, 1));
  EXPECT_EQ(s->head(), head);
  ASSERT_EQ(log.size(), 2u);
  EXPECT_EQ(log[0].kind, "sensing");
  try {
    s->push_sensing("tail_wag", {}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unknown_source);
  }
}

TEST(Sensing, WrongQuizAnswerEarnsNoThanks) {
  auto s = solo();
  s->start_conversation("a", "describe", 1);
  s->submit("a", {E::entity_selection, "granite"}, 2);
  s->submit("a", {E::category_selection, "sedimentary"}, 3);
  s->submit("a", {E::feature_selection, "large_crystals"}, 4);
  s->start_conversation("a", "quiz", 5);
  s->submit("a", {E::image_click, "granite"}, 6);
  EXPECT_FALSE(s->push_sensing("head_touch", {}, 7));
}
