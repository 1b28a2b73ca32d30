#include <gtest/gtest.h>

#include <chrono>

#include "golden.hpp"
#include "tutee/error.hpp"

using namespace tutee;
using namespace testing_support;

TEST(Golden, ExplainReproducesTable) {
  const auto t0 = std::chrono::steady_clock::now();
  Driver d;
  EXPECT_TRUE(run_explain(d));
  EXPECT_EQ(d.lines, kTable2);
  EXPECT_EQ(d.kb.notes().at(0).text,
            "Shale is a Sedimentary rock because With time, sediments get deposited over each other, forming a dense "
            "solid rock");
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 1.0);
}

TEST(Golden, CorrectReproducesTable) {
  Driver d;
  const int id = run_correct(d);
  EXPECT_EQ(d.lines, kTable3);
  EXPECT_EQ(d.kb.classify("gneiss").category, "metamorphic");
  EXPECT_EQ(d.kb.note(id).text, "Gneiss is a Metamorphic rock");
}

TEST(Golden, CorrectDefaultEchoQuotesTheNote) {
  Driver d;
  const int id = d.kb.assert_category("gneiss", "igneous").id;
  auto s = d.start("correct");
  d.say(s, E::entity_selection, "gneiss");
  const auto r = d.say(s, E::notebook_entry_selection, std::to_string(id));
  EXPECT_EQ(r.user_echo, "I think that 'Gneiss is an Igneous rock' is wrong.");
}

TEST(Golden, QuizReproducesExchange) {
  Driver d;
  d.kb.assert_category("granite", "sedimentary");
  auto s = d.start("quiz");
  EXPECT_EQ(s.expectation(), E::image_click);
  const auto r = d.say(s, E::image_click, "granite");
  EXPECT_EQ(d.lines, kQuiz);
  ASSERT_TRUE(r.quiz.has_value());
  EXPECT_FALSE(r.quiz->correct);
  EXPECT_EQ(r.quiz->verdict, "sedimentary");
  EXPECT_TRUE(r.completed);
}

TEST(Golden, QuizOnUntaughtEntity) {
  Driver d;
  auto s = d.start("quiz");
  const auto r = d.say(s, E::image_click, "pumice");
  EXPECT_FALSE(r.quiz->verdict.has_value());
  EXPECT_EQ(d.lines.back(), "Gamma: Oh is that a pumice? I don't know what kind of rock that is yet. Can you teach me about it?");
}

TEST(Golden, TranscriptsAreDeterministic) {
  for (std::uint64_t seed : {1u, 2u, 99u}) {
    Driver a, b;
    EXPECT_TRUE(run_explain(a, seed));
    EXPECT_TRUE(run_explain(b, seed));
    EXPECT_EQ(a.lines, b.lines);
  }
}

TEST(Engine, ExplainKnownEntity) {
  Driver d;
  d.kb.assert_category("shale", "sedimentary");
  auto s = d.start("explain");
  d.say(s, E::entity_selection, "shale");
  EXPECT_EQ(d.lines.at(3), "Gamma: Oh, I remember shale.");
}

TEST(Engine, ExplanationOnAFeatureSentence) {
  Driver d;
  auto s = d.start("explain");
  d.say(s, E::entity_selection, "pumice");
  d.say(s, E::category_selection, "igneous");
  // The bundled mapping for this sentence is feature-only, so it does not answer a category "why".
  const auto r = d.say(s, E::sentence_selection, "igneous_rocks_3");
  EXPECT_FALSE(r.relevant);
  EXPECT_EQ(s.current_state(), "ask_why");
}

TEST(Engine, ExpectationMismatchAndUnknownSelection) {
  Driver d;
  auto s = d.start("explain");
  EXPECT_THROW(d.say(s, E::category_selection, "igneous"), Error);
  try {
    d.say(s, E::entity_selection, "marble");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unknown_selection);
  }
  EXPECT_EQ(s.current_state(), "ask_entity");
  EXPECT_TRUE(d.kb.notes().empty());
}

TEST(Engine, CompareWritesOneComparisonNote) {
  Driver d;
  auto s = d.start("compare");
  d.say(s, E::entity_selection, "schist");
  EXPECT_THROW(d.say(s, E::entity_selection, "schist"), Error);
  d.say(s, E::entity_selection, "gneiss");
  d.say(s, E::feature_selection, "has_layers");
  d.say(s, E::feature_selection, "has_layers");
  const auto r = d.say(s, E::free_text, "they were both squeezed");
  EXPECT_TRUE(r.completed);
  ASSERT_EQ(d.kb.notes().size(), 1u);
  EXPECT_EQ(d.kb.notes()[0].text, "Schist has layers and Gneiss has layers");
}

TEST(Engine, FunFactAndJoke) {
  Driver d;
  auto s = d.start("funfact");
  d.say(s, E::entity_selection, "obsidian");
  d.say(s, E::free_text, "Obsidian is used in heart surgery");
  d.say(s, E::free_text, "It is sharper than steel.");
  EXPECT_EQ(d.kb.notes().at(0).text, "Obsidian is used in heart surgery (Reason: It is sharper than steel)");

  const auto facts = d.kb.fact_log().size();
  auto j = d.start("telljoke");
  EXPECT_THROW(d.say(j, E::free_text, "   "), Error);
  const auto r = d.say(j, E::free_text, "Why was the rock sad? It was taken for granite.");
  EXPECT_TRUE(r.completed);
  EXPECT_EQ(d.kb.fact_log().size(), facts);
}

TEST(Engine, EffectsMatchDeclaredStates) {
  // Every effect a completed flow produces is declared by a state it visited.
  Driver d;
  auto s = d.start("describe");
  std::vector<Effect> got;
  for (auto [kind, value] : std::vector<std::pair<E, std::string>>{
           {E::entity_selection, "pumice"}, {E::category_selection, "igneous"}, {E::feature_selection, "has_holes"}}) {
    for (const auto& e : d.say(s, kind, value).effects) got.push_back(e.effect);
  }
  EXPECT_EQ(got, (std::vector<Effect>{Effect::assert_category, Effect::assert_feature}));
  EXPECT_EQ(d.kb.fact_log().size(), 2u);
  EXPECT_EQ(d.lines.at(d.lines.size() - 2), "Gamma: Pumice has holes. Got it, I wrote that in my notebook.");
}

TEST(Engine, NoteIdIsAttachedToTheNextLine) {
  Driver d;
  auto s = d.start("describe");
  d.say(s, E::entity_selection, "pumice");
  const auto r = d.say(s, E::category_selection, "igneous");
  ASSERT_FALSE(r.utterances.empty());
  EXPECT_EQ(r.utterances.front().note_id, 1);
}

TEST(Stuck, DetectorMatchesExhaustiveOracle) {
  for (int threshold = 1; threshold <= 3; ++threshold) {
    for (int len = 1; len <= 4; ++len) {
      for (int mask = 0; mask < (1 << len); ++mask) {
        StuckDetector det(threshold);
        int run = 0;
        for (int i = 0; i < len; ++i) {
          const bool relevant = (mask >> i) & 1;
          run = relevant ? 0 : run + 1;
          const bool want = run == threshold;
          if (want) run = 0;
          EXPECT_EQ(det.observe(relevant), want) << "threshold " << threshold << " mask " << mask << " step " << i;
        }
      }
    }
  }
}

TEST(Stuck, InsideExplain) {
  for (int len = 1; len <= 4; ++len) {
    for (int mask = 0; mask < (1 << len); ++mask) {
      Driver d;
      auto s = d.start("explain");
      d.say(s, E::entity_selection, "shale");
      d.say(s, E::category_selection, "sedimentary");
      int run = 0;
      for (int i = 0; i < len && s.current_state() == "ask_why"; ++i) {
        const bool relevant = (mask >> i) & 1;
        const auto r = d.say(s, E::sentence_selection, relevant ? "sedimentary_rocks_3" : "igneous_rocks_5");
        run = relevant ? 0 : run + 1;
        EXPECT_EQ(r.relevant, relevant);
        EXPECT_EQ(r.stuck, run == 2);
        if (run == 2) run = 0;
        EXPECT_EQ(s.current_state(), relevant ? "rephrase" : "ask_why");
        if (!relevant) {
          ASSERT_EQ(r.utterances.size(), 1u);
          EXPECT_EQ(r.utterances[0].emotion, "confused");
        }
      }
      EXPECT_EQ(d.kb.fact_log().size(), 1u);
    }
  }
}

TEST(Probe, OffByDefault) {
  Driver d;
  EXPECT_TRUE(run_explain(d));
  EXPECT_TRUE(run_explain(d));
  for (const auto& l : d.lines) EXPECT_EQ(l.find("Am I"), std::string::npos);
}

TEST(Probe, FiresOnCadenceAndReplyHasNoEffect) {
  Driver d;
  d.config.probe_cadence = 3;
  auto s = d.start("describe");
  d.say(s, E::entity_selection, "pumice");
  d.say(s, E::category_selection, "igneous");
  d.say(s, E::feature_selection, "has_holes");
  auto e = d.start("explain");
  d.say(e, E::entity_selection, "granite");
  const auto r = d.say(e, E::category_selection, "igneous");
  ASSERT_TRUE(r.probe);
  EXPECT_EQ(e.expectation(), E::free_text);
  std::set<std::string> probe_texts;
  for (const auto& p : d.config.probes) probe_texts.insert(p.text);
  EXPECT_TRUE(probe_texts.count("Am I learning?"));
  EXPECT_TRUE(probe_texts.count(r.utterances.back().text));

  const auto facts = d.kb.fact_log().size();
  const auto version = d.kb.version();
  const auto reply = d.say(e, E::free_text, "yes");
  EXPECT_TRUE(reply.probe_reply);
  EXPECT_EQ(d.kb.fact_log().size(), facts);
  EXPECT_EQ(d.kb.version(), version);
  EXPECT_EQ(e.current_state(), "ask_why");
}

TEST(Options, FollowTheExpectation) {
  Driver d;
  d.kb.assert_category("gneiss", "igneous");
  auto s = d.start("correct");
  EXPECT_EQ(s.options(d.kb).size(), 12u);
  d.say(s, E::entity_selection, "gneiss");
  const auto opts = s.options(d.kb);
  ASSERT_EQ(opts.size(), 1u);
  EXPECT_EQ(opts[0]["label"], "Gneiss is an Igneous rock");
}
