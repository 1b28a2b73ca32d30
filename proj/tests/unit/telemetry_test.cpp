#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "tutee/error.hpp"
#include "tutee/telemetry.hpp"

using namespace tutee;

TEST(Telemetry, RoundTrip) {
  const InteractionEvent e{1700000000.25, "u1", "s1", "button_click", {{"flow", "describe"}}};
  EXPECT_EQ(event_from_json(to_json(e)), e);
  const auto parsed = parse_event_log(to_json(e).dump() + "\n\n" + to_json(e).dump() + "\n");
  EXPECT_EQ(parsed.size(), 2u);
}

TEST(Telemetry, RejectsMalformedRecords) {
  EXPECT_THROW(parse_event_log("{not json}\n"), Error);
  EXPECT_THROW(event_from_json({{"ts", 1}, {"user", "u"}, {"session", "s"}, {"kind", "dance"}}), Error);
  EXPECT_THROW(event_from_json({{"user", "u"}, {"session", "s"}, {"kind", "chat_user"}}), Error);
  EXPECT_TRUE(known_event_kind("notebook_open"));
}

TEST(Telemetry, AppendsToFile) {
  const auto path = std::filesystem::temp_directory_path() / "tutee_telemetry_test.ndjson";
  std::filesystem::remove(path);
  {
    EventLog log(path);
    log.append({1, "u", "s", "view_change", {{"to", "quiz"}}});
    log.append({2, "u", "s", "notebook_open", nlohmann::json::object()});
    EXPECT_EQ(log.size(), 2u);
  }
  {
    EventLog log(path);
    log.append({3, "u", "s", "article_click", {{"article", "a"}}});
  }
  const auto events = read_event_log(path);
  ASSERT_EQ(events.size(), 3u);
  EXPECT_EQ(events[2].kind, "article_click");
  std::filesystem::remove(path);
}
