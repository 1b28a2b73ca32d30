#include <gtest/gtest.h>

#include <httplib.h>

#include <thread>

#include "support.hpp"
#include "tutee/error.hpp"
#include "tutee/http_api.hpp"
#include "tutee/service.hpp"

using namespace tutee;
using nlohmann::json;

namespace {

// In-process server on an ephemeral port.
class Http : public ::testing::Test {
 protected:
  void SetUp() override {
    ServiceConfig cfg;
    cfg.data_dir = testing_support::data_dir();
    cfg.admin_token = "root-token";
    svc = std::make_unique<Service>(cfg);
    install_routes(server, *svc);
    port = server.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port, 0);
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
  }

  void TearDown() override {
    server.stop();
    if (thread.joinable()) thread.join();
  }

  httplib::Headers auth(const std::string& token) const { return {{"Authorization", "Bearer " + token}}; }

  std::pair<int, json> get(const std::string& path, const std::string& token = "root-token") {
    auto r = client->Get(path, auth(token));
    return {r->status, json::parse(r->body)};
  }
  std::pair<int, json> post(const std::string& path, const json& body, const std::string& token = "root-token") {
    auto r = client->Post(path, auth(token), body.dump(), "application/json");
    return {r->status, json::parse(r->body)};
  }

  std::string create_user(const std::string& id) {
    auto [status, body] = post("/api/admin/users", {{"id", id}, {"name", id}});
    EXPECT_EQ(status, 200);
    return body.at("token");
  }

  std::unique_ptr<Service> svc;
  httplib::Server server;
  std::thread thread;
  std::unique_ptr<httplib::Client> client;
  int port = 0;
};

}  // namespace

TEST(HttpStatus, Mapping) {
  EXPECT_EQ(http_status(Errc::unauthorized), 401);
  EXPECT_EQ(http_status(Errc::forbidden), 403);
  EXPECT_EQ(http_status(Errc::not_found), 404);
  EXPECT_EQ(http_status(Errc::not_your_turn), 409);
  EXPECT_EQ(http_status(Errc::conversation_locked), 409);
  EXPECT_EQ(http_status(Errc::integrity), 409);
  EXPECT_EQ(http_status(Errc::session_ended), 410);
  EXPECT_EQ(http_status(Errc::expectation_mismatch), 409);
  EXPECT_EQ(http_status(Errc::invalid_argument), 400);
  EXPECT_EQ(http_status(Errc::schema), 400);
}

TEST_F(Http, HealthAndAuth) {
  auto r = client->Get("/api/health");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(client->Get("/api/curricula")->status, 401);
  auto [status, body] = get("/api/curricula", "wrong");
  EXPECT_EQ(status, 401);
  EXPECT_EQ(body.at("error"), to_string(Errc::unauthorized));
  const auto tutor = create_user("a");
  EXPECT_EQ(get("/api/admin/users", tutor).first, 403);
  EXPECT_EQ(get("/api/curricula", tutor).first, 200);
}

TEST_F(Http, AdminCrud) {
  create_user("a");
  create_user("b");
  EXPECT_EQ(post("/api/admin/users", {{"id", "a"}}).first, 409);
  auto [status, list] = get("/api/admin/users");
  EXPECT_EQ(status, 200);
  EXPECT_EQ(list.size(), 2u);

  auto put = client->Put("/api/admin/users/a", auth("root-token"), R"({"name":"Ana"})", "application/json");
  EXPECT_EQ(put->status, 200);
  EXPECT_EQ(json::parse(put->body).at("name"), "Ana");

  EXPECT_EQ(post("/api/admin/groups", {{"id", "g1"}, {"members", {"a", "b"}}}).first, 200);
  EXPECT_EQ(client->Delete("/api/admin/users/a", auth("root-token"))->status, 409);
  EXPECT_EQ(client->Delete("/api/admin/users/zz", auth("root-token"))->status, 404);

  EXPECT_EQ(post("/api/admin/experiments", {{"id", "e1"}, {"conditions", {"baseline"}}}).first, 200);
  EXPECT_EQ(post("/api/admin/experiments/e1/conditions", {{"id", "humour"}}).first, 200);
  EXPECT_EQ(post("/api/admin/experiments/e1/assignments", {{"user", "a"}, {"condition", "humour"}}).first, 200);
  auto assignments = get("/api/admin/experiments/e1/assignments").second;
  EXPECT_EQ(assignments.at("a"), "humour");
  EXPECT_EQ(client->Put("/api/admin/experiments/e1/assignments/a", auth("root-token"), R"({"condition":"baseline"})",
                        "application/json")
                ->status,
            200);
  EXPECT_EQ(client->Delete("/api/admin/experiments/e1/assignments/a", auth("root-token"))->status, 200);
  EXPECT_EQ(client->Delete("/api/admin/experiments/e1/conditions/humour", auth("root-token"))->status, 200);
  EXPECT_EQ(get("/api/admin/experiments/e1/conditions").second, json::array({"baseline"}));

  auto bad = client->Post("/api/admin/users", auth("root-token"), "{not json", "application/json");
  EXPECT_EQ(bad->status, 400);
}

TEST_F(Http, CurriculaAndFlows) {
  auto [status, list] = get("/api/curricula");
  EXPECT_EQ(status, 200);
  ASSERT_EQ(list.size(), 1u);
  EXPECT_EQ(list[0].at("topic"), "rocks");
  EXPECT_EQ(get("/api/curricula/rocks").second.at("topic"), "rocks");
  EXPECT_EQ(get("/api/curricula/nope").first, 404);
  auto flows = get("/api/flows?condition=humour").second;
  EXPECT_TRUE(flows.contains("explain"));
  EXPECT_EQ(get("/api/flows").second.size(), 7u);
  auto scan = post("/api/admin/curricula/rocks/articles/igneous_rocks/scan", json::object());
  EXPECT_EQ(scan.first, 200);
  EXPECT_FALSE(scan.second.empty());
  auto sid = scan.second[0].at("sentence_id").get<std::string>();
  auto review = post("/api/admin/curricula/rocks/mappings", {{"sentence_id", sid}, {"decision", "rejected"}});
  EXPECT_EQ(review.first, 200);
  EXPECT_EQ(review.second.at("status"), "rejected");
}

TEST_F(Http, SessionLifecycle) {
  const auto a = create_user("a");
  const auto b = create_user("b");
  post("/api/admin/groups", {{"id", "g1"}, {"members", {"a", "b"}}});
  auto [status, started] = post("/api/sessions", {{"group", "g1"}}, a);
  ASSERT_EQ(status, 200);
  EXPECT_EQ(post("/api/sessions", {{"group", "g1"}}, a).first, 409);
  EXPECT_EQ(post("/api/sessions", {{"group", "nope"}}, a).first, 404);
  const auto sid = started.at("session").get<std::string>();
  const auto robot = started.at("embodiment_token").get<std::string>();
  const auto base = "/api/sessions/" + sid;

  EXPECT_EQ(post(base + "/join", json::object(), a).second.at("holder"), "a");
  EXPECT_EQ(post(base + "/join", json::object(), b).first, 200);
  EXPECT_EQ(post(base + "/buttons", {{"flow", "describe"}}, b).first, 409);
  auto pressed = post(base + "/buttons", {{"flow", "describe"}}, a);
  EXPECT_EQ(pressed.first, 200);
  EXPECT_EQ(pressed.second.at("expect"), "entity_selection");
  EXPECT_EQ(post(base + "/buttons", {{"flow", "quiz"}}, a).first, 409);
  EXPECT_EQ(post(base + "/input", {{"kind", "category_selection"}, {"value", "igneous"}}, a).first, 409);
  EXPECT_EQ(post(base + "/input", {{"kind", "bogus"}, {"value", "x"}}, a).first, 400);
  post(base + "/input", {{"kind", "entity_selection"}, {"value", "pumice"}}, a);
  post(base + "/input", {{"kind", "category_selection"}, {"value", "igneous"}}, a);
  auto done = post(base + "/input", {{"kind", "feature_selection"}, {"value", "has_holes"}}, a);
  EXPECT_EQ(done.second.at("completed"), true);

  EXPECT_EQ(post(base + "/chat", {{"text", "try the holes one"}}, b).first, 200);
  EXPECT_EQ(post(base + "/view", {{"view", "notebook"}}, b).second.at("view"), "notebook");

  auto state = get(base + "/state?since=0", b);
  EXPECT_EQ(state.first, 200);
  EXPECT_EQ(state.second.at("holder"), "b");
  const auto head = state.second.at("head").get<std::uint64_t>();
  EXPECT_EQ(state.second.at("events").size(), head);
  EXPECT_EQ(get(base + "/state?since=abc", b).first, 400);

  auto notebook = get(base + "/notebook", a).second;
  EXPECT_NE(notebook.dump().find("Pumice"), std::string::npos);

  // Long poll: nothing new returns after the wait; a later event wakes it.
  auto idle = get(base + "/events?after=" + std::to_string(head) + "&wait=50", a);
  EXPECT_TRUE(idle.second.at("events").empty());
  std::thread later([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    httplib::Client c("127.0.0.1", port);
    c.Post(base + "/chat", auth(a), R"({"text":"hello"})", "application/json");
  });
  auto woke = get(base + "/events?after=" + std::to_string(head) + "&wait=5000", b);
  later.join();
  ASSERT_EQ(woke.second.at("events").size(), 1u);
  EXPECT_EQ(woke.second.at("events")[0].at("data").at("text"), "hello");

  // Embodiment channel.
  EXPECT_EQ(get("/embodiment/" + sid + "/utterances?after=0", a).first, 401);
  auto lines = get("/embodiment/" + sid + "/utterances?after=0&max=2", robot);
  EXPECT_EQ(lines.first, 200);
  EXPECT_EQ(lines.second.size(), 2u);
  auto sensed = post("/embodiment/" + sid + "/events", {{"source", "head_touch"}}, robot);
  EXPECT_EQ(sensed.first, 200);
  EXPECT_EQ(sensed.second.at("utterance"), false);
  EXPECT_EQ(post("/embodiment/" + sid + "/events", {{"source", "nose"}}, robot).first, 400);

  EXPECT_EQ(get("/api/sessions/nope/state", a).first, 404);
  EXPECT_EQ(post(base + "/leave", json::object(), a).first, 200);
  EXPECT_EQ(get("/api/sessions", a).second.size(), 1u);
}
