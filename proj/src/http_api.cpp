#include "tutee/http_api.hpp"

#include <httplib.h>

#include <charconv>

namespace tutee {

using nlohmann::json;

int http_status(Errc code) {
  switch (code) {
    case Errc::unauthorized: return 401;
    case Errc::forbidden:
    case Errc::unknown_member: return 403;
    case Errc::not_found:
    case Errc::unknown_session: return 404;
    case Errc::conversation_locked:
    case Errc::not_your_turn:
    case Errc::expectation_mismatch:
    case Errc::already_running:
    case Errc::integrity:
    case Errc::no_active_members: return 409;
    case Errc::session_ended: return 410;
    default: return 400;
  }
}

namespace {

std::string bearer(const httplib::Request& req) {
  const auto h = req.get_header_value("Authorization");
  constexpr std::string_view prefix = "Bearer ";
  if (h.size() > prefix.size() && h.compare(0, prefix.size(), prefix) == 0) return h.substr(prefix.size());
  return {};
}

std::uint64_t number_param(const httplib::Request& req, const char* name, std::uint64_t fallback) {
  if (!req.has_param(name)) return fallback;
  const auto text = req.get_param_value(name);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw Error(Errc::invalid_argument, std::string("bad '") + name + "' parameter");
  }
  return v;
}

json body_of(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  auto j = json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(Errc::invalid_argument, "body must be a JSON object");
  return j;
}

template <class F>
void respond(httplib::Response& res, F&& f) {
  try {
    res.set_content(f().dump(), "application/json");
  } catch (const Error& e) {
    res.status = http_status(e.code());
    res.set_content(json{{"error", to_string(e.code())}, {"message", e.what()}}.dump(), "application/json");
  } catch (const json::exception& e) {
    res.status = 400;
    res.set_content(json{{"error", "SchemaError"}, {"message", e.what()}}.dump(), "application/json");
  }
}

}  // namespace

void install_routes(httplib::Server& svr, Service& svc) {
  using Req = httplib::Request;
  using Res = httplib::Response;

  svr.Get("/api/health", [](const Req&, Res& res) { res.set_content(R"({"ok":true})", "application/json"); });

  // Admin CRUD on top-level resources.
  const std::string top = R"(/api/admin/(users|groups|experiments))";
  svr.Get(top, [&](const Req& req, Res& res) {
    respond(res, [&] { return svc.admin(svc.authenticate(bearer(req)), req.matches[1].str(), "list", {}); });
  });
  svr.Post(top, [&](const Req& req, Res& res) {
    respond(res, [&] { return svc.admin(svc.authenticate(bearer(req)), req.matches[1].str(), "create", body_of(req)); });
  });
  svr.Put(top + R"(/([^/]+))", [&](const Req& req, Res& res) {
    respond(res, [&] {
      auto body = body_of(req);
      body["id"] = req.matches[2].str();
      return svc.admin(svc.authenticate(bearer(req)), req.matches[1].str(), "update", body);
    });
  });
  svr.Delete(top + R"(/([^/]+))", [&](const Req& req, Res& res) {
    respond(res, [&] {
      return svc.admin(svc.authenticate(bearer(req)), req.matches[1].str(), "delete", {{"id", req.matches[2].str()}});
    });
  });

  // Conditions and assignments live under an experiment.
  const std::string sub = R"(/api/admin/experiments/([^/]+)/(conditions|assignments))";
  svr.Get(sub, [&](const Req& req, Res& res) {
    respond(res, [&] {
      return svc.admin(svc.authenticate(bearer(req)), req.matches[2].str(), "list",
                       {{"experiment", req.matches[1].str()}});
    });
  });
  svr.Post(sub, [&](const Req& req, Res& res) {
    respond(res, [&] {
      auto body = body_of(req);
      body["experiment"] = req.matches[1].str();
      return svc.admin(svc.authenticate(bearer(req)), req.matches[2].str(), "create", body);
    });
  });
  svr.Put(sub + R"(/([^/]+))", [&](const Req& req, Res& res) {
    respond(res, [&] {
      auto body = body_of(req);
      body["experiment"] = req.matches[1].str();
      body[req.matches[2].str() == "conditions" ? "id" : "user"] = req.matches[3].str();
      return svc.admin(svc.authenticate(bearer(req)), req.matches[2].str(), "update", body);
    });
  });
  svr.Delete(sub + R"(/([^/]+))", [&](const Req& req, Res& res) {
    respond(res, [&] {
      json body{{"experiment", req.matches[1].str()}};
      body[req.matches[2].str() == "conditions" ? "id" : "user"] = req.matches[3].str();
      return svc.admin(svc.authenticate(bearer(req)), req.matches[2].str(), "delete", body);
    });
  });

  svr.Get("/api/curricula", [&](const Req& req, Res& res) {
    respond(res, [&] {
      svc.authenticate(bearer(req));
      return svc.curricula();
    });
  });
  svr.Get(R"(/api/curricula/([^/]+))", [&](const Req& req, Res& res) {
    respond(res, [&] {
      svc.authenticate(bearer(req));
      return svc.curriculum(req.matches[1].str());
    });
  });
  svr.Post(R"(/api/admin/curricula/([^/]+)/articles/([^/]+)/scan)", [&](const Req& req, Res& res) {
    respond(res, [&] { return svc.scan_article(svc.authenticate(bearer(req)), req.matches[1].str(), req.matches[2].str()); });
  });
  svr.Post(R"(/api/admin/curricula/([^/]+)/mappings)", [&](const Req& req, Res& res) {
    respond(res, [&] { return svc.review_mapping(svc.authenticate(bearer(req)), req.matches[1].str(), body_of(req)); });
  });
  svr.Get("/api/flows", [&](const Req& req, Res& res) {
    respond(res, [&] {
      svc.authenticate(bearer(req));
      return svc.flows(req.has_param("condition") ? req.get_param_value("condition") : "baseline");
    });
  });

  svr.Get("/api/sessions", [&](const Req& req, Res& res) {
    respond(res, [&] { return svc.list_sessions(svc.authenticate(bearer(req))); });
  });
  svr.Post("/api/sessions", [&](const Req& req, Res& res) {
    respond(res, [&] {
      const auto body = body_of(req);
      return svc.start_session(svc.authenticate(bearer(req)), body.value("group", std::string{}));
    });
  });

  const std::string sess = R"(/api/sessions/([^/]+))";
  svr.Post(sess + "/join", [&](const Req& req, Res& res) {
    respond(res, [&] { return svc.join(svc.authenticate(bearer(req)), req.matches[1].str()); });
  });
  svr.Post(sess + "/leave", [&](const Req& req, Res& res) {
    respond(res, [&] { return svc.leave(svc.authenticate(bearer(req)), req.matches[1].str()); });
  });
  svr.Post(sess + "/buttons", [&](const Req& req, Res& res) {
    respond(res, [&] {
      return svc.press_button(svc.authenticate(bearer(req)), req.matches[1].str(), body_of(req).value("flow", ""));
    });
  });
  svr.Post(sess + "/input", [&](const Req& req, Res& res) {
    respond(res, [&] { return svc.submit_input(svc.authenticate(bearer(req)), req.matches[1].str(), body_of(req)); });
  });
  svr.Post(sess + "/chat", [&](const Req& req, Res& res) {
    respond(res, [&] {
      return svc.chat(svc.authenticate(bearer(req)), req.matches[1].str(), body_of(req).value("text", ""));
    });
  });
  svr.Post(sess + "/view", [&](const Req& req, Res& res) {
    respond(res, [&] {
      return svc.sync_view(svc.authenticate(bearer(req)), req.matches[1].str(), body_of(req).value("view", ""));
    });
  });
  svr.Get(sess + "/state", [&](const Req& req, Res& res) {
    respond(res, [&] {
      return svc.state(svc.authenticate(bearer(req)), req.matches[1].str(), number_param(req, "since", 0));
    });
  });
  svr.Get(sess + "/notebook", [&](const Req& req, Res& res) {
    respond(res, [&] { return svc.notebook(svc.authenticate(bearer(req)), req.matches[1].str()); });
  });
  svr.Get(sess + "/events", [&](const Req& req, Res& res) {
    respond(res, [&] {
      return svc.wait_events(svc.authenticate(bearer(req)), req.matches[1].str(), number_param(req, "after", 0),
                             static_cast<int>(number_param(req, "wait", 25'000)));
    });
  });

  svr.Get(R"(/embodiment/([^/]+)/utterances)", [&](const Req& req, Res& res) {
    respond(res, [&] {
      return svc.poll_utterances(bearer(req), req.matches[1].str(), number_param(req, "after", 0),
                                 number_param(req, "max", 100));
    });
  });
  svr.Post(R"(/embodiment/([^/]+)/events)", [&](const Req& req, Res& res) {
    respond(res, [&] { return svc.push_event(bearer(req), req.matches[1].str(), body_of(req)); });
  });
}

}  // namespace tutee
