#include "cral/http_api.h"

// Before httplib: <resolv.h> defines a `_res` macro that breaks Eigen.
#include "cral/service.h"

#include "httplib.h"
#include "json.hpp"

namespace cral {

namespace {

using nlohmann::json;

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const ServiceError& e) { send_json(res, e.status(), e.body()); }

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw ServiceError(400, "invalid_json", std::string("request body is not JSON: ") + e.what());
  }
}

// Runs a handler and maps failures onto the error envelope.
template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const ServiceError& e) {
      send_error(res, e);
    } catch (const InvalidArgument& e) {
      send_error(res, ServiceError(400, "invalid_request", e.what()));
    } catch (const std::exception& e) {
      send_error(res, ServiceError(500, "internal", e.what()));
    }
  };
}

}  // namespace

std::string session_create_url(const std::string& host, int port) {
  return "http://" + host + ":" + std::to_string(port) + "/api/sessions";
}

void register_routes(httplib::Server& server, SessionManager& sessions) {
  // The UI may be served from another origin during development.
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", "Content-Type"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
  });

  server.Post("/api/sessions", guarded([&](const httplib::Request& req, httplib::Response& res) {
                send_json(res, 201, sessions.create_session(parse_body(req)));
              }));
  server.Get(R"(/api/sessions/([^/]+)/batch)",
             guarded([&](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, sessions.batch(req.matches[1]));
             }));
  server.Post(R"(/api/sessions/([^/]+)/annotations)",
              guarded([&](const httplib::Request& req, httplib::Response& res) {
                send_json(res, 200, sessions.submit(req.matches[1], parse_body(req)));
              }));
  server.Post(R"(/api/sessions/([^/]+)/advance)",
              guarded([&](const httplib::Request& req, httplib::Response& res) {
                send_json(res, 200, sessions.advance(req.matches[1]));
              }));
  server.Get(R"(/api/sessions/([^/]+)/metrics)",
             guarded([&](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, sessions.metrics(req.matches[1]));
             }));
  server.Get(R"(/api/sessions/([^/]+)/export)",
             guarded([&](const httplib::Request& req, httplib::Response& res) {
               res.status = 200;
               res.set_content(sessions.export_conllu(req.matches[1]), "text/plain; charset=utf-8");
             }));
  server.Get(R"(/api/sessions/([^/]+)/snapshot)",
             guarded([&](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, sessions.snapshot(req.matches[1]));
             }));
  server.Get("/api/sessions", guarded([&](const httplib::Request&, httplib::Response& res) {
               send_json(res, 200, {{"sessions", sessions.session_ids()}});
             }));
  server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    if (res.status == 404) {
      send_json(res, 404, ServiceError(404, "not_found", "no route for " + req.method + " " + req.path).body());
    }
  });
}

}  // namespace cral
