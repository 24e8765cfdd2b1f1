#pragma once

#include <string>

namespace httplib {
class Server;
}

namespace cral {

class SessionManager;

// Mounts the session API under /api on `server`. Failures answer with
// {code, message, details}.
void register_routes(httplib::Server& server, SessionManager& sessions);

// Base URL plus the session-creation endpoint, for banners and logs.
std::string session_create_url(const std::string& host, int port);

}  // namespace cral
