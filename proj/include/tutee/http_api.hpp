#pragma once
// HTTP binding of the service (cpp-httplib). Errors come back as
// {"error": "NotYourTurn", "message": "..."} with a matching status code.

#include "tutee/error.hpp"
#include "tutee/service.hpp"

namespace httplib {
class Server;
}

namespace tutee {

int http_status(Errc code);

// Registers every /api and /embodiment route on `server`.
void install_routes(httplib::Server& server, Service& service);

}  // namespace tutee
