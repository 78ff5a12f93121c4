#pragma once

// Binds Api to cpp-httplib.

#include <functional>
#include <string>

#include <httplib.h>

#include "cadx/error.hpp"
#include "cadx/service/api.hpp"

namespace cadx::service {

inline ApiRequest to_api_request(const httplib::Request& r) {
    ApiRequest a;
    a.method = r.method;
    a.path = r.path;
    a.body = r.body;
    for (const auto& [k, v] : r.params) a.query[k] = v;
    for (const auto& [k, v] : r.headers) a.headers[k] = v;
    return a;
}

/// Routes every request through `api`. `on_request` (optional) sees each
/// request line and status, for logging.
inline void mount(httplib::Server& server, Api& api,
                  std::function<void(const ApiRequest&, const ApiResponse&)> on_request = {}) {
    auto handler = [&api, on_request](const httplib::Request& req, httplib::Response& res) {
        const auto a = to_api_request(req);
        const auto out = api.dispatch(a);
        res.status = out.status;
        res.set_content(out.body, out.content_type);
        if (on_request) on_request(a, out);
    };
    const char* pattern = R"(/.*)";
    server.Get(pattern, handler);
    server.Post(pattern, handler);
    server.Put(pattern, handler);
    server.Delete(pattern, handler);
}

/// Binds and serves until stop() is called on `server`.
inline void serve(httplib::Server& server, const std::string& host, int port) {
    // httplib's default adds SO_REUSEPORT, which lets two servers share a port silently
    server.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof(yes));
    });
    if (!server.bind_to_port(host, port)) {
        fail(ErrorCode::PortUnavailable, "cannot bind " + host + ":" + std::to_string(port));
    }
    server.listen_after_bind();
}

}  // namespace cadx::service
