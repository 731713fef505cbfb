#pragma once

#include <memory>
#include <optional>
#include <string>

#include "hipo/core/error.hpp"
#include "hipo/service/study.hpp"

#include "httplib.h"
#include "json.hpp"

namespace hipo::service {

namespace detail {

inline void send_json(httplib::Response& res, int status, const nlohmann::json& j) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
}

template <class Fn>
httplib::Server::Handler guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
        try {
            fn(req, res);
        } catch (const NotFound& e) {
            send_json(res, 404, {{"error", e.what()}});
        } catch (const StateError& e) {
            send_json(res, 409, {{"error", e.what()}});
        } catch (const InvalidArgument& e) {
            send_json(res, 400, {{"error", e.what()}});
        } catch (const ParseError& e) {
            send_json(res, 400, {{"error", e.what()}});
        } catch (const nlohmann::json::exception& e) {
            send_json(res, 400, {{"error", std::string("bad request body: ") + e.what()}});
        } catch (const std::exception& e) {
            send_json(res, 500, {{"error", e.what()}});
        }
    };
}

inline nlohmann::json body_of(const httplib::Request& req) {
    if (req.body.empty()) return nlohmann::json::object();
    auto j = nlohmann::json::parse(req.body);
    if (!j.is_object()) throw InvalidArgument("request body must be a JSON object");
    return j;
}

}  // namespace detail

/// Registers the /v1 endpoints on `server`.
inline void install_routes(httplib::Server& server, StudyService& svc) {
    using detail::body_of;
    using detail::guarded;
    using detail::send_json;
    using Req = httplib::Request;
    using Res = httplib::Response;

    server.Post("/v1/studies", guarded([&svc](const Req& req, Res& res) {
        auto id = svc.create_study(body_of(req));
        send_json(res, 201, svc.study(id).status_json());
    }));
    server.Get(R"(/v1/studies/([^/]+))", guarded([&svc](const Req& req, Res& res) {
        send_json(res, 200, svc.study(req.matches[1]).status_json());
    }));
    server.Post(R"(/v1/studies/([^/]+)/sessions)", guarded([&svc](const Req& req, Res& res) {
        auto body = body_of(req);
        send_json(res, 201, svc.study(req.matches[1]).create_session(body.value("pseudonym", std::string())));
    }));
    server.Get(R"(/v1/studies/([^/]+)/quiz)", guarded([&svc](const Req& req, Res& res) {
        if (!req.has_param("session")) throw InvalidArgument("missing session parameter");
        send_json(res, 200, svc.study(req.matches[1]).quiz(req.get_param_value("session")));
    }));
    server.Post("/v1/responses", guarded([&svc](const Req& req, Res& res) {
        auto ack = svc.submit(body_of(req));
        send_json(res, ack.at("stored").get<bool>() ? 201 : 200, ack);
    }));
    server.Post(R"(/v1/studies/([^/]+)/advance)", guarded([&svc](const Req& req, Res& res) {
        auto body = body_of(req);
        std::optional<int> min_users, expected;
        if (body.contains("min_users")) min_users = body["min_users"].get<int>();
        if (body.contains("iteration")) expected = body["iteration"].get<int>();
        send_json(res, 200, svc.study(req.matches[1]).advance(min_users, expected));
    }));
}

}  // namespace hipo::service
