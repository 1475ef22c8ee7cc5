#pragma once

// JSON-over-HTTP binding of SessionService.
//
//   POST /api/sessions                        {participant_id, seed?, policies?, scenario?} -> 201 session view
//   GET  /api/sessions/{id}                   -> session view
//   POST /api/sessions/{id}/messages          {slot, text} -> {reply, state}
//   POST /api/sessions/{id}/finalize          {slot, design} -> {state}
//   POST /api/sessions/{id}/questionnaire     {answers: {agency: "first"|"second", ...}} -> session view
//   GET  /api/results                         -> per-question wins per policy
//   GET  /api/health                          -> {ok: true}
//
// Errors are {"error": message} with 400 (validation), 404 (unknown session),
// 409 (state; busy sessions also carry Retry-After) or 502 (policy failure).

#include <string>

#include <httplib.h>

#include "agency/service.hpp"

namespace agency {

namespace detail {

inline void send_json(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

inline Json request_json(const httplib::Request& req) {
    if (req.body.empty()) return Json::object();
    try {
        auto j = Json::parse(req.body);
        if (!j.is_object()) throw ValidationError("request body must be a JSON object");
        return j;
    } catch (const Json::parse_error& e) {
        throw ValidationError(std::string("malformed JSON: ") + e.what());
    }
}

inline std::string required_string(const Json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_string()) throw ValidationError(std::string("'") + key + "' is required");
    return j.at(key).get<std::string>();
}

template <class F>
void guarded(httplib::Response& res, F&& fn) {
    try {
        fn();
    } catch (const NotFound& e) {
        send_json(res, 404, {{"error", e.what()}});
    } catch (const SessionBusy& e) {
        res.set_header("Retry-After", "1");
        send_json(res, 409, {{"error", e.what()}, {"retry", true}});
    } catch (const StateError& e) {
        send_json(res, 409, {{"error", e.what()}});
    } catch (const ValidationError& e) {
        send_json(res, 400, {{"error", e.what()}});
    } catch (const Json::exception& e) {
        send_json(res, 400, {{"error", std::string("bad request: ") + e.what()}});
    } catch (const std::exception& e) {
        send_json(res, 502, {{"error", e.what()}});
    }
}

}  // namespace detail

inline void register_routes(httplib::Server& server, SessionService& service) {
    using detail::guarded;
    using detail::send_json;

    server.Get("/api/health", [](const httplib::Request&, httplib::Response& res) { send_json(res, 200, {{"ok", true}}); });

    server.Post("/api/sessions", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto body = detail::request_json(req);
            const auto participant = detail::required_string(body, "participant_id");
            std::optional<std::uint64_t> seed;
            if (body.contains("seed")) seed = body.at("seed").get<std::uint64_t>();
            EvalSession s;
            if (body.contains("policies")) {
                const auto& p = body.at("policies");
                if (!p.is_array() || p.size() != 2) throw ValidationError("'policies' must list two policy ids");
                const auto& pool = service.config().scenarios;
                Scenario scenario;
                const auto chosen = seed.value_or(0);
                if (body.contains("scenario"))
                    scenario = scenario_from_json(body.at("scenario"));
                else if (!pool.empty())
                    scenario = pool[Rng(derive_seed(chosen, 0x7363656e)).index(pool.size())];
                else
                    throw ValidationError("'scenario' is required: no scenarios configured");
                s = service.create_session(participant, {p.at(0).get<std::string>(), p.at(1).get<std::string>()},
                                           scenario, chosen);
            } else {
                s = service.create_session(participant, seed);
            }
            send_json(res, 201, session_view(s));
        });
    });

    server.Get(R"(/api/sessions/([^/]+))", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, session_view(service.get(req.matches[1]))); });
    });

    server.Post(R"(/api/sessions/([^/]+)/messages)", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto body = detail::request_json(req);
            const std::string id = req.matches[1];
            const auto slot = parse_slot(detail::required_string(body, "slot"));
            const auto reply = service.post_message(id, slot, detail::required_string(body, "text"));
            send_json(res, 200, {{"reply", reply}, {"state", std::string(to_string(service.get(id).state))}});
        });
    });

    server.Post(R"(/api/sessions/([^/]+)/finalize)", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto body = detail::request_json(req);
            const auto slot = parse_slot(detail::required_string(body, "slot"));
            const auto state = service.finalize_slot(req.matches[1], slot, detail::required_string(body, "design"));
            send_json(res, 200, {{"state", std::string(to_string(state))}});
        });
    });

    server.Post(R"(/api/sessions/([^/]+)/questionnaire)", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto body = detail::request_json(req);
            if (!body.contains("answers")) throw ValidationError("'answers' is required");
            const auto s = service.submit_questionnaire(req.matches[1], questionnaire_from_json(body.at("answers")));
            send_json(res, 200, session_view(s));
        });
    });

    server.Get("/api/results", [&service](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, to_json(service.results())); });
    });
}

}  // namespace agency
