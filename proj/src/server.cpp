#include "primes/server.hpp"

#include "primes/log.hpp"

#include <httplib.h>

namespace primes::server {

namespace {

constexpr const char* kJson = "application/json";

void send(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), kJson);
}

void send_error(httplib::Response& res, int status, const std::string& reason, const std::string& message) {
    send(res, status, {{"error", {{"status", status}, {"reason", reason}, {"message", message}}}});
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
        try {
            send(res, 200, fn(req));
        } catch (const pilot::ApiError& e) {
            send_error(res, e.status(), e.reason(), e.what());
        } catch (const ValidationError& e) {
            send_error(res, 422, "validation_failed", e.what());
        } catch (const Json::exception& e) {
            send_error(res, 400, "bad_request", e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, "internal_error", e.what());
        }
    };
}

Json parse_body(const httplib::Request& req) {
    if (req.body.empty()) {
        return Json::object();
    }
    auto j = Json::parse(req.body, nullptr, false);
    if (j.is_discarded()) {
        throw pilot::ApiError(400, "bad_json", "request body is not valid JSON");
    }
    return j;
}

} // namespace

ApiServer::ApiServer(pilot::RoundStore& store, ServerOptions options)
    : store_(store), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
    auto& s = *server_;
    s.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Headers", "Content-Type"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    s.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    s.Get("/v1/round", guarded([this](const httplib::Request&) { return store_.round_info(); }));
    s.Get("/v1/rounds", guarded([this](const httplib::Request&) { return store_.history(); }));
    s.Get("/v1/items", guarded([this](const httplib::Request& req) {
              return store_.list_items(req.has_param("status") ? req.get_param_value("status") : "all");
          }));
    s.Get(R"(/v1/items/([0-9A-Za-z]+))",
          guarded([this](const httplib::Request& req) { return store_.item(req.matches[1].str()); }));
    s.Post(R"(/v1/items/([0-9A-Za-z]+)/labels)", guarded([this](const httplib::Request& req) {
               return store_.submit(req.matches[1].str(), parse_body(req));
           }));
    s.Post("/v1/round/model-annotations",
           guarded([this](const httplib::Request& req) { return store_.set_model_annotations(parse_body(req)); }));
    s.Get("/v1/agreement", guarded([this](const httplib::Request&) { return store_.agreement(); }));
    s.Get("/v1/disagreements", guarded([this](const httplib::Request&) { return store_.disagreements(); }));
    s.Post("/v1/rounds/advance",
           guarded([this](const httplib::Request& req) { return store_.advance(parse_body(req)); }));

    s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty()) {
            send_error(res, res.status, res.status == 404 ? "not_found" : "error", "no such endpoint");
        }
    });
}

ApiServer::~ApiServer() {
    stop();
}

int ApiServer::bind() {
    if (options_.port == 0) {
        port_ = server_->bind_to_any_port(options_.host);
    } else {
        port_ = server_->bind_to_port(options_.host, options_.port) ? options_.port : -1;
    }
    if (port_ < 0) {
        throw Error("cannot bind " + options_.host + ":" + std::to_string(options_.port));
    }
    return port_;
}

int ApiServer::start() {
    bind();
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port_;
}

void ApiServer::run() {
    bind();
    log::info("serving /v1 on http://" + options_.host + ":" + std::to_string(port_));
    server_->listen_after_bind();
}

void ApiServer::stop() {
    if (server_) {
        server_->stop();
    }
    if (thread_.joinable()) {
        thread_.join();
    }
}

} // namespace primes::server
