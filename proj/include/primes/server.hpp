#pragma once

#include "primes/round_store.hpp"

#include <memory>
#include <string>
#include <thread>

namespace httplib {
class Server;
}

namespace primes::server {

struct ServerOptions {
    /// Loopback unless explicitly widened.
    std::string host = "127.0.0.1";
    /// 0 picks a free port.
    int port = 8765;
};

/// The /v1 JSON API over a RoundStore. See docs/api.md for the endpoint table.
class ApiServer {
public:
    ApiServer(pilot::RoundStore& store, ServerOptions options = {});
    ~ApiServer();
    ApiServer(const ApiServer&) = delete;
    ApiServer& operator=(const ApiServer&) = delete;

    /// Binds and serves on a background thread; returns the bound port.
    int start();
    /// Binds and serves on the calling thread until stop() is called.
    void run();
    void stop();
    int port() const { return port_; }

private:
    int bind();

    pilot::RoundStore& store_;
    ServerOptions options_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    int port_ = 0;
};

} // namespace primes::server
