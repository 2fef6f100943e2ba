#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>

#include "citygan/checkpoint.hpp"

namespace httplib {
class Server;
}

namespace citygan {

struct ServiceResponse {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
};

/// Stateless request handlers over one immutable generator. All methods are
/// safe to call concurrently.
class InferenceService {
public:
    static constexpr int kMaxInterpolationSteps = 32;

    explicit InferenceService(LoadedModel model);

    const LoadedModel& model() const { return model_; }

    ServiceResponse model_info() const;
    /// Body: {"seed": u64 | "noise": [noise_dim reals], "label": [L reals]} -> PNG.
    ServiceResponse generate(const std::string& body) const;
    /// Body: {"seed", "from": [L], "to": [L], "steps": 2..32} ->
    /// {"seed", "steps", "labels": [[L]...], "images": [base64 PNG...]}.
    ServiceResponse interpolate(const std::string& body) const;
    ServiceResponse health() const;

private:
    std::string model_json_;
    LoadedModel model_;
};

/// {"error": {"code", "field", "message"}}; an empty field is written as null.
std::string error_body(const std::string& code, const std::string& field, const std::string& message);

struct ServerOptions {
    std::string host = "0.0.0.0";
    /// 0 binds an ephemeral port.
    int port = 8080;
    /// Served at "/" when it exists.
    std::filesystem::path static_dir;
    std::chrono::milliseconds request_timeout{30000};
    std::size_t max_body_bytes = 1 << 20;
};

/// HTTP front end: routes, static files, body limit (413) and per-request timeout (503).
class HttpServer {
public:
    HttpServer(std::shared_ptr<const InferenceService> service, ServerOptions options);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds the socket; returns the bound port.
    int bind();
    /// Serves until stop(); call bind() first.
    void run();
    void stop();
    int port() const { return port_; }

private:
    std::shared_ptr<const InferenceService> service_;
    ServerOptions options_;
    std::unique_ptr<httplib::Server> server_;
    int port_ = -1;
};

} // namespace citygan
