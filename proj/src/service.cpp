#include "citygan/service.hpp"

#include <cmath>
#include <future>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "citygan/explore.hpp"

namespace citygan {

using json = nlohmann::json;

namespace {

struct RequestError {
    std::string code;
    std::string field;
    std::string message;
};

ServiceResponse bad_request(const RequestError& e)
{
    return {400, "application/json", error_body(e.code, e.field, e.message)};
}

json parse_body(const std::string& body)
{
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded()) throw RequestError{"malformed_body", "", "request body is not valid JSON"};
    if (!j.is_object()) throw RequestError{"malformed_body", "", "request body must be a JSON object"};
    return j;
}

LabelVector read_vector(const json& j, const std::string& field, Index expected)
{
    if (!j.contains(field)) throw RequestError{"missing_field", field, field + " is required"};
    const json& v = j.at(field);
    if (!v.is_array()) throw RequestError{"invalid_type", field, field + " must be an array of numbers"};
    if (static_cast<Index>(v.size()) != expected) {
        throw RequestError{"wrong_length", field,
                           field + " has length " + std::to_string(v.size()) + ", expected " +
                               std::to_string(expected)};
    }
    LabelVector out(expected);
    for (Index i = 0; i < expected; ++i) {
        const json& x = v[static_cast<std::size_t>(i)];
        if (!x.is_number()) throw RequestError{"invalid_type", field, field + " must be an array of numbers"};
        out[i] = x.get<double>();
        if (!std::isfinite(out[i])) throw RequestError{"non_finite", field, field + " contains a non-finite value"};
    }
    return out;
}

std::uint64_t read_seed(const json& j)
{
    if (!j.contains("seed")) throw RequestError{"missing_field", "seed", "seed is required"};
    const json& s = j.at("seed");
    if (s.is_number_unsigned()) return s.get<std::uint64_t>();
    if (s.is_number_integer() && s.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(s.get<std::int64_t>());
    throw RequestError{"invalid_type", "seed", "seed must be a nonnegative integer"};
}

std::string png_string(const RgbImage& image)
{
    const auto png = encode_png(image);
    return std::string(png.begin(), png.end());
}

json label_json(const LabelVector& v)
{
    json out = json::array();
    for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

void reply(httplib::Response& res, const ServiceResponse& r)
{
    res.status = r.status;
    res.set_content(r.body, r.content_type);
}

} // namespace

std::string error_body(const std::string& code, const std::string& field, const std::string& message)
{
    json e{{"code", code}, {"field", nullptr}, {"message", message}};
    if (!field.empty()) e["field"] = field;
    return json{{"error", e}}.dump();
}

InferenceService::InferenceService(LoadedModel model) : model_(std::move(model))
{
    const NetworkConfig& net = model_.network();
    model_json_ = json{{"classes", model_.classes},
                       {"L", net.effective_labels()},
                       {"image_size", net.image_size},
                       {"noise_dim", net.noise_dim},
                       {"variant", to_string(net.variant)},
                       {"step", model_.step}}
                      .dump();
}

ServiceResponse InferenceService::model_info() const
{
    return {200, "application/json", model_json_};
}

ServiceResponse InferenceService::health() const
{
    return {200, "application/json", R"({"status":"ok"})"};
}

ServiceResponse InferenceService::generate(const std::string& body) const
{
    try {
        const json j = parse_body(body);
        const NetworkConfig& net = model_.network();
        const LabelVector label = read_vector(j, "label", net.effective_labels());
        RgbImage image;
        if (j.contains("noise")) {
            if (j.contains("seed")) throw RequestError{"conflicting_fields", "noise", "give either seed or noise"};
            image = sample_noise(model_.generator, read_vector(j, "noise", net.noise_dim).cast<float>(), label);
        } else {
            image = sample_single(model_.generator, read_seed(j), label);
        }
        return {200, "image/png", png_string(image)};
    } catch (const RequestError& e) {
        return bad_request(e);
    }
}

ServiceResponse InferenceService::interpolate(const std::string& body) const
{
    try {
        const json j = parse_body(body);
        const Index labels = model_.network().effective_labels();
        const std::uint64_t seed = read_seed(j);
        const LabelVector from = read_vector(j, "from", labels);
        const LabelVector to = read_vector(j, "to", labels);
        if (!j.contains("steps")) throw RequestError{"missing_field", "steps", "steps is required"};
        if (!j.at("steps").is_number_integer()) throw RequestError{"invalid_type", "steps", "steps must be an integer"};
        const std::int64_t steps = j.at("steps").get<std::int64_t>();
        if (steps < 2 || steps > kMaxInterpolationSteps) {
            throw RequestError{"out_of_range", "steps",
                               "steps must lie in [2, " + std::to_string(kMaxInterpolationSteps) + "], got " +
                                   std::to_string(steps)};
        }
        const auto path = interpolate_labels(from, to, static_cast<int>(steps));
        const auto strip = render_strip(model_.generator, {seed}, path);
        json out{{"seed", seed}, {"steps", steps}, {"labels", json::array()}, {"images", json::array()}};
        for (std::size_t i = 0; i < path.size(); ++i) {
            out["labels"].push_back(label_json(path[i]));
            out["images"].push_back(httplib::detail::base64_encode(png_string(strip[0][i])));
        }
        return {200, "application/json", out.dump()};
    } catch (const RequestError& e) {
        return bad_request(e);
    }
}

HttpServer::HttpServer(std::shared_ptr<const InferenceService> service, ServerOptions options)
    : service_(std::move(service)), options_(std::move(options)), server_(std::make_unique<httplib::Server>())
{
    httplib::Server& s = *server_;
    s.set_payload_max_length(options_.max_body_bytes);

    // Handlers run on a detached worker so a slow request can be answered with 503
    // while the worker finishes against its own reference to the service.
    const auto timed = [this](std::function<ServiceResponse(const InferenceService&)> work) {
        return [this, work](const httplib::Request&, httplib::Response& res) {
            auto task = std::make_shared<std::packaged_task<ServiceResponse()>>(
                [service = service_, work] { return work(*service); });
            std::future<ServiceResponse> result = task->get_future();
            std::thread([task] { (*task)(); }).detach();
            if (result.wait_for(options_.request_timeout) != std::future_status::ready) {
                reply(res, {503, "application/json",
                            error_body("timeout", "", "request did not finish within the time limit")});
                return;
            }
            reply(res, result.get());
        };
    };

    s.Get("/api/model", [this](const httplib::Request&, httplib::Response& res) { reply(res, service_->model_info()); });
    s.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) { reply(res, service_->health()); });
    s.Post("/api/generate", [timed](const httplib::Request& req, httplib::Response& res) {
        timed([body = req.body](const InferenceService& svc) { return svc.generate(body); })(req, res);
    });
    s.Post("/api/interpolate", [timed](const httplib::Request& req, httplib::Response& res) {
        timed([body = req.body](const InferenceService& svc) { return svc.interpolate(body); })(req, res);
    });

    s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (!res.body.empty()) return;
        std::string code = "http_" + std::to_string(res.status);
        std::string message = httplib::status_message(res.status);
        if (res.status == 413) {
            code = "payload_too_large";
            message = "request body exceeds the size limit";
        } else if (res.status == 404) {
            code = "not_found";
        }
        res.set_content(error_body(code, "", message), "application/json");
    });

    if (!options_.static_dir.empty() && std::filesystem::is_directory(options_.static_dir)) {
        s.set_mount_point("/", options_.static_dir.string());
    }
}

HttpServer::~HttpServer()
{
    stop();
}

int HttpServer::bind()
{
    if (options_.port == 0) {
        port_ = server_->bind_to_any_port(options_.host);
    } else {
        port_ = server_->bind_to_port(options_.host, options_.port) ? options_.port : -1;
    }
    if (port_ < 0) {
        throw std::runtime_error("cannot bind " + options_.host + ":" + std::to_string(options_.port));
    }
    return port_;
}

void HttpServer::run()
{
    server_->listen_after_bind();
}

void HttpServer::stop()
{
    if (server_) server_->stop();
}

} // namespace citygan
