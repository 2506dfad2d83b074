#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "adapt/backends.hpp"
#include "adapt/error.hpp"

namespace adapt {

using json = nlohmann::json;

namespace {

// Thrown inside the retry loop for failures worth another attempt.
struct TransientFailure {
    std::string message;
};

std::string describe_server_error(const httplib::Result& res) {
    std::string msg = "HTTP " + std::to_string(res->status);
    try {
        const auto body = json::parse(res->body);
        if (body.contains("code")) msg += " " + body.at("code").dump();
        if (body.contains("message")) msg += ": " + body.at("message").get<std::string>();
    } catch (const json::exception&) {
    }
    return msg;
}

class SlotGuard {
public:
    SlotGuard(std::mutex& m, std::condition_variable& cv, std::size_t& in_flight, std::size_t cap)
        : m_(m), cv_(cv), in_flight_(in_flight) {
        std::unique_lock lock(m_);
        cv_.wait(lock, [&] { return in_flight_ < cap; });
        ++in_flight_;
    }
    ~SlotGuard() {
        {
            std::lock_guard lock(m_);
            --in_flight_;
        }
        cv_.notify_one();
    }
    SlotGuard(const SlotGuard&) = delete;
    SlotGuard& operator=(const SlotGuard&) = delete;

private:
    std::mutex& m_;
    std::condition_variable& cv_;
    std::size_t& in_flight_;
};

}  // namespace

RemoteBackend::RemoteBackend(RemoteOptions options) : options_(std::move(options)) {
    if (options_.endpoint.empty()) fail(ErrorKind::InvalidParameter, "remote endpoint is empty");
    if (options_.max_retries < 0) fail(ErrorKind::InvalidParameter, "max_retries must be >= 0");
    if (options_.max_in_flight == 0) options_.max_in_flight = 1;
}

RemoteBackend::~RemoteBackend() = default;

std::string RemoteBackend::request(const std::string& method, const std::string& path,
                                   const std::string& body) const {
    SlotGuard slot(slots_mutex_, slots_cv_, in_flight_, options_.max_in_flight);

    std::string last_error;
    for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(options_.retry_backoff * (1 << (attempt - 1)));
        try {
            httplib::Client client(options_.endpoint);
            if (!client.is_valid()) {
                fail(ErrorKind::InvalidParameter, "invalid remote endpoint '" + options_.endpoint + "'");
            }
            const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
            const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
            client.set_connection_timeout(secs.count(), usecs.count());
            client.set_read_timeout(secs.count(), usecs.count());
            client.set_write_timeout(secs.count(), usecs.count());
            if (options_.auth_token) client.set_bearer_token_auth(*options_.auth_token);

            auto res = method == "GET" ? client.Get(path)
                                       : client.Post(path, body, "application/json");
            if (!res) throw TransientFailure{"request failed: " + httplib::to_string(res.error())};
            if (res->status >= 500 || res->status == 429) {
                throw TransientFailure{describe_server_error(res)};
            }
            if (res->status != 200) fail(ErrorKind::BackendError, describe_server_error(res));
            return res->body;
        } catch (const TransientFailure& t) {
            last_error = t.message;
        }
    }
    fail(ErrorKind::BackendError, options_.endpoint + path + " failed after " +
                                      std::to_string(options_.max_retries + 1) +
                                      " attempts: " + last_error);
}

const Vocabulary& RemoteBackend::vocabulary() const {
    std::call_once(vocab_once_, [this] {
        const auto body = request("GET", "/v1/vocab", "");
        try {
            const auto doc = json::parse(body);
            auto tokens = doc.at("tokens").get<std::vector<std::string>>();
            TokenId eos = -1;
            if (doc.contains("eos_id")) {
                eos = doc.at("eos_id").get<TokenId>();
            } else {
                auto it = std::find(tokens.begin(), tokens.end(), std::string(kEosText));
                if (it == tokens.end()) fail(ErrorKind::ProtocolError, "vocabulary has no EOS entry");
                eos = static_cast<TokenId>(it - tokens.begin());
            }
            vocab_ = std::make_unique<Vocabulary>(std::move(tokens), eos);
        } catch (const json::exception& e) {
            fail(ErrorKind::ProtocolError, std::string("malformed /v1/vocab response: ") + e.what());
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::InvalidInput) fail(ErrorKind::ProtocolError, e.what());
            throw;
        }
    });
    return *vocab_;
}

LogitVector RemoteBackend::next_logits(std::span<const TokenId> context) const {
    json req;
    req["context_ids"] = std::vector<TokenId>(context.begin(), context.end());
    if (options_.model) req["model"] = *options_.model;
    const auto body = request("POST", "/v1/logits", req.dump());

    std::vector<double> logits;
    std::size_t vocab_size = 0;
    try {
        const auto doc = json::parse(body);
        logits = doc.at("logits").get<std::vector<double>>();
        vocab_size = doc.at("vocab_size").get<std::size_t>();
    } catch (const json::exception& e) {
        fail(ErrorKind::ProtocolError, std::string("malformed /v1/logits response: ") + e.what());
    }
    if (logits.size() != vocab_size) {
        fail(ErrorKind::ProtocolError, "logits length " + std::to_string(logits.size()) +
                                           " disagrees with vocab_size " + std::to_string(vocab_size));
    }
    if (logits.size() != vocabulary().size()) {
        fail(ErrorKind::ProtocolError, "logits length " + std::to_string(logits.size()) +
                                           " disagrees with the served vocabulary (" +
                                           std::to_string(vocabulary().size()) + ")");
    }
    try {
        return LogitVector(std::move(logits));
    } catch (const Error& e) {
        fail(ErrorKind::ProtocolError, e.what());
    }
}

LogitVector remote_next_logits(const RemoteBackend& backend, std::span<const TokenId> context) {
    return backend.next_logits(context);
}

// ---------------------------------------------------------------------------

LogitsServer::LogitsServer(const LogitsProvider& model)
    : model_(model), server_(std::make_unique<httplib::Server>()) {
    auto send_error = [](httplib::Response& res, int status, const std::string& code,
                         const std::string& message) {
        res.status = status;
        res.set_content(json{{"code", code}, {"message", message}}.dump(), "application/json");
    };

    server_->Get("/v1/vocab", [this](const httplib::Request&, httplib::Response& res) {
        const auto& vocab = model_.vocabulary();
        json doc{{"tokens", vocab.tokens()}, {"eos_id", vocab.eos_id()}};
        res.set_content(doc.dump(), "application/json");
    });

    server_->Post("/v1/logits", [this, send_error](const httplib::Request& req,
                                                   httplib::Response& res) {
        std::vector<TokenId> context;
        try {
            context = json::parse(req.body).at("context_ids").get<std::vector<TokenId>>();
        } catch (const json::exception& e) {
            send_error(res, 400, "bad-request", e.what());
            return;
        }
        try {
            const auto logits = model_.next_logits(context);
            json doc{{"logits", std::vector<double>(logits.values().begin(), logits.values().end())},
                     {"vocab_size", logits.size()}};
            res.set_content(doc.dump(), "application/json");
        } catch (const Error& e) {
            send_error(res, e.kind() == ErrorKind::InvalidInput ? 400 : 500,
                       std::string(to_string(e.kind())), e.what());
        }
    });
}

LogitsServer::~LogitsServer() = default;

int LogitsServer::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = server_->bind_to_any_port(host);
        if (bound < 0) fail(ErrorKind::EnvironmentError, "cannot bind " + host);
        return bound;
    }
    if (!server_->bind_to_port(host, port)) {
        fail(ErrorKind::EnvironmentError, "cannot bind " + host + ":" + std::to_string(port));
    }
    return port;
}

void LogitsServer::listen() { server_->listen_after_bind(); }

void LogitsServer::stop() { server_->stop(); }

}  // namespace adapt
