#include "fsw/backends.hpp"

#include <httplib.h>

#include <chrono>
#include <fstream>
#include <thread>

#include "fsw/hash.hpp"
#include "fsw/rng.hpp"

namespace fsw::backends {

using nlohmann::json;

nlohmann::json decoding_to_json(const DecodingParams& params) {
    json extra = json::object();
    for (const auto& [k, v] : params.extra) {
        extra[k] = v;
    }
    return json{{"temperature", params.temperature},
                {"max_tokens", params.max_tokens},
                {"extra", extra}};
}

DecodingParams decoding_from_json(const nlohmann::json& j) {
    DecodingParams p;
    p.temperature = j.value("temperature", 0.0);
    p.max_tokens = j.value("max_tokens", 1024);
    if (j.contains("extra")) {
        for (const auto& [k, v] : j.at("extra").items()) {
            p.extra[k] = v;
        }
    }
    return p;
}

Kind kind_from_name(const std::string& name) {
    if (name == "http_chat") return Kind::http_chat;
    if (name == "oracle") return Kind::oracle;
    if (name == "standard_bias") return Kind::standard_bias;
    if (name == "flaky_oracle") return Kind::flaky_oracle;
    if (name == "shot_aware") return Kind::shot_aware;
    throw std::invalid_argument("unknown backend kind: " + name);
}

std::string kind_name(Kind kind) {
    switch (kind) {
    case Kind::http_chat: return "http_chat";
    case Kind::oracle: return "oracle";
    case Kind::standard_bias: return "standard_bias";
    case Kind::flaky_oracle: return "flaky_oracle";
    case Kind::shot_aware: return "shot_aware";
    }
    return "unknown";
}

nlohmann::json config_to_json(const BackendConfig& config) {
    return json{{"kind", kind_name(config.kind)},
                {"endpoint", config.endpoint},
                {"model_name", config.model_name},
                {"api_key_env", config.api_key_env},
                {"request_timeout_s", config.request_timeout_s},
                {"max_retries", config.max_retries},
                {"backoff_s", config.backoff_s},
                {"flaky_p", config.flaky_p},
                {"seed", config.seed}};
}

BackendConfig config_from_json(const nlohmann::json& j) {
    BackendConfig c;
    c.kind = kind_from_name(j.value("kind", "oracle"));
    c.endpoint = j.value("endpoint", "");
    c.model_name = j.value("model_name", "mock");
    c.api_key_env = j.value("api_key_env", "");
    c.request_timeout_s = j.value("request_timeout_s", 30.0);
    c.max_retries = j.value("max_retries", 3);
    c.backoff_s = j.value("backoff_s", 0.5);
    c.flaky_p = j.value("flaky_p", 0.0);
    c.seed = j.value("seed", uint64_t{0});
    c.audit_log = j.value("audit_log", "");
    return c;
}

Backend::Backend(BackendConfig config) : config_(std::move(config)) {}

std::string Backend::id() const {
    switch (config_.kind) {
    case Kind::flaky_oracle: {
        json meta{{"p", config_.flaky_p}, {"seed", config_.seed}};
        return "flaky_oracle:" + meta.dump();
    }
    case Kind::http_chat:
        return "http_chat:" + config_.model_name + "@" + config_.endpoint;
    default:
        return kind_name(config_.kind);
    }
}

void Backend::audit(const prompt::PromptBundle& bundle,
                    const DecodingParams& params, const std::string* response,
                    const std::string* error) {
    if (config_.audit_log.empty()) {
        return;
    }
    json j{{"backend", id()},
           {"decoding", decoding_to_json(params)},
           {"system", bundle.system_text},
           {"user", bundle.user_text}};
    if (response != nullptr) {
        j["response"] = *response;
    }
    if (error != nullptr) {
        j["error"] = *error;
    }
    std::lock_guard<std::mutex> lock(audit_mu_);
    std::ofstream out(config_.audit_log, std::ios::app | std::ios::binary);
    out << j.dump() << '\n';
}

std::string Backend::complete(const prompt::PromptBundle& bundle,
                              const DecodingParams& params) {
    calls_.fetch_add(1, std::memory_order_relaxed);
    const int max_attempts = std::max(1, config_.max_retries);
    double delay = config_.backoff_s;
    for (int attempt = 1;; ++attempt) {
        attempts_.fetch_add(1, std::memory_order_relaxed);
        try {
            std::string response = complete_once(bundle, params);
            audit(bundle, params, &response, nullptr);
            return response;
        } catch (const RateLimitError& e) {
            if (attempt >= max_attempts) {
                const std::string what = e.what();
                audit(bundle, params, nullptr, &what);
                throw;
            }
            const double wait = e.retry_after_s.value_or(delay);
            std::this_thread::sleep_for(std::chrono::duration<double>(wait));
            delay *= 2;
        } catch (const TransportError& e) {
            if (attempt >= max_attempts) {
                const std::string what = e.what();
                audit(bundle, params, nullptr, &what);
                throw;
            }
            std::this_thread::sleep_for(std::chrono::duration<double>(delay));
            delay *= 2;
        } catch (const BackendError& e) {
            const std::string what = e.what();
            audit(bundle, params, nullptr, &what);
            throw;
        }
    }
}

std::string extract_target_expression(const std::string& user_text) {
    static const std::string marker = "Simplify the following expression ";
    static const std::string tail = " where + has priority over *";
    const size_t m = user_text.rfind(marker);
    if (m == std::string::npos) {
        throw std::invalid_argument("prompt has no task line");
    }
    const size_t start = m + marker.size();
    const size_t end = user_text.find(tail, start);
    if (end == std::string::npos) {
        throw std::invalid_argument("prompt task line is truncated");
    }
    return user_text.substr(start, end - start);
}

std::string shape_skeleton_of(const std::string& expression) {
    return expr::render_skeleton(expr::parse(expression));
}

namespace {

/// Mocks reply in the line-separated format the system prompt requests:
/// a Steps: header, one reduction per line, the final value alone last.
std::string mock_answer(const expr::Trace& trace) {
    return prompt::render_steps(trace, prompt::Variant::PV2);
}

class OracleBackend : public Backend {
public:
    explicit OracleBackend(BackendConfig config) : Backend(std::move(config)) {}

protected:
    std::string complete_once(const prompt::PromptBundle& bundle,
                              const DecodingParams&) override {
        const auto target = extract_target_expression(bundle.user_text);
        const auto trace = expr::evaluate(expr::parse(target),
                                          expr::PrecedencePolicy::non_standard());
        return mock_answer(trace);
    }
};

/// Solves with conventional precedence, standing in for a model that
/// falls back on its pretraining priors and ignores the changed rule.
class StandardBiasBackend : public Backend {
public:
    explicit StandardBiasBackend(BackendConfig config) : Backend(std::move(config)) {}

protected:
    std::string complete_once(const prompt::PromptBundle& bundle,
                              const DecodingParams&) override {
        const auto target = extract_target_expression(bundle.user_text);
        const auto trace = expr::evaluate(expr::parse(target),
                                          expr::PrecedencePolicy::standard());
        return mock_answer(trace);
    }
};

class FlakyOracleBackend : public Backend {
public:
    explicit FlakyOracleBackend(BackendConfig config) : Backend(std::move(config)) {}

protected:
    std::string complete_once(const prompt::PromptBundle& bundle,
                              const DecodingParams&) override {
        const auto target = extract_target_expression(bundle.user_text);
        auto trace = expr::evaluate(expr::parse(target),
                                    expr::PrecedencePolicy::non_standard());
        // Per-call stream split from (seed, prompt) so concurrent and
        // re-ordered calls stay reproducible.
        Rng rng(sha256_prefix64(std::to_string(config().seed) + "\x1f" +
                                bundle.user_text));
        if (rng.uniform_real01() < config().flaky_p) {
            trace.final_value += 1;
        }
        return mock_answer(trace);
    }
};

/// Correct iff some shot in the prompt shares the target's shape skeleton;
/// otherwise answers with the conventional-precedence value.
class ShotAwareBackend : public Backend {
public:
    explicit ShotAwareBackend(BackendConfig config) : Backend(std::move(config)) {}

protected:
    std::string complete_once(const prompt::PromptBundle& bundle,
                              const DecodingParams&) override {
        const auto target = extract_target_expression(bundle.user_text);
        const std::string target_skeleton = shape_skeleton_of(target);
        const bool covered = prompt_covers(bundle.user_text, target_skeleton);
        const auto& policy = covered ? expr::PrecedencePolicy::non_standard()
                                     : expr::PrecedencePolicy::standard();
        return mock_answer(expr::evaluate(expr::parse(target), policy));
    }

private:
    static bool prompt_covers(const std::string& user_text,
                              const std::string& target_skeleton) {
        static const std::string marker = "Expression: ";
        size_t pos = 0;
        while ((pos = user_text.find(marker, pos)) != std::string::npos) {
            pos += marker.size();
            const size_t eol = user_text.find('\n', pos);
            const std::string shown =
                user_text.substr(pos, eol == std::string::npos
                                          ? std::string::npos
                                          : eol - pos);
            try {
                if (shape_skeleton_of(shown) == target_skeleton) {
                    return true;
                }
            } catch (const expr::SyntaxError&) {
                // not a shot block; keep scanning
            }
            if (eol == std::string::npos) {
                break;
            }
            pos = eol;
        }
        return false;
    }
};

class HttpChatBackend : public Backend {
public:
    explicit HttpChatBackend(BackendConfig config) : Backend(std::move(config)) {}

protected:
    std::string complete_once(const prompt::PromptBundle& bundle,
                              const DecodingParams& params) override {
        const auto [base, path] = split_endpoint(config().endpoint);
        httplib::Client client(base);
        client.set_connection_timeout(
            std::chrono::duration<double>(config().request_timeout_s));
        client.set_read_timeout(
            std::chrono::duration<double>(config().request_timeout_s));

        httplib::Headers headers;
        if (!config().api_key_env.empty()) {
            const char* key = std::getenv(config().api_key_env.c_str());
            if (key == nullptr || *key == '\0') {
                throw AuthError("environment variable " + config().api_key_env +
                                " is unset or empty");
            }
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }

        json body{{"model", config().model_name},
                  {"messages",
                   json::array({json{{"role", "system"},
                                     {"content", bundle.system_text}},
                                json{{"role", "user"},
                                     {"content", bundle.user_text}}})},
                  {"temperature", params.temperature},
                  {"max_tokens", params.max_tokens}};
        for (const auto& [k, v] : params.extra) {
            body[k] = v;
        }

        auto res = client.Post(path, headers, body.dump(), "application/json");
        if (!res) {
            throw TransportError("request to " + config().endpoint +
                                 " failed: " + httplib::to_string(res.error()));
        }
        if (res->status == 401 || res->status == 403) {
            throw AuthError("authentication rejected (HTTP " +
                            std::to_string(res->status) + ")");
        }
        if (res->status == 429) {
            std::optional<double> retry_after;
            if (res->has_header("Retry-After")) {
                try {
                    retry_after = std::stod(res->get_header_value("Retry-After"));
                } catch (const std::exception&) {
                }
            }
            throw RateLimitError("rate limited (HTTP 429)", retry_after);
        }
        if (res->status >= 500) {
            throw TransportError("server error (HTTP " +
                                 std::to_string(res->status) + ")");
        }
        if (res->status != 200) {
            throw MalformedResponseError("unexpected HTTP " +
                                         std::to_string(res->status) + ": " +
                                         res->body);
        }
        return extract_content(res->body);
    }

private:
    static std::pair<std::string, std::string>
    split_endpoint(const std::string& endpoint) {
        const size_t scheme = endpoint.find("://");
        if (scheme == std::string::npos) {
            throw std::invalid_argument("endpoint must include a scheme: " +
                                        endpoint);
        }
        const size_t slash = endpoint.find('/', scheme + 3);
        if (slash == std::string::npos) {
            return {endpoint, "/"};
        }
        return {endpoint.substr(0, slash), endpoint.substr(slash)};
    }

    static std::string extract_content(const std::string& body) {
        json j;
        try {
            j = json::parse(body);
        } catch (const json::parse_error& e) {
            throw MalformedResponseError(std::string("response is not JSON: ") +
                                         e.what());
        }
        if (!j.contains("choices") || !j["choices"].is_array() ||
            j["choices"].empty()) {
            throw MalformedResponseError("response has no choices");
        }
        const auto& first = j["choices"][0];
        if (!first.contains("message") || !first["message"].contains("content") ||
            !first["message"]["content"].is_string()) {
            throw MalformedResponseError("choice has no message content");
        }
        return first["message"]["content"].get<std::string>();
    }
};

} // namespace

std::unique_ptr<Backend> make_backend(const BackendConfig& config) {
    switch (config.kind) {
    case Kind::http_chat:
        if (config.endpoint.empty()) {
            throw std::invalid_argument("http_chat backend needs an endpoint");
        }
        return std::make_unique<HttpChatBackend>(config);
    case Kind::oracle:
        return std::make_unique<OracleBackend>(config);
    case Kind::standard_bias:
        return std::make_unique<StandardBiasBackend>(config);
    case Kind::flaky_oracle:
        return std::make_unique<FlakyOracleBackend>(config);
    case Kind::shot_aware:
        return std::make_unique<ShotAwareBackend>(config);
    }
    throw std::invalid_argument("unknown backend kind");
}

} // namespace fsw::backends
