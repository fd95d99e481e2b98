#pragma once

#include <nlohmann/json.hpp>

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>

#include "fsw/expr.hpp"
#include "fsw/prompt.hpp"

namespace fsw::backends {

struct DecodingParams {
    double temperature = 0.0;
    int max_tokens = 1024;
    // Passed through verbatim into the wire request (http_chat only).
    std::map<std::string, nlohmann::json> extra;
};

nlohmann::json decoding_to_json(const DecodingParams& params);
DecodingParams decoding_from_json(const nlohmann::json& j);

enum class Kind { http_chat, oracle, standard_bias, flaky_oracle, shot_aware };

Kind kind_from_name(const std::string& name);
std::string kind_name(Kind kind);

struct BackendConfig {
    Kind kind = Kind::oracle;
    std::string endpoint;    // http_chat: e.g. http://host:port/v1/chat/completions
    std::string model_name = "mock";
    std::string api_key_env; // secrets come from this env var, never config
    double request_timeout_s = 30.0;
    int max_retries = 3;     // bounds total attempts (min 1)
    double backoff_s = 0.5;  // initial retry delay, doubles per attempt
    double flaky_p = 0.0;    // flaky_oracle perturbation probability
    uint64_t seed = 0;       // mock stochasticity seed
    std::string audit_log;   // optional JSONL mirror of requests/responses
};

nlohmann::json config_to_json(const BackendConfig& config);
BackendConfig config_from_json(const nlohmann::json& j);

class BackendError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Retryable connection/server trouble.
class TransportError : public BackendError {
    using BackendError::BackendError;
};

/// Fatal credential problem; never retried.
class AuthError : public BackendError {
    using BackendError::BackendError;
};

/// Retryable, optionally with a server-advised delay.
class RateLimitError : public BackendError {
public:
    RateLimitError(const std::string& what, std::optional<double> retry_after)
        : BackendError(what), retry_after_s(retry_after) {}
    std::optional<double> retry_after_s;
};

class MalformedResponseError : public BackendError {
    using BackendError::BackendError;
};

/// Uniform completion contract. complete() wraps the transport with the
/// retry policy and call accounting; implementations provide one attempt.
/// Instances tolerate concurrent complete() calls.
class Backend {
public:
    virtual ~Backend() = default;

    std::string complete(const prompt::PromptBundle& bundle,
                         const DecodingParams& params);

    /// Logical completions served (cache misses that reached the backend).
    uint64_t calls_issued() const { return calls_.load(); }
    /// Wire attempts including retries.
    uint64_t attempts_made() const { return attempts_.load(); }

    const BackendConfig& config() const { return config_; }
    /// Stable identifier used in cache keys and reports.
    std::string id() const;

protected:
    explicit Backend(BackendConfig config);
    virtual std::string complete_once(const prompt::PromptBundle& bundle,
                                      const DecodingParams& params) = 0;

private:
    void audit(const prompt::PromptBundle& bundle, const DecodingParams& params,
               const std::string* response, const std::string* error);

    BackendConfig config_;
    std::atomic<uint64_t> calls_{0};
    std::atomic<uint64_t> attempts_{0};
    std::mutex audit_mu_;
};

std::unique_ptr<Backend> make_backend(const BackendConfig& config);

/// Target expression of the task line inside a built prompt. Mocks use this
/// to answer; throws std::invalid_argument when no task line is present.
std::string extract_target_expression(const std::string& user_text);

/// Bracket structure plus operator sequence with digits erased; the
/// shot_aware mock answers correctly iff some shot shares the target's
/// skeleton. A toy stand-in for "this example taught the pattern".
std::string shape_skeleton_of(const std::string& expression);

} // namespace fsw::backends
