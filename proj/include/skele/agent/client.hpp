#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "skele/error.hpp"

namespace skele::agent {

enum class Role { Agent, Environment, User };

struct Message {
    Role role;
    std::string text;
};

std::string_view to_string(Role role);

struct ClientError : Error {
    explicit ClientError(const std::string& msg) : Error("client_error", msg) {}
};

// A chat-completion backend. Implementations must tolerate concurrent calls
// from different sessions.
class LlmClient {
public:
    virtual ~LlmClient() = default;

    // Counts only calls that returned a response.
    std::string complete(const std::string& system_prompt, std::span<const Message> transcript);
    std::size_t call_count() const { return calls_.load(); }

protected:
    virtual std::string do_complete(const std::string& system_prompt, std::span<const Message> transcript) = 0;

private:
    std::atomic<std::size_t> calls_{0};
};

// Replays a fixed list of responses in order; throws ClientError once exhausted.
class ScriptedClient : public LlmClient {
public:
    explicit ScriptedClient(std::vector<std::string> responses) : responses_(std::move(responses)) {}

    std::size_t remaining() const;
    // Every system prompt this client has seen, in call order.
    std::vector<std::string> prompts() const;

protected:
    std::string do_complete(const std::string& system_prompt, std::span<const Message> transcript) override;

private:
    mutable std::mutex mu_;
    std::vector<std::string> responses_;
    std::size_t next_ = 0;
    std::vector<std::string> prompts_;
};

// Delegates to a callable; convenient for mocks that react to the prompt.
class FunctionClient : public LlmClient {
public:
    using Fn = std::function<std::string(const std::string&, std::span<const Message>)>;
    explicit FunctionClient(Fn fn) : fn_(std::move(fn)) {}

protected:
    std::string do_complete(const std::string& system_prompt, std::span<const Message> transcript) override {
        return fn_(system_prompt, transcript);
    }

private:
    Fn fn_;
};

struct HttpClientConfig {
    std::string base_url;  // e.g. https://api.example.com
    std::string path = "/v1/chat/completions";
    std::string model;
    std::string api_key;
    std::chrono::seconds timeout{300};

    // Reads SKELE_LLM_BASE_URL, SKELE_LLM_PATH, SKELE_LLM_MODEL, SKELE_LLM_API_KEY.
    static HttpClientConfig from_env();
    bool configured() const { return !base_url.empty() && !model.empty(); }
};

// OpenAI-compatible chat completions over HTTP(S).
class HttpLlmClient : public LlmClient {
public:
    explicit HttpLlmClient(HttpClientConfig config) : config_(std::move(config)) {}

protected:
    std::string do_complete(const std::string& system_prompt, std::span<const Message> transcript) override;

private:
    HttpClientConfig config_;
};

} // namespace skele::agent
