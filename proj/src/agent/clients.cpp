#include <cstdlib>

#include <httplib.h>
#include <json.hpp>

#include "skele/agent/client.hpp"

namespace skele::agent {

std::string_view to_string(Role role) {
    switch (role) {
    case Role::Agent: return "agent";
    case Role::Environment: return "environment";
    case Role::User: return "user";
    }
    return "unknown";
}

std::string LlmClient::complete(const std::string& system_prompt, std::span<const Message> transcript) {
    std::string out = do_complete(system_prompt, transcript);
    ++calls_;
    return out;
}

std::size_t ScriptedClient::remaining() const {
    std::lock_guard lock(mu_);
    return responses_.size() - next_;
}

std::vector<std::string> ScriptedClient::prompts() const {
    std::lock_guard lock(mu_);
    return prompts_;
}

std::string ScriptedClient::do_complete(const std::string& system_prompt, std::span<const Message>) {
    std::lock_guard lock(mu_);
    prompts_.push_back(system_prompt);
    if (next_ >= responses_.size()) throw ClientError("scripted client has no responses left");
    return responses_[next_++];
}

HttpClientConfig HttpClientConfig::from_env() {
    auto get = [](const char* name) {
        const char* v = std::getenv(name);
        return v ? std::string(v) : std::string();
    };
    HttpClientConfig c;
    c.base_url = get("SKELE_LLM_BASE_URL");
    if (auto p = get("SKELE_LLM_PATH"); !p.empty()) c.path = p;
    c.model = get("SKELE_LLM_MODEL");
    c.api_key = get("SKELE_LLM_API_KEY");
    return c;
}

std::string HttpLlmClient::do_complete(const std::string& system_prompt, std::span<const Message> transcript) {
    if (!config_.configured()) throw ClientError("LLM endpoint not configured (set SKELE_LLM_BASE_URL and SKELE_LLM_MODEL)");

    nlohmann::json messages = nlohmann::json::array();
    messages.push_back({{"role", "system"}, {"content", system_prompt}});
    for (const auto& m : transcript)
        messages.push_back({{"role", m.role == Role::Agent ? "assistant" : "user"}, {"content", m.text}});
    if (transcript.empty()) messages.push_back({{"role", "user"}, {"content", "Begin."}});
    nlohmann::json body = {{"model", config_.model}, {"messages", messages}};

    httplib::Client http(config_.base_url);
    http.set_read_timeout(config_.timeout);
    http.set_write_timeout(config_.timeout);
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    auto res = http.Post(config_.path, headers, body.dump(), "application/json");
    if (!res) throw ClientError("transport failure: " + httplib::to_string(res.error()));
    if (res->status != 200) throw ClientError("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 500));
    try {
        auto doc = nlohmann::json::parse(res->body);
        return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ClientError(std::string("unexpected response shape: ") + e.what());
    }
}

} // namespace skele::agent
