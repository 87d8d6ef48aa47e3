#pragma once

#include <stdexcept>
#include <string>

namespace skele {

// Base for every error the engine throws. `code()` is a stable symbolic id
// (e.g. "syntax_error", "cycle") used in CLI output and HTTP bodies.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

} // namespace skele
