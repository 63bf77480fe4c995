#pragma once

#include <stdexcept>
#include <string>

namespace drf {

// All recoverable failures surface as Error; the CLI maps them to
// single-line "error: <what>" messages and a nonzero exit code.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace drf
