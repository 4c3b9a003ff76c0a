#pragma once
#include <stdexcept>
#include <string>

namespace cove {

// Malformed or missing user input; the CLI maps this to exit code 2.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cove
