#pragma once

#include <stdexcept>
#include <string>

namespace jseis {

// Violation of a domain rule: bad shapes, invalid values, mismatched
// architectures. The CLI maps these to exit code 1.
class DomainError : public std::runtime_error {
public:
    explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem, file-format or configuration problem. The CLI maps these to
// exit code 2.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace jseis
