#pragma once

#include <chrono>
#include <optional>
#include <stdexcept>
#include <string>

namespace agency {

// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad input data: malformed records, dangling references, invariant breaks.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Forward-only state machines reject out-of-order requests with this.
class StateError : public Error {
public:
    using Error::Error;
};

// A backend answered, but the text maps to no label. Never retried.
class UnparseableLabel : public Error {
public:
    UnparseableLabel(std::string raw, const std::string& what)
        : Error("unparseable label: " + what), raw_(std::move(raw)) {}

    const std::string& raw() const { return raw_; }

private:
    std::string raw_;
};

// Network or server-side failure talking to a remote provider. Retryable.
class TransportError : public Error {
public:
    TransportError(const std::string& what, int status = 0,
                   std::optional<std::chrono::milliseconds> retry_after = std::nullopt)
        : Error(what), status_(status), retry_after_(retry_after) {}

    int status() const { return status_; }
    std::optional<std::chrono::milliseconds> retry_after() const { return retry_after_; }
    bool rate_limited() const { return status_ == 429; }

private:
    int status_;
    std::optional<std::chrono::milliseconds> retry_after_;
};

}  // namespace agency
