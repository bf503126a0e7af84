#pragma once

#include <stdexcept>
#include <string>

namespace fedmef {

// All library failures derive from std::runtime_error or std::invalid_argument so
// callers can catch broadly; the subclasses exist for tests and diagnostics.

using InvalidArgument = std::invalid_argument;

class DecodeError : public std::runtime_error {
public:
    DecodeError(const std::string &scheme, std::size_t offset, const std::string &what)
        : std::runtime_error("decode error [" + scheme + " @ byte " + std::to_string(offset) +
                             "]: " + what),
          scheme_(scheme), offset_(offset) {}

    const std::string &scheme() const noexcept { return scheme_; }
    std::size_t offset() const noexcept { return offset_; }

private:
    std::string scheme_;
    std::size_t offset_;
};

class DegenerateFilterError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class TraceMismatchError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class CorruptCacheError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class LayerExhaustionError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class ProtocolError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string &what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

} // namespace fedmef
