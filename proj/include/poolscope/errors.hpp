// Error type shared by all poolscope modules.

#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace poolscope {

// Every recoverable failure carries a stable kind tag (e.g. "MalformedRecord")
// plus a human-readable message. The CLI prints "<kind>: <message>" and exits 2.
class Error : public std::runtime_error {
public:
    Error(std::string kind, std::string message)
        : std::runtime_error(kind + ": " + message), kind_(std::move(kind)),
          message_(std::move(message)) {}

    const std::string& kind() const noexcept { return kind_; }
    const std::string& message() const noexcept { return message_; }

private:
    std::string kind_;
    std::string message_;
};

namespace errors {

inline Error malformed_record(std::size_t line_no, const std::string& reason) {
    return Error("MalformedRecord", "line " + std::to_string(line_no) + ": " + reason);
}

inline Error non_contiguous_heights(long long expected, long long found) {
    return Error("NonContiguousHeights",
                 "expected " + std::to_string(expected) + ", found " + std::to_string(found));
}

inline Error duplicate_txid(const std::string& txid) {
    return Error("DuplicateTxid", txid);
}

} // namespace errors
} // namespace poolscope
