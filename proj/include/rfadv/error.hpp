#pragma once

#include <stdexcept>
#include <string>

namespace rfadv {

// Error taxonomy shared by the whole library. The C API maps `code` onto its
// integer error constants; the CLI maps it onto exit codes.
enum class ErrorCode {
    config = 1,    // bad key, bad value, missing required setting
    io = 2,        // file open/read/write failure
    format = 3,    // malformed binary file (message carries byte offset)
    numeric = 4,   // degenerate input, non-convergence
    dimension = 5, // shape mismatch (message carries both shapes)
    internal = 6,
    training = 7,  // optimization diverged (NaN loss)
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) { throw Error(code, msg); }

} // namespace rfadv
