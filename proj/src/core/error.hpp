#pragma once

#include <stdexcept>
#include <string>

namespace dveslt {

// All failure paths in the core throw Error; the C API boundary maps it
// to status codes.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

} // namespace dveslt
