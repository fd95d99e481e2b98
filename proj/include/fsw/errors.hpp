#pragma once

#include <stdexcept>

namespace fsw {

/// File-level failure (open/read/write); maps to its own CLI exit code.
class IoError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Another process holds the experiment directory.
class LockError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace fsw
