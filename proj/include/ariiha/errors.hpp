#pragma once

#include <stdexcept>
#include <string>

namespace ariiha {

// Exit-code contract used by the CLI: 1 usage, 2 data, 3 backend.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BackendError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace ariiha
