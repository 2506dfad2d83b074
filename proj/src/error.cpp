#include "adapt/error.hpp"

namespace adapt {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidParameter:    return "invalid-parameter";
        case ErrorKind::InvalidInput:        return "invalid-input";
        case ErrorKind::InvalidState:        return "invalid-state";
        case ErrorKind::BackendError:        return "backend-error";
        case ErrorKind::ProtocolError:       return "protocol-error";
        case ErrorKind::DetokenizationError: return "detokenization-error";
        case ErrorKind::EnvironmentError:    return "environment-error";
        case ErrorKind::IoError:             return "io-error";
    }
    return "unknown-error";
}

}  // namespace adapt
