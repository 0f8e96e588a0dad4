#include "ldmood/error.hpp"

namespace ldmood {

FormatError::FormatError(Kind kind, const std::string& message)
    : DataError(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

const char* to_string(FormatError::Kind kind) noexcept {
    switch (kind) {
        case FormatError::Kind::BadMagic: return "bad magic";
        case FormatError::Kind::BadVersion: return "unsupported version";
        case FormatError::Kind::Truncated: return "truncated payload";
        case FormatError::Kind::DimensionOverflow: return "dimension overflow";
        case FormatError::Kind::Corrupt: return "corrupt file";
    }
    return "format error";
}

}  // namespace ldmood
