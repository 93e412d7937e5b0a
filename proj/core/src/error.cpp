#include "voxmae/error.hpp"

namespace voxmae {

const char* to_string(FormatError::Kind kind) {
  switch (kind) {
    case FormatError::Kind::MalformedHeader:
      return "malformed header";
    case FormatError::Kind::LengthMismatch:
      return "length mismatch";
    case FormatError::Kind::UnknownVersion:
      return "unknown version";
    case FormatError::Kind::ShapeMismatch:
      return "shape mismatch";
  }
  return "unknown";
}

}  // namespace voxmae
