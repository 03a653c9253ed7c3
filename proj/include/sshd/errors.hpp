#pragma once

#include <stdexcept>
#include <string>

namespace sshd {

// Error taxonomy used across the library. Everything derives from Error so
// callers can catch broadly; the CLI maps each class to its own exit message.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad model/geometry/shape configuration (wrong dims, indivisible extents...).
struct ConfigError : Error { using Error::Error; };
// Malformed on-disk data (PGM magic, CSV syntax...).
struct FormatError : Error { using Error::Error; };
// Structurally valid annotation with invalid content (out-of-bounds point...).
struct LabelError : Error { using Error::Error; };
// Checkpoint decode failure (magic, version, truncation).
struct CheckpointError : Error { using Error::Error; };
// API misuse (backward on non-scalar, unknown CLI suite...).
struct UsageError : Error { using Error::Error; };

}  // namespace sshd
