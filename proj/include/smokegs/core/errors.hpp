// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace smokegs {

/// Root of the project's exception hierarchy. Exit-code mapping in the CLI:
/// usage_error -> 1, data_error family -> 2, numeric_fault -> 3.
class error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Caller passed arguments that violate an operation's preconditions.
class invalid_argument_error : public error {
  public:
    using error::error;
};

/// Bad configuration keys, malformed flags, unusable presets.
class usage_error : public error {
  public:
    using error::error;
};

/// A non-finite value surfaced inside numeric code.
class numeric_fault : public error {
  public:
    using error::error;
};

/// Backward pass invoked against forward state that no longer matches the
/// scene (parameters were mutated in between).
class stale_state_error : public error {
  public:
    using error::error;
};

/// Anything wrong with files, manifests, images or checkpoints.
class data_error : public error {
  public:
    using error::error;
};

class io_error : public data_error {
  public:
    using data_error::data_error;
};

class decode_error : public data_error {
  public:
    using data_error::data_error;
};

// Checkpoint load failures, kept distinct so tests and tools can tell a bad
// version from a short read from a corrupted body.
class version_mismatch_error : public decode_error {
  public:
    using decode_error::decode_error;
};

class truncated_file_error : public decode_error {
  public:
    using decode_error::decode_error;
};

class shape_mismatch_error : public decode_error {
  public:
    using decode_error::decode_error;
};

class crc_mismatch_error : public decode_error {
  public:
    using decode_error::decode_error;
};

} // namespace smokegs
