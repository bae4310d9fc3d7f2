#pragma once

#include <stdexcept>
#include <string>

namespace pagetext {

// Bad shapes, out-of-range parameters, violated call contracts.
struct contract_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Filesystem problems: missing files, unwritable paths.
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A file exists but its contents are malformed (config, checkpoint, image,
// dataset index).
struct format_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Unrecoverable runtime failures (non-finite loss, overflow during render).
struct runtime_failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace pagetext
