#pragma once

#include <stdexcept>

namespace lineage {

/// Malformed input file or text; the message names the line or file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lineage
