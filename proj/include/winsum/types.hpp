#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace winsum {

using TokenId = std::int32_t;

// Window-transition policy. kStan is the fixed-input baseline (one window).
enum class Mode { kStan, kSwm, kDwm };

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view text);

// Malformed input files (embeddings, corpora, checkpoints, configs).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values during a forward or backward pass.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace winsum
