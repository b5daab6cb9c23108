#ifndef VBBLOCKS_ERROR_HPP
#define VBBLOCKS_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace vbb {

enum class ErrorCode {
  DuplicateLabel,
  IllegalRole,
  ScalarChildVectorParent,
  UnresolvedProxy,
  UnknownNode,
  GraphFrozen,
  InvalidGraph,
  MissingExpStat,
  NonPositiveQuad,
  NotLinearPath,
  EmptyRow,
  OutOfRange,
  InvalidArgument,
  Parse,
  DimensionMismatch,
  Io,
};

std::string_view to_string(ErrorCode code) noexcept;

/// All library failures are reported through this type; `code()` lets
/// callers (the CLI in particular) branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace vbb

#endif  // VBBLOCKS_ERROR_HPP
