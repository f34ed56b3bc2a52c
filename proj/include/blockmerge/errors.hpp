#pragma once

#include <stdexcept>
#include <string>

namespace blockmerge {

/// Base of every error raised by the library. `user_error()` separates bad
/// inputs (exit code 1 in the CLI) from internal failures (exit code 2).
class Error : public std::runtime_error {
 public:
  Error(const std::string& kind, const std::string& message, bool user_error = true);

  const std::string& kind() const noexcept { return kind_; }
  bool user_error() const noexcept { return user_error_; }

 private:
  std::string kind_;
  bool user_error_;
};

#define BLOCKMERGE_DEFINE_ERROR(Name, is_user)                              \
  class Name : public Error {                                               \
   public:                                                                  \
    explicit Name(const std::string& message) : Error(#Name, message, is_user) {} \
  };

// tensor-store
BLOCKMERGE_DEFINE_ERROR(FormatError, true)
BLOCKMERGE_DEFINE_ERROR(CorruptPayload, true)
BLOCKMERGE_DEFINE_ERROR(PatternError, true)
BLOCKMERGE_DEFINE_ERROR(IndexGapError, true)
BLOCKMERGE_DEFINE_ERROR(IoError, true)

// shape / arity / ranges
BLOCKMERGE_DEFINE_ERROR(ShapeError, true)
BLOCKMERGE_DEFINE_ERROR(ArityError, true)
BLOCKMERGE_DEFINE_ERROR(IndexError, true)
BLOCKMERGE_DEFINE_ERROR(DomainError, true)
BLOCKMERGE_DEFINE_ERROR(DimensionError, true)

// partition
BLOCKMERGE_DEFINE_ERROR(InfeasibleError, true)
BLOCKMERGE_DEFINE_ERROR(BudgetError, true)

// merge
BLOCKMERGE_DEFINE_ERROR(ConstraintError, true)
BLOCKMERGE_DEFINE_ERROR(ConfigError, true)
BLOCKMERGE_DEFINE_ERROR(DegenerateError, true)

// objectives
BLOCKMERGE_DEFINE_ERROR(DegenerateSpecError, true)
BLOCKMERGE_DEFINE_ERROR(MissingScoreError, true)
BLOCKMERGE_DEFINE_ERROR(EvaluationError, true)
BLOCKMERGE_DEFINE_ERROR(InvalidScoreError, true)
BLOCKMERGE_DEFINE_ERROR(TimeoutError, true)

// mobo / driver
BLOCKMERGE_DEFINE_ERROR(ReferenceError, true)
BLOCKMERGE_DEFINE_ERROR(NumericalError, false)
BLOCKMERGE_DEFINE_ERROR(ResumeError, true)
BLOCKMERGE_DEFINE_ERROR(EmptyFrontError, true)

#undef BLOCKMERGE_DEFINE_ERROR

}  // namespace blockmerge
