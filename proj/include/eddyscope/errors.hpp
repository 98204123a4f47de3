#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <string>

namespace eddyscope {

enum class ErrorKind {
  DomainError,
  SingularPoint,
  GeometryError,
  ZeroRowViolation,
  DegenerateTensor,
  RankError,
  BisectionFailure,
  InconsistentInputs,
  LengthMismatch,
  DuplicateLabel,
  EmptyGrid,
  NoConvergence,
  GridMismatch,
  ConfigError,
  IoError,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::SingularPoint: return "SingularPoint";
    case ErrorKind::GeometryError: return "GeometryError";
    case ErrorKind::ZeroRowViolation: return "ZeroRowViolation";
    case ErrorKind::DegenerateTensor: return "DegenerateTensor";
    case ErrorKind::RankError: return "RankError";
    case ErrorKind::BisectionFailure: return "BisectionFailure";
    case ErrorKind::InconsistentInputs: return "InconsistentInputs";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::DuplicateLabel: return "DuplicateLabel";
    case ErrorKind::EmptyGrid: return "EmptyGrid";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

/// Single exception type for the library; `kind()` tells callers what went wrong.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

// Non-fatal diagnostics (ill-conditioning, model validity). Default sink is stderr.
using WarningSink = std::function<void(const std::string&)>;

namespace detail {
inline WarningSink& warning_sink() {
  static WarningSink sink = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
  return sink;
}
inline std::mutex& warning_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

inline void set_warning_sink(WarningSink sink) {
  std::lock_guard lock(detail::warning_mutex());
  detail::warning_sink() = std::move(sink);
}

inline void warn(const std::string& msg) {
  std::lock_guard lock(detail::warning_mutex());
  if (detail::warning_sink()) detail::warning_sink()(msg);
}

}  // namespace eddyscope
