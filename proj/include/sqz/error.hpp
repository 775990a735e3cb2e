#ifndef SQZ_ERROR_HPP
#define SQZ_ERROR_HPP

#include <stdexcept>
#include <string>

namespace sqz {

enum class ErrorKind {
  invalid_parameter,
  config,
  coverage,
  integration,
  threshold,
  grid_mismatch,
  numerical,
  truncation,
  size,
  shape,
  format,
  parse,
  no_multipair,
  ill_conditioned,
  undefined
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ThresholdExceeded : public Error {
 public:
  ThresholdExceeded(double t_ps, const std::string& what)
      : Error(ErrorKind::threshold, what), t_ps_(t_ps) {}
  double time_ps() const noexcept { return t_ps_; }

 private:
  double t_ps_;
};

class IllConditioned : public Error {
 public:
  IllConditioned(double cond, const std::string& what)
      : Error(ErrorKind::ill_conditioned, what), cond_(cond) {}
  double condition() const noexcept { return cond_; }

 private:
  double cond_;
};

// Process exit code for the CLI.
inline int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::invalid_parameter:
    case ErrorKind::config:
    case ErrorKind::coverage:
    case ErrorKind::grid_mismatch:
    case ErrorKind::size:
    case ErrorKind::shape:
      return 2;
    case ErrorKind::format:
    case ErrorKind::parse:
      return 4;
    default:
      return 3;
  }
}

inline void require(bool ok, ErrorKind kind, const std::string& what) {
  if (!ok) throw Error(kind, what);
}

}  // namespace sqz

#endif
