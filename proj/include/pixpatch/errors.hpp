#pragma once

#include <stdexcept>
#include <string>

namespace pixpatch {

/// Bad input: configuration, geometry or file contents. Maps to exit code 2.
class ValidationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A field value became non-finite during time stepping. Maps to exit code 3.
class DivergenceError : public std::runtime_error {
  public:
    DivergenceError(long step, const std::string& what)
        : std::runtime_error(what), step_(step) {}

    long step() const noexcept { return step_; }

  private:
    long step_;
};

/// Filesystem failure or unreadable artifact. Maps to exit code 4.
class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

} // namespace pixpatch
