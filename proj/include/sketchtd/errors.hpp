#pragma once

#include <stdexcept>
#include <string>

namespace sketchtd {

// Numerical failure of a rank-1 inverse update: the denominator 1 + v^T M^-1 u
// is too close to zero, meaning M + u v^T is (numerically) singular.
struct DegenerateUpdate : std::runtime_error {
  explicit DegenerateUpdate(const std::string& what) : std::runtime_error(what) {}
};

// A gram matrix that must be inverted is numerically singular.
struct SingularGram : std::runtime_error {
  explicit SingularGram(const std::string& what) : std::runtime_error(what) {}
};

// An iterative routine exhausted its budget or stalled before reaching tolerance.
struct NoConvergence : std::runtime_error {
  explicit NoConvergence(const std::string& what) : std::runtime_error(what) {}
};

// A learner's weight vector blew past the divergence guard.
struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

// Every parameter assignment in a sweep diverged; no best setting exists.
struct AllDiverged : std::runtime_error {
  explicit AllDiverged(const std::string& what) : std::runtime_error(what) {}
};

struct DimensionMismatch : std::invalid_argument {
  explicit DimensionMismatch(const std::string& what) : std::invalid_argument(what) {}
};

// A structurally invalid specification (bad sizes, ranges, or enum values).
struct InvalidSpec : std::invalid_argument {
  explicit InvalidSpec(const std::string& what) : std::invalid_argument(what) {}
};

// Sketch or feature dimensions outside the supported range (e.g. k > d).
struct UnsupportedDim : std::invalid_argument {
  explicit UnsupportedDim(const std::string& what) : std::invalid_argument(what) {}
};

// Config file or CLI usage errors; the CLI maps these to exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sketchtd
