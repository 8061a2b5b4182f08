#ifndef GDPG_LINALG_HPP
#define GDPG_LINALG_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace gdpg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Raised when an operation is called with arguments that break its contract
/// (shape mismatch, non-finite input, out-of-range configuration).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an environment or policy lacks a capability an operation needs.
class UnsupportedCapability : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }
inline bool all_finite(const Vector& v) { return v.allFinite(); }

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const std::string& what) {
  if (!m.allFinite()) throw ContractViolation(what + ": non-finite entry");
}

/// Largest absolute entry.
inline double max_norm(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

struct SpectralEstimate {
  double radius = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Power-iteration estimate of the largest eigenvalue magnitude of a square
/// matrix. Runs `restarts` random starts (seeded by `seed`) and keeps the
/// largest estimate; `converged` is false if any restart hit `max_iters`
/// before its estimate settled within `tol`.
///
/// Power iteration on a real matrix whose dominant eigenvalues form a complex
/// pair does not settle on a single vector, so the estimate is taken as the
/// geometric mean growth over two consecutive steps, which is stable for
/// conjugate pairs and for +/- pairs of equal modulus.
SpectralEstimate spectral_radius_estimate(const Matrix& m, int max_iters = 1000,
                                          double tol = 1e-12, int restarts = 3,
                                          std::uint64_t seed = 0x5eed);

inline double spectral_radius(const Matrix& m, int max_iters = 1000,
                              double tol = 1e-12) {
  return spectral_radius_estimate(m, max_iters, tol).radius;
}

}  // namespace gdpg

#endif  // GDPG_LINALG_HPP
