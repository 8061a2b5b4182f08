#include "gdpg/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace gdpg {
namespace {

// Largest eigenvalue modulus of a 1x1 or 2x2 matrix.
double small_eig_modulus(const Matrix& h) {
  if (h.rows() == 1) return std::abs(h(0, 0));
  const double half_trace = 0.5 * (h(0, 0) + h(1, 1));
  const double det = h(0, 0) * h(1, 1) - h(0, 1) * h(1, 0);
  // Written without half_trace^2 - det, which cancels for near-scalar blocks.
  const double half_gap = 0.5 * (h(0, 0) - h(1, 1));
  const double disc = half_gap * half_gap + h(0, 1) * h(1, 0);
  if (disc >= 0.0) {
    const double root = std::sqrt(disc);
    return std::max(std::abs(half_trace + root), std::abs(half_trace - root));
  }
  return std::sqrt(std::max(det, 0.0));
}

Matrix orthonormal_basis(const Matrix& z) {
  Eigen::HouseholderQR<Matrix> qr(z);
  return qr.householderQ() * Matrix::Identity(z.rows(), z.cols());
}

}  // namespace

SpectralEstimate spectral_radius_estimate(const Matrix& m, int max_iters,
                                          double tol, int restarts,
                                          std::uint64_t seed) {
  if (m.rows() != m.cols()) {
    throw ContractViolation("spectral_radius: matrix is " + std::to_string(m.rows()) +
                            "x" + std::to_string(m.cols()) + ", expected square");
  }
  require(max_iters > 0 && tol > 0.0 && restarts > 0,
          "spectral_radius: iteration limits must be positive");
  require_finite(m, "spectral_radius");

  SpectralEstimate best;
  const Eigen::Index n = m.rows();
  if (n == 0) {
    best.converged = true;
    return best;
  }
  if (n == 1) {
    best.radius = std::abs(m(0, 0));
    best.converged = true;
    return best;
  }

  // Subspace iteration on a two-column block; the Ritz values of the
  // projected 2x2 matrix capture real and complex-conjugate dominant pairs.
  const Eigen::Index block = std::min<Eigen::Index>(2, n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  best.converged = true;

  for (int r = 0; r < restarts; ++r) {
    Matrix q(n, block);
    for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = normal(rng);
    q = orthonormal_basis(q);

    double estimate = 0.0;
    double previous = -1.0;
    bool settled = false;
    int it = 0;
    for (it = 1; it <= max_iters; ++it) {
      const Matrix z = m * q;
      const Matrix h = q.transpose() * z;
      estimate = small_eig_modulus(h);
      if (std::abs(estimate - previous) <= tol * std::max(1.0, estimate)) {
        settled = true;
        break;
      }
      previous = estimate;
      q = orthonormal_basis(z);
    }
    if (estimate > best.radius) best.radius = estimate;
    best.iterations = std::max(best.iterations, std::min(it, max_iters));
    best.converged = best.converged && settled;
  }
  return best;
}

}  // namespace gdpg
