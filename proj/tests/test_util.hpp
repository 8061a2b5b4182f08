#ifndef GDPG_TEST_UTIL_HPP
#define GDPG_TEST_UTIL_HPP

#include <algorithm>
#include <cmath>
#include <random>

#include "gdpg/linalg.hpp"

namespace gdpg::test {

inline Vector random_vector(Eigen::Index n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

/// |a - b| / max(|a|, |b|), 0 when both vanish.
inline double relative_error(const Vector& a, const Vector& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

inline double cosine(const Vector& a, const Vector& b) {
  return a.dot(b) / (a.norm() * b.norm());
}

}  // namespace gdpg::test

#endif  // GDPG_TEST_UTIL_HPP
