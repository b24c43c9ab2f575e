#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "racemode/neural.hpp"
#include "racemode/planner.hpp"

// Independent re-implementations shared by the unit tests and the acceptance run.
namespace testing_support {

using namespace racemode;

// Naive pointwise re-check of the hard constraints. Returns the first
// violating index or -1.
inline int naive_first_violation(const CandidateTrajectory& c, const ConstraintLimits& lim) {
  for (std::size_t k = 0; k < c.points.size(); ++k) {
    const TrajPoint& p = c.points[k];
    bool bad = false;
    bad |= 1.0 - p.n * p.kappa_ref <= 0.0;
    bad |= std::abs(p.kappa_path) > lim.kappa_max;
    bad |= p.v > lim.v_max;
    bad |= p.n < p.n_min || p.n > p.n_max;
    bad |= p.a_long > lim.ax_eng;
    const double gg = std::pow(std::abs(p.a_long) / lim.ax_max, lim.p_exponent) +
                      std::pow(std::abs(p.a_lat) / lim.ay_max, lim.p_exponent);
    bad |= gg > 1.0;
    bad |= !std::isfinite(p.v) || !std::isfinite(p.kappa_path) || !std::isfinite(p.a_long) || !std::isfinite(p.a_lat);
    if (bad) return static_cast<int>(k);
  }
  return -1;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 2.0 * uniform01(rng) - 1.0;
  return m;
}

inline Vector random_params(int n, std::mt19937_64& rng) { return random_matrix(n, 1, rng).col(0); }

// Relative error floored at 1e-4: below that the central difference itself carries
// about 1e-10 of rounding noise (machine epsilon times the loss over h).
inline double rel_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-4}); }

// Loss is <G, net(x)>, so the output gradient is G. Returns the worst relative error
// over every parameter and every input entry, against central differences with h = 1e-5.
template <class Net, class Cache>
double gradient_check(const Net& net, int n_params, std::uint64_t seed, int batch = 3) {
  std::mt19937_64 rng(seed);
  Vector params = random_params(n_params, rng);
  Matrix x = random_matrix(net.input_size(), batch, rng);
  const Matrix G = random_matrix(net.output_size(), batch, rng);
  auto loss = [&](const Vector& p, const Matrix& in) { return (G.array() * net.forward(p, in).array()).sum(); };

  Cache cache;
  net.forward(params, x, &cache);
  Vector grad = Vector::Zero(n_params);
  const Matrix dx = net.backward(params, cache, G, grad);

  constexpr double h = 1e-5;
  double worst = 0.0;
  for (int i = 0; i < n_params; ++i) {
    Vector up = params, dn = params;
    up[i] += h;
    dn[i] -= h;
    worst = std::max(worst, rel_error(grad[i], (loss(up, x) - loss(dn, x)) / (2 * h)));
  }
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Matrix up = x, dn = x;
    up.data()[i] += h;
    dn.data()[i] -= h;
    worst = std::max(worst, rel_error(dx.data()[i], (loss(params, up) - loss(params, dn)) / (2 * h)));
  }
  return worst;
}

}  // namespace testing_support
