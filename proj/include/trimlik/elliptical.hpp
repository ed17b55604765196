#pragma once

#include "trimlik/common.hpp"
#include "trimlik/ellipsoid.hpp"
#include "trimlik/family.hpp"
#include "trimlik/params.hpp"

#include <cmath>
#include <cstdint>
#include <random>

namespace trimlik {

/// log f_theta(x) = -1/2 log|Sigma| + log g((x-mu)^T Sigma^{-1} (x-mu)).
inline double log_density(const RadialFamily& family, const EllipticalParams& theta,
                          const Vec& x) {
    check_dim(theta.dim(), family.dim(), "log_density: family dimension");
    return -0.5 * theta.log_det_sigma() + family.log_g(theta.mahalanobis_sq(x));
}

namespace detail {

inline Vec sphere_direction(int p, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss;
    Vec z(p);
    double n2 = 0.0;
    do {
        for (int i = 0; i < p; ++i) z[i] = gauss(rng);
        n2 = z.norm();
    } while (n2 == 0.0);
    return z / n2;
}

/// One standardized draw from the family's (0, I) member via radial decomposition.
inline Vec standard_draw(const RadialFamily& family, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Vec u = sphere_direction(family.dim(), rng);
    return family.radius_quantile(unif(rng)) * u;
}

}  // namespace detail

/// n i.i.d. draws from P_theta, one observation per row; deterministic given seed.
inline Mat sample(const RadialFamily& family, const EllipticalParams& theta, int n,
                  std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
    check_dim(theta.dim(), family.dim(), "sample: family dimension");
    int p = family.dim();
    auto rng = detail::make_rng(seed);
    Mat out(n, p);
    for (int i = 0; i < n; ++i) {
        Vec z = detail::standard_draw(family, rng);
        out.row(i) = (theta.mu() + theta.cholesky() * z).transpose();
    }
    return out;
}

/// Radius of the coverage-level central ellipsoid of P_theta; coverage 0.5 gives the
/// theoretical MVE radius (central parts of elliptical laws are Sigma-aligned).
inline double mve_radius(const RadialFamily& family, double coverage) {
    if (!(coverage > 0.0 && coverage < 1.0)) {
        throw std::invalid_argument("mve_radius: coverage must lie in (0,1)");
    }
    return family.radius_quantile(coverage);
}

}  // namespace trimlik
