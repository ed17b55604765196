#pragma once

#include "trimlik/common.hpp"
#include "trimlik/elliptical.hpp"

namespace trimlik {

/// Gradient of log f_theta(x) in the coordinates (mu_1..mu_p, vech(Sigma)),
/// where each off-diagonal vech coordinate moves Sigma_ij and Sigma_ji together.
inline Vec score(const RadialFamily& family, const EllipticalParams& theta, const Vec& x) {
    check_dim(x.size(), theta.mu().size(), "score");
    int p = theta.dim();
    Vec u = x - theta.mu();
    Vec v = theta.cholesky().triangularView<Eigen::Lower>().solve(u);
    double s = v.squaredNorm();
    v = theta.cholesky().transpose().triangularView<Eigen::Upper>().solve(v);  // Sigma^{-1} u
    double w = -2.0 * family.dlog_g(s);

    Mat sigma_inv = theta.cholesky().triangularView<Eigen::Lower>().solve(Mat::Identity(p, p));
    sigma_inv = theta.cholesky().transpose().triangularView<Eigen::Upper>().solve(sigma_inv);
    Mat D = -0.5 * sigma_inv + 0.5 * w * v * v.transpose();

    Vec out(detail::packed_size(p));
    out.head(p) = w * v;
    int k = p;
    for (int j = 0; j < p; ++j)
        for (int i = j; i < p; ++i) out[k++] = (i == j) ? D(i, i) : 2.0 * D(i, j);
    return out;
}

namespace detail {

/// Gradient of log f_theta(x) in the packed optimizer coordinates of pack_params.
inline Vec packed_score(const RadialFamily& family, const EllipticalParams& theta,
                        const Vec& x) {
    int p = theta.dim();
    const Mat& L = theta.cholesky();
    Vec y = L.triangularView<Eigen::Lower>().solve(x - theta.mu());
    double s = y.squaredNorm();
    Vec a = L.transpose().triangularView<Eigen::Upper>().solve(y);
    double w = -2.0 * family.dlog_g(s);

    Vec out(packed_size(p));
    out.head(p) = w * a;
    int k = p;
    for (int j = 0; j < p; ++j)
        for (int i = j; i < p; ++i) {
            out[k++] = (i == j) ? (-1.0 + w * a[i] * y[i] * L(i, i)) : w * a[i] * y[j];
        }
    return out;
}

}  // namespace detail
}  // namespace trimlik
