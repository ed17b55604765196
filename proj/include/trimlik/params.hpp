#pragma once

#include "trimlik/common.hpp"

#include <cmath>
#include <utility>

namespace trimlik {

/// theta = (mu, Sigma) with Sigma carried through its lower Cholesky factor,
/// so every instance is symmetric positive-definite by construction.
class EllipticalParams {
public:
    EllipticalParams(Vec mu, const Mat& sigma) : mu_(std::move(mu)) {
        if (sigma.rows() != sigma.cols()) throw NotSpdError("EllipticalParams: sigma not square");
        check_dim(mu_.size(), sigma.rows(), "EllipticalParams");
        double scale = sigma.cwiseAbs().maxCoeff();
        if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(scale, 1.0)) {
            throw NotSpdError("EllipticalParams: sigma not symmetric");
        }
        Eigen::LLT<Mat> llt(sigma);
        if (llt.info() != Eigen::Success) {
            throw NotSpdError("EllipticalParams: sigma not positive-definite");
        }
        chol_ = llt.matrixL();
    }

    static EllipticalParams from_cholesky(Vec mu, Mat lower) {
        EllipticalParams out;
        check_dim(mu.size(), lower.rows(), "EllipticalParams::from_cholesky");
        out.mu_ = std::move(mu);
        out.chol_ = std::move(lower);
        return out;
    }

    int dim() const { return static_cast<int>(mu_.size()); }
    const Vec& mu() const { return mu_; }
    const Mat& cholesky() const { return chol_; }
    Mat sigma() const { return chol_ * chol_.transpose(); }

    double log_det_sigma() const { return 2.0 * chol_.diagonal().array().log().sum(); }

    double mahalanobis_sq(const Vec& x) const {
        check_dim(x.size(), mu_.size(), "mahalanobis_sq");
        Vec y = chol_.triangularView<Eigen::Lower>().solve(x - mu_);
        return y.squaredNorm();
    }

    /// Scale parameter: sigma^2 = |Sigma|^{1/p}.
    double scale_sq() const { return std::exp(log_det_sigma() / dim()); }

    /// Shape parameter: Xi = Sigma / |Sigma|^{1/p}, determinant exactly 1.
    Mat shape_matrix() const { return sigma() / scale_sq(); }

private:
    EllipticalParams() = default;

    Vec mu_;
    Mat chol_;  // lower triangular, positive diagonal
};

inline double mahalanobis_sq(const EllipticalParams& theta, const Vec& x) {
    return theta.mahalanobis_sq(x);
}

inline int vech_size(int p) { return p * (p + 1) / 2; }

/// Column-stacked lower triangle: (1,1),(2,1),...,(p,1),(2,2),...
inline Vec vech(const Mat& s) {
    int p = static_cast<int>(s.rows());
    Vec v(vech_size(p));
    int k = 0;
    for (int j = 0; j < p; ++j)
        for (int i = j; i < p; ++i) v[k++] = s(i, j);
    return v;
}

inline Mat unvech(const Vec& v, int p) {
    Mat s(p, p);
    int k = 0;
    for (int j = 0; j < p; ++j)
        for (int i = j; i < p; ++i) {
            s(i, j) = v[k];
            s(j, i) = v[k];
            ++k;
        }
    return s;
}

namespace detail {

inline int packed_size(int p) { return p + vech_size(p); }

/// Unconstrained optimizer coordinates: [mu; column-major lower triangle of L]
/// with log-transformed diagonal, so every unpacked point is SPD.
inline Vec pack_params(const EllipticalParams& theta) {
    int p = theta.dim();
    Vec q(packed_size(p));
    q.head(p) = theta.mu();
    const Mat& L = theta.cholesky();
    int k = p;
    for (int j = 0; j < p; ++j)
        for (int i = j; i < p; ++i) q[k++] = (i == j) ? std::log(L(i, j)) : L(i, j);
    return q;
}

inline EllipticalParams unpack_params(const Vec& q, int p) {
    Mat L = Mat::Zero(p, p);
    int k = p;
    for (int j = 0; j < p; ++j)
        for (int i = j; i < p; ++i) {
            L(i, j) = (i == j) ? std::exp(q[k]) : q[k];
            ++k;
        }
    return EllipticalParams::from_cholesky(q.head(p), std::move(L));
}

}  // namespace detail
}  // namespace trimlik
