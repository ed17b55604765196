#pragma once

#include "trimlik/common.hpp"
#include "trimlik/params.hpp"

#include <cmath>
#include <numbers>
#include <optional>
#include <utility>

namespace trimlik {

/// E(gamma) = {x : (x - center)^T shape^{-1} (x - center) <= radius^2}.
class Ellipsoid {
public:
    Ellipsoid(Vec center, const Mat& shape, double radius)
        : center_(std::move(center)), radius_(radius) {
        if (!(radius > 0.0)) throw std::invalid_argument("Ellipsoid: radius must be positive");
        if (shape.rows() != shape.cols() || shape.rows() != center_.size()) {
            throw DimensionError("Ellipsoid: center/shape dimensions disagree");
        }
        Eigen::LLT<Mat> llt(Mat(0.5 * (shape + shape.transpose())));
        if (llt.info() != Eigen::Success) throw NotSpdError("Ellipsoid: shape not SPD");
        chol_ = llt.matrixL();
    }

    int dim() const { return static_cast<int>(center_.size()); }
    const Vec& center() const { return center_; }
    const Mat& shape_cholesky() const { return chol_; }
    Mat shape() const { return chol_ * chol_.transpose(); }
    double radius() const { return radius_; }

    double standardized_sq(const Vec& x) const {
        check_dim(x.size(), center_.size(), "Ellipsoid::standardized_sq");
        Vec y = chol_.triangularView<Eigen::Lower>().solve(x - center_);
        return y.squaredNorm();
    }

    /// Boundary points count as inside (closed ellipsoid).
    bool contains(const Vec& x) const { return standardized_sq(x) <= radius_ * radius_; }

    double log_volume() const {
        int p = dim();
        double log_unit_ball = 0.5 * p * std::log(std::numbers::pi) - std::lgamma(0.5 * p + 1.0);
        return log_unit_ball + p * std::log(radius_) + chol_.diagonal().array().log().sum();
    }

    double volume() const { return std::exp(log_volume()); }

    Ellipsoid with_radius(double r) const {
        Ellipsoid out(*this);
        if (!(r > 0.0)) throw std::invalid_argument("Ellipsoid: radius must be positive");
        out.radius_ = r;
        return out;
    }

private:
    Vec center_;
    Mat chol_;  // lower Cholesky of the shape matrix
    double radius_;
};

/// If the region is theta-aligned (same center, shape proportional to Sigma),
/// returns the effective radius r_eff with membership <=> mahalanobis_sq <= r_eff^2.
inline std::optional<double> aligned_radius(const EllipticalParams& theta,
                                            const Ellipsoid& region) {
    if (theta.dim() != region.dim()) return std::nullopt;
    int p = theta.dim();
    double mu_scale = 1.0 + theta.mu().norm() + region.center().norm();
    if ((theta.mu() - region.center()).norm() > 1e-9 * mu_scale) return std::nullopt;
    // M = L_sigma^{-1} W L_sigma^{-T} must be a positive multiple of the identity.
    Mat B = theta.cholesky().triangularView<Eigen::Lower>().solve(Mat(region.shape_cholesky()));
    Mat M = B * B.transpose();
    double t = M.trace() / p;
    if (!(t > 0.0)) return std::nullopt;
    if ((M - t * Mat::Identity(p, p)).norm() > 1e-9 * t * std::sqrt(double(p))) {
        return std::nullopt;
    }
    return region.radius() * std::sqrt(t);
}

}  // namespace trimlik
