#pragma once

#include "trimlik/common.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>

#include <cmath>
#include <numbers>
#include <string>

namespace trimlik {

enum class FamilyKind { Gaussian, StudentT };

/// Radial generator g of an elliptical family on R^p, with the dimension-dependent
/// normalization baked into log_g so that f_theta integrates to 1. Also carries the
/// law of the Mahalanobis radius: chi^2_p for Gaussian, p * F(p, nu) for Student t.
class RadialFamily {
public:
    static RadialFamily gaussian(int dim) { return RadialFamily(FamilyKind::Gaussian, 0.0, dim); }

    static RadialFamily student_t(double nu, int dim) {
        if (!(nu > 0.0)) throw std::invalid_argument("RadialFamily: nu must be > 0");
        return RadialFamily(FamilyKind::StudentT, nu, dim);
    }

    FamilyKind kind() const { return kind_; }
    double nu() const { return nu_; }
    int dim() const { return dim_; }

    /// log g(s), s = squared Mahalanobis radius.
    double log_g(double s) const {
        if (kind_ == FamilyKind::Gaussian) {
            return -0.5 * dim_ * std::log(2.0 * std::numbers::pi) - 0.5 * s;
        }
        return t_norm_ - 0.5 * (nu_ + dim_) * std::log1p(s / nu_);
    }

    /// d/ds log g(s); strictly negative for s >= 0 in both supported families (G1).
    double dlog_g(double s) const {
        if (kind_ == FamilyKind::Gaussian) return -0.5;
        return -0.5 * (nu_ + dim_) / (nu_ + s);
    }

    /// P(R <= r) for the Mahalanobis radius R of X ~ P_theta.
    double radius_cdf(double r) const {
        if (r <= 0.0) return 0.0;
        if (kind_ == FamilyKind::Gaussian) {
            return boost::math::cdf(boost::math::chi_squared(dim_), r * r);
        }
        return boost::math::cdf(boost::math::fisher_f(dim_, nu_), r * r / dim_);
    }

    double radius_quantile(double u) const {
        if (!(u >= 0.0 && u < 1.0)) {
            throw std::invalid_argument("RadialFamily: radius quantile needs u in [0,1)");
        }
        if (u == 0.0) return 0.0;
        if (kind_ == FamilyKind::Gaussian) {
            return std::sqrt(boost::math::quantile(boost::math::chi_squared(dim_), u));
        }
        return std::sqrt(dim_ * boost::math::quantile(boost::math::fisher_f(dim_, nu_), u));
    }

    /// Smallest admissible number of in-region points for the trimmed MLEs:
    /// m > 2 in dimension 1; Gaussian p > 1 uses m >= p + 2 (any Gp constant works);
    /// Student t uses the literal bound m > p (nu + p) / nu with gamma = (nu + p)/2.
    int min_inside_count() const {
        if (dim_ == 1) return 3;
        if (kind_ == FamilyKind::Gaussian) return dim_ + 2;
        double bound = dim_ * (nu_ + dim_) / nu_;
        int m = static_cast<int>(std::floor(bound)) + 1;
        return std::max(m, dim_ + 2);
    }

    std::string name() const {
        if (kind_ == FamilyKind::Gaussian) return "gaussian";
        std::string s = std::to_string(nu_);
        s.erase(s.find_last_not_of('0') + 1);
        if (!s.empty() && s.back() == '.') s.pop_back();
        return "t:" + s;
    }

private:
    RadialFamily(FamilyKind kind, double nu, int dim) : kind_(kind), nu_(nu), dim_(dim) {
        if (dim < 1) throw std::invalid_argument("RadialFamily: dim must be >= 1");
        if (kind_ == FamilyKind::StudentT) {
            t_norm_ = std::lgamma(0.5 * (nu_ + dim_)) - std::lgamma(0.5 * nu_) -
                      0.5 * dim_ * std::log(nu_ * std::numbers::pi);
        }
    }

    FamilyKind kind_;
    double nu_;
    int dim_;
    double t_norm_ = 0.0;
};

}  // namespace trimlik
