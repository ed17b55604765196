#pragma once

#include "trimlik/common.hpp"
#include "trimlik/region.hpp"
#include "trimlik/trim.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <utility>

namespace trimlik {

enum class Variant : char { Truncated = 't', Censored = 'c', Restricted = 'r', Smart = 's' };

inline char variant_tag(Variant v) { return static_cast<char>(v); }

struct ObjectiveConfig {
    std::uint64_t prob_seed = 0;
    int prob_draws = 8192;
    bool allow_aligned_exact = true;
};

/// Trimmed log-likelihood evaluator over one fixed trimmed sample. The region
/// probability uses the aligned-exact form when A happens to be theta-aligned and
/// a common-random-number estimate otherwise, so evaluation at fixed theta (and pi)
/// is deterministic given prob_seed.
class Objective {
public:
    Objective(Variant variant, RadialFamily family, TrimmedSample sample,
              ObjectiveConfig cfg = {})
        : variant_(variant),
          family_(std::move(family)),
          sample_(std::move(sample)),
          cfg_(cfg),
          sampler_(std::make_shared<RegionSampler>(family_, sample_.region, cfg.prob_draws,
                                                   cfg.prob_seed, 32, data_hint(sample_))) {}

    Variant variant() const { return variant_; }
    const RadialFamily& family() const { return family_; }
    const TrimmedSample& sample() const { return sample_; }
    const RegionSampler& sampler() const { return *sampler_; }
    const ObjectiveConfig& config() const { return cfg_; }

    RegionProbability region_prob(const EllipticalParams& theta) const {
        if (cfg_.allow_aligned_exact) {
            if (auto r = aligned_radius(theta, sample_.region)) {
                return RegionProbability{family_.radius_cdf(*r), 0.0, true};
            }
        }
        auto prob = sampler_->probability(theta);
        // the true probability is strictly below 1 for both supported families;
        // project MC noise back into the open interval so pi* keeps its sign
        prob.estimate = std::min(prob.estimate, 1.0 - 1e-12);
        return prob;
    }

    /// Sum over inside points of log f_theta.
    double inside_log_density(const EllipticalParams& theta) const {
        Vec s, logf;
        detail::log_density_rows(family_, theta, sample_.inside, s, logf);
        return logf.sum();
    }

    /// Eq-style truncated objective; -inf when the region probability vanishes.
    double loglik_truncated(const EllipticalParams& theta) const {
        require(Variant::Truncated);
        return truncated_value(theta);
    }

    double loglik_censored(const EllipticalParams& theta) const {
        require(Variant::Censored);
        return censored_value(theta);
    }

    double loglik_smart(const EllipticalParams& theta, double pi) const {
        require(Variant::Smart);
        if (!(pi >= 0.0 && pi < 1.0)) {
            throw std::invalid_argument("loglik_smart: pi must lie in [0,1)");
        }
        double p_hat = region_prob(theta).estimate;
        int m = sample_.inside_count();
        double value = m * std::log1p(-pi) + inside_log_density(theta);
        if (sample_.n_outside > 0) {
            value += sample_.n_outside * std::log((1.0 - pi) * (1.0 - p_hat) + pi);
        }
        return value;
    }

    /// pi*(theta) = (P_theta(A) - P_n(A)) / P_theta(A); may be negative.
    double pi_star(const EllipticalParams& theta) const {
        double p_hat = region_prob(theta).estimate;
        if (!(p_hat > 0.0)) throw std::runtime_error("pi_star: region probability is zero");
        return (p_hat - sample_.empirical_inside_fraction) / p_hat;
    }

    bool feasible_restricted(const EllipticalParams& theta, double alpha) const {
        return region_prob(theta).estimate >= alpha;
    }

    // shared cores, usable regardless of the variant tag (the fits cross-call them)
    double truncated_value(const EllipticalParams& theta) const {
        double p_hat = region_prob(theta).estimate;
        if (!(p_hat > 0.0)) return -std::numeric_limits<double>::infinity();
        return inside_log_density(theta) - sample_.inside_count() * std::log(p_hat);
    }

    double censored_value(const EllipticalParams& theta) const {
        double value = inside_log_density(theta);
        if (sample_.n_outside > 0) {  // 0 * log 0 is taken as 0
            double p_hat = region_prob(theta).estimate;
            value += sample_.n_outside * std::log(std::max(1.0 - p_hat, 0.0));
        }
        return value;
    }

private:
    void require(Variant v) const {
        if (variant_ != v) throw std::logic_error("Objective: wrong variant for this evaluation");
    }

    /// Overdispersed member matched to the trimmed data, for the sampler's
    /// second proposal component; absent when the inside moments are unusable.
    static std::optional<EllipticalParams> data_hint(const TrimmedSample& sample) {
        int p = static_cast<int>(sample.inside.cols());
        if (sample.inside_count() < p + 1) return std::nullopt;
        Vec mean = sample.inside.colwise().mean();
        Mat diff = sample.inside.rowwise() - mean.transpose();
        Mat cov = 4.0 * (diff.transpose() * diff) / double(sample.inside_count());
        Eigen::LLT<Mat> llt(cov);
        if (llt.info() != Eigen::Success) return std::nullopt;
        Mat lower = llt.matrixL();
        if (!(lower.diagonal().minCoeff() > 1e-9 * lower.diagonal().maxCoeff())) {
            return std::nullopt;
        }
        return EllipticalParams::from_cholesky(std::move(mean), std::move(lower));
    }

    Variant variant_;
    RadialFamily family_;
    TrimmedSample sample_;
    ObjectiveConfig cfg_;
    std::shared_ptr<const RegionSampler> sampler_;
};

}  // namespace trimlik
