#pragma once

#include "trimlik/common.hpp"
#include "trimlik/ellipsoid.hpp"
#include "trimlik/elliptical.hpp"
#include "trimlik/scores.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

namespace trimlik {

struct McConfig {
    std::uint64_t seed = 0;
    int draws = 8192;
    bool allow_aligned_exact = true;
};

struct RegionProbability {
    double estimate = 0.0;
    double std_error = 0.0;
    bool aligned_exact = false;
};

namespace detail {

/// Squared standardized residuals s_i and the per-point log densities for all rows.
inline void log_density_rows(const RadialFamily& family, const EllipticalParams& theta,
                             const Mat& x, Vec& s, Vec& logf) {
    Mat diff = x.rowwise() - theta.mu().transpose();
    Mat y = theta.cholesky().template triangularView<Eigen::Lower>().solve(
        Mat(diff.transpose()));
    s = y.colwise().squaredNorm().transpose();
    double logdet = -0.5 * theta.log_det_sigma();
    logf.resize(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) logf[i] = logdet + family.log_g(s[i]);
}

/// sum_i c_i * packed_score(theta, x_i) without per-row allocations.
inline Vec weighted_packed_score_sum(const RadialFamily& family, const EllipticalParams& theta,
                                     const Mat& x, const Vec& c) {
    const int p = theta.dim();
    const Mat& lower = theta.cholesky();
    Mat diff = (x.rowwise() - theta.mu().transpose()).transpose();  // p x m
    Mat y = lower.template triangularView<Eigen::Lower>().solve(diff);
    Vec s = y.colwise().squaredNorm().transpose();
    Mat a = lower.transpose().template triangularView<Eigen::Upper>().solve(y);
    Vec w(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) w[i] = -2.0 * family.dlog_g(s[i]) * c[i];

    Mat aw = a * w.asDiagonal();
    Mat g = aw * y.transpose();  // (j,k) entry: sum_i w_i c_i a_ij y_ik
    Vec out(packed_size(p));
    out.head(p) = aw.rowwise().sum();
    double csum = c.sum();
    int k = p;
    for (int j = 0; j < p; ++j)
        for (int i = j; i < p; ++i) {
            out[k++] = (i == j) ? (-csum + lower(i, i) * g(i, i)) : g(i, j);
        }
    return out;
}

}  // namespace detail

/// Common-random-number evaluator of theta -> P_theta(A) for one fixed ellipsoid A.
///
/// A fixed standardized sample is mapped once into the region (uniformly over A,
/// optionally mixed with a member matched to the trimmed data) and re-weighted by
/// f_theta per evaluation. The draw set never moves, so the estimate is smooth in
/// theta and its analytic gradient is the score-identity estimate
/// P_theta(I_A score) on the same draws. The uniform component makes the relative
/// error vanish as theta spreads out, which keeps the trimmed objectives honest
/// far from the data.
class RegionSampler {
public:
    /// `hint`, when given, adds a proposal component matched to where the
    /// parameter estimates will live (e.g. the trimmed data's moments), which
    /// covers sharply concentrated thetas inside large regions.
    RegionSampler(const RadialFamily& family, const Ellipsoid& region, int draws,
                  std::uint64_t seed, int blocks = 32,
                  std::optional<EllipticalParams> hint = std::nullopt)
        : family_(family), region_(region), total_draws_(draws), blocks_(blocks) {
        if (draws < 1000) throw std::invalid_argument("RegionSampler: budget must be >= 1000");
        check_dim(region.dim(), family.dim(), "RegionSampler");
        const int p = family.dim();
        const double r2 = region.radius() * region.radius();
        const double log_uniform = -region.log_volume();
        const int k = hint ? 2 : 1;

        auto rng = detail::make_rng(detail::derive_seed(seed, 0x52454749));
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        draws_.resize(draws, p);
        inside_mask_.resize(draws);
        block_.resize(draws);
        for (int i = 0; i < draws; ++i) {
            Vec w;
            if (i % k == 0) {  // uniform over the region via the unit ball
                Vec dir = detail::sphere_direction(p, rng);
                double radial = std::pow(unif(rng), 1.0 / p) * region.radius();
                w = region.center() + region.shape_cholesky() * (radial * dir);
            } else {
                Vec z = detail::standard_draw(family_, rng);
                w = hint->mu() + hint->cholesky() * z;
            }
            inside_mask_[i] = region.standardized_sq(w) <= r2 ? 1.0 : 0.0;
            draws_.row(i) = w.transpose();
            block_[static_cast<std::size_t>(i)] =
                static_cast<int>((static_cast<long>(i) * blocks_) / draws);
        }
        // mixture log-density (equal component weights); the uniform component
        // contributes only on A
        if (k == 1) {
            log_ref_ = Vec::Constant(draws, log_uniform);
        } else {
            Vec s;
            detail::log_density_rows(family_, *hint, draws_, s, log_ref_);
            for (Eigen::Index i = 0; i < log_ref_.size(); ++i) {
                double lh = log_ref_[i] - std::numbers::ln2;
                if (inside_mask_[i] > 0.0) {
                    double lu = log_uniform - std::numbers::ln2;
                    double hi = std::max(lh, lu);
                    log_ref_[i] = hi + std::log(std::exp(lh - hi) + std::exp(lu - hi));
                } else {
                    log_ref_[i] = lh;
                }
            }
        }
    }

    const RadialFamily& family() const { return family_; }
    const Ellipsoid& region() const { return region_; }
    long total_draws() const { return total_draws_; }
    int blocks() const { return blocks_; }

    /// Importance weights I_A(w_i) f_theta(w_i)/f_mix(w_i).
    Vec weights(const EllipticalParams& theta) const {
        Vec s, logf;
        detail::log_density_rows(family_, theta, draws_, s, logf);
        return inside_mask_.cwiseProduct((logf - log_ref_).array().exp().matrix());
    }

    RegionProbability probability(const EllipticalParams& theta) const {
        return finish(weights(theta));
    }

    struct ProbGrad {
        double prob = 0.0;
        double std_error = 0.0;
        Vec grad;  // d P_hat / d packed coords
    };

    ProbGrad prob_and_packed_grad(const EllipticalParams& theta) const {
        Vec y = weights(theta);
        RegionProbability p = finish(y);
        Vec g = detail::weighted_packed_score_sum(family_, theta, draws_, y) /
                static_cast<double>(total_draws_);
        return ProbGrad{p.estimate, p.std_error, std::move(g)};
    }

    /// Per-block sums of [y, y*score, y*score score^T] for jackknifed assemblies.
    struct BlockMoments {
        long total_draws = 0;
        std::vector<double> p_sum;
        std::vector<Vec> s_sum;
        std::vector<Mat> ss_sum;
        int blocks() const { return static_cast<int>(p_sum.size()); }
    };

    BlockMoments block_moments(const EllipticalParams& theta, bool second_order = true) const {
        int d = detail::packed_size(family_.dim());
        Vec y = weights(theta);
        BlockMoments out;
        out.total_draws = total_draws_;
        out.p_sum.assign(blocks_, 0.0);
        out.s_sum.assign(blocks_, Vec::Zero(d));
        out.ss_sum.assign(blocks_, Mat::Zero(d, d));
        for (Eigen::Index k = 0; k < draws_.rows(); ++k) {
            if (!(y[k] > 0.0)) continue;
            int b = block_[static_cast<std::size_t>(k)];
            out.p_sum[b] += y[k];
            Vec s = score(family_, theta, draws_.row(k).transpose());
            out.s_sum[b] += y[k] * s;
            if (second_order) out.ss_sum[b] += y[k] * s * s.transpose();
        }
        return out;
    }

private:
    RegionProbability finish(const Vec& y) const {
        double n = static_cast<double>(total_draws_);
        double s1 = y.sum();
        double s2 = y.squaredNorm();
        double mean = s1 / n;
        double var = (s2 - s1 * s1 / n) / (n - 1.0);
        return RegionProbability{mean, std::sqrt(std::max(var, 0.0) / n), false};
    }

    RadialFamily family_;
    Ellipsoid region_;
    long total_draws_;
    int blocks_;
    Mat draws_;        // fixed proposal draws, one per row
    Vec inside_mask_;  // 1.0 when the draw lies in the region
    Vec log_ref_;      // proposal (mixture) log-density at each draw
    std::vector<int> block_;
};

/// P_theta(A) with standard error; exact (no MC noise) when the region is
/// theta-aligned and the config allows it.
inline RegionProbability region_probability(const RadialFamily& family,
                                            const EllipticalParams& theta,
                                            const Ellipsoid& region, const McConfig& cfg) {
    if (cfg.allow_aligned_exact) {
        if (auto r = aligned_radius(theta, region)) {
            return RegionProbability{family.radius_cdf(*r), 0.0, true};
        }
    }
    RegionSampler sampler(family, region, cfg.draws, cfg.seed);
    return sampler.probability(theta);
}

}  // namespace trimlik
