#pragma once

#include "trimlik/likelihood.hpp"
#include "trimlik/optim.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace trimlik {

enum class FitBranch { TruncatedBranch, CensoredBranch };
enum class Initializer { FromRegion, UserSupplied };

struct FitConfig {
    int max_iter = 200;
    double param_tol = 1e-6;
    int em_mc_draws = 512;
    enum class Optimizer { EM, QuasiNewton } optimizer = Optimizer::EM;  // censored fit
    std::uint64_t seed = 0;
    Initializer init = Initializer::FromRegion;
    std::optional<EllipticalParams> init_theta;
    int prob_draws = 4096;
};

struct FitResult {
    EllipticalParams theta_hat;
    std::optional<double> pi_hat;
    Variant variant;
    double loglik = 0.0;
    int iterations = 0;
    bool converged = false;
    std::optional<FitBranch> branch;      // Smart only
    std::optional<double> alpha_used;     // Restricted / natural only
    bool boundary_solution = false;       // Restricted: active constraint
    std::vector<double> loglik_trace;
};

struct NonExistence {
    std::string reason;
    int iterations = 0;
};

/// MLE(t) either exists (fit) or the divergence monitor fired (nonexistence).
struct TruncatedFit {
    std::optional<FitResult> fit;
    std::optional<NonExistence> nonexistence;
    bool exists() const { return fit.has_value(); }
};

namespace detail {

inline void check_inside_points(const TrimmedSample& sample, const RadialFamily& family) {
    int p = family.dim();
    int m = sample.inside_count();
    int need = std::max(p + 1, family.min_inside_count());
    if (m < need) {
        throw std::invalid_argument("fit: too few inside points (" + std::to_string(m) +
                                    " < " + std::to_string(need) + ")");
    }
    Vec mean = sample.inside.colwise().mean();
    Mat cov = Mat::Zero(p, p);
    for (int i = 0; i < m; ++i) {
        Vec u = sample.inside.row(i).transpose() - mean;
        cov += u * u.transpose();
    }
    cov /= m;
    Eigen::LLT<Mat> llt(cov);
    if (llt.info() != Eigen::Success ||
        llt.matrixL().toDenseMatrix().diagonal().minCoeff() <=
            1e-6 * llt.matrixL().toDenseMatrix().diagonal().maxCoeff()) {
        throw DegenerateDataError("fit: inside points are not in general position");
    }
}

inline EllipticalParams initial_theta(const TrimmedSample& sample, const RadialFamily& family,
                                      const FitConfig& cfg) {
    if (cfg.init == Initializer::UserSupplied) {
        if (!cfg.init_theta) throw std::invalid_argument("fit: UserSupplied init without theta");
        return *cfg.init_theta;
    }
    // region shape rescaled so the region sits at the family's median radius
    double factor = sample.region.radius() / family.radius_quantile(0.5);
    return EllipticalParams::from_cholesky(sample.region.center(),
                                           sample.region.shape_cholesky() * factor);
}

/// Deterministic lower bound vol(A) * min_A f_theta, from the largest possible
/// Mahalanobis radius over A. The MC estimate can underflow to zero for thetas
/// concentrated away from the region, which would fake an unbounded reward in
/// the truncated objective; the bound is exact mathematics, so max(MC, bound)
/// never rewards pure underflow while leaving genuine divergence untouched.
inline double region_prob_lower_bound(const RadialFamily& family,
                                      const EllipticalParams& theta,
                                      const Ellipsoid& region) {
    Mat b = theta.cholesky().triangularView<Eigen::Lower>().solve(
        Mat(region.shape_cholesky()));
    double smax = std::sqrt(
        Eigen::SelfAdjointEigenSolver<Mat>(b * b.transpose()).eigenvalues().maxCoeff());
    double root = std::sqrt(theta.mahalanobis_sq(region.center())) + region.radius() * smax;
    double log_bound = region.log_volume() - 0.5 * theta.log_det_sigma() +
                       family.log_g(root * root);
    return std::exp(log_bound);
}

struct TruncatedSurface {
    const RadialFamily& family;
    const TrimmedSample& sample;
    const RegionSampler& sampler;

    double region_prob(const EllipticalParams& theta) const {
        return std::max(sampler.probability(theta).estimate,
                        region_prob_lower_bound(family, theta, sampler.region()));
    }

    double value(const Vec& q) const {
        auto theta = unpack_params(q, family.dim());
        double p_hat = region_prob(theta);
        // numerically vanished region probability is the -inf sentinel, never NaN
        if (!(p_hat > 1e-12)) return -std::numeric_limits<double>::infinity();
        Vec s, logf;
        log_density_rows(family, theta, sample.inside, s, logf);
        return logf.sum() - sample.inside_count() * std::log(p_hat);
    }

    Vec gradient(const Vec& q) const {
        auto theta = unpack_params(q, family.dim());
        Vec ones = Vec::Ones(sample.inside_count());
        Vec g = weighted_packed_score_sum(family, theta, sample.inside, ones);
        auto pg = sampler.prob_and_packed_grad(theta);
        return g - (sample.inside_count() / std::max(pg.prob, 1e-300)) * pg.grad;
    }
};

/// Stateful divergence detector. The optimizer only accepts uphill steps, so a
/// persistently vanishing region probability means the likelihood keeps
/// improving toward the boundary of the parameter space; a single low-P iterate
/// can be a transient pass through the exponential-tilt plateau and is ignored.
class DivergenceMonitor {
public:
    DivergenceMonitor(const RadialFamily& family, const RegionSampler& sampler)
        : family_(family), sampler_(sampler) {}

    std::optional<std::string> operator()(const Vec& q, int iter) {
        auto theta = detail::unpack_params(q, family_.dim());
        Eigen::SelfAdjointEigenSolver<Mat> eig(theta.sigma());
        if (eig.eigenvalues().minCoeff() < 1e-10) {
            return "smallest covariance eigenvalue below 1e-10";
        }
        if (theta.mu().norm() > 1e8) return "location norm above 1e8";
        double p_hat = std::max(sampler_.probability(theta).estimate,
                                region_prob_lower_bound(family_, theta, sampler_.region()));
        low_streak_ = (iter > 0 && p_hat < 1e-8) ? low_streak_ + 1 : 0;
        if (low_streak_ >= 3) return "region probability below 1e-8";
        return std::nullopt;
    }

private:
    const RadialFamily& family_;
    const RegionSampler& sampler_;
    int low_streak_ = 0;
};

}  // namespace detail

/// MLE(t): quasi-Newton ascent of the truncated objective on unconstrained
/// (mu, Cholesky) coordinates with the CRN-smoothed region probability.
inline TruncatedFit fit_truncated(const TrimmedSample& sample, const RadialFamily& family,
                                  const FitConfig& cfg) {
    detail::check_inside_points(sample, family);
    Objective obj(Variant::Truncated, family, sample,
                  {.prob_seed = detail::derive_seed(cfg.seed, 0x50524f42),
                   .prob_draws = cfg.prob_draws});
    detail::TruncatedSurface surface{family, sample, obj.sampler()};

    detail::BfgsOptions opts{.max_iter = cfg.max_iter, .step_tol = std::min(1e-3 * cfg.param_tol, 1e-9)};
    detail::DivergenceMonitor monitor(family, obj.sampler());
    auto rep = detail::bfgs_maximize(
        [&](const Vec& q) { return surface.value(q); },
        [&](const Vec& q) { return surface.gradient(q); },
        detail::pack_params(detail::initial_theta(sample, family, cfg)), opts,
        [&](const Vec& q, int it) { return monitor(q, it); });

    if (rep.aborted) {
        return TruncatedFit{std::nullopt, NonExistence{*rep.aborted, rep.iterations}};
    }
    auto theta = detail::unpack_params(rep.x, family.dim());
    FitResult out{theta,         std::nullopt, Variant::Truncated,
                  obj.loglik_truncated(theta), rep.iterations, rep.converged,
                  std::nullopt,  std::nullopt, false,          std::move(rep.trace)};
    return TruncatedFit{std::move(out), std::nullopt};
}

namespace detail {

struct ConditionalMoments {
    Vec mean;
    Mat second;      // E[X X^T | A^c]
    Mat draws;       // accepted draws (row-wise), for the Student-t pass
    Vec weights;     // importance weights of those draws (sum normalized away)
};

/// Monte-Carlo moments of P_theta conditioned on the complement of the region:
/// rejection from the unconditioned sampler, with proposal widening and
/// importance re-weighting when the complement mass is too thin.
inline ConditionalMoments conditional_complement_moments(const RadialFamily& family,
                                                         const EllipticalParams& theta,
                                                         const Ellipsoid& region, int target,
                                                         std::uint64_t seed) {
    int p = family.dim();
    double r2 = region.radius() * region.radius();
    double widen = 1.0;
    for (int stage = 0; stage < 4; ++stage, widen *= 2.0) {
        EllipticalParams proposal =
            EllipticalParams::from_cholesky(theta.mu(), theta.cholesky() * widen);
        auto rng = detail::make_rng(detail::derive_seed(seed, 0x455354, stage));
        std::vector<Vec> kept;
        std::vector<double> logw;
        long proposed = 0;
        const long cap = 512L * std::max(target, 64);
        while (static_cast<int>(kept.size()) < target && proposed < cap) {
            ++proposed;
            Vec z = detail::standard_draw(family, rng);
            Vec x = proposal.mu() + proposal.cholesky() * z;
            if (region.standardized_sq(x) > r2) {
                kept.push_back(x);
                logw.push_back(stage == 0 ? 0.0
                                          : log_density(family, theta, x) -
                                                log_density(family, proposal, x));
            }
            // acceptance probe: widen early instead of burning the whole cap
            if (proposed == 4096 && kept.size() < 4 && stage < 3) break;
        }
        if (kept.empty()) continue;
        Vec w(kept.size());
        double wmax = *std::max_element(logw.begin(), logw.end());
        for (std::size_t i = 0; i < kept.size(); ++i) w[i] = std::exp(logw[i] - wmax);
        double wsum = w.sum();
        double ess = wsum * wsum / w.squaredNorm();
        if (static_cast<int>(kept.size()) < target && stage < 3) continue;
        if (ess < std::min(32.0, target / 4.0)) {
            if (stage < 3) continue;
            throw EStepStarvedError(
                "censored E-step starved: acceptance too low; increase em_mc_draws");
        }
        ConditionalMoments out;
        out.mean = Vec::Zero(p);
        out.second = Mat::Zero(p, p);
        out.draws.resize(kept.size(), p);
        out.weights = w / wsum;
        for (std::size_t i = 0; i < kept.size(); ++i) {
            out.draws.row(i) = kept[i].transpose();
            out.mean += out.weights[i] * kept[i];
            out.second += out.weights[i] * kept[i] * kept[i].transpose();
        }
        return out;
    }
    throw EStepStarvedError("censored E-step starved: no draws landed outside the region");
}

inline std::pair<Vec, Mat> gaussian_mle(const Mat& x) {
    Vec mu = x.colwise().mean();
    Mat diff = x.rowwise() - mu.transpose();
    Mat sigma = diff.transpose() * diff / double(x.rows());
    return {std::move(mu), std::move(sigma)};
}

/// One weighted fixed-point pass of the Student-t M step (generalized EM).
inline std::pair<Vec, Mat> student_t_pass(const RadialFamily& family,
                                          const EllipticalParams& theta, const Mat& x,
                                          const Vec& point_mass) {
    int p = family.dim();
    double nu = family.nu();
    Vec s, logf;
    log_density_rows(family, theta, x, s, logf);
    Vec u = (nu + p) / (s.array() + nu);
    Vec wu = point_mass.array() * u.array();
    Vec mu = (x.transpose() * wu) / wu.sum();
    Mat diff = x.rowwise() - mu.transpose();
    Mat sigma = diff.transpose() * (diff.array().colwise() * wu.array()).matrix() /
                point_mass.sum();
    return {std::move(mu), std::move(sigma)};
}

}  // namespace detail

/// MLE(c) by Monte-Carlo EM: impute the censored mass from P_theta | A^c, then a
/// closed-form (Gaussian) or one-pass fixed-point (Student t) M step.
inline FitResult fit_censored(const TrimmedSample& sample, const RadialFamily& family,
                              const FitConfig& cfg) {
    detail::check_inside_points(sample, family);
    int p = family.dim();
    int m = sample.inside_count();
    int n = sample.n_total;
    Objective obj(Variant::Censored, family, sample,
                  {.prob_seed = detail::derive_seed(cfg.seed, 0x50524f42),
                   .prob_draws = cfg.prob_draws});
    const RegionSampler& crn = obj.sampler();
    auto crn_censored = [&](const EllipticalParams& theta) {
        double value = obj.inside_log_density(theta);
        if (sample.n_outside > 0) {
            auto prob = crn.probability(theta);
            value += sample.n_outside * std::log(std::max(1.0 - prob.estimate, 1e-12));
        }
        return value;
    };
    auto fresh_loglik = [&](const EllipticalParams& theta) {
        RegionSampler fresh(family, sample.region, 4 * cfg.prob_draws,
                            detail::derive_seed(cfg.seed, 0x46524553));
        double value = obj.inside_log_density(theta);
        if (sample.n_outside > 0) {
            value += sample.n_outside *
                     std::log(std::max(1.0 - fresh.probability(theta).estimate, 1e-300));
        }
        return value;
    };

    if (cfg.optimizer == FitConfig::Optimizer::QuasiNewton) {
        auto value = [&](const Vec& q) {
            return crn_censored(detail::unpack_params(q, p));
        };
        auto gradient = [&](const Vec& q) {
            auto theta = detail::unpack_params(q, p);
            Vec g = detail::weighted_packed_score_sum(family, theta, sample.inside,
                                                      Vec::Ones(m));
            if (sample.n_outside > 0) {
                // d/dtheta log(1 - P) = -dP / (1 - P)
                auto pg = crn.prob_and_packed_grad(theta);
                g -= (sample.n_outside / std::max(1.0 - pg.prob, 1e-12)) * pg.grad;
            }
            return g;
        };
        detail::BfgsOptions opts{.max_iter = cfg.max_iter, .step_tol = std::min(1e-3 * cfg.param_tol, 1e-9)};
        auto rep = detail::bfgs_maximize(
            value, gradient, detail::pack_params(detail::initial_theta(sample, family, cfg)),
            opts);
        auto theta = detail::unpack_params(rep.x, p);
        return FitResult{theta,        std::nullopt,  Variant::Censored,
                         fresh_loglik(theta), rep.iterations, rep.converged,
                         std::nullopt, std::nullopt,  false,  std::move(rep.trace)};
    }

    EllipticalParams theta = detail::initial_theta(sample, family, cfg);
    std::vector<double> trace;
    bool converged = false;
    int iterations = 0;

    // vacuous E-step: classical MLE of the inside points
    if (sample.n_outside == 0 && family.kind() == FamilyKind::Gaussian) {
        auto [mu, sigma] = detail::gaussian_mle(sample.inside);
        EllipticalParams hat(mu, sigma);
        trace.push_back(crn_censored(hat));
        return FitResult{hat,          std::nullopt, Variant::Censored, fresh_loglik(hat), 1,
                         true,         std::nullopt, std::nullopt,      false,
                         std::move(trace)};
    }

    for (int it = 0; it < cfg.max_iter; ++it) {
        iterations = it + 1;
        trace.push_back(crn_censored(theta));
        Vec mu_new;
        Mat sigma_new;
        if (family.kind() == FamilyKind::Gaussian) {
            Vec s1 = sample.inside.colwise().sum();
            Mat s2 = sample.inside.transpose() * sample.inside;
            if (sample.n_outside > 0) {
                // fixed stream across iterations: the EM map becomes deterministic
                // with a genuine fixed point, so param_tol is reachable
                auto cm = detail::conditional_complement_moments(
                    family, theta, sample.region, cfg.em_mc_draws,
                    detail::derive_seed(cfg.seed, 0x454d));
                s1 += sample.n_outside * cm.mean;
                s2 += sample.n_outside * cm.second;
            }
            mu_new = s1 / n;
            sigma_new = s2 / n - mu_new * mu_new.transpose();
            sigma_new = Mat(0.5 * (sigma_new + sigma_new.transpose()));
        } else {
            Mat completed = sample.inside;
            Vec mass = Vec::Ones(m);
            if (sample.n_outside > 0) {
                auto cm = detail::conditional_complement_moments(
                    family, theta, sample.region, cfg.em_mc_draws,
                    detail::derive_seed(cfg.seed, 0x454d));
                completed.conservativeResize(m + cm.draws.rows(), p);
                completed.bottomRows(cm.draws.rows()) = cm.draws;
                mass.conservativeResize(m + cm.weights.size());
                mass.tail(cm.weights.size()) = sample.n_outside * cm.weights;
            }
            auto [mu, sigma] = detail::student_t_pass(family, theta, completed, mass);
            mu_new = mu;
            sigma_new = sigma;
        }
        Eigen::LLT<Mat> llt(sigma_new);
        if (llt.info() != Eigen::Success) {
            throw DegenerateDataError("fit_censored: M-step covariance not SPD");
        }
        double step = std::max((mu_new - theta.mu()).cwiseAbs().maxCoeff(),
                               (sigma_new - theta.sigma()).cwiseAbs().maxCoeff());
        theta = EllipticalParams(mu_new, sigma_new);
        if (step < cfg.param_tol) {
            converged = true;
            break;
        }
    }
    trace.push_back(crn_censored(theta));
    return FitResult{theta,        std::nullopt, Variant::Censored, fresh_loglik(theta),
                     iterations,   converged,    std::nullopt,      std::nullopt,
                     false,        std::move(trace)};
}

/// MLE(r): truncated objective under P_theta(A) >= alpha via a logarithmic
/// barrier with decreasing weight.
inline FitResult fit_restricted(const TrimmedSample& sample, const RadialFamily& family,
                                double alpha, const FitConfig& cfg) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw std::invalid_argument("fit_restricted: alpha must lie in (0,1)");
    }
    detail::check_inside_points(sample, family);
    int p = family.dim();
    int m = sample.inside_count();
    Objective obj(Variant::Restricted, family, sample,
                  {.prob_seed = detail::derive_seed(cfg.seed, 0x50524f42),
                   .prob_draws = cfg.prob_draws});
    const RegionSampler& crn = obj.sampler();
    detail::TruncatedSurface surface{family, sample, crn};

    EllipticalParams theta0 = detail::initial_theta(sample, family, cfg);
    // the barrier needs strict feasibility; allow a couple of concentration
    // nudges to clear boundary-level MC noise, then report infeasibility
    {
        int tries = 0;
        while (true) {
            auto prob = crn.probability(theta0);
            if (prob.estimate >= alpha + std::max(1e-3, 3.0 * prob.std_error)) break;
            if (++tries > 3) {
                throw InfeasibleStartError(
                    "fit_restricted: initializer violates P_theta(A) >= alpha");
            }
            theta0 = EllipticalParams::from_cholesky(theta0.mu(), theta0.cholesky() * 0.92);
        }
    }

    Vec q = detail::pack_params(theta0);
    int iterations = 0;
    bool converged = false;
    std::vector<double> trace;
    for (double weight : {1e-2 * m, 1e-3 * m, 1e-4 * m, 1e-5 * m}) {
        auto value = [&](const Vec& qq) {
            auto theta = detail::unpack_params(qq, p);
            double p_hat = crn.probability(theta).estimate;
            if (!(p_hat > alpha)) return -std::numeric_limits<double>::infinity();
            return surface.value(qq) + weight * std::log(p_hat - alpha);
        };
        auto gradient = [&](const Vec& qq) {
            auto theta = detail::unpack_params(qq, p);
            auto pg = crn.prob_and_packed_grad(theta);
            Vec g = surface.gradient(qq);
            g += (weight / std::max(pg.prob - alpha, 1e-12)) * pg.grad;
            return g;
        };
        detail::BfgsOptions opts{.max_iter = cfg.max_iter, .step_tol = std::min(1e-3 * cfg.param_tol, 1e-9)};
        auto rep = detail::bfgs_maximize(value, gradient, q, opts);
        q = rep.x;
        iterations += rep.iterations;
        converged = rep.converged;
        trace.insert(trace.end(), rep.trace.begin(), rep.trace.end());
    }
    auto theta = detail::unpack_params(q, p);
    auto p_final = crn.probability(theta);
    bool boundary = p_final.estimate <= alpha + 3.0 * p_final.std_error;
    return FitResult{theta,      std::nullopt, Variant::Restricted,
                     obj.truncated_value(theta), iterations, converged,
                     std::nullopt, alpha,      boundary,     std::move(trace)};
}

/// MLE(s) by the decision rule: try MLE(t); fall back to the natural MLE(r) when
/// it does not exist; keep the truncated branch iff pi*(theta_hat) >= 0, else the
/// censored fit with pi = 0.
inline FitResult fit_smart(const TrimmedSample& sample, const RadialFamily& family,
                           const FitConfig& cfg) {
    Objective obj(Variant::Smart, family, sample,
                  {.prob_seed = detail::derive_seed(cfg.seed, 0x50524f42),
                   .prob_draws = cfg.prob_draws});

    std::optional<FitResult> candidate;
    std::optional<double> alpha_used;
    auto truncated = fit_truncated(sample, family, cfg);
    if (truncated.exists()) {
        candidate = std::move(truncated.fit);
    } else {
        double alpha = sample.empirical_inside_fraction;
        if (alpha > 0.0 && alpha < 1.0) {
            candidate = fit_restricted(sample, family, alpha, cfg);
            alpha_used = alpha;
        }
    }
    if (candidate) {
        double star = obj.pi_star(candidate->theta_hat);
        if (star >= 0.0) {
            FitResult out = std::move(*candidate);
            out.variant = Variant::Smart;
            out.pi_hat = star;
            out.branch = FitBranch::TruncatedBranch;
            out.alpha_used = alpha_used;
            out.loglik = obj.loglik_smart(out.theta_hat, star);
            return out;
        }
    }
    FitResult censored = fit_censored(sample, family, cfg);
    censored.variant = Variant::Smart;
    censored.pi_hat = 0.0;
    censored.branch = FitBranch::CensoredBranch;
    censored.loglik = obj.loglik_smart(censored.theta_hat, 0.0);
    return censored;
}

}  // namespace trimlik
