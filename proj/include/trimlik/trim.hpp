#pragma once

#include "trimlik/common.hpp"
#include "trimlik/ellipsoid.hpp"
#include "trimlik/elliptical.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

namespace trimlik {

struct MveConfig {
    int n_subsets = 500;
    std::optional<int> coverage_count;  // h; default floor((n+p+1)/2)
    std::uint64_t seed = 0;
    bool refine = true;  // one concentration pass per candidate
};

/// The trimmed sample: points of the data inside A, plus the count outside.
struct TrimmedSample {
    Mat inside;  // one row per retained observation
    std::vector<Eigen::Index> inside_rows;
    std::vector<Eigen::Index> outside_rows;
    int n_outside = 0;
    int n_total = 0;
    Ellipsoid region;
    double empirical_inside_fraction = 0.0;  // P_n(A)

    int inside_count() const { return static_cast<int>(inside.rows()); }
};

namespace detail {

struct MveCandidate {
    Vec center;
    Mat chol;  // lower factor of the shape
    double radius = 0.0;
    double log_vol = std::numeric_limits<double>::infinity();
};

/// Squared standardized distances of every row to (center, chol).
inline void standardized_sq(const Mat& data, const Vec& center, const Mat& chol, Vec& out) {
    Mat diff = data.rowwise() - center.transpose();
    Mat y = chol.template triangularView<Eigen::Lower>().solve(Mat(diff.transpose()));
    out = y.colwise().squaredNorm().transpose();
}

inline std::optional<MveCandidate> inflate(const Mat& data, const Vec& mean, const Mat& cov,
                                           int h, Vec& work) {
    Eigen::LLT<Mat> llt(cov);
    if (llt.info() != Eigen::Success) return std::nullopt;
    MveCandidate cand;
    cand.center = mean;
    cand.chol = llt.matrixL();
    // exactly collinear subsets pass LLT with rounding-level pivots; reject them
    double dmin = cand.chol.diagonal().minCoeff();
    double dmax = cand.chol.diagonal().maxCoeff();
    if (!(dmin > 1e-7 * dmax)) return std::nullopt;
    standardized_sq(data, cand.center, cand.chol, work);
    std::vector<double> d(work.data(), work.data() + work.size());
    std::nth_element(d.begin(), d.begin() + (h - 1), d.end());
    double r2 = d[h - 1];
    if (!(r2 > 0.0)) return std::nullopt;
    cand.radius = std::sqrt(r2);
    int p = static_cast<int>(data.cols());
    cand.log_vol = p * std::log(cand.radius) + cand.chol.diagonal().array().log().sum();
    return cand;
}

inline std::optional<MveCandidate> concentrate(const Mat& data, const MveCandidate& cand,
                                               int h, Vec& work) {
    standardized_sq(data, cand.center, cand.chol, work);
    double r2 = cand.radius * cand.radius * (1.0 + 1e-12);
    Vec mean = Vec::Zero(data.cols());
    int m = 0;
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        if (work[i] <= r2) {
            mean += data.row(i).transpose();
            ++m;
        }
    }
    if (m < data.cols() + 1) return std::nullopt;
    mean /= m;
    Mat cov = Mat::Zero(data.cols(), data.cols());
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        if (work[i] <= r2) {
            Vec u = data.row(i).transpose() - mean;
            cov += u * u.transpose();
        }
    }
    cov /= std::max(m - 1, 1);
    return inflate(data, mean, cov, h, work);
}

}  // namespace detail

/// Approximate sample MVE by (p+1)-subset resampling with one concentration
/// refinement per candidate; the minimal-volume candidate wins, ties broken by
/// the first one found in the seeded draw order.
inline Ellipsoid sample_mve(const Mat& data, const MveConfig& cfg) {
    const int n = static_cast<int>(data.rows());
    const int p = static_cast<int>(data.cols());
    if (cfg.n_subsets < 1) throw std::invalid_argument("sample_mve: n_subsets must be >= 1");
    if (n < p + 1) throw DegenerateDataError("sample_mve: need at least p+1 points");
    int h = cfg.coverage_count ? *cfg.coverage_count : (n + p + 1) / 2;
    if (h < p + 1 || h > n) throw std::invalid_argument("sample_mve: coverage_count out of range");

    auto rng = detail::make_rng(detail::derive_seed(cfg.seed, 0x4d5645));
    std::uniform_int_distribution<int> pick(0, n - 1);
    std::vector<int> idx(p + 1);
    Vec work(n);
    detail::MveCandidate best;
    const int max_attempts_per_subset = 100;

    for (int s = 0; s < cfg.n_subsets; ++s) {
        std::optional<detail::MveCandidate> cand;
        for (int attempt = 0; attempt < max_attempts_per_subset && !cand; ++attempt) {
            // p+1 distinct indices
            for (int k = 0; k < p + 1; ++k) {
                int v;
                bool fresh;
                do {
                    v = pick(rng);
                    fresh = std::find(idx.begin(), idx.begin() + k, v) == idx.begin() + k;
                } while (!fresh);
                idx[k] = v;
            }
            Vec mean = Vec::Zero(p);
            for (int k = 0; k <= p; ++k) mean += data.row(idx[k]).transpose();
            mean /= (p + 1);
            Mat cov = Mat::Zero(p, p);
            for (int k = 0; k <= p; ++k) {
                Vec u = data.row(idx[k]).transpose() - mean;
                cov += u * u.transpose();
            }
            cov /= p;
            cand = detail::inflate(data, mean, cov, h, work);
        }
        if (!cand) continue;
        if (cfg.refine) {
            if (auto better = detail::concentrate(data, *cand, h, work);
                better && better->log_vol < cand->log_vol) {
                cand = better;
            }
        }
        if (cand->log_vol < best.log_vol) best = *cand;
    }
    if (!std::isfinite(best.log_vol)) {
        throw DegenerateDataError("sample_mve: all candidate subsets degenerate");
    }
    return Ellipsoid(best.center, best.chol * best.chol.transpose(), best.radius);
}

/// Scale a (coverage-1/2) region up to the target coverage of the family,
/// keeping center and shape.
inline Ellipsoid enlarge(const Ellipsoid& region, const RadialFamily& family,
                         double target_coverage) {
    if (!(target_coverage < 1.0)) throw std::invalid_argument("enlarge: coverage must be < 1");
    if (target_coverage < 0.5) {
        throw std::invalid_argument("enlarge: shrinking below the MVE coverage is forbidden");
    }
    double factor = mve_radius(family, target_coverage) / mve_radius(family, 0.5);
    return region.with_radius(region.radius() * factor);
}

/// Exact partition of the data by region membership; boundary points count inside.
inline TrimmedSample trim(const Mat& data, const Ellipsoid& region) {
    check_dim(data.cols(), region.dim(), "trim");
    const Eigen::Index n = data.rows();
    std::vector<Eigen::Index> in, out;
    double r2 = region.radius() * region.radius();
    for (Eigen::Index i = 0; i < n; ++i) {
        if (region.standardized_sq(data.row(i).transpose()) <= r2) {
            in.push_back(i);
        } else {
            out.push_back(i);
        }
    }
    Mat inside(in.size(), data.cols());
    for (std::size_t k = 0; k < in.size(); ++k) {
        inside.row(static_cast<Eigen::Index>(k)) = data.row(in[k]);
    }
    const int n_outside = static_cast<int>(out.size());
    const double fraction = n > 0 ? double(in.size()) / double(n) : 0.0;
    return TrimmedSample{std::move(inside), std::move(in), std::move(out),
                         n_outside,         static_cast<int>(n), region, fraction};
}

}  // namespace trimlik
