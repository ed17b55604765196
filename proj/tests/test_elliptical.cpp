#include "trimlik/elliptical.hpp"
#include "trimlik/region.hpp"
#include "trimlik/scores.hpp"

#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

using namespace trimlik;

namespace {

EllipticalParams std_params(int p) {
    return EllipticalParams(Vec::Zero(p), Mat::Identity(p, p));
}

EllipticalParams random_params(int p, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    Vec mu(p);
    for (int i = 0; i < p; ++i) mu[i] = g(rng);
    Mat a(p, p);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) a(i, j) = g(rng);
    Mat sigma = a * a.transpose() + 0.3 * Mat::Identity(p, p);
    return EllipticalParams(mu, sigma);
}

}  // namespace

TEST_CASE("radial family basics") {
    auto gauss = RadialFamily::gaussian(2);
    auto t5 = RadialFamily::student_t(5.0, 2);

    SECTION("generator is strictly decreasing (G1)") {
        for (double s : {0.0, 0.1, 1.0, 10.0, 1e4}) {
            CHECK(gauss.dlog_g(s) < 0.0);
            CHECK(t5.dlog_g(s) < 0.0);
        }
    }
    SECTION("radius cdf/quantile invert each other") {
        for (double u : {0.01, 0.25, 0.5, 0.9, 0.99}) {
            CHECK(gauss.radius_cdf(gauss.radius_quantile(u)) == Catch::Approx(u).margin(1e-12));
            CHECK(t5.radius_cdf(t5.radius_quantile(u)) == Catch::Approx(u).margin(1e-12));
        }
    }
    SECTION("invalid construction") {
        CHECK_THROWS_AS(RadialFamily::student_t(0.0, 2), std::invalid_argument);
        CHECK_THROWS_AS(RadialFamily::student_t(-1.0, 2), std::invalid_argument);
    }
    SECTION("normalization: radial quadrature integrates to 1 for each supported (kind,p)") {
        for (int p : {1, 2, 3}) {
            CHECK(oracles::radial_normalization(RadialFamily::gaussian(p)) ==
                  Catch::Approx(1.0).margin(1e-6));
            CHECK(oracles::radial_normalization(RadialFamily::student_t(5.0, p)) ==
                  Catch::Approx(1.0).margin(1e-6));
            CHECK(oracles::radial_normalization(RadialFamily::student_t(2.0, p)) ==
                  Catch::Approx(1e0).margin(1e-4));
        }
    }
}

TEST_CASE("log_density examples") {
    SECTION("standard normal mode, p=1") {
        auto f = RadialFamily::gaussian(1);
        CHECK(log_density(f, std_params(1), Vec::Zero(1)) ==
              Catch::Approx(std::log(1.0 / std::sqrt(2.0 * std::numbers::pi))).epsilon(1e-12));
    }
    SECTION("closed form, p=2") {
        auto f = RadialFamily::gaussian(2);
        Vec x(2);
        x << 1.0, 1.0;
        CHECK(log_density(f, std_params(2), x) ==
              Catch::Approx(-std::log(2.0 * std::numbers::pi) - 1.0).epsilon(1e-12));
    }
    SECTION("student t matches an independently coded multivariate-t density") {
        std::mt19937_64 rng(31);
        auto f = RadialFamily::student_t(5.0, 2);
        CHECK(log_density(f, std_params(2), Vec::Zero(2)) ==
              Catch::Approx(oracles::mvt_log_density(5.0, Vec::Zero(2), Mat::Identity(2, 2),
                                                     Vec::Zero(2)))
                  .epsilon(1e-12));
        for (int rep = 0; rep < 20; ++rep) {
            auto theta = random_params(2, rng);
            auto x = random_params(2, rng).mu();
            CHECK(log_density(f, theta, x) ==
                  Catch::Approx(oracles::mvt_log_density(5.0, theta.mu(), theta.sigma(), x))
                      .epsilon(1e-10));
        }
    }
    SECTION("dimension mismatch is an error") {
        auto f = RadialFamily::gaussian(2);
        CHECK_THROWS_AS(log_density(f, std_params(2), Vec::Zero(3)), DimensionError);
        CHECK_THROWS_AS(log_density(f, std_params(3), Vec::Zero(3)), DimensionError);
    }
    SECTION("non-SPD sigma fails at construction") {
        Mat bad(2, 2);
        bad << 1.0, 2.0, 2.0, 1.0;  // eigenvalues 3, -1
        CHECK_THROWS_AS(EllipticalParams(Vec::Zero(2), bad), NotSpdError);
        Mat asym(2, 2);
        asym << 1.0, 0.5, -0.5, 1.0;
        CHECK_THROWS_AS(EllipticalParams(Vec::Zero(2), asym), NotSpdError);
    }
}

TEST_CASE("mahalanobis_sq examples") {
    auto theta2 = std_params(2);
    CHECK(mahalanobis_sq(std_params(1), Vec::Zero(1)) == 0.0);
    Vec x(2);
    x << 3.0, 4.0;
    CHECK(mahalanobis_sq(theta2, x) == Catch::Approx(25.0).epsilon(1e-14));

    Vec mu(2), y(2), diag(2);
    mu << 1.0, 1.0;
    y << 3.0, 1.0;
    diag << 4.0, 1.0;
    EllipticalParams theta(mu, Mat(diag.asDiagonal()));
    CHECK(mahalanobis_sq(theta, y) == Catch::Approx(1.0).epsilon(1e-14));
    CHECK_THROWS_AS(mahalanobis_sq(theta2, Vec::Zero(3)), DimensionError);
}

TEST_CASE("shape/scale reparameterization") {
    std::mt19937_64 rng(7);
    for (int rep = 0; rep < 10; ++rep) {
        auto theta = random_params(3, rng);
        Mat xi = theta.shape_matrix();
        CHECK(xi.determinant() == Catch::Approx(1.0).epsilon(1e-10));
        CHECK((xi * theta.scale_sq() - theta.sigma()).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("sampling follows the radial law") {
    auto f = RadialFamily::gaussian(2);
    auto theta = std_params(2);
    const int n = 100000;
    Mat draws = sample(f, theta, n, 2024);

    SECTION("CLT bound on the mean") {
        Vec mean = draws.colwise().mean();
        double bound = 3.0 / std::sqrt(double(n)) * std::sqrt(2.0);
        CHECK(std::abs(mean[0]) < bound);
        CHECK(std::abs(mean[1]) < bound);
    }
    SECTION("empirical radius cdf at the chi2 median") {
        double med = 2.0 * std::log(2.0);  // chi^2_2 median
        int count = 0;
        for (int i = 0; i < n; ++i)
            if (draws.row(i).squaredNorm() <= med) ++count;
        CHECK(std::abs(count / double(n) - 0.5) < 0.01);
    }
    SECTION("deterministic given the seed") {
        Mat again = sample(f, theta, 100, 2024);
        CHECK((again - draws.topRows(100)).cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("heavy-tail radius quantile, t(1)") {
        auto t1 = RadialFamily::student_t(1.0, 2);
        Mat td = sample(t1, theta, n, 99);
        std::vector<double> r(n);
        for (int i = 0; i < n; ++i) r[i] = td.row(i).norm();
        std::nth_element(r.begin(), r.begin() + n / 2, r.end());
        double med = r[n / 2];
        CHECK(std::abs(med - t1.radius_quantile(0.5)) / t1.radius_quantile(0.5) < 0.02);
    }
    SECTION("mahalanobis radius is chi^2_2 (Kolmogorov-Smirnov)") {
        std::vector<double> u(n);
        for (int i = 0; i < n; ++i) u[i] = f.radius_cdf(draws.row(i).norm());
        std::sort(u.begin(), u.end());
        double ks = 0.0;
        for (int i = 0; i < n; ++i) {
            ks = std::max(ks, std::abs(u[i] - (i + 1.0) / n));
            ks = std::max(ks, std::abs(u[i] - i / double(n)));
        }
        CHECK(ks < 1.63 / std::sqrt(double(n)));  // 1% critical value
    }
}

TEST_CASE("mve_radius") {
    CHECK(mve_radius(RadialFamily::gaussian(2), 0.5) == Catch::Approx(1.17741).margin(2e-5));
    CHECK(mve_radius(RadialFamily::gaussian(1), 0.95) == Catch::Approx(1.95996).margin(1e-3));
    CHECK_THROWS_AS(mve_radius(RadialFamily::gaussian(2), 1.0), std::invalid_argument);

    // sampling oracle for the t(5), p=3 median radius
    auto t5 = RadialFamily::student_t(5.0, 3);
    const int n = 1000000;
    Mat d = sample(t5, std_params(3), n, 5);
    std::vector<double> r(n);
    for (int i = 0; i < n; ++i) r[i] = d.row(i).norm();
    std::nth_element(r.begin(), r.begin() + n / 2, r.end());
    CHECK(std::abs(r[n / 2] - mve_radius(t5, 0.5)) / mve_radius(t5, 0.5) < 0.01);
}

TEST_CASE("region_probability") {
    auto f2 = RadialFamily::gaussian(2);
    auto theta2 = std_params(2);

    SECTION("aligned mode is exact") {
        double r = std::sqrt(2.0 * std::log(2.0));
        Ellipsoid region(Vec::Zero(2), Mat::Identity(2, 2), r);
        auto p = region_probability(f2, theta2, region, {});
        CHECK(p.aligned_exact);
        CHECK(p.estimate == Catch::Approx(0.5).epsilon(1e-12));
        CHECK(p.std_error == 0.0);
    }
    SECTION("1-D interval at +-1.96") {
        auto f1 = RadialFamily::gaussian(1);
        Ellipsoid region(Vec::Zero(1), Mat::Identity(1, 1), 1.96);
        auto p = region_probability(f1, std_params(1), region, {});
        CHECK(p.estimate == Catch::Approx(0.95).margin(0.005));
    }
    SECTION("non-aligned case matches the quadrature oracle within 3 std errors") {
        Vec mu(2), diag(2);
        mu << 0.3, 0.0;
        diag << 2.0, 1.0;
        EllipticalParams theta(mu, Mat::Identity(2, 2));
        Ellipsoid region(Vec::Zero(2), Mat(diag.asDiagonal()), 1.0);
        auto p = region_probability(f2, theta, region, {.seed = 17, .draws = 20000});
        CHECK_FALSE(p.aligned_exact);
        double truth = oracles::quad_region_prob(f2, theta, region);
        CHECK(std::abs(p.estimate - truth) < 3.0 * p.std_error);
    }
    SECTION("degenerate region / tiny budget are errors") {
        CHECK_THROWS_AS(Ellipsoid(Vec::Zero(2), Mat::Identity(2, 2), 0.0), std::invalid_argument);
        Ellipsoid region(Vec::Ones(2), Mat::Identity(2, 2), 1.0);  // not theta-aligned
        CHECK_THROWS_AS(region_probability(f2, theta2, region, {.seed = 1, .draws = 100}),
                        std::invalid_argument);
    }
    SECTION("aligned mode agrees with forced MC within 4 std errors") {
        std::mt19937_64 rng(404);
        for (int rep = 0; rep < 8; ++rep) {
            auto theta = random_params(2, rng);
            double r = f2.radius_quantile(0.3 + 0.05 * rep);
            Ellipsoid region(theta.mu(), theta.sigma(), r);
            auto exact = region_probability(f2, theta, region, {});
            REQUIRE(exact.aligned_exact);
            McConfig mc{.seed = 1000 + static_cast<std::uint64_t>(rep),
                        .draws = 20000,
                        .allow_aligned_exact = false};
            auto est = region_probability(f2, theta, region, mc);
            CHECK(std::abs(est.estimate - exact.estimate) < 4.0 * est.std_error);
        }
    }
}

TEST_CASE("box quadrature normalization for p <= 3") {
    // tensor-grid integral of exp(log_density) over a large box
    for (int p : {1, 2, 3}) {
        auto f = RadialFamily::gaussian(p);
        auto theta = std_params(p);
        double half = 8.0;
        int nodes = (p == 3) ? 100 : 400;
        double h = 2.0 * half / nodes;
        double total = 0.0;
        Vec x(p);
        auto eval = [&](auto&& self, int d) -> double {
            if (d == p) return std::exp(log_density(f, theta, x));
            double acc = 0.0;
            for (int i = 0; i <= nodes; ++i) {
                x[d] = -half + i * h;
                double w = (i == 0 || i == nodes) ? 0.5 : 1.0;
                acc += w * self(self, d + 1);
            }
            return acc * h;
        };
        total = eval(eval, 0);
        CHECK(total == Catch::Approx(1.0).margin(0.01));
    }
}

TEST_CASE("affine equivariance of the density") {
    std::mt19937_64 rng(55);
    std::normal_distribution<double> g;
    for (auto family : {RadialFamily::gaussian(2), RadialFamily::student_t(4.0, 2)}) {
        for (int rep = 0; rep < 15; ++rep) {
            auto theta = random_params(2, rng);
            Vec x = random_params(2, rng).mu();
            Mat a(2, 2);
            do {
                for (int i = 0; i < 2; ++i)
                    for (int j = 0; j < 2; ++j) a(i, j) = g(rng);
            } while (std::abs(a.determinant()) < 0.1);
            Vec b(2);
            b << g(rng), g(rng);
            EllipticalParams mapped(a * theta.mu() + b, a * theta.sigma() * a.transpose());
            double lhs = log_density(family, theta, x);
            double rhs = log_density(family, mapped, a * x + b) +
                         std::log(std::abs(a.determinant()));
            CHECK(lhs == Catch::Approx(rhs).margin(1e-10));
        }
    }
}

TEST_CASE("score spot checks") {
    auto f1 = RadialFamily::gaussian(1);
    Vec s = score(f1, std_params(1), Vec::Zero(1));
    CHECK(s[0] == Catch::Approx(0.0).margin(1e-14));
    CHECK(s[1] == Catch::Approx(-0.5).epsilon(1e-12));
}
