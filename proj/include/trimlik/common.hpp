#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace trimlik {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NotSpdError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DegenerateDataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// E-step rejection sampler could not reach a usable effective sample size.
struct EStepStarvedError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InfeasibleStartError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void check_dim(Eigen::Index got, Eigen::Index want, const char* what) {
    if (got != want) {
        throw DimensionError(std::string(what) + ": dimension " + std::to_string(got) +
                             " does not match " + std::to_string(want));
    }
}

namespace detail {

// splitmix64; used to derive independent RNG streams from one user seed.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return mix64(mix64(seed) ^ mix64(stream + 0x165667b19e3779f9ULL));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return derive_seed(derive_seed(seed, a), b);
}

inline std::mt19937_64 make_rng(std::uint64_t seed) {
    return std::mt19937_64(mix64(seed));
}

}  // namespace detail
}  // namespace trimlik
