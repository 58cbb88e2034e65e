#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <complex>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>

namespace widescan {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using RMatrix = Eigen::MatrixXd;
using Index = Eigen::Index;

using Rng = std::mt19937_64;

/// Thrown for violated preconditions (dimension mismatch, bad parameters).
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline void require(bool cond, const std::string& what)
{
    if (!cond) {
        throw InvalidArgument(what);
    }
}

/// SplitMix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed splitting rule used everywhere a child stream is needed:
///   s_0 = master, s_{i+1} = splitmix64(s_i ^ splitmix64(index_i + 1)).
/// Children of distinct index paths are statistically independent streams.
constexpr std::uint64_t derive_seed(std::uint64_t master,
                                    std::initializer_list<std::uint64_t> path)
{
    std::uint64_t s = master;
    for (auto idx : path) {
        s = splitmix64(s ^ splitmix64(idx + 1));
    }
    return s;
}

/// Circularly-symmetric complex normal with E|z|^2 = variance.
inline Complex complex_normal(Rng& rng, double variance)
{
    std::normal_distribution<double> nd(0.0, std::sqrt(variance / 2.0));
    const double re = nd(rng);
    const double im = nd(rng);
    return {re, im};
}

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const
    {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

}  // namespace widescan
