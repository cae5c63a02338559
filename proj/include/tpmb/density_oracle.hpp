#pragma once

// Brute-force multi-trajectory density evaluators. Exponential in the set size; they
// exist to check the projection identities numerically on tiny problems.

#include "tpmb/core_types.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

namespace tpmb {

/// A PMBM written out explicitly: Poisson intensity, per-Bernoulli local hypotheses
/// (existence + single-trajectory density) and weighted global hypotheses, each a
/// vector holding one local index per Bernoulli.
template <class Bernoulli>
struct PmbmDensity {
    PoissonIntensity poisson;
    std::vector<std::vector<Bernoulli>> locals;
    std::vector<std::pair<std::vector<int>, double>> globals;
};

inline constexpr int kOracleMaxTrajectories = 6;
inline constexpr int kOracleMaxBernoullis = 4;

namespace detail {

template <class Bernoulli>
void check_oracle_limits(const PmbmDensity<Bernoulli>& f, std::size_t set_size) {
    if (set_size > static_cast<std::size_t>(kOracleMaxTrajectories))
        throw std::length_error("density oracle: more than 6 trajectories");
    if (f.locals.size() > static_cast<std::size_t>(kOracleMaxBernoullis))
        throw std::length_error("density oracle: more than 4 Bernoullis");
    for (const auto& [a, w] : f.globals) {
        if (a.size() != f.locals.size())
            throw std::invalid_argument("density oracle: global hypothesis has wrong length");
        for (std::size_t i = 0; i < a.size(); ++i)
            if (a[i] < 0 || static_cast<std::size_t>(a[i]) >= f.locals[i].size())
                throw std::out_of_range("density oracle: local hypothesis index out of range");
    }
}

// Bernoulli set density f^{i,a}(X) for the subset of xs selected by mask.
template <class Bernoulli>
double bernoulli_set_density(const Bernoulli& b, const std::vector<Trajectory>& xs, std::uint32_t mask) {
    if (mask == 0) return 1.0 - b.existence;
    if ((mask & (mask - 1)) != 0) return 0.0;
    int idx = 0;
    while (((mask >> idx) & 1u) == 0) ++idx;
    return b.existence * b.eval(xs[static_cast<std::size_t>(idx)]);
}

// Sum over ordered partitions of `remaining` into Bernoullis i..n-1 of the product of
// their set densities, under local-hypothesis vector a.
template <class Bernoulli>
double partition_sum(const PmbmDensity<Bernoulli>& f, const std::vector<int>& a, const std::vector<Trajectory>& xs,
                     std::size_t i, std::uint32_t remaining) {
    if (i == f.locals.size()) return remaining == 0 ? 1.0 : 0.0;
    const auto& b = f.locals[i][static_cast<std::size_t>(a[i])];
    double total = 0.0;
    // every submask of remaining, including the empty one
    for (std::uint32_t sub = remaining;; sub = (sub - 1) & remaining) {
        const double here = bernoulli_set_density(b, xs, sub);
        if (here != 0.0) total += here * partition_sum(f, a, xs, i + 1, remaining & ~sub);
        if (sub == 0) break;
    }
    return total;
}

}  // namespace detail

/// Exact PMBM density of a finite set of trajectories, by enumerating every split into a
/// Poisson part and a labelled partition over the Bernoullis.
template <class Bernoulli>
double eval_pmbm_density(const PmbmDensity<Bernoulli>& f, const std::vector<Trajectory>& xs) {
    detail::check_oracle_limits(f, xs.size());
    const std::uint32_t full = (1u << xs.size()) - 1u;
    const double ppp_norm = std::exp(-f.poisson.total_mass());
    double total = 0.0;
    for (std::uint32_t y = full;; y = (y - 1) & full) {
        double ppp = ppp_norm;
        for (std::size_t j = 0; j < xs.size(); ++j)
            if ((y >> j) & 1u) ppp *= f.poisson(xs[j]);
        if (ppp != 0.0) {
            double mbm = 0.0;
            for (const auto& [a, w] : f.globals) mbm += w * detail::partition_sum(f, a, xs, 0, full & ~y);
            total += ppp * mbm;
        }
        if (y == 0) break;
    }
    return total;
}

/// PMBM density on the space augmented with auxiliary variables: u = 0 sends a trajectory
/// to the Poisson factor, u = i to Bernoulli i (1-based).
template <class Bernoulli>
double eval_pmbm_density_with_aux(const PmbmDensity<Bernoulli>& f, const std::vector<AugmentedTrajectory>& xs) {
    detail::check_oracle_limits(f, xs.size());
    const std::size_t n = f.locals.size();
    std::vector<int> owner(n, -1);
    double ppp = std::exp(-f.poisson.total_mass());
    for (std::size_t j = 0; j < xs.size(); ++j) {
        const int u = xs[j].aux;
        if (u < 0 || static_cast<std::size_t>(u) > n)
            throw std::out_of_range("auxiliary variable outside {0,...,n}");
        if (u == 0) {
            ppp *= f.poisson(xs[j].trajectory);
        } else {
            if (owner[static_cast<std::size_t>(u - 1)] >= 0) return 0.0;
            owner[static_cast<std::size_t>(u - 1)] = static_cast<int>(j);
        }
    }
    if (ppp == 0.0) return 0.0;
    double mbm = 0.0;
    for (const auto& [a, w] : f.globals) {
        double prod = w;
        for (std::size_t i = 0; i < n && prod != 0.0; ++i) {
            const auto& b = f.locals[i][static_cast<std::size_t>(a[i])];
            const int j = owner[i];
            prod *= j < 0 ? 1.0 - b.existence : b.existence * b.eval(xs[static_cast<std::size_t>(j)].trajectory);
        }
        mbm += prod;
    }
    return ppp * mbm;
}

/// PHD of the PMBM: lambda(X) + sum_a w^a sum_i r^{i,a^i} p^{i,a^i}(X).
template <class Bernoulli>
double phd_of_pmbm(const PmbmDensity<Bernoulli>& f, const Trajectory& x) {
    double s = f.poisson(x);
    for (const auto& [a, w] : f.globals)
        for (std::size_t i = 0; i < f.locals.size(); ++i) {
            const auto& b = f.locals[i][static_cast<std::size_t>(a[i])];
            if (b.existence > 0.0) s += w * b.existence * b.eval(x);
        }
    return s;
}

}  // namespace tpmb
