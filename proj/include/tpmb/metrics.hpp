#pragma once

#include "tpmb/assignment.hpp"
#include "tpmb/core_types.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace tpmb {

struct MetricParams {
    double p = 2.0;
    double c = 10.0;
    double alpha = 2.0;

    void validate() const {
        if (!(p >= 1.0)) throw std::invalid_argument("MetricParams: p must be >= 1");
        if (!(c > 0.0)) throw std::invalid_argument("MetricParams: c must be positive");
        if (alpha != 2.0) throw std::invalid_argument("MetricParams: only alpha = 2 is supported");
    }
};

/// GOSPA value and its decomposition. Each field is the p-th root of its contribution, so
/// total^p = localization^p + missed^p + false_targets^p.
struct GospaResult {
    double total = 0.0;
    double localization = 0.0;
    double missed = 0.0;
    double false_targets = 0.0;
};

/// Unrooted contributions (p-th powers), which add across time steps.
struct GospaPowers {
    double total = 0.0;
    double localization = 0.0;
    double missed = 0.0;
    double false_targets = 0.0;

    GospaPowers& operator+=(const GospaPowers& o) {
        total += o.total;
        localization += o.localization;
        missed += o.missed;
        false_targets += o.false_targets;
        return *this;
    }
};

inline GospaPowers gospa_powers(const std::vector<Vector>& truth, const std::vector<Vector>& est, const MetricParams& mp) {
    mp.validate();
    const std::size_t nt = truth.size(), ne = est.size();
    if (nt || ne) {
        const auto dim = (nt ? truth.front() : est.front()).size();
        for (const auto* set : {&truth, &est})
            for (const auto& v : *set)
                if (v.size() != dim) throw std::invalid_argument("gospa: vectors of different dimension");
    }

    const double cp = std::pow(mp.c, mp.p);
    const double half = cp / mp.alpha;
    GospaPowers out;
    std::size_t assigned_close = 0;
    if (nt && ne) {
        const bool t_rows = nt <= ne;
        const std::size_t rows = t_rows ? nt : ne, cols = t_rows ? ne : nt;
        Matrix dist(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) {
                const Vector& a = t_rows ? truth[i] : est[i];
                const Vector& b = t_rows ? est[j] : truth[j];
                dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (a - b).norm();
            }
        const Matrix cost = dist.cwiseMin(mp.c).array().pow(mp.p).matrix();
        const auto a = hungarian_solve(cost);
        for (std::size_t i = 0; i < rows; ++i) {
            const double d = dist(static_cast<Eigen::Index>(i), a.columns[i]);
            if (d < mp.c) {
                out.localization += std::pow(d, mp.p);
                ++assigned_close;
            }
        }
    }
    out.missed = half * static_cast<double>(nt - assigned_close);
    out.false_targets = half * static_cast<double>(ne - assigned_close);
    out.total = out.localization + out.missed + out.false_targets;
    return out;
}

/// GOSPA distance between two finite sets of points.
inline GospaResult gospa(const std::vector<Vector>& truth, const std::vector<Vector>& est, const MetricParams& mp = {}) {
    const GospaPowers g = gospa_powers(truth, est, mp);
    const double inv = 1.0 / mp.p;
    return {std::pow(g.total, inv), std::pow(g.localization, inv), std::pow(g.missed, inv), std::pow(g.false_targets, inv)};
}

/// Positions of every trajectory present at step k.
inline std::vector<Vector> positions_at(const std::vector<Trajectory>& xs, int k, const std::vector<int>& pos_idx) {
    std::vector<Vector> out;
    for (const auto& x : xs) {
        if (!x.exists_at(k)) continue;
        const Vector& s = x.state_at(k);
        Vector p(static_cast<Eigen::Index>(pos_idx.size()));
        for (std::size_t i = 0; i < pos_idx.size(); ++i) p[static_cast<Eigen::Index>(i)] = s[pos_idx[i]];
        out.push_back(std::move(p));
    }
    return out;
}

inline const std::vector<int>& default_position_indices() {
    static const std::vector<int> idx{0, 2};
    return idx;
}

/// The true set a filter estimates at step k, cut at k: trajectories alive at k for the
/// alive variant, every trajectory born by k for the all variant.
inline std::vector<Trajectory> truth_at(const std::vector<Trajectory>& truth, int k, Variant v) {
    std::vector<Trajectory> out;
    for (const auto& x : truth) {
        if (x.birth_time() > k || (v == Variant::Alive && x.end_time() < k)) continue;
        const int last = std::min(k, x.end_time());
        std::vector<Vector> states(x.states().begin(), x.states().begin() + (last - x.birth_time() + 1));
        out.emplace_back(x.birth_time(), std::move(states));
    }
    return out;
}

/// Sum over steps 1..k of the GOSPA p-th power between the position slices of the two
/// trajectory sets (not yet divided by k).
inline GospaPowers trajectory_error_sum(const std::vector<Trajectory>& truth, const std::vector<Trajectory>& est, int k,
                                        const MetricParams& mp = {},
                                        const std::vector<int>& pos_idx = default_position_indices()) {
    if (k < 1) throw std::invalid_argument("trajectory error: k must be >= 1");
    GospaPowers sum;
    for (int s = 1; s <= k; ++s) sum += gospa_powers(positions_at(truth, s, pos_idx), positions_at(est, s, pos_idx), mp);
    return sum;
}

/// Per-time squared trajectory error: the summed snapshot GOSPA powers divided by k.
inline double trajectory_snapshot_error(const std::vector<Trajectory>& truth, const std::vector<Trajectory>& est, int k,
                                        const MetricParams& mp = {},
                                        const std::vector<int>& pos_idx = default_position_indices()) {
    return trajectory_error_sum(truth, est, k, mp, pos_idx).total / static_cast<double>(k);
}

/// RMS over Monte Carlo runs of the unnormalised squared errors at step k.
inline double rms_over_runs(const std::vector<double>& squared_errors, int k) {
    if (squared_errors.empty()) throw std::invalid_argument("rms_over_runs: no runs");
    if (k < 1) throw std::invalid_argument("rms_over_runs: k must be >= 1");
    double s = 0.0;
    for (double e : squared_errors) s += e;
    return std::sqrt(s / (static_cast<double>(squared_errors.size()) * static_cast<double>(k)));
}

/// RMS of a per-step error series.
inline double rms_total(const std::vector<double>& series) {
    if (series.empty()) throw std::invalid_argument("rms_total: empty series");
    double s = 0.0;
    for (double d : series) s += d * d;
    return std::sqrt(s / static_cast<double>(series.size()));
}

}  // namespace tpmb
