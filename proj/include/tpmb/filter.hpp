#pragma once

#include "tpmb/assignment.hpp"
#include "tpmb/core_types.hpp"
#include "tpmb/density_oracle.hpp"
#include "tpmb/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <utility>
#include <variant>
#include <vector>

namespace tpmb {

struct FilterParams {
    int max_hypotheses = 200;       // N_h
    double poisson_prune = 1e-5;    // Gamma_p
    double bernoulli_prune = 1e-5;  // Gamma_b
    double alive_freeze = 1e-4;     // Gamma_a, all-trajectories variant only
    double estimate_threshold = 0.5;  // Gamma_d
    int scan_length = 5;            // L
    double gate_threshold = 13.8;

    void validate() const {
        if (max_hypotheses < 1) throw std::invalid_argument("FilterParams: max_hypotheses must be >= 1");
        if (scan_length < 1) throw std::invalid_argument("FilterParams: scan_length must be >= 1");
        for (double t : {poisson_prune, bernoulli_prune, alive_freeze, estimate_threshold})
            if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("FilterParams: thresholds must lie in [0,1]");
        if (!(gate_threshold > 0.0)) throw std::invalid_argument("FilterParams: gate_threshold must be positive");
    }
};

/// One association option for one Bernoulli: misdetection (measurement = -1) or a
/// measurement. An empty component means existence zero with no density.
template <class B>
struct LocalHypothesis {
    double log_weight = 0.0;
    int measurement = -1;
    std::optional<B> component;

    double existence() const { return component ? component->existence : 0.0; }
};

/// Local hypotheses of one Bernoulli. Entries of the stacked mean before shared_prefix
/// (and the matching covariance rows/columns) are identical across all locals.
template <class B>
struct HypothesisGroup {
    std::vector<LocalHypothesis<B>> locals;
    int shared_prefix = 0;
};

struct GlobalHypothesis {
    std::vector<int> local_index;  // one entry per group
    double weight = 0.0;           // normalised over the retained set
};

template <class B>
struct UpdateDiagnostics {
    int num_prior = 0;  // groups [0, num_prior) come from prior Bernoullis, the rest are new
    std::vector<HypothesisGroup<B>> groups;
    std::vector<GlobalHypothesis> globals;
    std::vector<std::vector<double>> marginals;
};

using AnyDiagnostics = std::variant<UpdateDiagnostics<BernoulliAlive>, UpdateDiagnostics<BernoulliAll>>;

struct UpdateResult {
    PmbPosterior posterior;
    AnyDiagnostics diagnostics;
};

/// Exact PMB projection before Gaussian collapse: existence plus a normalised mixture of
/// the contributing local densities.
template <class B>
struct MixtureBernoulli {
    double existence = 0.0;
    std::vector<std::pair<double, B>> mixture;

    double eval(const Trajectory& x) const {
        double s = 0.0;
        for (const auto& [w, b] : mixture) s += w * b.eval(x);
        return s;
    }
};

namespace detail {

inline constexpr double kLogFloor = -700.0;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_sum_exp(const std::vector<double>& xs) {
    double mx = kNegInf;
    for (double x : xs) mx = std::max(mx, x);
    if (mx == kNegInf) return kNegInf;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - mx);
    return mx + std::log(s);
}

inline double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

inline void symmetrize(Eigen::Ref<Matrix> m) { m = (0.5 * (m + m.transpose())).eval(); }

// First stacked index from which the covariance couples to the last state, rounded down to
// a state boundary. Updates and collapses never touch entries before it.
inline int coupling_start(const Matrix& P, int nx) {
    const int d = static_cast<int>(P.rows());
    const auto last = P.rightCols(nx);
    int row = d - nx;
    for (int i = 0; i < d - nx; ++i)
        if (!last.row(i).isZero(0.0)) {
            row = i;
            break;
        }
    return (row / nx) * nx;
}

/// Predicted measurement of a trajectory density's last state and the quantities needed to
/// score and apply a measurement.
struct MeasurementPrediction {
    int window = 0;
    Vector zhat;
    Matrix S;
    Eigen::LLT<Matrix> llt;
    double log_norm = 0.0;
    Matrix gain;   // rows [window, d) of the Kalman gain
    Matrix cross;  // rows [window, d) of P H^T
};

inline MeasurementPrediction predict_measurement(const GaussianTrajectoryDensity& d, const SensorModel& s) {
    const int nx = d.state_dim();
    const int dim = static_cast<int>(d.mean().size());
    MeasurementPrediction mp;
    const Vector x_last = d.last_mean();
    const AffineMeasurement lin = linearize_measurement(s, x_last);
    mp.window = coupling_start(d.covariance(), nx);
    const int len = dim - mp.window;
    mp.zhat = lin.H * x_last + lin.offset;
    mp.cross = d.covariance().block(mp.window, dim - nx, len, nx) * lin.H.transpose();
    mp.S = lin.H * mp.cross.bottomRows(nx) + s.R;
    symmetrize(mp.S);
    mp.llt.compute(mp.S);
    if (mp.llt.info() != Eigen::Success) throw std::domain_error("innovation covariance is not positive definite");
    const double log_det = 2.0 * mp.llt.matrixLLT().diagonal().array().log().sum();
    mp.log_norm = -0.5 * (log_det + static_cast<double>(mp.S.rows()) * std::log(2.0 * std::numbers::pi));
    mp.gain = mp.llt.solve(mp.cross.transpose()).transpose();
    return mp;
}

inline double mahalanobis(const MeasurementPrediction& mp, const Vector& innov) {
    return mp.llt.matrixL().solve(innov).squaredNorm();
}

inline GaussianTrajectoryDensity kalman_update(const GaussianTrajectoryDensity& d, const MeasurementPrediction& mp,
                                               const Vector& innov) {
    Vector mean = d.mean();
    Matrix P = d.covariance();
    const int len = static_cast<int>(mean.size()) - mp.window;
    mean.tail(len) += mp.gain * innov;
    auto block = P.bottomRightCorner(len, len);
    block -= mp.gain * mp.cross.transpose();
    symmetrize(block);
    return GaussianTrajectoryDensity::trusted(d.start_time(), std::move(mean), std::move(P), d.state_dim());
}

}  // namespace detail

/// Appends one predicted state: mean gains F x_last, covariance gains the cross terms
/// P Fbar^T and the block Fbar P Fbar^T + Q.
inline GaussianTrajectoryDensity extend_trajectory(const GaussianTrajectoryDensity& d, const MotionModel& m) {
    const int nx = d.state_dim();
    if (m.state_dim() != nx) throw std::invalid_argument("motion model dimension does not match trajectory state");
    const int dim = static_cast<int>(d.mean().size());
    Vector mean(dim + nx);
    mean.head(dim) = d.mean();
    mean.tail(nx) = m.F * d.last_mean();
    Matrix P(dim + nx, dim + nx);
    P.topLeftCorner(dim, dim) = d.covariance();
    const Matrix cross = d.covariance().rightCols(nx) * m.F.transpose();
    P.topRightCorner(dim, nx) = cross;
    P.bottomLeftCorner(nx, dim) = cross.transpose();
    P.bottomRightCorner(nx, nx) = m.F * cross.bottomRows(nx) + m.Q;
    detail::symmetrize(P.bottomRightCorner(nx, nx));
    return GaussianTrajectoryDensity::trusted(d.start_time(), std::move(mean), std::move(P), nx);
}

/// Block-diagonal approximation keeping only the joint covariance of the last L states;
/// each older state keeps its own marginal block. Returns the input unchanged when the
/// duration is at most L.
inline GaussianTrajectoryDensity lscan_truncate(const GaussianTrajectoryDensity& d, int L) {
    if (L < 1) throw std::invalid_argument("lscan_truncate: L must be >= 1");
    const int nx = d.state_dim();
    const int nu = d.duration();
    if (nu <= L) return d;
    const int old = (nu - L) * nx;  // stacked size of the states that become independent
    const Matrix& P = d.covariance();
    const int dim = static_cast<int>(P.rows());
    bool changed = !P.topRightCorner(old, dim - old).isZero(0.0);
    for (int b = 0; b < nu - L && !changed; ++b)
        changed = !P.block(b * nx, 0, nx, b * nx).isZero(0.0);
    if (!changed) return d;
    Matrix out = Matrix::Zero(dim, dim);
    for (int b = 0; b < nu - L; ++b) out.block(b * nx, b * nx, nx, nx) = P.block(b * nx, b * nx, nx, nx);
    out.bottomRightCorner(dim - old, dim - old) = P.bottomRightCorner(dim - old, dim - old);
    return GaussianTrajectoryDensity::trusted(d.start_time(), d.mean(), std::move(out), nx);
}

namespace detail {

template <class B>
struct BernoulliTraits;

template <>
struct BernoulliTraits<BernoulliAlive> {
    static const GaussianTrajectoryDensity* alive_slice(const BernoulliAlive& b, int) { return &b.density; }
    static double alive_probability(const BernoulliAlive&, int) { return 1.0; }

    static BernoulliAlive misdetected(const BernoulliAlive& b, int, double p_detect, double& weight) {
        weight = 1.0 - b.existence * p_detect;
        const double r = weight > 0.0 ? b.existence * (1.0 - p_detect) / weight : 0.0;
        return {r, b.density};
    }

    static BernoulliAlive detected(const BernoulliAlive&, int, GaussianTrajectoryDensity updated) {
        return {1.0, std::move(updated)};
    }

    static BernoulliAlive born(double r, GaussianTrajectoryDensity d, int) { return {r, std::move(d)}; }
};

template <>
struct BernoulliTraits<BernoulliAll> {
    static const GaussianTrajectoryDensity* alive_slice(const BernoulliAll& b, int k) {
        if (b.density.beta(k) <= 0.0) return nullptr;
        return b.density.per_end.at(k).get();
    }
    static double alive_probability(const BernoulliAll& b, int k) { return b.density.beta(k); }

    static BernoulliAll misdetected(const BernoulliAll& b, int k, double p_detect, double& weight) {
        const double beta_k = b.density.beta(k);
        weight = 1.0 - b.existence * beta_k * p_detect;
        const double keep = 1.0 - beta_k * p_detect;
        BernoulliAll out = b;
        if (!(weight > 0.0) || !(keep > 0.0)) {
            out.existence = 0.0;
            return out;
        }
        out.existence = b.existence * keep / weight;
        if (beta_k > 0.0) {
            for (auto& [l, beta] : out.density.end_time_probs) {
                if (l == k) beta *= 1.0 - p_detect;
                beta /= keep;
            }
            if (out.density.beta(k) == 0.0) {
                out.density.end_time_probs.erase(k);
                out.density.per_end.erase(k);
            }
        }
        return out;
    }

    static BernoulliAll detected(const BernoulliAll& b, int k, GaussianTrajectoryDensity updated) {
        BernoulliAll out{1.0, {}};
        out.density.start_time = b.density.start_time;
        out.density.end_time_probs[k] = 1.0;
        out.density.per_end[k] = std::make_shared<const GaussianTrajectoryDensity>(std::move(updated));
        return out;
    }

    static BernoulliAll born(double r, GaussianTrajectoryDensity d, int k) {
        BernoulliAll out{r, {}};
        out.density.start_time = d.start_time();
        out.density.end_time_probs[k] = 1.0;
        out.density.per_end[k] = std::make_shared<const GaussianTrajectoryDensity>(std::move(d));
        return out;
    }
};

inline void predict_poisson(PoissonIntensity& ppp, int k, const MotionModel& m, const BirthModel& birth) {
    for (auto& c : ppp.components) c = {m.p_survival * c.weight, extend_trajectory(c.density, m)};
    const int nx = m.state_dim();
    for (const auto& b : birth.components_at(k))
        ppp.components.push_back({b.weight, GaussianTrajectoryDensity::trusted(k, b.mean, b.covariance, nx)});
}

// Moment-matched Gaussian of a weighted set of equally shaped densities; only the trailing
// block from `prefix` on is recomputed, the rest is copied from the first density.
inline GaussianTrajectoryDensity moment_match(const std::vector<std::pair<double, const GaussianTrajectoryDensity*>>& parts,
                                              int prefix) {
    const GaussianTrajectoryDensity& first = *parts.front().second;
    if (parts.size() == 1) return first;
    const int dim = static_cast<int>(first.mean().size());
    for (const auto& [w, d] : parts)
        if (d->start_time() != first.start_time() || d->mean().size() != dim)
            throw std::logic_error("moment_match: local hypotheses disagree on start time or duration");
    prefix = std::clamp(prefix, 0, dim);
    const int len = dim - prefix;
    double total = 0.0;
    for (const auto& [w, d] : parts) total += w;
    Vector mean = first.mean();
    Matrix P = first.covariance();
    Vector mw = Vector::Zero(len);
    for (const auto& [w, d] : parts) mw += (w / total) * d->mean().tail(len);
    Matrix pw = Matrix::Zero(len, len);
    for (const auto& [w, d] : parts) {
        const Vector diff = d->mean().tail(len) - mw;
        pw += (w / total) * (d->covariance().bottomRightCorner(len, len) + diff * diff.transpose());
    }
    symmetrize(pw);
    mean.tail(len) = mw;
    P.bottomRightCorner(len, len) = pw;
    return GaussianTrajectoryDensity::trusted(first.start_time(), std::move(mean), std::move(P), first.state_dim());
}

inline std::optional<BernoulliAlive> collapse(const HypothesisGroup<BernoulliAlive>& g, const std::vector<double>& wbar, int) {
    double r = 0.0;
    std::vector<std::pair<double, const GaussianTrajectoryDensity*>> parts;
    for (std::size_t a = 0; a < g.locals.size(); ++a) {
        const double wr = wbar[a] * g.locals[a].existence();
        if (wr > 0.0) {
            r += wr;
            parts.emplace_back(wr, &g.locals[a].component->density);
        }
    }
    if (parts.empty()) return std::nullopt;
    return BernoulliAlive{std::min(r, 1.0), moment_match(parts, g.shared_prefix)};
}

inline std::optional<BernoulliAll> collapse(const HypothesisGroup<BernoulliAll>& g, const std::vector<double>& wbar, int k) {
    double r = 0.0;
    std::vector<std::pair<double, const BernoulliAll*>> contrib;
    for (std::size_t a = 0; a < g.locals.size(); ++a) {
        const double wr = wbar[a] * g.locals[a].existence();
        if (wr > 0.0) {
            r += wr;
            contrib.emplace_back(wr, &*g.locals[a].component);
        }
    }
    if (contrib.empty()) return std::nullopt;
    if (contrib.size() == 1) {
        BernoulliAll out = *contrib.front().second;
        out.existence = std::min(r, 1.0);
        return out;
    }
    BernoulliAll out{std::min(r, 1.0), {}};
    out.density.start_time = contrib.front().second->density.start_time;
    std::vector<std::pair<double, const GaussianTrajectoryDensity*>> alive;
    for (const auto& [wr, b] : contrib) {
        for (const auto& [l, beta] : b->density.end_time_probs) {
            if (beta <= 0.0) continue;
            out.density.end_time_probs[l] += (wr / r) * beta;
            if (l == k) alive.emplace_back(wr * beta, b->density.per_end.at(l).get());
            else if (!out.density.per_end.count(l)) out.density.per_end[l] = b->density.per_end.at(l);
        }
    }
    if (!alive.empty())
        out.density.per_end[k] = std::make_shared<const GaussianTrajectoryDensity>(moment_match(alive, g.shared_prefix));
    double total = 0.0;
    for (const auto& [l, beta] : out.density.end_time_probs) total += beta;
    for (auto& [l, beta] : out.density.end_time_probs) beta /= total;
    return out;
}

}  // namespace detail

/// Marginal local-hypothesis weights: for each group, the summed weight of the global
/// hypotheses that select each local.
template <class B>
std::vector<std::vector<double>> marginal_weights(const std::vector<HypothesisGroup<B>>& groups,
                                                  const std::vector<GlobalHypothesis>& globals) {
    std::vector<std::vector<double>> out(groups.size());
    for (std::size_t i = 0; i < groups.size(); ++i) out[i].assign(groups[i].locals.size(), 0.0);
    for (const auto& g : globals) {
        if (g.local_index.size() != groups.size()) throw std::invalid_argument("global hypothesis has wrong length");
        for (std::size_t i = 0; i < groups.size(); ++i) out[i].at(static_cast<std::size_t>(g.local_index[i])) += g.weight;
    }
    return out;
}

/// KLD-optimal PMB (Bernoulli part) of the multi-Bernoulli mixture, with each Bernoulli
/// density collapsed to a Gaussian by moment matching. Groups with zero existence are dropped.
template <class B>
std::vector<B> project_to_pmb(const std::vector<HypothesisGroup<B>>& groups, const std::vector<GlobalHypothesis>& globals,
                              int k) {
    if (globals.empty()) throw std::invalid_argument("project_to_pmb: no global hypotheses");
    const auto wbar = marginal_weights(groups, globals);
    std::vector<B> out;
    out.reserve(groups.size());
    for (std::size_t i = 0; i < groups.size(); ++i)
        if (auto b = detail::collapse(groups[i], wbar[i], k)) out.push_back(std::move(*b));
    return out;
}

/// The same projection without the Gaussian collapse: each Bernoulli density is the
/// mixture of its contributing local densities.
template <class B>
std::vector<MixtureBernoulli<B>> project_to_pmb_mixture(const std::vector<HypothesisGroup<B>>& groups,
                                                        const std::vector<GlobalHypothesis>& globals) {
    const auto wbar = marginal_weights(groups, globals);
    std::vector<MixtureBernoulli<B>> out;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        MixtureBernoulli<B> mb;
        for (std::size_t a = 0; a < groups[i].locals.size(); ++a) {
            const double wr = wbar[i][a] * groups[i].locals[a].existence();
            if (wr > 0.0) {
                mb.existence += wr;
                mb.mixture.emplace_back(wr, *groups[i].locals[a].component);
            }
        }
        if (mb.mixture.empty()) continue;
        for (auto& [w, b] : mb.mixture) w /= mb.existence;
        out.push_back(std::move(mb));
    }
    return out;
}

/// The PMBM described by update diagnostics, in the explicit form used by the density oracles.
template <class B>
PmbmDensity<B> to_pmbm_density(const PoissonIntensity& poisson, const UpdateDiagnostics<B>& diag) {
    PmbmDensity<B> f;
    f.poisson = poisson;
    for (const auto& g : diag.groups) {
        std::vector<B> locals;
        for (const auto& l : g.locals) {
            if (l.component) {
                locals.push_back(*l.component);
            } else {
                // existence zero: the density is never evaluated, any placeholder works
                const auto& ref = *std::find_if(g.locals.begin(), g.locals.end(), [](const auto& x) { return x.component.has_value(); });
                B b = *ref.component;
                b.existence = 0.0;
                locals.push_back(std::move(b));
            }
        }
        f.locals.push_back(std::move(locals));
    }
    for (const auto& g : diag.globals) f.globals.emplace_back(g.local_index, g.weight);
    return f;
}

template <class B>
double phd_of_mixture_pmb(const PoissonIntensity& poisson, const std::vector<MixtureBernoulli<B>>& bs, const Trajectory& x) {
    double s = poisson(x);
    for (const auto& b : bs) s += b.existence * b.eval(x);
    return s;
}

// ---------------------------------------------------------------------------------------
// Prediction

inline PmbPosterior predict_alive(const PmbPosterior& p, const MotionModel& m, const BirthModel& birth) {
    if (p.variant() != Variant::Alive) throw std::invalid_argument("predict_alive: posterior is not the alive variant");
    const int k = p.time + 1;
    PmbPosterior out = p;
    out.time = k;
    detail::predict_poisson(out.poisson, k, m, birth);
    for (auto& b : std::get<std::vector<BernoulliAlive>>(out.bernoullis))
        b = {m.p_survival * b.existence, extend_trajectory(b.density, m)};
    return out;
}

inline PmbPosterior predict_all(const PmbPosterior& p, const MotionModel& m, const BirthModel& birth) {
    if (p.variant() != Variant::All) throw std::invalid_argument("predict_all: posterior is not the all variant");
    const int k = p.time + 1;
    PmbPosterior out = p;
    out.time = k;
    detail::predict_poisson(out.poisson, k, m, birth);
    for (auto& b : std::get<std::vector<BernoulliAll>>(out.bernoullis)) {
        auto& d = b.density;
        const double prev = d.beta(k - 1);
        if (prev <= 0.0) continue;  // frozen: no alive mass left to propagate
        d.per_end[k] = std::make_shared<const GaussianTrajectoryDensity>(extend_trajectory(*d.per_end.at(k - 1), m));
        d.end_time_probs[k - 1] = (1.0 - m.p_survival) * prev;
        d.end_time_probs[k] = m.p_survival * prev;
        for (int l : {k - 1, k})
            if (d.end_time_probs[l] == 0.0) {
                d.end_time_probs.erase(l);
                d.per_end.erase(l);
            }
    }
    return out;
}

inline PmbPosterior predict(const PmbPosterior& p, const MotionModel& m, const BirthModel& birth) {
    return p.variant() == Variant::Alive ? predict_alive(p, m, birth) : predict_all(p, m, birth);
}

/// Applies the L-scan approximation to every Poisson component and every alive trajectory
/// density. Dead slices of the all-trajectories variant were truncated when they were last
/// alive and are left as they are.
inline PmbPosterior lscan_truncate(const PmbPosterior& p, int L) {
    PmbPosterior out = p;
    for (auto& c : out.poisson.components) c.density = lscan_truncate(c.density, L);
    if (auto* alive = std::get_if<std::vector<BernoulliAlive>>(&out.bernoullis)) {
        for (auto& b : *alive) b.density = lscan_truncate(b.density, L);
    } else {
        for (auto& b : std::get<std::vector<BernoulliAll>>(out.bernoullis)) {
            auto it = b.density.per_end.find(out.time);
            if (it == b.density.per_end.end()) continue;
            const int nu = it->second->duration();
            if (nu > L) it->second = std::make_shared<const GaussianTrajectoryDensity>(lscan_truncate(*it->second, L));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------------------
// Update

namespace detail {

template <class B>
struct UpdateCore {
    std::vector<B> bernoullis;  // projected and pruned
    UpdateDiagnostics<B> diagnostics;
};

template <class B>
UpdateCore<B> update_impl(PoissonIntensity& ppp, const std::vector<B>& prior, int k, const SensorModel& sensor,
                          const std::vector<Vector>& zs, const FilterParams& params) {
    using Traits = BernoulliTraits<B>;
    const int m = static_cast<int>(zs.size());
    const int n = static_cast<int>(prior.size());
    const double pd = sensor.p_detect;
    const double log_pd = safe_log(pd);
    for (const auto& z : zs)
        if (z.size() != sensor.measurement_dim()) throw std::invalid_argument("update: measurement dimension mismatch");

    UpdateCore<B> core;
    auto& diag = core.diagnostics;
    diag.num_prior = n;
    diag.groups.resize(static_cast<std::size_t>(n + m));

    // Existing Bernoullis: misdetection plus one detection per gated measurement.
    std::vector<std::vector<int>> det_local(static_cast<std::size_t>(n), std::vector<int>(static_cast<std::size_t>(m), -1));
    std::vector<int> active;  // groups that receive a cost-matrix column
    for (int i = 0; i < n; ++i) {
        const B& b = prior[static_cast<std::size_t>(i)];
        auto& g = diag.groups[static_cast<std::size_t>(i)];
        const GaussianTrajectoryDensity* slice = Traits::alive_slice(b, k);
        if (!slice) {
            g.locals.push_back({0.0, -1, b});
            continue;
        }
        double w_miss = 1.0;
        B miss = Traits::misdetected(b, k, pd, w_miss);
        g.locals.push_back({safe_log(w_miss), -1, std::move(miss)});
        if (pd <= 0.0 || m == 0) continue;
        const auto mp = predict_measurement(*slice, sensor);
        g.shared_prefix = mp.window;
        const double log_pre = std::log(b.existence) + std::log(Traits::alive_probability(b, k)) + log_pd;
        for (int j = 0; j < m; ++j) {
            const Vector innov = innovation(sensor, zs[static_cast<std::size_t>(j)], mp.zhat);
            const double d2 = mahalanobis(mp, innov);
            if (d2 > params.gate_threshold) continue;
            det_local[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = static_cast<int>(g.locals.size());
            g.locals.push_back({log_pre + mp.log_norm - 0.5 * d2, j, Traits::detected(b, k, kalman_update(*slice, mp, innov))});
        }
        if (g.locals.size() > 1) active.push_back(i);
    }

    // New Bernoullis, one per measurement, from the predicted Poisson intensity.
    std::vector<MeasurementPrediction> ppp_pred;
    if (pd > 0.0 && m > 0) {
        ppp_pred.reserve(ppp.components.size());
        for (const auto& c : ppp.components) ppp_pred.push_back(predict_measurement(c.density, sensor));
    }
    std::vector<double> log_w_new(static_cast<std::size_t>(m), kNegInf);
    for (int j = 0; j < m; ++j) {
        const Vector& z = zs[static_cast<std::size_t>(j)];
        auto& g = diag.groups[static_cast<std::size_t>(n + j)];
        g.locals.push_back({0.0, -1, std::nullopt});
        std::vector<double> terms{safe_log(sensor.clutter_intensity(z))};
        int best = -1;
        double best_log_v = kNegInf;
        Vector best_innov;
        for (std::size_t q = 0; q < ppp_pred.size(); ++q) {
            const auto& mp = ppp_pred[q];
            const Vector innov = innovation(sensor, z, mp.zhat);
            const double d2 = mahalanobis(mp, innov);
            if (d2 > params.gate_threshold) continue;
            const double log_v = log_pd + safe_log(ppp.components[q].weight) + mp.log_norm - 0.5 * d2;
            terms.push_back(log_v);
            if (log_v > best_log_v) {
                best_log_v = log_v;
                best = static_cast<int>(q);
                best_innov = innov;
            }
        }
        const double log_w = log_sum_exp(terms);
        log_w_new[static_cast<std::size_t>(j)] = log_w;
        LocalHypothesis<B> created{log_w, j, std::nullopt};
        if (best >= 0 && log_w > kNegInf) {
            terms.erase(terms.begin());
            const double r = std::min(1.0, std::exp(log_sum_exp(terms) - log_w));
            const auto& mp = ppp_pred[static_cast<std::size_t>(best)];
            created.component = Traits::born(r, kalman_update(ppp.components[static_cast<std::size_t>(best)].density, mp, best_innov), k);
        }
        g.locals.push_back(std::move(created));
    }

    // Undetected trajectories.
    for (auto& c : ppp.components) c.weight *= 1.0 - pd;

    // Ranked assignment: rows are measurements, columns the active Bernoullis then one
    // new-Bernoulli column per measurement. Costs are negative log weight ratios against
    // misdetection / non-creation.
    const int na = static_cast<int>(active.size());
    CostMatrix cost = CostMatrix::Constant(m, na + m, kForbidden);
    for (int c = 0; c < na; ++c) {
        const int i = active[static_cast<std::size_t>(c)];
        const auto& g = diag.groups[static_cast<std::size_t>(i)];
        const double log_miss = std::max(g.locals[0].log_weight, kLogFloor);
        for (int j = 0; j < m; ++j) {
            const int a = det_local[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            if (a >= 0) cost(j, c) = -(std::max(g.locals[static_cast<std::size_t>(a)].log_weight, kLogFloor) - log_miss);
        }
    }
    for (int j = 0; j < m; ++j) cost(j, na + j) = -std::max(log_w_new[static_cast<std::size_t>(j)], kLogFloor);

    const auto ranked = murty_kbest(cost, params.max_hypotheses);
    std::vector<double> log_w(ranked.size()), log_w_floored(ranked.size());
    diag.globals.reserve(ranked.size());
    for (std::size_t h = 0; h < ranked.size(); ++h) {
        GlobalHypothesis gh;
        gh.local_index.assign(static_cast<std::size_t>(n + m), 0);
        for (int j = 0; j < m; ++j) {
            const int c = ranked[h].columns[static_cast<std::size_t>(j)];
            if (c < na) {
                const int i = active[static_cast<std::size_t>(c)];
                gh.local_index[static_cast<std::size_t>(i)] = det_local[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            } else {
                gh.local_index[static_cast<std::size_t>(n + j)] = 1;
            }
        }
        double exact = 0.0, floored = 0.0;
        for (std::size_t g = 0; g < diag.groups.size(); ++g) {
            const double lw = diag.groups[g].locals[static_cast<std::size_t>(gh.local_index[g])].log_weight;
            exact += lw;
            floored += std::max(lw, kLogFloor);
        }
        log_w[h] = exact;
        log_w_floored[h] = floored;
        diag.globals.push_back(std::move(gh));
    }
    double norm = log_sum_exp(log_w);
    if (norm == kNegInf) {
        log_w = log_w_floored;
        norm = log_sum_exp(log_w);
    }
    for (std::size_t h = 0; h < ranked.size(); ++h) diag.globals[h].weight = std::exp(log_w[h] - norm);

    diag.marginals = marginal_weights(diag.groups, diag.globals);
    core.bernoullis = project_to_pmb(diag.groups, diag.globals, k);
    return core;
}

inline void prune_and_freeze(std::vector<BernoulliAlive>& bs, int, const FilterParams& params) {
    std::erase_if(bs, [&](const BernoulliAlive& b) { return b.existence < params.bernoulli_prune; });
}

inline void prune_and_freeze(std::vector<BernoulliAll>& bs, int k, const FilterParams& params) {
    std::erase_if(bs, [&](const BernoulliAll& b) { return b.existence < params.bernoulli_prune; });
    for (auto& b : bs) {
        auto& d = b.density;
        const double beta_k = d.beta(k);
        if (beta_k <= 0.0 || beta_k >= params.alive_freeze) continue;
        if (d.end_time_probs.size() == 1) continue;  // nothing to renormalise onto
        d.end_time_probs.erase(k);
        d.per_end.erase(k);
        double total = 0.0;
        for (const auto& [l, beta] : d.end_time_probs) total += beta;
        for (auto& [l, beta] : d.end_time_probs) beta /= total;
    }
}

}  // namespace detail

/// Bayes update with the measurements of the current step, followed by PMB projection and
/// pruning. The diagnostics hold the local hypotheses and retained global hypotheses.
inline UpdateResult update(const PmbPosterior& p, const SensorModel& sensor, const std::vector<Vector>& zs,
                           const FilterParams& params) {
    params.validate();
    PmbPosterior out;
    out.time = p.time;
    out.poisson = p.poisson;
    auto run = [&](const auto& prior) -> AnyDiagnostics {
        using B = typename std::decay_t<decltype(prior)>::value_type;
        auto core = detail::update_impl<B>(out.poisson, prior, p.time, sensor, zs, params);
        detail::prune_and_freeze(core.bernoullis, p.time, params);
        out.bernoullis = std::move(core.bernoullis);
        return std::move(core.diagnostics);
    };
    AnyDiagnostics diag = std::visit(run, p.bernoullis);
    std::erase_if(out.poisson.components, [&](const PoissonComponent& c) { return c.weight < params.poisson_prune; });
    return {std::move(out), std::move(diag)};
}

/// Global nearest neighbour update: keeps only the best global hypothesis.
inline UpdateResult update_gnn(const PmbPosterior& p, const SensorModel& sensor, const std::vector<Vector>& zs,
                               FilterParams params) {
    params.max_hypotheses = 1;
    return update(p, sensor, zs, params);
}

// ---------------------------------------------------------------------------------------
// Estimation

/// Trajectories of Bernoullis with existence strictly above the threshold; for the
/// all-trajectories variant, the most likely end time (latest on ties).
inline std::vector<Trajectory> estimate(const PmbPosterior& p, double threshold) {
    std::vector<Trajectory> out;
    if (const auto* alive = std::get_if<std::vector<BernoulliAlive>>(&p.bernoullis)) {
        for (const auto& b : *alive)
            if (b.existence > threshold)
                out.push_back(Trajectory::from_stacked(b.density.start_time(), b.density.mean(), b.density.state_dim()));
        return out;
    }
    for (const auto& b : std::get<std::vector<BernoulliAll>>(p.bernoullis)) {
        if (!(b.existence > threshold) || b.density.end_time_probs.empty()) continue;
        int best = b.density.end_time_probs.begin()->first;
        double best_beta = -1.0;
        for (const auto& [l, beta] : b.density.end_time_probs)
            if (beta >= best_beta) {
                best_beta = beta;
                best = l;
            }
        const auto& d = *b.density.per_end.at(best);
        out.push_back(Trajectory::from_stacked(d.start_time(), d.mean(), d.state_dim()));
    }
    return out;
}

// ---------------------------------------------------------------------------------------

/// One filter instance: predict, L-scan, update per step.
class TpmbFilter {
public:
    TpmbFilter(Variant variant, ScenarioModels models, FilterParams params, bool global_nearest_neighbour = false)
        : models_(std::move(models)), params_(params), gnn_(global_nearest_neighbour),
          state_(PmbPosterior::empty(variant, 0)) {
        params_.validate();
        models_.motion.validate();
        models_.sensor.validate();
        models_.birth.validate(models_.motion.state_dim());
        if (gnn_) params_.max_hypotheses = 1;
    }

    /// Advances to the next step using its measurements.
    void step(const std::vector<Vector>& measurements) {
        PmbPosterior predicted = lscan_truncate(predict(state_, models_.motion, models_.birth), params_.scan_length);
        state_ = update(predicted, models_.sensor, measurements, params_).posterior;
    }

    std::vector<Trajectory> estimate() const { return tpmb::estimate(state_, params_.estimate_threshold); }

    const PmbPosterior& posterior() const { return state_; }
    const FilterParams& params() const { return params_; }
    int time() const { return state_.time; }

private:
    ScenarioModels models_;
    FilterParams params_;
    bool gnn_;
    PmbPosterior state_;
};

}  // namespace tpmb
