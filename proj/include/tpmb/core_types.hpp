#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace tpmb {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A trajectory: birth time plus the ordered sequence of states it visited.
class Trajectory {
public:
    Trajectory(int birth_time, std::vector<Vector> states)
        : birth_time_(birth_time), states_(std::move(states)) {
        if (states_.empty())
            throw std::invalid_argument("Trajectory: at least one state required");
        const auto nx = states_.front().size();
        if (nx == 0)
            throw std::invalid_argument("Trajectory: zero-dimensional state");
        for (const auto& s : states_)
            if (s.size() != nx)
                throw std::invalid_argument("Trajectory: inconsistent state dimensions");
    }

    /// Builds a trajectory from a stacked state vector x^{1:nu}.
    static Trajectory from_stacked(int birth_time, const Vector& stacked, int state_dim) {
        if (state_dim <= 0 || stacked.size() == 0 || stacked.size() % state_dim != 0)
            throw std::invalid_argument("Trajectory: stacked vector not a multiple of state dimension");
        std::vector<Vector> states;
        const int n = static_cast<int>(stacked.size()) / state_dim;
        states.reserve(n);
        for (int i = 0; i < n; ++i)
            states.emplace_back(stacked.segment(i * state_dim, state_dim));
        return Trajectory(birth_time, std::move(states));
    }

    int birth_time() const { return birth_time_; }
    int length() const { return static_cast<int>(states_.size()); }
    int end_time() const { return birth_time_ + length() - 1; }
    int state_dim() const { return static_cast<int>(states_.front().size()); }
    bool exists_at(int k) const { return k >= birth_time_ && k <= end_time(); }

    const std::vector<Vector>& states() const { return states_; }
    const Vector& state_at(int k) const { return states_.at(static_cast<std::size_t>(k - birth_time_)); }

    Vector stacked() const {
        Vector out(length() * state_dim());
        for (int i = 0; i < length(); ++i)
            out.segment(i * state_dim(), state_dim()) = states_[i];
        return out;
    }

private:
    int birth_time_;
    std::vector<Vector> states_;
};

namespace detail {

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

// Cholesky factor with a one-shot jitter retry; throws when the matrix is not PSD.
inline Eigen::LLT<Matrix> robust_llt(const Matrix& cov) {
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() == Eigen::Success) return llt;
    const double scale = std::max(1.0, cov.diagonal().cwiseAbs().maxCoeff());
    Matrix jittered = cov;
    jittered.diagonal().array() += 1e-9 * scale;
    llt.compute(jittered);
    if (llt.info() != Eigen::Success)
        throw std::domain_error("covariance is not positive semi-definite");
    return llt;
}

}  // namespace detail

/// log N(x; mean, cov).
inline double log_gaussian_pdf(const Vector& x, const Vector& mean, const Matrix& cov) {
    const auto llt = detail::robust_llt(cov);
    const Vector diff = x - mean;
    const Vector white = llt.matrixL().solve(diff);
    const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const double d = static_cast<double>(x.size());
    return -0.5 * (white.squaredNorm() + log_det + d * std::log(2.0 * std::numbers::pi));
}

/// Single-trajectory Gaussian density N(t, x^{1:nu}; tau, mean, P): zero unless the
/// start time and duration match.
class GaussianTrajectoryDensity {
public:
    /// Validating constructor: checks shape, symmetry and positive semi-definiteness.
    GaussianTrajectoryDensity(int start_time, Vector mean, Matrix covariance, int state_dim)
        : start_time_(start_time), state_dim_(state_dim), mean_(std::move(mean)), cov_(std::move(covariance)) {
        check_shape();
        check_invariants();
    }

    /// Skips the O(d^3) spectral check. Filter internals use this on matrices they built.
    static GaussianTrajectoryDensity trusted(int start_time, Vector mean, Matrix covariance, int state_dim) {
        GaussianTrajectoryDensity d(start_time, state_dim, std::move(mean), std::move(covariance));
        d.check_shape();
        return d;
    }

    int start_time() const { return start_time_; }
    int state_dim() const { return state_dim_; }
    int duration() const { return static_cast<int>(mean_.size()) / state_dim_; }
    int end_time() const { return start_time_ + duration() - 1; }
    const Vector& mean() const { return mean_; }
    const Matrix& covariance() const { return cov_; }

    Vector last_mean() const { return mean_.tail(state_dim_); }
    Matrix last_covariance() const { return cov_.bottomRightCorner(state_dim_, state_dim_); }

    /// Throws std::domain_error if the covariance is asymmetric or has a significantly
    /// negative eigenvalue.
    void check_invariants() const {
        const double scale = std::max(1.0, detail::max_abs(cov_));
        if (detail::max_abs(cov_ - cov_.transpose()) > 1e-9 * scale)
            throw std::domain_error("covariance is not symmetric");
        if (cov_.size() == 0) return;
        Eigen::SelfAdjointEigenSolver<Matrix> es(cov_, Eigen::EigenvaluesOnly);
        const auto& ev = es.eigenvalues();
        const double largest = std::max(0.0, ev.maxCoeff());
        if (ev.minCoeff() < -1e-9 * std::max(largest, 1e-300))
            throw std::domain_error("covariance has negative eigenvalues");
    }

    double log_density(const Trajectory& x) const {
        if (x.birth_time() != start_time_ || x.length() != duration() || x.state_dim() != state_dim_)
            return -std::numeric_limits<double>::infinity();
        return log_gaussian_pdf(x.stacked(), mean_, cov_);
    }

private:
    GaussianTrajectoryDensity(int start_time, int state_dim, Vector mean, Matrix covariance)
        : start_time_(start_time), state_dim_(state_dim), mean_(std::move(mean)), cov_(std::move(covariance)) {}

    void check_shape() const {
        if (state_dim_ <= 0)
            throw std::invalid_argument("GaussianTrajectoryDensity: state dimension must be positive");
        if (mean_.size() == 0 || mean_.size() % state_dim_ != 0)
            throw std::invalid_argument("GaussianTrajectoryDensity: mean size not a positive multiple of state dimension");
        if (cov_.rows() != mean_.size() || cov_.cols() != mean_.size())
            throw std::invalid_argument("GaussianTrajectoryDensity: covariance shape does not match mean");
    }

    int start_time_;
    int state_dim_;
    Vector mean_;
    Matrix cov_;
};

using DensityPtr = std::shared_ptr<const GaussianTrajectoryDensity>;

inline double eval_gaussian_trajectory_density(const GaussianTrajectoryDensity& d, const Trajectory& x) {
    return std::exp(d.log_density(x));
}

struct PoissonComponent {
    double weight;
    GaussianTrajectoryDensity density;
};

/// Gaussian-mixture intensity of undetected trajectories.
struct PoissonIntensity {
    std::vector<PoissonComponent> components;

    double total_mass() const {
        double s = 0.0;
        for (const auto& c : components) s += c.weight;
        return s;
    }

    double operator()(const Trajectory& x) const {
        double s = 0.0;
        for (const auto& c : components) s += c.weight * eval_gaussian_trajectory_density(c.density, x);
        return s;
    }
};

/// Bernoulli component for the alive-trajectories filter.
struct BernoulliAlive {
    double existence;
    GaussianTrajectoryDensity density;

    int start_time() const { return density.start_time(); }
    double eval(const Trajectory& x) const { return eval_gaussian_trajectory_density(density, x); }
};

/// Single-trajectory density of the all-trajectories filter: a mixture over end times l
/// with probabilities beta(l), one Gaussian per end time.
struct EndTimeMixture {
    int start_time = 0;
    std::map<int, double> end_time_probs;
    std::map<int, DensityPtr> per_end;

    double beta(int l) const {
        auto it = end_time_probs.find(l);
        return it == end_time_probs.end() ? 0.0 : it->second;
    }

    double eval(const Trajectory& x) const {
        double s = 0.0;
        for (const auto& [l, b] : end_time_probs)
            if (b > 0.0) s += b * eval_gaussian_trajectory_density(*per_end.at(l), x);
        return s;
    }

    /// Throws std::domain_error when beta is not a distribution or a slice has the wrong duration.
    void check_invariants() const {
        double total = 0.0;
        for (const auto& [l, b] : end_time_probs) {
            if (!(b >= 0.0 && b <= 1.0 + 1e-12))
                throw std::domain_error("end-time probability outside [0,1]");
            total += b;
            auto it = per_end.find(l);
            if (it == per_end.end() || !it->second)
                throw std::domain_error("missing per-end density");
            if (it->second->start_time() != start_time || it->second->end_time() != l)
                throw std::domain_error("per-end density has wrong start or duration");
        }
        if (std::abs(total - 1.0) > 1e-9)
            throw std::domain_error("end-time probabilities do not sum to one");
    }
};

/// Bernoulli component for the all-trajectories filter.
struct BernoulliAll {
    double existence;
    EndTimeMixture density;

    int start_time() const { return density.start_time; }
    double eval(const Trajectory& x) const { return density.eval(x); }
};

enum class Variant { Alive, All };

/// PPP of undetected trajectories plus the multi-Bernoulli of detected ones.
struct PmbPosterior {
    int time = 0;
    PoissonIntensity poisson;
    std::variant<std::vector<BernoulliAlive>, std::vector<BernoulliAll>> bernoullis;

    static PmbPosterior empty(Variant v, int time = 0) {
        PmbPosterior p;
        p.time = time;
        if (v == Variant::All) p.bernoullis = std::vector<BernoulliAll>{};
        return p;
    }

    Variant variant() const { return bernoullis.index() == 0 ? Variant::Alive : Variant::All; }

    std::size_t num_bernoullis() const {
        return std::visit([](const auto& v) { return v.size(); }, bernoullis);
    }

    /// Checks every component invariant. Covariance spectra are checked only when
    /// check_spectrum is set, since that is O(d^3) per component.
    void check_invariants(bool check_spectrum = true) const {
        for (const auto& c : poisson.components) {
            if (!(c.weight >= 0.0)) throw std::domain_error("negative PPP weight");
            if (check_spectrum) c.density.check_invariants();
        }
        if (const auto* alive = std::get_if<std::vector<BernoulliAlive>>(&bernoullis)) {
            for (const auto& b : *alive) {
                if (!(b.existence >= 0.0 && b.existence <= 1.0)) throw std::domain_error("existence outside [0,1]");
                if (b.density.end_time() != time) throw std::domain_error("alive Bernoulli does not end at current time");
                if (check_spectrum) b.density.check_invariants();
            }
        } else {
            for (const auto& b : std::get<std::vector<BernoulliAll>>(bernoullis)) {
                if (!(b.existence >= 0.0 && b.existence <= 1.0)) throw std::domain_error("existence outside [0,1]");
                b.density.check_invariants();
                for (const auto& [l, d] : b.density.per_end)
                    if (l > time) throw std::domain_error("end time beyond current time");
                if (check_spectrum)
                    for (const auto& [l, d] : b.density.per_end) d->check_invariants();
            }
        }
    }
};

/// Trajectory tagged with an auxiliary variable u (0 = Poisson, i = Bernoulli i).
struct AugmentedTrajectory {
    int aux;
    Trajectory trajectory;
};

/// PHD of a PMB: lambda(X) + sum_i r^i p^i(X).
inline double phd_of_pmb(const PmbPosterior& p, const Trajectory& x) {
    double s = p.poisson(x);
    std::visit([&](const auto& bs) {
        for (const auto& b : bs) s += b.existence * b.eval(x);
    }, p.bernoullis);
    return s;
}

}  // namespace tpmb
