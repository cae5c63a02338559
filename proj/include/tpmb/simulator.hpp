#pragma once

#include "tpmb/core_types.hpp"
#include "tpmb/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

namespace tpmb {

enum class TruthMode { Fixed, Sampled };

/// One scripted target. The target is present from birth_step up to, but excluding,
/// death_step; without a death step it lives to the horizon.
struct ScriptedTarget {
    int birth_step = 1;
    std::optional<int> death_step;
    Vector initial_state;
};

struct ScenarioConfig {
    int horizon = 81;
    ScenarioModels models;
    TruthMode truth_mode = TruthMode::Fixed;
    std::vector<ScriptedTarget> script;
    /// Scale applied to Q when sampling the process noise of the true trajectories.
    double truth_process_noise = 1.0;
    /// When set, truth is drawn from this seed instead of the run seed, so every run
    /// shares the same ground truth.
    std::optional<std::uint64_t> truth_seed;

    void validate() const {
        if (horizon < 1) throw std::invalid_argument("ScenarioConfig: horizon must be >= 1");
        if (!(truth_process_noise >= 0.0)) throw std::invalid_argument("ScenarioConfig: negative truth noise scale");
        models.motion.validate();
        models.sensor.validate();
        models.birth.validate(models.motion.state_dim());
        for (const auto& t : script) {
            if (t.birth_step < 1 || t.birth_step > horizon)
                throw std::invalid_argument("ScenarioConfig: scripted birth outside the horizon");
            if (t.death_step && *t.death_step <= t.birth_step)
                throw std::invalid_argument("ScenarioConfig: death step must follow the birth step");
            if (t.initial_state.size() != models.motion.state_dim())
                throw std::invalid_argument("ScenarioConfig: scripted state dimension mismatch");
        }
    }
};

/// Measurements per step; entry k-1 holds the set received at step k.
using MeasurementRecord = std::vector<std::vector<Vector>>;

namespace detail {

enum class Stream : std::uint64_t { Truth = 1, Detection = 2, Noise = 3, Clutter = 4, Shuffle = 5 };

inline std::mt19937_64 substream(std::uint64_t seed, Stream s) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(s)};
    return std::mt19937_64(seq);
}

/// Draws from N(mean, cov) for a PSD covariance (singular covariances allowed).
class GaussianSampler {
public:
    explicit GaussianSampler(const Matrix& cov) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (cov + cov.transpose()));
        root_ = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    }

    template <class Rng>
    Vector operator()(const Vector& mean, Rng& rng) const {
        std::normal_distribution<double> n01;
        Vector e(root_.cols());
        for (Eigen::Index i = 0; i < e.size(); ++i) e[i] = n01(rng);
        return mean + root_ * e;
    }

private:
    Matrix root_;
};

inline Trajectory propagate(const MotionModel& m, const GaussianSampler& noise, Vector x, int birth, int last,
                            std::mt19937_64& rng) {
    std::vector<Vector> states{x};
    for (int k = birth + 1; k <= last; ++k) {
        x = noise(m.F * x, rng);
        states.push_back(x);
    }
    return Trajectory(birth, std::move(states));
}

}  // namespace detail

/// Ground-truth set of trajectories for steps 1..horizon.
inline std::vector<Trajectory> generate_truth(const ScenarioConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    auto rng = detail::substream(cfg.truth_seed.value_or(seed), detail::Stream::Truth);
    const MotionModel& m = cfg.models.motion;
    const detail::GaussianSampler noise(cfg.truth_process_noise * m.Q);
    std::vector<Trajectory> out;

    if (cfg.truth_mode == TruthMode::Fixed) {
        for (const auto& t : cfg.script) {
            const int last = std::min(cfg.horizon, t.death_step.value_or(cfg.horizon + 1) - 1);
            out.push_back(detail::propagate(m, noise, t.initial_state, t.birth_step, last, rng));
        }
        return out;
    }

    // Sampled mode: Poisson births from the birth intensity, geometric lifetimes.
    std::bernoulli_distribution survive(m.p_survival);
    for (int k = 1; k <= cfg.horizon; ++k) {
        const auto& comps = cfg.models.birth.components_at(k);
        const double mass = cfg.models.birth.mass_at(k);
        if (mass <= 0.0) continue;
        std::poisson_distribution<int> count(mass);
        std::vector<double> w;
        for (const auto& c : comps) w.push_back(c.weight);
        std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
        for (int n = count(rng); n > 0; --n) {
            const auto& c = comps[pick(rng)];
            Vector x = detail::GaussianSampler(c.covariance)(c.mean, rng);
            std::vector<Vector> states{x};
            for (int s = k + 1; s <= cfg.horizon && survive(rng); ++s) {
                x = noise(m.F * x, rng);
                states.push_back(x);
            }
            out.emplace_back(k, std::move(states));
        }
    }
    return out;
}

/// Target detections plus uniform Poisson clutter for steps 1..horizon, each step's list
/// shuffled.
inline MeasurementRecord generate_measurements(const std::vector<Trajectory>& truth, const SensorModel& sensor,
                                               int horizon, std::uint64_t seed) {
    sensor.validate();
    if (horizon < 0) throw std::invalid_argument("generate_measurements: negative horizon");
    auto det_rng = detail::substream(seed, detail::Stream::Detection);
    auto noise_rng = detail::substream(seed, detail::Stream::Noise);
    auto clutter_rng = detail::substream(seed, detail::Stream::Clutter);
    auto shuffle_rng = detail::substream(seed, detail::Stream::Shuffle);
    const detail::GaussianSampler noise(sensor.R);
    std::bernoulli_distribution detect(sensor.p_detect);
    const int a = sensor.angular_index();

    MeasurementRecord out(static_cast<std::size_t>(horizon));
    for (int k = 1; k <= horizon; ++k) {
        auto& zs = out[static_cast<std::size_t>(k - 1)];
        for (const auto& x : truth) {
            if (!x.exists_at(k) || !detect(det_rng)) continue;
            Vector z = noise(measurement_function(sensor, x.state_at(k)), noise_rng);
            if (a >= 0) z[a] = wrap_angle(z[a]);
            zs.push_back(std::move(z));
        }
        const int nc =
            sensor.clutter_rate > 0.0 ? std::poisson_distribution<int>(sensor.clutter_rate)(clutter_rng) : 0;
        for (int i = 0; i < nc; ++i) {
            Vector z(sensor.measurement_dim());
            for (Eigen::Index d = 0; d < z.size(); ++d)
                z[d] = std::uniform_real_distribution<double>(sensor.region_lower[d], sensor.region_upper[d])(clutter_rng);
            zs.push_back(std::move(z));
        }
        std::shuffle(zs.begin(), zs.end(), shuffle_rng);
    }
    return out;
}

namespace detail {

inline Vector cv_state(double px, double vx, double py, double vy) {
    Vector x(4);
    x << px, vx, py, vy;
    return x;
}

}  // namespace detail

/// Linear scenario: four targets born at step 1 on straight lines tangent to a small circle
/// around (100, 100). They are closest at step 40, when one of them dies, and never cross.
inline ScenarioConfig scenario1_config(double closest_radius = 1.0, double speed = 0.5) {
    ScenarioConfig c;
    c.horizon = 81;
    c.models = scenario1_models();
    c.truth_process_noise = 0.0;
    const double s = -39.0 * speed;  // signed path length from step 40 back to step 1
    for (int i = 0; i < 4; ++i) {
        const double a = std::numbers::pi * (0.25 + 0.5 * i);
        const double ux = std::cos(a), uy = std::sin(a);
        const double vx = -uy * speed, vy = ux * speed;
        const double px = 100.0 + closest_radius * ux - uy * s, py = 100.0 + closest_radius * uy + ux * s;
        c.script.push_back({1, i == 0 ? std::optional<int>(40) : std::nullopt, detail::cv_state(px, vx, py, vy)});
    }
    return c;
}

/// Range-bearing scenario: two targets born at step 1 and two at step 21 near the birth
/// point sources, all close together at step 40, when the first one dies.
inline ScenarioConfig scenario2_config() {
    ScenarioConfig c;
    c.horizon = 81;
    c.models = scenario2_models();
    c.truth_process_noise = 0.0;
    const auto towards = [](double sx, double sy, double ex, double ey, int from, int to) {
        const double dt = static_cast<double>(to - from);
        return detail::cv_state(sx, (ex - sx) / dt, sy, (ey - sy) / dt);
    };
    c.script = {
        {1, 40, towards(140.0, 170.0, 150.0, 160.0, 1, 40)},
        {1, std::nullopt, towards(165.0, 155.0, 158.0, 162.0, 1, 40)},
        {21, std::nullopt, towards(150.0, 160.0, 152.0, 152.0, 21, 40)},
        {21, std::nullopt, towards(160.0, 150.0, 160.0, 155.0, 21, 40)},
    };
    return c;
}

}  // namespace tpmb
