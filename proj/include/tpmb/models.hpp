#pragma once

#include "tpmb/core_types.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace tpmb {

/// Linear-Gaussian single-target dynamics with constant survival probability.
struct MotionModel {
    Matrix F;
    Matrix Q;
    double p_survival = 1.0;

    int state_dim() const { return static_cast<int>(F.rows()); }

    void validate() const {
        if (F.rows() != F.cols() || Q.rows() != F.rows() || Q.cols() != F.cols())
            throw std::invalid_argument("MotionModel: F and Q must be square and of equal size");
        if (!(p_survival >= 0.0 && p_survival <= 1.0))
            throw std::invalid_argument("MotionModel: p_survival outside [0,1]");
        GaussianTrajectoryDensity(0, Vector::Zero(Q.rows()), Q, static_cast<int>(Q.rows()));
    }
};

struct BirthComponent {
    double weight;
    Vector mean;
    Matrix covariance;
};

/// Gaussian-mixture birth intensity; step 1 may use its own configuration.
struct BirthModel {
    std::vector<BirthComponent> first_step;
    std::vector<BirthComponent> later_steps;

    const std::vector<BirthComponent>& components_at(int k) const { return k <= 1 ? first_step : later_steps; }

    double mass_at(int k) const {
        double s = 0.0;
        for (const auto& c : components_at(k)) s += c.weight;
        return s;
    }

    void validate(int state_dim) const {
        for (const auto* list : {&first_step, &later_steps})
            for (const auto& c : *list) {
                if (!(c.weight >= 0.0)) throw std::invalid_argument("BirthModel: negative weight");
                if (c.mean.size() != state_dim) throw std::invalid_argument("BirthModel: mean dimension mismatch");
                GaussianTrajectoryDensity(0, c.mean, c.covariance, state_dim);
            }
    }
};

enum class SensorKind { Linear, RangeBearing };

/// Measurement model, detection probability and uniform Poisson clutter over a box.
struct SensorModel {
    SensorKind kind = SensorKind::Linear;
    Matrix H;                                   // linear kind only
    Matrix R;
    Eigen::Vector2d position = Eigen::Vector2d::Zero();  // range-bearing kind only
    int pos_x_index = 0;
    int pos_y_index = 2;
    double p_detect = 1.0;
    double clutter_rate = 0.0;
    Vector region_lower;
    Vector region_upper;

    int measurement_dim() const { return static_cast<int>(R.rows()); }

    double region_volume() const { return (region_upper - region_lower).prod(); }

    /// lambda^C(z) for z inside the region, zero outside.
    double clutter_intensity(const Vector& z) const {
        if (clutter_rate == 0.0) return 0.0;
        for (Eigen::Index i = 0; i < z.size(); ++i)
            if (z[i] < region_lower[i] || z[i] > region_upper[i]) return 0.0;
        return clutter_rate / region_volume();
    }

    /// Index of the bearing component whose residuals must be wrapped, or -1.
    int angular_index() const { return kind == SensorKind::RangeBearing ? 1 : -1; }

    void validate() const {
        const int nz = measurement_dim();
        if (R.cols() != nz || nz == 0) throw std::invalid_argument("SensorModel: R must be square and non-empty");
        if (Eigen::LLT<Matrix>(R).info() != Eigen::Success)
            throw std::invalid_argument("SensorModel: R must be positive definite");
        if (kind == SensorKind::Linear && H.rows() != nz)
            throw std::invalid_argument("SensorModel: H rows must equal measurement dimension");
        if (kind == SensorKind::RangeBearing && nz != 2)
            throw std::invalid_argument("SensorModel: range-bearing sensors measure two components");
        if (!(p_detect >= 0.0 && p_detect <= 1.0)) throw std::invalid_argument("SensorModel: p_detect outside [0,1]");
        if (!(clutter_rate >= 0.0)) throw std::invalid_argument("SensorModel: negative clutter rate");
        if (region_lower.size() != nz || region_upper.size() != nz)
            throw std::invalid_argument("SensorModel: clutter region dimension mismatch");
        if (!(region_volume() > 0.0) || ((region_upper - region_lower).array() <= 0.0).any())
            throw std::invalid_argument("SensorModel: clutter region must have positive volume");
    }
};

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    a = std::fmod(a + std::numbers::pi, two_pi);
    if (a <= 0.0) a += two_pi;
    return a - std::numbers::pi;
}

/// z - zhat, with the bearing component wrapped for range-bearing sensors.
inline Vector innovation(const SensorModel& s, const Vector& z, const Vector& zhat) {
    Vector d = z - zhat;
    if (const int a = s.angular_index(); a >= 0) d[a] = wrap_angle(d[a]);
    return d;
}

inline Vector measurement_function(const SensorModel& s, const Vector& x) {
    if (s.kind == SensorKind::Linear) return s.H * x;
    const double dx = x[s.pos_x_index] - s.position.x();
    const double dy = x[s.pos_y_index] - s.position.y();
    if (dx == 0.0 && dy == 0.0)
        throw std::domain_error("range-bearing measurement undefined at the sensor position");
    Vector z(2);
    z << std::hypot(dx, dy), std::atan2(dy, dx);
    return z;
}

/// Affine measurement model z ~ H x + offset: the exact model for linear sensors and the
/// first-order expansion about a linearisation point for range-bearing ones.
struct AffineMeasurement {
    Matrix H;
    Vector offset;
};

inline AffineMeasurement linearize_measurement(const SensorModel& s, const Vector& x) {
    if (s.kind == SensorKind::Linear) return {s.H, Vector::Zero(s.H.rows())};
    const double dx = x[s.pos_x_index] - s.position.x();
    const double dy = x[s.pos_y_index] - s.position.y();
    const double r2 = dx * dx + dy * dy;
    if (r2 == 0.0) throw std::domain_error("cannot linearise range-bearing model at zero range");
    const double r = std::sqrt(r2);
    Matrix J = Matrix::Zero(2, x.size());
    J(0, s.pos_x_index) = dx / r;
    J(0, s.pos_y_index) = dy / r;
    J(1, s.pos_x_index) = -dy / r2;
    J(1, s.pos_y_index) = dx / r2;
    Vector offset = measurement_function(s, x) - J * x;
    return {std::move(J), std::move(offset)};
}

struct ScenarioModels {
    MotionModel motion;
    BirthModel birth;
    SensorModel sensor;
};

/// Nearly-constant-velocity model in 2-D, state [p_x, v_x, p_y, v_y].
inline MotionModel constant_velocity_model(double tau, double q, double p_survival) {
    Eigen::Matrix2d f;
    f << 1.0, tau, 0.0, 1.0;
    Eigen::Matrix2d qb;
    qb << tau * tau * tau / 3.0, tau * tau / 2.0, tau * tau / 2.0, tau;
    MotionModel m;
    m.F = Matrix::Zero(4, 4);
    m.Q = Matrix::Zero(4, 4);
    m.F.block<2, 2>(0, 0) = f;
    m.F.block<2, 2>(2, 2) = f;
    m.Q.block<2, 2>(0, 0) = q * qb;
    m.Q.block<2, 2>(2, 2) = q * qb;
    m.p_survival = p_survival;
    return m;
}

inline Matrix position_selector() {
    Matrix H = Matrix::Zero(2, 4);
    H(0, 0) = 1.0;
    H(1, 2) = 1.0;
    return H;
}

/// Linear/Gaussian scenario: broad Gaussian birth, position measurements.
inline ScenarioModels scenario1_models() {
    ScenarioModels m;
    m.motion = constant_velocity_model(1.0, 0.01, 0.99);

    Vector mean(4);
    mean << 100.0, 0.0, 100.0, 0.0;
    Vector var(4);
    var << 150.0 * 150.0, 1.0, 150.0 * 150.0, 1.0;
    const Matrix cov = var.asDiagonal();
    m.birth.first_step = {{3.0, mean, cov}};
    m.birth.later_steps = {{0.005, mean, cov}};

    m.sensor.kind = SensorKind::Linear;
    m.sensor.H = position_selector();
    m.sensor.R = Matrix::Identity(2, 2);
    m.sensor.p_detect = 0.9;
    m.sensor.clutter_rate = 10.0;
    m.sensor.region_lower = Eigen::Vector2d(0.0, 0.0);
    m.sensor.region_upper = Eigen::Vector2d(300.0, 300.0);
    return m;
}

/// Range-bearing scenario: four point-source births, sensor at (100, 100).
inline ScenarioModels scenario2_models() {
    ScenarioModels m;
    m.motion = constant_velocity_model(1.0, 0.01, 0.99);

    Vector var(4);
    var << 9.0, 1.0, 9.0, 1.0;
    const Matrix cov = var.asDiagonal();
    const double sources[4][2] = {{140.0, 170.0}, {165.0, 155.0}, {150.0, 160.0}, {160.0, 150.0}};
    for (const auto& s : sources) {
        Vector mean(4);
        mean << s[0], 0.0, s[1], 0.0;
        m.birth.first_step.push_back({0.01, mean, cov});
    }
    m.birth.later_steps = m.birth.first_step;

    m.sensor.kind = SensorKind::RangeBearing;
    m.sensor.position = Eigen::Vector2d(100.0, 100.0);
    const double bearing_sd = 2.0 * std::numbers::pi / 180.0;
    m.sensor.R = Eigen::Vector2d(1.0, bearing_sd * bearing_sd).asDiagonal();
    m.sensor.p_detect = 0.9;
    m.sensor.clutter_rate = 10.0;
    m.sensor.region_lower = Eigen::Vector2d(10.0, 0.0);
    m.sensor.region_upper = Eigen::Vector2d(200.0, std::numbers::pi / 2.0);
    return m;
}

}  // namespace tpmb
