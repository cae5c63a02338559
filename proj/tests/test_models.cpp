#include "tpmb/models.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <random>

using namespace tpmb;

namespace {

Vector state(double px, double vx, double py, double vy) {
    Vector x(4);
    x << px, vx, py, vy;
    return x;
}

}  // namespace

TEST(Scenario1, ConstantVelocityStep) {
    const auto m = scenario1_models();
    EXPECT_EQ(m.motion.F * state(100, 1, 100, 1), state(101, 1, 101, 1));
}

TEST(Scenario1, ProcessNoiseMatchesCvDiscretisation) {
    const auto m = scenario1_models();
    Matrix q = Matrix::Zero(4, 4);
    q(0, 0) = q(2, 2) = 0.01 / 3.0;
    q(0, 1) = q(1, 0) = q(2, 3) = q(3, 2) = 0.01 / 2.0;
    q(1, 1) = q(3, 3) = 0.01;
    EXPECT_LT((m.motion.Q - q).cwiseAbs().maxCoeff(), 1e-18);
}

TEST(Scenario1, PresetParameters) {
    const auto m = scenario1_models();
    EXPECT_EQ(m.motion.p_survival, 0.99);
    ASSERT_EQ(m.birth.components_at(1).size(), 1u);
    EXPECT_EQ(m.birth.components_at(1)[0].weight, 3.0);
    EXPECT_EQ(m.birth.components_at(2)[0].weight, 0.005);
    EXPECT_EQ(m.birth.components_at(50)[0].weight, 0.005);
    EXPECT_EQ(m.birth.components_at(1)[0].covariance(0, 0), 22500.0);
    EXPECT_EQ(m.birth.components_at(1)[0].covariance(1, 1), 1.0);
    EXPECT_EQ(m.sensor.clutter_rate, 10.0);
    EXPECT_EQ(m.sensor.p_detect, 0.9);
    EXPECT_EQ(m.sensor.R, Matrix::Identity(2, 2));
    EXPECT_EQ(m.sensor.region_volume(), 90000.0);
    EXPECT_NEAR(m.birth.mass_at(1), 3.0, 1e-12);
    EXPECT_NO_THROW(m.motion.validate());
    EXPECT_NO_THROW(m.birth.validate(4));
    EXPECT_NO_THROW(m.sensor.validate());
}

TEST(Scenario2, PresetParameters) {
    const auto m = scenario2_models();
    ASSERT_EQ(m.birth.components_at(1).size(), 4u);
    ASSERT_EQ(m.birth.components_at(30).size(), 4u);
    for (const auto& c : m.birth.components_at(1)) {
        EXPECT_EQ(c.weight, 0.01);
        EXPECT_EQ(c.covariance(0, 0), 9.0);
        EXPECT_EQ(c.covariance(1, 1), 1.0);
    }
    EXPECT_EQ(m.birth.components_at(1)[1].mean, state(165, 0, 155, 0));
    const double b = 2.0 * std::numbers::pi / 180.0;
    EXPECT_EQ(m.sensor.R(1, 1), b * b);
    EXPECT_EQ(m.sensor.R(0, 0), 1.0);
    EXPECT_EQ(m.sensor.region_lower, Eigen::Vector2d(10.0, 0.0));
    EXPECT_EQ(m.sensor.region_upper, Eigen::Vector2d(200.0, std::numbers::pi / 2));
    EXPECT_NO_THROW(m.sensor.validate());
}

TEST(MeasurementFunction, LinearSelectsPositions) {
    const auto s = scenario1_models().sensor;
    EXPECT_EQ(measurement_function(s, state(100, 0, 100, 0)), Eigen::Vector2d(100, 100));
}

TEST(MeasurementFunction, RangeBearingCardinalDirections) {
    const auto s = scenario2_models().sensor;
    const Vector east = measurement_function(s, state(200, 0, 100, 0));
    EXPECT_DOUBLE_EQ(east[0], 100.0);
    EXPECT_DOUBLE_EQ(east[1], 0.0);
    const Vector north = measurement_function(s, state(100, 0, 200, 0));
    EXPECT_DOUBLE_EQ(north[0], 100.0);
    EXPECT_DOUBLE_EQ(north[1], std::numbers::pi / 2);
    EXPECT_THROW(measurement_function(s, state(100, 3, 100, 4)), std::domain_error);
}

TEST(Linearize, LinearSensorIsExact) {
    const auto s = scenario1_models().sensor;
    const auto a = linearize_measurement(s, state(3, 1, 4, 1));
    EXPECT_EQ(a.H, s.H);
    EXPECT_EQ(a.offset, Vector::Zero(2));
}

TEST(Linearize, JacobianAtUnitEast) {
    auto s = scenario2_models().sensor;
    s.position = Eigen::Vector2d::Zero();
    const auto a = linearize_measurement(s, state(1, 0.3, 0, -0.7));
    Matrix expected = Matrix::Zero(2, 4);
    expected(0, 0) = 1.0;
    expected(1, 2) = 1.0;
    EXPECT_LT((a.H - expected).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((a.H * state(1, 0.3, 0, -0.7) + a.offset - measurement_function(s, state(1, 0.3, 0, -0.7)))
                  .cwiseAbs()
                  .maxCoeff(),
              1e-15);
}

TEST(Linearize, MatchesCentralDifferences) {
    const auto s = scenario2_models().sensor;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> pos(110.0, 190.0), vel(-2.0, 2.0);
    const double h = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
        const Vector x = state(pos(rng), vel(rng), pos(rng), vel(rng));
        const auto a = linearize_measurement(s, x);
        for (int j = 0; j < 4; ++j) {
            Vector xp = x, xm = x;
            xp[j] += h;
            xm[j] -= h;
            const Vector fd = (measurement_function(s, xp) - measurement_function(s, xm)) / (2 * h);
            for (int i = 0; i < 2; ++i) EXPECT_NEAR(a.H(i, j), fd[i], 1e-5) << "trial " << trial;
        }
    }
}

TEST(Linearize, ZeroRangeThrows) {
    const auto s = scenario2_models().sensor;
    EXPECT_THROW(linearize_measurement(s, state(100, 1, 100, 1)), std::domain_error);
}

TEST(WrapAngle, Range) {
    EXPECT_DOUBLE_EQ(wrap_angle(0.0), 0.0);
    EXPECT_DOUBLE_EQ(wrap_angle(std::numbers::pi), std::numbers::pi);
    EXPECT_DOUBLE_EQ(wrap_angle(-std::numbers::pi), std::numbers::pi);
    EXPECT_NEAR(wrap_angle(3 * std::numbers::pi / 2), -std::numbers::pi / 2, 1e-15);
    EXPECT_NEAR(wrap_angle(-5.0), -5.0 + 2 * std::numbers::pi, 1e-15);
}

TEST(Innovation, WrapsBearingOnly) {
    const auto s = scenario2_models().sensor;
    const Vector d = innovation(s, Eigen::Vector2d(10, 3.1), Eigen::Vector2d(5, -3.1));
    EXPECT_DOUBLE_EQ(d[0], 5.0);
    EXPECT_NEAR(d[1], 6.2 - 2 * std::numbers::pi, 1e-12);
}

TEST(ClutterIntensity, UniformInsideZeroOutside) {
    const auto s = scenario1_models().sensor;
    EXPECT_DOUBLE_EQ(s.clutter_intensity(Eigen::Vector2d(10, 10)), 10.0 / 90000.0);
    EXPECT_EQ(s.clutter_intensity(Eigen::Vector2d(-1, 10)), 0.0);
}

TEST(SensorModel, ValidationRejectsBadInputs) {
    auto s = scenario1_models().sensor;
    s.p_detect = 1.2;
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s = scenario1_models().sensor;
    s.R(0, 0) = -1;
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s = scenario1_models().sensor;
    s.region_upper[0] = 0.0;
    EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(MotionModel, ValidationRejectsBadSurvival) {
    auto m = scenario1_models().motion;
    m.p_survival = -0.1;
    EXPECT_THROW(m.validate(), std::invalid_argument);
}
