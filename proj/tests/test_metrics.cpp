#include "tpmb/metrics.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

using namespace tpmb;

namespace {

Vector p2(double x, double y) {
    Vector v(2);
    v << x, y;
    return v;
}

// Brute force over every injective map of the smaller set into the larger one.
double brute_gospa_sq(const std::vector<Vector>& a, const std::vector<Vector>& b, double c) {
    const auto& small = a.size() <= b.size() ? a : b;
    const auto& large = a.size() <= b.size() ? b : a;
    std::vector<int> perm(large.size());
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double s = 0.0;
        for (std::size_t i = 0; i < small.size(); ++i) {
            const double d = std::min((small[i] - large[perm[i]]).norm(), c);
            s += d * d;
        }
        s += c * c / 2.0 * static_cast<double>(large.size() - small.size());
        best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

std::vector<Vector> random_set(std::mt19937_64& rng, int max_n) {
    std::uniform_int_distribution<int> n(0, max_n);
    std::uniform_real_distribution<double> u(-8.0, 8.0);
    std::vector<Vector> out(static_cast<std::size_t>(n(rng)));
    for (auto& v : out) v = p2(u(rng), u(rng));
    return out;
}

Trajectory line(int birth, int len, double x0, double y0) {
    std::vector<Vector> s;
    for (int i = 0; i < len; ++i) {
        Vector x(4);
        x << x0 + i, 1.0, y0, 0.0;
        s.push_back(x);
    }
    return Trajectory(birth, s);
}

}  // namespace

TEST(Gospa, EmptySets) {
    const auto g = gospa({}, {});
    EXPECT_EQ(g.total, 0.0);
    EXPECT_EQ(g.localization, 0.0);
    EXPECT_EQ(g.missed, 0.0);
    EXPECT_EQ(g.false_targets, 0.0);
}

TEST(Gospa, ExactMatch) {
    const auto g = gospa({p2(1, 2)}, {p2(1, 2)});
    EXPECT_EQ(g.total, 0.0);
    EXPECT_EQ(g.missed, 0.0);
}

TEST(Gospa, SingleMissedTarget) {
    const auto g = gospa({p2(3, 4)}, {});
    EXPECT_NEAR(g.total, std::sqrt(50.0), 1e-12);
    EXPECT_NEAR(g.missed, std::sqrt(50.0), 1e-12);
    EXPECT_EQ(g.localization, 0.0);
    EXPECT_EQ(g.false_targets, 0.0);
}

TEST(Gospa, FarPairCountsAsMissedAndFalse) {
    const auto g = gospa({p2(0, 0)}, {p2(30, 0)});
    EXPECT_NEAR(g.total * g.total, 100.0, 1e-9);
    EXPECT_NEAR(g.missed * g.missed, 50.0, 1e-9);
    EXPECT_NEAR(g.false_targets * g.false_targets, 50.0, 1e-9);
    EXPECT_EQ(g.localization, 0.0);
}

TEST(Gospa, DimensionMismatchThrows) {
    Vector v3(3);
    v3.setZero();
    EXPECT_THROW(gospa({p2(0, 0)}, {v3}), std::invalid_argument);
    EXPECT_THROW(gospa({p2(0, 0), v3}, {}), std::invalid_argument);
}

TEST(Gospa, InvalidParamsThrow) {
    MetricParams mp;
    mp.alpha = 1.0;
    EXPECT_THROW(gospa({}, {}, mp), std::invalid_argument);
    mp = {};
    mp.c = 0.0;
    EXPECT_THROW(gospa({}, {}, mp), std::invalid_argument);
}

TEST(Gospa, MatchesBruteForceAndDecomposes) {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 200; ++t) {
        const auto a = random_set(rng, 4), b = random_set(rng, 4);
        const auto g = gospa(a, b);
        EXPECT_NEAR(g.total * g.total, brute_gospa_sq(a, b, 10.0), 1e-9);
        const double parts = g.localization * g.localization + g.missed * g.missed + g.false_targets * g.false_targets;
        EXPECT_NEAR(g.total * g.total, parts, 1e-9);
    }
}

TEST(Gospa, SymmetricWithMissedFalseSwapped) {
    std::mt19937_64 rng(12);
    for (int t = 0; t < 100; ++t) {
        const auto a = random_set(rng, 5), b = random_set(rng, 5);
        const auto g1 = gospa(a, b), g2 = gospa(b, a);
        EXPECT_NEAR(g1.total, g2.total, 1e-9);
        EXPECT_NEAR(g1.missed, g2.false_targets, 1e-9);
        EXPECT_NEAR(g1.false_targets, g2.missed, 1e-9);
        EXPECT_NEAR(g1.localization, g2.localization, 1e-9);
    }
}

TEST(Gospa, IdentityOfIndiscernibles) {
    std::mt19937_64 rng(13);
    for (int t = 0; t < 50; ++t) {
        auto a = random_set(rng, 5);
        auto b = a;
        std::shuffle(b.begin(), b.end(), rng);
        EXPECT_NEAR(gospa(a, b).total, 0.0, 1e-12);
        if (!a.empty()) {
            b.front()[0] += 1e-3;
            EXPECT_GT(gospa(a, b).total, 0.0);
            b.pop_back();
            EXPECT_GT(gospa(a, b).total, 0.0);
        }
    }
}

TEST(Gospa, TriangleInequality) {
    std::mt19937_64 rng(14);
    for (int t = 0; t < 100; ++t) {
        const auto x = random_set(rng, 3), y = random_set(rng, 3), z = random_set(rng, 3);
        EXPECT_LE(gospa(x, z).total, gospa(x, y).total + gospa(y, z).total + 1e-9);
    }
}

TEST(TrajectoryError, PerfectEstimateIsZero) {
    const std::vector<Trajectory> truth{line(1, 10, 0, 0), line(3, 5, 20, 20)};
    EXPECT_EQ(trajectory_snapshot_error(truth, truth, 10), 0.0);
}

TEST(TrajectoryError, EmptyEstimateCostsFiftyPerStep) {
    const int k = 7;
    const std::vector<Trajectory> truth{line(1, k, 0, 0)};
    EXPECT_NEAR(trajectory_snapshot_error(truth, {}, k), 50.0, 1e-12);
    const auto sum = trajectory_error_sum(truth, {}, k);
    EXPECT_NEAR(sum.missed, 50.0 * k, 1e-9);
    EXPECT_EQ(sum.false_targets, 0.0);
}

TEST(TrajectoryError, SingleUnitOffset) {
    const int k = 10;
    const Trajectory t = line(1, k, 0, 0);
    auto states = t.states();
    states[4][2] += 1.0;  // position y at step 5
    const std::vector<Trajectory> truth{t}, est{Trajectory(1, states)};
    EXPECT_NEAR(trajectory_snapshot_error(truth, est, k), 0.1, 1e-12);
}

TEST(TrajectoryError, VelocityIsIgnored) {
    const Trajectory t = line(1, 4, 0, 0);
    auto states = t.states();
    for (auto& s : states) s[1] += 5.0;
    EXPECT_EQ(trajectory_snapshot_error({t}, {Trajectory(1, states)}, 4), 0.0);
}

TEST(TrajectoryError, AbsentStatesAreMissedOrFalse) {
    // Estimate starts two steps late and runs one step past the truth.
    const std::vector<Trajectory> truth{line(1, 5, 0, 0)};
    const std::vector<Trajectory> est{line(3, 4, 2, 0)};
    const auto sum = trajectory_error_sum(truth, est, 6);
    EXPECT_NEAR(sum.missed, 100.0, 1e-9);
    EXPECT_NEAR(sum.false_targets, 50.0, 1e-9);
    EXPECT_NEAR(sum.localization, 0.0, 1e-9);
    EXPECT_THROW(trajectory_error_sum(truth, est, 0), std::invalid_argument);
}

TEST(Rms, OverRuns) {
    EXPECT_EQ(rms_over_runs({0.0, 0.0}, 4), 0.0);
    EXPECT_NEAR(rms_over_runs({4.0}, 1), 2.0, 1e-15);
    EXPECT_NEAR(rms_over_runs({2.0, 4.0}, 3), 1.0, 1e-15);
    EXPECT_THROW(rms_over_runs({}, 1), std::invalid_argument);
}

TEST(Rms, Total) {
    EXPECT_NEAR(rms_total({5.0, 5.0, 5.0}), 5.0, 1e-12);
    EXPECT_NEAR(rms_total({3.0, 4.0}), std::sqrt(12.5), 1e-12);
    EXPECT_THROW(rms_total({}), std::invalid_argument);
}

TEST(TrajectoryError, TruthSetPerVariant) {
    const std::vector<Trajectory> truth{line(1, 5, 0, 0), line(2, 10, 20, 0), line(8, 3, 40, 0)};
    const auto alive = truth_at(truth, 6, Variant::Alive);
    ASSERT_EQ(alive.size(), 1u);
    EXPECT_EQ(alive[0].birth_time(), 2);
    EXPECT_EQ(alive[0].end_time(), 6);
    const auto all = truth_at(truth, 6, Variant::All);
    ASSERT_EQ(all.size(), 2u);
    EXPECT_EQ(all[0].end_time(), 5);
    EXPECT_EQ(all[1].end_time(), 6);
    EXPECT_EQ(all[1].state_at(6), truth[1].state_at(6));
}
