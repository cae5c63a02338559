#pragma once

#include "tpmb/assignment.hpp"
#include "tpmb/filter.hpp"
#include "tpmb/metrics.hpp"
#include "tpmb/simulator.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace tpmb {

struct SelfTestResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

namespace detail {

// Every complete assignment of a small cost matrix, in (cost, columns) order.
inline std::vector<Assignment> enumerate_assignments(const Matrix& c) {
    const int m = static_cast<int>(c.rows()), n = static_cast<int>(c.cols());
    std::vector<Assignment> out;
    std::vector<int> cols(static_cast<std::size_t>(m));
    std::vector<bool> used(static_cast<std::size_t>(n), false);
    std::function<void(int, double)> rec = [&](int row, double cost) {
        if (row == m) {
            out.push_back({cols, cost});
            return;
        }
        for (int j = 0; j < n; ++j) {
            if (used[j] || !std::isfinite(c(row, j))) continue;
            used[j] = true;
            cols[row] = j;
            rec(row + 1, cost + c(row, j));
            used[j] = false;
        }
    };
    rec(0, 0.0);
    std::sort(out.begin(), out.end(), [](const Assignment& a, const Assignment& b) {
        return a.cost != b.cost ? a.cost < b.cost : a.columns < b.columns;
    });
    return out;
}

inline SelfTestResult selftest_counts() {
    const long long mbm[] = {33909, 384091, 4010455, 38398641};
    const long long mbm01[] = {46328, 583552, 6882352, 75826144};
    for (int i = 0; i < 4; ++i)
        if (count_mbm_hypotheses(14, 4 + i) != mbm[i] || count_mbm01_hypotheses(14, 4 + i) != mbm01[i])
            return {"hypothesis counts", false, "mismatch at n = " + std::to_string(4 + i)};
    return {"hypothesis counts", true, "m = 14, n = 4..7"};
}

inline SelfTestResult selftest_murty() {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    for (int t = 0; t < 50; ++t) {
        const int m = 1 + static_cast<int>(rng() % 3), n = m + static_cast<int>(rng() % 2);
        Matrix c(m, n);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) c(i, j) = std::round(u(rng));
        const auto ref = enumerate_assignments(c);
        const auto got = murty_kbest(c, 10);
        const std::size_t want = std::min<std::size_t>(10, ref.size());
        if (got.size() != want) return {"murty k-best", false, "wrong number of assignments"};
        for (std::size_t i = 0; i < want; ++i)
            if (got[i].columns != ref[i].columns || std::abs(got[i].cost - ref[i].cost) > 1e-9)
                return {"murty k-best", false, "ranking differs from enumeration"};
    }
    return {"murty k-best", true, "50 random matrices"};
}

inline SelfTestResult selftest_gospa() {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-8.0, 8.0);
    const auto random_set = [&] {
        std::vector<Vector> s(rng() % 4);
        for (auto& v : s) {
            v.resize(2);
            v << u(rng), u(rng);
        }
        return s;
    };
    for (int t = 0; t < 100; ++t) {
        const auto x = random_set(), y = random_set(), z = random_set();
        const auto g = gospa(x, y);
        const double parts = g.localization * g.localization + g.missed * g.missed + g.false_targets * g.false_targets;
        if (std::abs(g.total * g.total - parts) > 1e-9) return {"gospa", false, "decomposition does not add up"};
        if (std::abs(g.total - gospa(y, x).total) > 1e-9) return {"gospa", false, "not symmetric"};
        if (gospa(x, z).total > g.total + gospa(y, z).total + 1e-9) return {"gospa", false, "triangle inequality"};
    }
    return {"gospa", true, "100 random triples"};
}

inline SelfTestResult selftest_kalman() {
    auto models = scenario1_models();
    models.sensor.p_detect = 1.0;
    models.sensor.clutter_rate = 0.0;
    Matrix P = Matrix::Identity(4, 4);
    P(0, 0) = P(2, 2) = 25.0;
    Vector x(4);
    x << 50.0, 1.0, 60.0, 0.5;
    models.birth.first_step = {{1.0, x, P}};
    models.birth.later_steps = {};
    TpmbFilter f(Variant::Alive, models, FilterParams{});
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n01;
    Vector truth = x;
    const Matrix& F = models.motion.F;
    const Matrix& H = models.sensor.H;
    for (int k = 1; k <= 30; ++k) {
        if (k > 1) {
            truth = F * truth;
            x = F * x;
            P = F * P * F.transpose() + models.motion.Q;
        }
        Vector z = H * truth;
        z[0] += n01(rng);
        z[1] += n01(rng);
        f.step({z});
        const Matrix S = H * P * H.transpose() + models.sensor.R;
        const Matrix K = P * H.transpose() * S.inverse();
        x = x + K * (z - H * x);
        P = P - K * S * K.transpose();
        const auto& bs = std::get<0>(f.posterior().bernoullis);
        if (bs.size() != 1) return {"kalman equivalence", false, "expected one Bernoulli at step " + std::to_string(k)};
        if ((bs[0].density.last_mean() - x).cwiseAbs().maxCoeff() > 1e-9 ||
            (bs[0].density.last_covariance() - P).cwiseAbs().maxCoeff() > 1e-9)
            return {"kalman equivalence", false, "deviates at step " + std::to_string(k)};
    }
    return {"kalman equivalence", true, "30 steps"};
}

inline SelfTestResult selftest_determinism() {
    const auto cfg = scenario1_config();
    const auto t1 = generate_truth(cfg, 11), t2 = generate_truth(cfg, 11);
    const auto m1 = generate_measurements(t1, cfg.models.sensor, cfg.horizon, 11);
    const auto m2 = generate_measurements(t2, cfg.models.sensor, cfg.horizon, 11);
    for (std::size_t k = 0; k < m1.size(); ++k) {
        if (m1[k].size() != m2[k].size()) return {"determinism", false, "measurement counts differ"};
        for (std::size_t i = 0; i < m1[k].size(); ++i)
            if (m1[k][i] != m2[k][i]) return {"determinism", false, "measurements differ"};
    }
    TpmbFilter a(Variant::All, cfg.models, FilterParams{}), b(Variant::All, cfg.models, FilterParams{});
    for (int k = 0; k < 20; ++k) {
        a.step(m1[static_cast<std::size_t>(k)]);
        b.step(m2[static_cast<std::size_t>(k)]);
    }
    const auto ea = a.estimate(), eb = b.estimate();
    if (ea.size() != eb.size()) return {"determinism", false, "estimates differ"};
    for (std::size_t i = 0; i < ea.size(); ++i)
        if (ea[i].stacked() != eb[i].stacked()) return {"determinism", false, "estimates differ"};
    return {"determinism", true, "simulator and filter"};
}

}  // namespace detail

/// Quick invariant suite behind the CLI's selftest command.
inline std::vector<SelfTestResult> run_selftest() {
    std::vector<SelfTestResult> out;
    for (auto check : {detail::selftest_counts, detail::selftest_murty, detail::selftest_gospa, detail::selftest_kalman,
                       detail::selftest_determinism}) {
        try {
            out.push_back(check());
        } catch (const std::exception& e) {
            out.push_back({"exception", false, e.what()});
        }
    }
    return out;
}

}  // namespace tpmb
