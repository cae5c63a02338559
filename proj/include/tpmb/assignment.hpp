#pragma once

#include "tpmb/core_types.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace tpmb {

/// Rows are assigned to distinct columns; +infinity marks a forbidden pair.
using CostMatrix = Matrix;

inline constexpr double kForbidden = std::numeric_limits<double>::infinity();

struct Assignment {
    std::vector<int> columns;  // column chosen by each row
    double cost = 0.0;

    friend bool operator==(const Assignment&, const Assignment&) = default;
};

namespace detail {

struct DualSolution {
    std::vector<int> col_of_row;
    std::vector<double> u;  // row potentials
    std::vector<double> v;  // column potentials, <= 0, zero on unassigned columns
};

// Shortest augmenting path Hungarian method for rows <= cols. Forbidden entries are
// +inf; returns nullopt when no complete assignment exists.
inline std::optional<DualSolution> hungarian_core(const CostMatrix& c) {
    const int n = static_cast<int>(c.rows());
    const int m = static_cast<int>(c.cols());
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
    std::vector<int> p(m + 1, 0), way(m + 1, 0);
    std::vector<char> used(m + 1);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = -1;
            for (int j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            if (j1 < 0 || delta == inf) return std::nullopt;
            for (int j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    DualSolution s;
    s.col_of_row.assign(n, -1);
    for (int j = 1; j <= m; ++j)
        if (p[j] != 0) s.col_of_row[p[j] - 1] = j - 1;
    s.u.assign(u.begin() + 1, u.end());
    s.v.assign(v.begin() + 1, v.end());
    return s;
}

inline double cost_scale(const CostMatrix& c) {
    double s = 1.0;
    for (Eigen::Index i = 0; i < c.size(); ++i)
        if (std::isfinite(c.data()[i])) s = std::max(s, std::abs(c.data()[i]));
    return s;
}

// Among all optimal assignments, moves to the lexicographically smallest column vector.
// With an optimal dual (u, v), the optimal assignments are exactly the row-complete
// matchings on tight edges that cover every column with negative potential. Rows are
// fixed greedily to their smallest column for which such a matching of the remaining
// rows still exists.
inline void make_lexmin(const CostMatrix& c, DualSolution& s) {
    const int rows = static_cast<int>(c.rows());
    const int cols = static_cast<int>(c.cols());
    const double tol = 1e-9 * cost_scale(c) * std::max(1, rows);
    auto tight = [&](int r, int j) {
        const double x = c(r, j);
        return std::isfinite(x) && x - s.u[r] - s.v[j] <= tol;
    };
    auto mandatory = [&](int j) { return s.v[j] < -tol; };

    std::vector<int> trial, owner(cols);
    std::vector<char> seen_col(cols), seen_row(rows);

    // Kuhn augmentation for an unmatched free row over tight edges.
    auto augment_row = [&](auto&& self, int fixed, int i) -> bool {
        for (int j = 0; j < cols; ++j) {
            if (seen_col[j] || !tight(i, j)) continue;
            seen_col[j] = 1;
            const int o = owner[j];
            if (o < 0 || (o > fixed && self(self, fixed, o))) {
                owner[j] = i;
                trial[i] = j;
                return true;
            }
        }
        return false;
    };
    // Covers column j by shifting rows along an alternating path that ends at a row whose
    // current column may be left empty.
    auto cover_col = [&](auto&& self, int fixed, int j) -> bool {
        for (int i = fixed + 1; i < rows; ++i) {
            if (seen_row[i] || !tight(i, j)) continue;
            seen_row[i] = 1;
            const int prev = trial[i];
            if (mandatory(prev)) {
                if (!self(self, fixed, prev)) continue;
            } else {
                owner[prev] = -1;
            }
            trial[i] = j;
            owner[j] = i;
            return true;
        }
        return false;
    };

    for (int r = 0; r < rows; ++r) {
        const int old = s.col_of_row[r];
        for (int cand = 0; cand < old; ++cand) {
            if (!tight(r, cand)) continue;
            bool blocked = false;
            for (int i = 0; i < r; ++i) blocked = blocked || s.col_of_row[i] == cand;
            if (blocked) continue;

            trial = s.col_of_row;
            trial[r] = cand;
            std::fill(owner.begin(), owner.end(), -1);
            for (int i = 0; i < rows; ++i) {
                if (i > r && trial[i] == cand) trial[i] = -1;
                else owner[trial[i]] = i;
            }
            bool ok = true;
            for (int i = r + 1; i < rows && ok; ++i) {
                if (trial[i] >= 0) continue;
                std::fill(seen_col.begin(), seen_col.end(), 0);
                ok = augment_row(augment_row, r, i);
            }
            for (int j = 0; j < cols && ok; ++j) {
                if (!mandatory(j) || owner[j] >= 0) continue;
                std::fill(seen_row.begin(), seen_row.end(), 0);
                ok = cover_col(cover_col, r, j);
            }
            if (ok) {
                s.col_of_row = trial;
                break;
            }
        }
    }
}

inline double assignment_cost(const CostMatrix& c, const std::vector<int>& cols) {
    double total = 0.0;
    for (std::size_t r = 0; r < cols.size(); ++r) total += c(static_cast<Eigen::Index>(r), cols[r]);
    return total;
}

inline std::optional<Assignment> solve_lexmin(const CostMatrix& c) {
    if (c.rows() == 0) return Assignment{};
    auto sol = hungarian_core(c);
    if (!sol) return std::nullopt;
    make_lexmin(c, *sol);
    Assignment a{std::move(sol->col_of_row), 0.0};
    a.cost = assignment_cost(c, a.columns);
    if (!std::isfinite(a.cost)) return std::nullopt;
    return a;
}

inline bool costs_tie(double a, double b) {
    return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
}

// Ranking: cost first, then lexicographic column vector among ties.
inline bool ranks_before(const Assignment& a, const Assignment& b) {
    if (!costs_tie(a.cost, b.cost)) return a.cost < b.cost;
    return a.columns < b.columns;
}

}  // namespace detail

/// Minimum-cost assignment of every row to a distinct column. Among equal-cost optima the
/// lexicographically smallest column vector is returned.
inline Assignment hungarian_solve(const CostMatrix& c) {
    if (c.rows() > c.cols()) throw std::invalid_argument("hungarian_solve: more rows than columns");
    auto a = detail::solve_lexmin(c);
    if (!a) throw std::invalid_argument("hungarian_solve: no feasible assignment");
    return *a;
}

/// The min(K, #feasible) best assignments in nondecreasing cost order (ties broken by
/// lexicographic column vector), by Murty's partitioning.
inline std::vector<Assignment> murty_kbest(const CostMatrix& c, int k) {
    if (k <= 0) return {};
    if (c.rows() > c.cols()) throw std::invalid_argument("murty_kbest: more rows than columns");
    const int rows = static_cast<int>(c.rows());
    const int cols = static_cast<int>(c.cols());

    // Rows whose only finite entry lies in a column no other row can use take that column in
    // every assignment; solve the remaining problem and splice them back in.
    std::vector<int> row_count(rows, 0), col_count(cols, 0), only_col(rows, -1);
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < cols; ++j)
            if (std::isfinite(c(r, j))) {
                ++row_count[r];
                ++col_count[j];
                only_col[r] = j;
            }
    std::vector<char> forced(rows, 0), col_taken(cols, 0);
    std::vector<int> free_rows, free_cols;
    for (int r = 0; r < rows; ++r) {
        if (row_count[r] == 0) return {};
        if (row_count[r] == 1 && col_count[only_col[r]] == 1) {
            forced[r] = 1;
            col_taken[only_col[r]] = 1;
        } else {
            free_rows.push_back(r);
        }
    }
    for (int j = 0; j < cols; ++j)
        if (!col_taken[j]) free_cols.push_back(j);

    const int fr = static_cast<int>(free_rows.size());
    const int fc = static_cast<int>(free_cols.size());
    CostMatrix reduced(fr, fc);
    for (int r = 0; r < fr; ++r)
        for (int j = 0; j < fc; ++j) reduced(r, j) = c(free_rows[r], free_cols[j]);

    auto expand = [&](const Assignment& sub) {
        Assignment full;
        full.columns.assign(rows, -1);
        for (int r = 0; r < rows; ++r)
            if (forced[r]) full.columns[r] = only_col[r];
        for (int r = 0; r < fr; ++r) full.columns[free_rows[r]] = free_cols[sub.columns[r]];
        full.cost = detail::assignment_cost(c, full.columns);
        return full;
    };

    struct Node {
        Assignment solution;
        std::vector<std::pair<int, int>> fixed;      // (row, col) that must be used
        std::vector<std::pair<int, int>> excluded;   // (row, col) that must not be used
        std::vector<char> row_fixed;
    };

    auto solve_node = [&](Node& node) -> bool {
        CostMatrix m = reduced;
        for (auto [r, j] : node.excluded) m(r, j) = kForbidden;
        for (auto [r, j] : node.fixed) {
            const double keep = m(r, j);
            m.row(r).setConstant(kForbidden);
            m.col(j).setConstant(kForbidden);
            m(r, j) = keep;
        }
        auto sol = detail::solve_lexmin(m);
        if (!sol) return false;
        sol->cost = detail::assignment_cost(reduced, sol->columns);
        node.solution = std::move(*sol);
        return true;
    };

    std::vector<Assignment> out;
    Node root;
    root.row_fixed.assign(fr, 0);
    if (!solve_node(root)) return out;

    std::vector<Node> queue;
    queue.push_back(std::move(root));
    while (!queue.empty() && static_cast<int>(out.size()) < k) {
        auto best = std::min_element(queue.begin(), queue.end(), [](const Node& a, const Node& b) {
            return detail::ranks_before(a.solution, b.solution);
        });
        Node node = std::move(*best);
        *best = std::move(queue.back());
        queue.pop_back();
        out.push_back(expand(node.solution));
        if (static_cast<int>(out.size()) >= k) break;

        Node prefix = node;
        for (int r = 0; r < fr; ++r) {
            if (node.row_fixed[r]) continue;
            const int col = node.solution.columns[r];
            Node child = prefix;
            child.excluded.emplace_back(r, col);
            bool has_alternative = false;
            for (int j = 0; j < fc && !has_alternative; ++j)
                has_alternative = j != col && std::isfinite(reduced(r, j));
            if (has_alternative && solve_node(child)) queue.push_back(std::move(child));
            prefix.fixed.emplace_back(r, col);
            prefix.row_fixed[r] = 1;
        }
    }
    return out;
}

/// Squared Mahalanobis distance of an innovation; throws for a singular covariance.
inline double mahalanobis_squared(const Vector& innov, const Matrix& S) {
    Eigen::LLT<Matrix> llt(S);
    if (llt.info() != Eigen::Success) throw std::domain_error("innovation covariance is not positive definite");
    return llt.matrixL().solve(innov).squaredNorm();
}

inline bool ellipsoidal_gate(const Vector& innov, const Matrix& S, double gate_threshold) {
    return mahalanobis_squared(innov, S) <= gate_threshold;
}

inline bool ellipsoidal_gate(const Vector& z, const Vector& zhat, const Matrix& S, double gate_threshold) {
    return ellipsoidal_gate(Vector(z - zhat), S, gate_threshold);
}

using BigCount = boost::multiprecision::cpp_int;

inline constexpr int kMaxCountArgument = 30;

namespace detail {

inline BigCount binomial(int n, int k) {
    if (k < 0 || k > n) return 0;
    BigCount r = 1;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

inline void check_count_args(int m, int n) {
    if (m < 0 || n < 0) throw std::invalid_argument("hypothesis count: negative argument");
    if (m > kMaxCountArgument || n > kMaxCountArgument)
        throw std::out_of_range("hypothesis count: arguments limited to 30");
}

}  // namespace detail

/// Global hypotheses after updating an n-component multi-Bernoulli with m measurements.
inline BigCount count_mbm_hypotheses(int m, int n) {
    detail::check_count_args(m, n);
    BigCount total = 0, factorial = 1;
    for (int p = 0; p <= std::min(m, n); ++p) {
        if (p > 0) factorial *= p;
        total += factorial * detail::binomial(m, p) * detail::binomial(n, p);
    }
    return total;
}

/// Same count after expanding the multi-Bernoulli into deterministic-existence form.
inline BigCount count_mbm01_hypotheses(int m, int n) {
    detail::check_count_args(m, n);
    BigCount total = 0;
    for (int na = 0; na <= n; ++na) total += detail::binomial(n, na) * count_mbm_hypotheses(m, na);
    return total;
}

}  // namespace tpmb
