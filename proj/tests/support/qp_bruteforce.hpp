#pragma once

// Independent QP oracle: enumerate all active-set assignments of the box
// rows, solve each equality-constrained KKT system, and keep the feasible
// candidate with the smallest objective. Only touches problem data, never
// the ADMM path.

#include <cmath>
#include <limits>
#include <optional>

#include <Eigen/Dense>

#include "fsag/qp.hpp"

namespace fsag::testsupport {

inline std::optional<Eigen::VectorXd> brute_force_qp(const fsag::qp::QpProblem& p,
                                                     double feas_tol = 1e-9) {
    const Eigen::Index n = p.P.rows();
    const Eigen::Index m = p.A.rows();
    std::optional<Eigen::VectorXd> best;
    double best_obj = std::numeric_limits<double>::infinity();

    long combos = 1;
    for (Eigen::Index i = 0; i < m; ++i) combos *= 3;

    for (long mask = 0; mask < combos; ++mask) {
        // Decode per-row state: 0 inactive, 1 at lower, 2 at upper.
        std::vector<int> state(static_cast<std::size_t>(m));
        long rest = mask;
        bool valid = true;
        int active = 0;
        for (Eigen::Index i = 0; i < m; ++i) {
            state[static_cast<std::size_t>(i)] = static_cast<int>(rest % 3);
            rest /= 3;
            if (state[static_cast<std::size_t>(i)] == 1 && std::isinf(p.l(i))) valid = false;
            if (state[static_cast<std::size_t>(i)] == 2 && std::isinf(p.u(i))) valid = false;
            if (state[static_cast<std::size_t>(i)] != 0) ++active;
        }
        if (!valid) continue;

        Eigen::MatrixXd kkt(n + active, n + active);
        kkt.setZero();
        kkt.topLeftCorner(n, n) = p.P;
        Eigen::VectorXd rhs(n + active);
        rhs.head(n) = -p.g;
        int row = 0;
        for (Eigen::Index i = 0; i < m; ++i) {
            if (state[static_cast<std::size_t>(i)] == 0) continue;
            kkt.block(n + row, 0, 1, n) = p.A.row(i);
            kkt.block(0, n + row, n, 1) = p.A.row(i).transpose();
            rhs(n + row) = state[static_cast<std::size_t>(i)] == 1 ? p.l(i) : p.u(i);
            ++row;
        }

        Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
        if (!lu.isInvertible()) continue;
        const Eigen::VectorXd sol = lu.solve(rhs);
        const Eigen::VectorXd x = sol.head(n);

        // Feasibility of every row.
        const Eigen::VectorXd Ax = p.A * x;
        bool feasible = true;
        for (Eigen::Index i = 0; i < m && feasible; ++i)
            feasible = Ax(i) >= p.l(i) - feas_tol && Ax(i) <= p.u(i) + feas_tol;
        if (!feasible) continue;

        const double obj = 0.5 * x.dot(p.P * x) + p.g.dot(x);
        if (obj < best_obj) {
            best_obj = obj;
            best = x;
        }
    }
    return best;
}

}  // namespace fsag::testsupport
