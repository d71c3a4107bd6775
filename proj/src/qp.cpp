#include "fsag/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Cholesky>

#include "fsag/error.hpp"

namespace fsag::qp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void validate(const QpProblem& p) {
    const auto n = p.P.rows();
    if (p.P.cols() != n || p.g.size() != n) raise_input("qp: P/g dimension mismatch");
    if ((p.P - p.P.transpose()).cwiseAbs().maxCoeff() >= 1e-9)
        raise_input("qp: P is not symmetric");
    const auto m = p.A.rows();
    if (m > 0 && p.A.cols() != n) raise_input("qp: A column count mismatch");
    if (p.l.size() != m || p.u.size() != m) raise_input("qp: bound length mismatch");
    for (Eigen::Index i = 0; i < m; ++i) {
        if (std::isnan(p.l(i)) || std::isnan(p.u(i))) raise_input("qp: NaN bound");
        if (p.l(i) > p.u(i)) raise_input("qp: l > u at row " + std::to_string(i));
    }
    if (!p.P.allFinite() || !p.g.allFinite()) raise_input("qp: non-finite objective data");
    if (m > 0 && !p.A.allFinite()) raise_input("qp: non-finite constraint matrix");
}

double inf_norm(const Eigen::VectorXd& v) {
    return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

}  // namespace

const char* status_name(QpStatus status) {
    switch (status) {
        case QpStatus::solved: return "solved";
        case QpStatus::max_iter: return "max_iter";
        case QpStatus::infeasible: return "infeasible";
    }
    return "unknown";
}

QpSolution QpSolver::solve(const QpProblem& problem, const std::optional<WarmStart>& warm) {
    validate(problem);
    const Eigen::Index n = problem.P.rows();
    const Eigen::Index m = problem.A.rows();
    const double rho = settings_.rho;
    const double sigma = settings_.sigma;
    const double alpha = settings_.alpha;

    // Unconstrained case: a single direct solve.
    if (m == 0) {
        QpSolution sol;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(problem.P);
        if (ldlt.info() != Eigen::Success)
            ldlt.compute(problem.P + sigma * Eigen::MatrixXd::Identity(n, n));
        sol.x = ldlt.solve(-problem.g);
        sol.y.resize(0);
        sol.status = QpStatus::solved;
        sol.iterations = 1;
        sol.dual_residual = inf_norm(problem.P * sol.x + problem.g);
        return sol;
    }

    // Factorization reuse: refresh only when matrices or penalties changed.
    const bool same = has_factor_ && cached_rho_ == rho && cached_sigma_ == sigma &&
                      cached_P_.rows() == n && cached_A_.rows() == m &&
                      cached_P_ == problem.P && cached_A_ == problem.A;
    if (!same) {
        Eigen::MatrixXd M = problem.P + sigma * Eigen::MatrixXd::Identity(n, n) +
                            rho * problem.A.transpose() * problem.A;
        kkt_.compute(M);
        cached_P_ = problem.P;
        cached_A_ = problem.A;
        cached_rho_ = rho;
        cached_sigma_ = sigma;
        has_factor_ = true;
    }

    Eigen::VectorXd x = warm && warm->x.size() == n ? warm->x : Eigen::VectorXd::Zero(n);
    Eigen::VectorXd y = warm && warm->y.size() == m ? warm->y : Eigen::VectorXd::Zero(m);
    Eigen::VectorXd z = (problem.A * x).cwiseMax(problem.l).cwiseMin(problem.u);

    QpSolution sol;
    Eigen::VectorXd y_prev = y, delta_y(m);
    for (int iter = 1; iter <= settings_.max_iter; ++iter) {
        const Eigen::VectorXd rhs =
            sigma * x - problem.g + problem.A.transpose() * (rho * z - y);
        x = kkt_.solve(rhs);
        const Eigen::VectorXd Ax = problem.A * x;
        const Eigen::VectorXd z_relaxed = alpha * Ax + (1.0 - alpha) * z;
        const Eigen::VectorXd z_new =
            (z_relaxed + y / rho).cwiseMax(problem.l).cwiseMin(problem.u);
        y += rho * (z_relaxed - z_new);
        z = z_new;

        if (iter % settings_.check_every == 0 || iter == settings_.max_iter) {
            const Eigen::VectorXd prim = Ax - z;
            const Eigen::VectorXd dual = problem.P * x + problem.g + problem.A.transpose() * y;
            sol.primal_residual = inf_norm(prim);
            sol.dual_residual = inf_norm(dual);
            const double eps_prim =
                settings_.eps_abs +
                settings_.eps_rel * std::max(inf_norm(Ax), inf_norm(z));
            const double eps_dual =
                settings_.eps_abs +
                settings_.eps_rel * std::max({inf_norm(problem.P * x), inf_norm(problem.g),
                                              inf_norm(problem.A.transpose() * y)});
            if (sol.primal_residual <= eps_prim && sol.dual_residual <= eps_dual) {
                sol.status = QpStatus::solved;
                sol.iterations = iter;
                sol.x = std::move(x);
                sol.y = std::move(y);
                return sol;
            }

            // Primal infeasibility certificate on the dual update direction.
            delta_y = y - y_prev;
            const double dy_norm = inf_norm(delta_y);
            if (dy_norm > settings_.eps_infeas) {
                const double At_dy = inf_norm(problem.A.transpose() * delta_y);
                double support = 0.0;
                bool unbounded_support = false;
                for (Eigen::Index i = 0; i < m; ++i) {
                    if (delta_y(i) > 0) {
                        if (std::isinf(problem.u(i))) unbounded_support = true;
                        else support += problem.u(i) * delta_y(i);
                    } else if (delta_y(i) < 0) {
                        if (std::isinf(problem.l(i))) unbounded_support = true;
                        else support += problem.l(i) * delta_y(i);
                    }
                }
                if (!unbounded_support && At_dy <= settings_.eps_infeas * dy_norm &&
                    support <= -settings_.eps_infeas * dy_norm) {
                    sol.status = QpStatus::infeasible;
                    sol.iterations = iter;
                    sol.x = std::move(x);
                    sol.y = std::move(y);
                    return sol;
                }
            }
            y_prev = y;
        }
    }
    sol.status = QpStatus::max_iter;
    sol.iterations = settings_.max_iter;
    sol.x = std::move(x);
    sol.y = std::move(y);
    return sol;
}

QpSolution solve(const QpProblem& problem, const std::optional<WarmStart>& warm,
                 const QpSettings& settings) {
    QpSolver solver(settings);
    return solver.solve(problem, warm);
}

KktReport verify_kkt(const QpProblem& problem, const QpSolution& solution, double tol) {
    KktReport report;
    const Eigen::Index m = problem.A.rows();
    const Eigen::VectorXd& x = solution.x;
    const Eigen::VectorXd& y = solution.y;

    Eigen::VectorXd stat = problem.P * x + problem.g;
    if (m > 0) stat += problem.A.transpose() * y;
    report.stationarity = inf_norm(stat);

    double prim = 0.0, dual_sign = 0.0, comp = 0.0;
    if (m > 0) {
        const Eigen::VectorXd Ax = problem.A * x;
        for (Eigen::Index i = 0; i < m; ++i) {
            prim = std::max({prim, problem.l(i) - Ax(i), Ax(i) - problem.u(i)});
            // y > 0 pushes on the upper bound, y < 0 on the lower.
            if (y(i) > 0) {
                if (std::isinf(problem.u(i)))
                    dual_sign = std::max(dual_sign, y(i));
                else
                    comp = std::max(comp, y(i) * std::max(problem.u(i) - Ax(i), 0.0));
            } else if (y(i) < 0) {
                if (std::isinf(problem.l(i)))
                    dual_sign = std::max(dual_sign, -y(i));
                else
                    comp = std::max(comp, -y(i) * std::max(Ax(i) - problem.l(i), 0.0));
            }
        }
    }
    report.primal_feasibility = std::max(prim, 0.0);
    report.dual_sign = dual_sign;
    report.complementarity = comp;
    report.pass = report.stationarity <= tol && report.primal_feasibility <= tol &&
                  report.dual_sign <= tol && report.complementarity <= tol;

    std::ostringstream ss;
    ss << "stationarity=" << report.stationarity
       << " primal=" << report.primal_feasibility << " dual_sign=" << report.dual_sign
       << " complementarity=" << report.complementarity;
    report.detail = ss.str();
    return report;
}

}  // namespace fsag::qp
