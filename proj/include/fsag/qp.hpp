#pragma once

#include <optional>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace fsag::qp {

// min 1/2 x' P x + g' x   s.t.  l <= A x <= u   (+-inf bounds allowed)
struct QpProblem {
    Eigen::MatrixXd P;  // symmetric PSD, n x n
    Eigen::VectorXd g;  // n
    Eigen::MatrixXd A;  // m x n (m may be 0)
    Eigen::VectorXd l, u;
};

struct QpSettings {
    double rho = 0.1;       // ADMM penalty (fixed)
    double sigma = 1e-6;    // x-regularization
    double alpha = 1.6;     // over-relaxation
    double eps_abs = 1e-6;
    double eps_rel = 1e-6;
    double eps_infeas = 1e-9;
    int max_iter = 4000;
    int check_every = 5;
};

enum class QpStatus { solved, max_iter, infeasible };

const char* status_name(QpStatus status);

struct QpSolution {
    Eigen::VectorXd x;  // primal
    Eigen::VectorXd y;  // dual (one multiplier per constraint row)
    QpStatus status = QpStatus::max_iter;
    int iterations = 0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
};

struct WarmStart {
    Eigen::VectorXd x;
    Eigen::VectorXd y;
};

// Operator-splitting solver. The KKT factorization is cached between solves
// and recomputed only when the problem matrices change.
class QpSolver {
public:
    explicit QpSolver(QpSettings settings = {}) : settings_(settings) {}

    QpSolution solve(const QpProblem& problem, const std::optional<WarmStart>& warm = {});

    const QpSettings& settings() const { return settings_; }
    QpSettings& settings() { return settings_; }

private:
    QpSettings settings_;
    Eigen::MatrixXd cached_P_, cached_A_;
    double cached_rho_ = 0.0, cached_sigma_ = 0.0;
    Eigen::LDLT<Eigen::MatrixXd> kkt_;
    bool has_factor_ = false;
};

QpSolution solve(const QpProblem& problem, const std::optional<WarmStart>& warm = {},
                 const QpSettings& settings = {});

struct KktReport {
    double stationarity = 0.0;
    double primal_feasibility = 0.0;
    double dual_sign = 0.0;
    double complementarity = 0.0;
    bool pass = false;
    std::string detail;
};

// Checks stationarity, primal feasibility, dual sign conventions, and
// complementary slackness of a solved instance within tol.
KktReport verify_kkt(const QpProblem& problem, const QpSolution& solution, double tol);

}  // namespace fsag::qp
