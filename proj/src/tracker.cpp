#include "fsag/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fsag/error.hpp"
#include "fsag/io.hpp"

namespace fsag::tracker {

using kinematics::HandModel;
using kinematics::KinematicState;
using planner::GraspPlan;
using planner::Phase;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double phase_tolerance(const TrackerConfig& config, Phase phase) {
    switch (phase) {
        case Phase::approach: return config.tau_app;
        case Phase::closure: return config.tau_clo;
        case Phase::hold: return config.tau_hold;
    }
    raise(ErrorCode::internal, "unknown phase");
}

std::vector<double> finger_residual_norms(const HandModel& model, const KinematicState& state,
                                          const GraspPlan& plan, Phase phase) {
    std::vector<double> out;
    for (int finger : plan.fingers_used) {
        const Eigen::Vector3d* target = plan.target(phase, finger);
        if (!target) raise_input("plan is missing a target for finger " + std::to_string(finger));
        out.push_back((state.fingertips[static_cast<std::size_t>(finger)] - *target).norm());
    }
    return out;
}

}  // namespace

TrackerConfig tracker_config_from_json(const nlohmann::json& j) {
    TrackerConfig c;
    if (j.contains("finger_weights")) {
        c.finger_weights.clear();
        for (const auto& w : j.at("finger_weights")) c.finger_weights.push_back(w.get<double>());
        if (c.finger_weights.size() != 5) raise_input("finger_weights must have 5 entries");
    }
    auto num = [&](const char* key, double& into) {
        if (j.contains(key)) into = j.at(key).get<double>();
    };
    num("lambda_coup", c.lambda_coup);
    num("lambda_damp", c.lambda_damp);
    num("delta_max", c.delta_max);
    num("tau_app", c.tau_app);
    num("tau_clo", c.tau_clo);
    num("tau_hold", c.tau_hold);
    num("d_safe", c.d_safe);
    num("activation_dist", c.activation_dist);
    num("wrist_weight", c.wrist_weight);
    if (j.contains("budgets")) {
        const auto& b = j.at("budgets");
        if (!b.is_array() || b.size() != 3) raise_input("budgets must have 3 entries");
        for (int i = 0; i < 3; ++i) c.budgets[static_cast<std::size_t>(i)] = b[static_cast<std::size_t>(i)].get<int>();
    }
    for (double w : c.finger_weights)
        if (w <= 0.0) raise_input("finger weights must be positive");
    if (c.tau_clo > c.tau_app) raise_input("tau_clo must be <= tau_app");
    if (c.delta_max <= 0.0) raise_input("delta_max must be positive");
    return c;
}

ResidualStack stack_residuals(const HandModel& model, const KinematicState& state,
                              const GraspPlan& plan, Phase phase, const TrackerConfig& config) {
    if (plan.fingers_used.empty()) raise_input("plan has no participating fingers");
    const int n_q = model.n_q;
    const int m_c = static_cast<int>(model.coupling_C.rows());
    const int k_used = static_cast<int>(plan.fingers_used.size());

    ResidualStack stack;
    stack.fingers = plan.fingers_used;
    stack.coupling_rows = m_c;
    stack.r.resize(3 * k_used + m_c);
    stack.J.resize(3 * k_used + m_c, n_q);
    stack.weights.resize(3 * k_used + m_c);

    int row = 0;
    for (int finger : plan.fingers_used) {
        const Eigen::Vector3d* target = plan.target(phase, finger);
        if (!target) raise_input("plan is missing a target for finger " + std::to_string(finger));
        if (finger < 0 || finger >= static_cast<int>(state.fingertips.size()))
            raise_input("plan references finger " + std::to_string(finger) +
                        " beyond the model's pads");
        stack.r.segment<3>(row) = state.fingertips[static_cast<std::size_t>(finger)] - *target;
        stack.J.middleRows<3>(row) = kinematics::fingertip_jacobian(model, state, finger);
        const double w = config.finger_weights[static_cast<std::size_t>(finger)];
        stack.weights.segment<3>(row).setConstant(w);
        row += 3;
    }
    if (m_c > 0) {
        auto [e_c, J_c] = kinematics::coupling_residual(model, state.q);
        stack.r.tail(m_c) = e_c;
        stack.J.bottomRows(m_c) = J_c;
        stack.weights.tail(m_c).setConstant(config.lambda_coup);
    }
    return stack;
}

CollisionConstraints linearize_collisions(const HandModel& model, const KinematicState& state,
                                          const TrackerConfig& config) {
    CollisionConstraints out;
    const auto pairs = kinematics::collision_pairs(model);
    const auto centers = kinematics::sphere_centers(model, state);
    const bool has_table = std::isfinite(model.table_z);

    // Current clearances; emit rows for pairs inside the activation distance.
    struct Row {
        int kind;  // 0 = sphere-table, 1 = sphere-sphere
        int a, b;
        double phi;
    };
    std::vector<Row> active;
    if (has_table) {
        for (std::size_t s = 0; s < model.spheres.size(); ++s) {
            const double phi = centers[s].z() - model.table_z - model.spheres[s].radius;
            if (phi < config.activation_dist)
                active.push_back({0, static_cast<int>(s), -1, phi});
        }
    }
    for (auto [i, j] : pairs) {
        const double phi = (centers[static_cast<std::size_t>(i)] -
                            centers[static_cast<std::size_t>(j)]).norm() -
                           model.spheres[static_cast<std::size_t>(i)].radius -
                           model.spheres[static_cast<std::size_t>(j)].radius;
        if (phi < config.activation_dist) active.push_back({1, i, j, phi});
    }

    const int rows = static_cast<int>(active.size());
    out.G.resize(rows, model.n_q);
    out.h.resize(rows);
    if (rows == 0) return out;

    // Central-difference gradients of every active phi in one sweep.
    const double step = 1e-6;
    Eigen::MatrixXd dphi(rows, model.n_q);
    for (int jix = 0; jix < model.n_q; ++jix) {
        Eigen::VectorXd q_hi = state.q, q_lo = state.q;
        q_hi(jix) += step;
        q_lo(jix) -= step;
        const auto centers_hi =
            kinematics::sphere_centers(model, kinematics::forward_kinematics(model, q_hi));
        const auto centers_lo =
            kinematics::sphere_centers(model, kinematics::forward_kinematics(model, q_lo));
        for (int r = 0; r < rows; ++r) {
            const Row& row = active[static_cast<std::size_t>(r)];
            double phi_hi, phi_lo;
            if (row.kind == 0) {
                phi_hi = centers_hi[static_cast<std::size_t>(row.a)].z() - model.table_z -
                         model.spheres[static_cast<std::size_t>(row.a)].radius;
                phi_lo = centers_lo[static_cast<std::size_t>(row.a)].z() - model.table_z -
                         model.spheres[static_cast<std::size_t>(row.a)].radius;
            } else {
                phi_hi = (centers_hi[static_cast<std::size_t>(row.a)] -
                          centers_hi[static_cast<std::size_t>(row.b)]).norm() -
                         model.spheres[static_cast<std::size_t>(row.a)].radius -
                         model.spheres[static_cast<std::size_t>(row.b)].radius;
                phi_lo = (centers_lo[static_cast<std::size_t>(row.a)] -
                          centers_lo[static_cast<std::size_t>(row.b)]).norm() -
                         model.spheres[static_cast<std::size_t>(row.a)].radius -
                         model.spheres[static_cast<std::size_t>(row.b)].radius;
            }
            dphi(r, jix) = (phi_hi - phi_lo) / (2.0 * step);
        }
    }
    for (int r = 0; r < rows; ++r) {
        // -grad(phi)' dq <= phi - d_safe  keeps phi + grad' dq >= d_safe.
        out.G.row(r) = -dphi.row(r);
        out.h(r) = active[static_cast<std::size_t>(r)].phi - config.d_safe;
        out.clearances.push_back(active[static_cast<std::size_t>(r)].phi);
    }
    return out;
}

StepProblem assemble_step(const HandModel& model, const KinematicState& state,
                          const GraspPlan& plan, Phase phase, const TrackerConfig& config) {
    StepProblem problem;
    problem.stack = stack_residuals(model, state, plan, phase, config);

    Eigen::VectorXd r = problem.stack.r;
    Eigen::MatrixXd J = problem.stack.J;
    Eigen::VectorXd w = problem.stack.weights;

    // Hand-level waypoint as a soft wrist row during the approach phase.
    if (phase == Phase::approach && config.wrist_weight > 0.0 && model.wrist) {
        const Eigen::Vector3d wrist_pos = kinematics::frame_position(model, state, *model.wrist);
        const Eigen::MatrixXd wrist_jac = kinematics::frame_jacobian(model, state, *model.wrist);
        const Eigen::Index rows = r.size();
        r.conservativeResize(rows + 3);
        J.conservativeResize(rows + 3, Eigen::NoChange);
        w.conservativeResize(rows + 3);
        r.tail<3>() = wrist_pos - plan.hand_waypoint;
        J.bottomRows<3>() = wrist_jac;
        w.tail<3>().setConstant(config.wrist_weight);
    }

    const Eigen::MatrixXd JW = J.transpose() * w.asDiagonal();
    problem.P = JW * J + config.lambda_damp * Eigen::MatrixXd::Identity(model.n_q, model.n_q);
    problem.P = 0.5 * (problem.P + problem.P.transpose());  // exact symmetry
    problem.g = JW * r;

    problem.box_lower = (model.q_min - state.q).cwiseMax(-config.delta_max);
    problem.box_upper = (model.q_max - state.q).cwiseMin(config.delta_max);
    problem.collisions = linearize_collisions(model, state, config);
    return problem;
}

namespace {

qp::QpProblem to_qp(const StepProblem& sp, int n_q) {
    qp::QpProblem qp_problem;
    qp_problem.P = sp.P;
    qp_problem.g = sp.g;
    const int m_col = static_cast<int>(sp.collisions.G.rows());
    qp_problem.A.resize(n_q + m_col, n_q);
    qp_problem.A.topRows(n_q) = Eigen::MatrixXd::Identity(n_q, n_q);
    if (m_col > 0) qp_problem.A.bottomRows(m_col) = sp.collisions.G;
    qp_problem.l.resize(n_q + m_col);
    qp_problem.u.resize(n_q + m_col);
    qp_problem.l.head(n_q) = sp.box_lower;
    qp_problem.u.head(n_q) = sp.box_upper;
    if (m_col > 0) {
        qp_problem.l.tail(m_col).setConstant(-kInf);
        qp_problem.u.tail(m_col) = sp.collisions.h;
    }
    return qp_problem;
}

void dump_step_problem(const std::filesystem::path& dir, int t, const qp::QpProblem& p) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    auto to_tensor = [](const Eigen::MatrixXd& m) {
        Tensor t({static_cast<int>(m.rows()), static_cast<int>(m.cols())});
        for (int r = 0; r < m.rows(); ++r)
            for (int c = 0; c < m.cols(); ++c) t.at(r, c) = static_cast<float>(m(r, c));
        return t;
    };
    auto vec_tensor = [](const Eigen::VectorXd& v) {
        Tensor t({static_cast<int>(std::max<Eigen::Index>(v.size(), 1))});
        for (int i = 0; i < v.size(); ++i) t.at(i) = static_cast<float>(v(i));
        return t;
    };
    const std::string prefix = "step_" + std::to_string(t) + "_";
    io::write_tensor(dir / (prefix + "P.tns"), to_tensor(p.P));
    io::write_tensor(dir / (prefix + "g.tns"), vec_tensor(p.g));
    io::write_tensor(dir / (prefix + "A.tns"), to_tensor(p.A));
    // +-inf bounds stored as +-3.4e38 (max float) in the debug dump.
    Eigen::VectorXd l = p.l.cwiseMax(-3.0e38), u = p.u.cwiseMin(3.0e38);
    io::write_tensor(dir / (prefix + "l.tns"), vec_tensor(l));
    io::write_tensor(dir / (prefix + "u.tns"), vec_tensor(u));
}

}  // namespace

StepResult step(const HandModel& model, const KinematicState& state, const GraspPlan& plan,
                Phase phase, const TrackerConfig& config, qp::QpSolver& solver,
                std::optional<qp::WarmStart>& warm) {
    StepProblem sp = assemble_step(model, state, plan, phase, config);
    qp::QpProblem qp_problem = to_qp(sp, model.n_q);

    StepResult out;
    out.active_collisions = static_cast<int>(sp.collisions.G.rows());

    qp::QpSolution sol = solver.solve(qp_problem, warm);
    if (sol.status != qp::QpStatus::solved) {
        // One retry with doubled damping.
        TrackerConfig retry = config;
        retry.lambda_damp *= 2.0;
        StepProblem sp2 = assemble_step(model, state, plan, phase, retry);
        qp::QpProblem qp2 = to_qp(sp2, model.n_q);
        sol = solver.solve(qp2, std::nullopt);
        if (sol.status != qp::QpStatus::solved) {
            out.dq = Eigen::VectorXd::Zero(model.n_q);
            out.status = sol.status;
            out.failed = true;
            return out;
        }
    }
    // Exact box guarantee: project the eps-accurate iterate onto the bounds.
    out.dq = sol.x.cwiseMax(sp.box_lower).cwiseMin(sp.box_upper);
    out.status = sol.status;
    warm = qp::WarmStart{sol.x, sol.y};
    return out;
}

RolloutResult rollout(const HandModel& model, const Eigen::VectorXd& q_init,
                      const GraspPlan& plan, const TrackerConfig& config) {
    if (q_init.size() != model.n_q) raise_input("rollout: q_init length mismatch");
    if (((q_init - model.q_min).minCoeff() < 0.0) || ((model.q_max - q_init).minCoeff() < 0.0))
        raise_input("rollout: q_init violates joint limits");
    for (int finger : plan.fingers_used)
        if (finger < 0 || finger >= static_cast<int>(model.fingertips.size()))
            raise_input("plan references finger beyond the model's pads");

    RolloutResult result;
    Eigen::VectorXd q = q_init;
    qp::QpSolver solver(config.qp);
    std::optional<qp::WarmStart> warm;
    int t = 0;

    for (int p = 0; p < 3; ++p) {
        const Phase phase = static_cast<Phase>(p);
        const double tol = phase_tolerance(config, phase);
        const int budget = config.budgets[static_cast<std::size_t>(p)];
        for (int phase_step = 0; ; ++phase_step) {
            kinematics::KinematicState state = kinematics::forward_kinematics(model, q);
            const std::vector<double> residuals =
                finger_residual_norms(model, state, plan, phase);
            const double worst = *std::max_element(residuals.begin(), residuals.end());
            if (worst < tol) {
                result.final_residuals = residuals;
                break;
            }
            if (phase_step >= budget) {
                result.outcome = Outcome::phase_timeout;
                result.timeout_phase = phase;
                result.final_residuals = residuals;
                result.steps = t;
                return result;
            }

            StepResult sr = step(model, state, plan, phase, config, solver, warm);
            if (config.debug_dump_dir) {
                StepProblem sp = assemble_step(model, state, plan, phase, config);
                dump_step_problem(*config.debug_dump_dir, t, to_qp(sp, model.n_q));
            }
            if (sr.failed) {
                result.outcome = Outcome::qp_failure;
                result.final_residuals = residuals;
                result.steps = t;
                return result;
            }

            q += sr.dq;

            TrajectoryStep record;
            record.t = t++;
            record.phase = phase;
            record.q = q;
            record.residuals = residuals;
            {
                auto [e_c, J_c] = kinematics::coupling_residual(model, state.q);
                record.coupling_norm = e_c.size() > 0 ? e_c.norm() : 0.0;
            }
            record.dq = sr.dq;
            record.qp_status = sr.status;
            record.active_collisions = sr.active_collisions;
            result.trajectory.push_back(std::move(record));
        }
    }
    result.outcome = Outcome::success;
    result.steps = t;
    return result;
}

nlohmann::json step_to_json(const TrajectoryStep& step) {
    nlohmann::json q = nlohmann::json::array(), dq = nlohmann::json::array();
    for (int i = 0; i < step.q.size(); ++i) q.push_back(step.q(i));
    for (int i = 0; i < step.dq.size(); ++i) dq.push_back(step.dq(i));
    return {{"t", step.t},
            {"phase", planner::phase_name(step.phase)},
            {"q", q},
            {"residuals", step.residuals},
            {"coupling_norm", step.coupling_norm},
            {"dq", dq},
            {"qp_status", qp::status_name(step.qp_status)},
            {"active_collisions", step.active_collisions}};
}

nlohmann::json summary_to_json(const RolloutResult& result) {
    nlohmann::json summary;
    switch (result.outcome) {
        case Outcome::success: summary["outcome"] = "success"; break;
        case Outcome::qp_failure: summary["outcome"] = "qp_failure"; break;
        case Outcome::phase_timeout:
            summary["outcome"] =
                std::string("phase_timeout(") + planner::phase_name(result.timeout_phase) + ")";
            break;
    }
    summary["steps"] = result.steps;
    summary["final_residuals"] = result.final_residuals;
    return summary;
}

void write_trajectory(const std::filesystem::path& jsonl_path, const RolloutResult& result) {
    std::ostringstream out;
    for (const auto& step : result.trajectory) out << step_to_json(step).dump() << '\n';
    io::write_text_atomic(jsonl_path, out.str());
}

}  // namespace fsag::tracker
