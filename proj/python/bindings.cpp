#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fsag/affordance.hpp"
#include "fsag/grounding_eval.hpp"
#include "fsag/kinematics.hpp"
#include "fsag/pipeline.hpp"
#include "fsag/qp.hpp"
#include "fsag/scene_lifting.hpp"
#include "fsag/tracker.hpp"
#include "fsag/waypoint_planner.hpp"

namespace py = pybind11;
using namespace fsag;

namespace {

Tensor tensor_from_array(py::array_t<float, py::array::c_style | py::array::forcecast> arr) {
    std::vector<int> dims;
    for (py::ssize_t i = 0; i < arr.ndim(); ++i)
        dims.push_back(static_cast<int>(arr.shape(i)));
    std::vector<float> data(arr.data(), arr.data() + arr.size());
    return Tensor(dims, std::move(data));
}

py::array_t<float> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape;
    for (int d : t.dims()) shape.push_back(d);
    py::array_t<float> out(shape);
    std::copy(t.data(), t.data() + t.size(), out.mutable_data());
    return out;
}

lifting::CameraIntrinsics intrinsics_from_dict(const py::dict& d) {
    lifting::CameraIntrinsics k;
    k.fx = d["fx"].cast<double>();
    k.fy = d["fy"].cast<double>();
    k.cx = d["cx"].cast<double>();
    k.cy = d["cy"].cast<double>();
    k.width = d["width"].cast<int>();
    k.height = d["height"].cast<int>();
    return k;
}

grounding::Channel channel_from_array(
    py::array_t<double, py::array::c_style | py::array::forcecast> arr) {
    if (arr.ndim() != 2) throw py::value_error("expected a 2-D channel");
    grounding::Channel ch;
    ch.height = static_cast<int>(arr.shape(0));
    ch.width = static_cast<int>(arr.shape(1));
    ch.values.assign(arr.data(), arr.data() + arr.size());
    return ch;
}

}  // namespace

PYBIND11_MODULE(_fsag, m) {
    m.doc() = "finger-specific affordance grasping core";

    m.def(
        "synthesize_labels",
        [](const std::vector<std::tuple<int, double, double>>& annotations, int h, int w) {
            std::vector<affordance::FingerAnnotation> ann;
            for (const auto& [id, row, col] : annotations) ann.push_back({id, row, col});
            return array_from_tensor(affordance::synthesize_labels(ann, h, w).channels);
        },
        py::arg("annotations"), py::arg("h"), py::arg("w"),
        "Gaussian per-finger label stack from (finger_id, row, col) annotations");

    m.def("label_sigma", &affordance::label_sigma, py::arg("h"), py::arg("w"));

    m.def(
        "forward_noise",
        [](py::array_t<float> z0, int t, py::array_t<float> eps) {
            static const affordance::NoiseSchedule schedule = affordance::make_linear_schedule();
            return array_from_tensor(
                affordance::forward_noise(tensor_from_array(z0), t, tensor_from_array(eps),
                                          schedule));
        },
        py::arg("z0"), py::arg("t"), py::arg("eps"));

    m.def(
        "extract_peaks",
        [](py::array_t<float> stack, double threshold) {
            affordance::HeatmapStack hs(tensor_from_array(stack));
            py::list out;
            for (const auto& p : affordance::extract_peaks(hs, threshold)) {
                py::dict d;
                d["finger"] = p.finger_id;
                d["row"] = p.row;
                d["col"] = p.col;
                d["score"] = p.score;
                out.append(d);
            }
            return out;
        },
        py::arg("stack"), py::arg("threshold") = 0.1);

    m.def("kld", [](py::array_t<double> p, py::array_t<double> g) {
        return grounding::kld(channel_from_array(p), channel_from_array(g));
    });
    m.def("sim", [](py::array_t<double> p, py::array_t<double> g) {
        return grounding::sim(channel_from_array(p), channel_from_array(g));
    });
    m.def("nss", [](py::array_t<double> p, double row, double col) {
        return grounding::nss(channel_from_array(p), row, col);
    });
    m.def("normalize_for_eval", [](py::array_t<float> stack) {
        grounding::NormalizedStack norm =
            grounding::normalize_for_eval(affordance::HeatmapStack(tensor_from_array(stack)));
        const int k = static_cast<int>(norm.channels.size());
        py::array_t<double> out({k, grounding::kEvalSize, grounding::kEvalSize});
        auto view = out.mutable_unchecked<3>();
        for (int f = 0; f < k; ++f)
            for (int r = 0; r < grounding::kEvalSize; ++r)
                for (int c2 = 0; c2 < grounding::kEvalSize; ++c2)
                    view(f, r, c2) =
                        norm.has_mass[static_cast<std::size_t>(f)]
                            ? norm.channels[static_cast<std::size_t>(f)]
                                  .values[static_cast<std::size_t>(r) * grounding::kEvalSize + c2]
                            : 0.0;
        return out;
    });

    m.def(
        "back_project",
        [](py::array_t<float> depth, py::array_t<float> mask, const py::dict& intrinsics) {
            lifting::PointCloud cloud = lifting::back_project(
                tensor_from_array(depth), tensor_from_array(mask), intrinsics_from_dict(intrinsics));
            py::array_t<double> out({static_cast<py::ssize_t>(cloud.size()), py::ssize_t(3)});
            auto view = out.mutable_unchecked<2>();
            for (std::size_t i = 0; i < cloud.size(); ++i)
                for (int a = 0; a < 3; ++a) view(static_cast<py::ssize_t>(i), a) = cloud.points[i](a);
            return out;
        },
        py::arg("depth"), py::arg("mask"), py::arg("intrinsics"));

    m.def(
        "project",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> points,
           const py::dict& intrinsics) {
            if (points.ndim() != 2 || points.shape(1) != 3)
                throw py::value_error("points must be [N,3]");
            lifting::PointCloud cloud;
            auto view = points.unchecked<2>();
            for (py::ssize_t i = 0; i < points.shape(0); ++i)
                cloud.points.emplace_back(view(i, 0), view(i, 1), view(i, 2));
            auto pixels = lifting::project(cloud, intrinsics_from_dict(intrinsics));
            py::array_t<double> out({static_cast<py::ssize_t>(pixels.size()), py::ssize_t(2)});
            auto w = out.mutable_unchecked<2>();
            for (std::size_t i = 0; i < pixels.size(); ++i) {
                w(static_cast<py::ssize_t>(i), 0) = pixels[i].first;
                w(static_cast<py::ssize_t>(i), 1) = pixels[i].second;
            }
            return out;
        },
        py::arg("points"), py::arg("intrinsics"));

    m.def(
        "qp_solve",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> P,
           py::array_t<double, py::array::c_style | py::array::forcecast> g,
           py::array_t<double, py::array::c_style | py::array::forcecast> A,
           py::array_t<double, py::array::c_style | py::array::forcecast> l,
           py::array_t<double, py::array::c_style | py::array::forcecast> u) {
            const auto n = static_cast<Eigen::Index>(g.size());
            const auto m_rows = static_cast<Eigen::Index>(l.size());
            qp::QpProblem problem;
            problem.P.resize(n, n);
            std::copy(P.data(), P.data() + n * n, problem.P.data());
            problem.P.transposeInPlace();  // row-major numpy -> column-major
            problem.g = Eigen::Map<const Eigen::VectorXd>(g.data(), n);
            problem.A.resize(m_rows, n);
            if (m_rows > 0) {
                Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                               Eigen::RowMajor>>
                    a_map(A.data(), m_rows, n);
                problem.A = a_map;
            }
            problem.l = Eigen::Map<const Eigen::VectorXd>(l.data(), m_rows);
            problem.u = Eigen::Map<const Eigen::VectorXd>(u.data(), m_rows);
            fprintf(stderr, "DBG n=%ld m=%ld g=[%f %f %f] P00=%f P11=%f\n",
                    (long)n, (long)m_rows, problem.g(0), n > 1 ? problem.g(1) : -99,
                    n > 2 ? problem.g(2) : -99, problem.P(0,0), n > 1 ? problem.P(1,1) : -99);
            qp::QpSolution sol = qp::solve(problem);
            py::dict out;
            py::array_t<double> x(static_cast<py::ssize_t>(sol.x.size()));
            std::copy(sol.x.data(), sol.x.data() + sol.x.size(), x.mutable_data());
            py::array_t<double> y(static_cast<py::ssize_t>(sol.y.size()));
            std::copy(sol.y.data(), sol.y.data() + sol.y.size(), y.mutable_data());
            out["x"] = x;
            out["y"] = y;
            out["status"] = qp::status_name(sol.status);
            out["iterations"] = sol.iterations;
            return out;
        },
        py::arg("P"), py::arg("g"), py::arg("A"), py::arg("l"), py::arg("u"));

    m.def(
        "fingertips",
        [](const std::string& model_json, py::array_t<double> q) {
            kinematics::HandModel model =
                kinematics::parse_model(nlohmann::json::parse(model_json));
            Eigen::VectorXd qv =
                Eigen::Map<const Eigen::VectorXd>(q.data(), static_cast<Eigen::Index>(q.size()));
            kinematics::KinematicState state = kinematics::forward_kinematics(model, qv);
            py::array_t<double> out(
                {static_cast<py::ssize_t>(state.fingertips.size()), py::ssize_t(3)});
            auto view = out.mutable_unchecked<2>();
            for (std::size_t k = 0; k < state.fingertips.size(); ++k)
                for (int a = 0; a < 3; ++a)
                    view(static_cast<py::ssize_t>(k), a) = state.fingertips[k](a);
            return out;
        },
        py::arg("model_json"), py::arg("q"),
        "Forward kinematics: fingertip positions for a model description");

    m.def(
        "rollout",
        [](const std::string& model_json, const std::string& plan_json,
           const std::map<std::string, double>& q_init) {
            kinematics::HandModel model =
                kinematics::parse_model(nlohmann::json::parse(model_json));
            planner::GraspPlan plan = planner::plan_from_json(nlohmann::json::parse(plan_json));
            tracker::TrackerConfig config;
            tracker::RolloutResult result =
                tracker::rollout(model, pipeline::resolve_q_init(model, q_init), plan, config);
            return py::module_::import("json").attr("loads")(
                tracker::summary_to_json(result).dump());
        },
        py::arg("model_json"), py::arg("plan_json"),
        py::arg("q_init") = std::map<std::string, double>{});

    m.attr("__version__") = "0.1.0";
}
