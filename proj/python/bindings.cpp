#include "rddpm/commands.hpp"
#include "rddpm/equivariance.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace rddpm;

namespace {

// Trajectory points as rows of an (N + 1) x n array.
Mat stack_rows(const std::vector<Vec>& pts) {
  Mat out(static_cast<Eigen::Index>(pts.size()), pts.empty() ? 0 : pts.front().size());
  for (std::size_t i = 0; i < pts.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
  return out;
}

std::vector<Vec> unstack_rows(const Mat& rows) {
  std::vector<Vec> out;
  out.reserve(rows.rows());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) out.emplace_back(rows.row(i).transpose());
  return out;
}

DriftSpec make_drift(std::optional<Vec> reference, double kappa) {
  DriftSpec d;
  if (reference) {
    d.kind = DriftKind::RmsdHarmonic;
    d.kappa = kappa;
    d.reference = *reference;
  }
  return d;
}

py::dict nll_dict(const NllEstimate& e) {
  py::dict d;
  d["mean_nll"] = e.mean_nll;
  d["standard_error"] = e.standard_error;
  d["per_point"] = e.per_point;
  d["paths_used"] = e.paths_used;
  d["missing_points"] = e.missing_points;
  d["failed_paths"] = e.failed_paths;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, mod) {
  mod.doc() = "Denoising diffusion on level-set manifolds";

  py::register_exception<ConfigError>(mod, "ConfigError", PyExc_ValueError);
  py::register_exception<IoError>(mod, "IoError", PyExc_OSError);
  py::register_exception<RankDeficient>(mod, "RankDeficient", PyExc_ArithmeticError);
  py::register_exception<NoConvergence>(mod, "NoConvergence", PyExc_ArithmeticError);
  py::register_exception<DegenerateCloud>(mod, "DegenerateCloud", PyExc_ValueError);
  py::register_exception<AbortTooManyFailures>(mod, "AbortTooManyFailures", PyExc_RuntimeError);

  py::class_<LevelSetManifold>(mod, "Manifold")
      .def_property_readonly("ambient_dim", &LevelSetManifold::ambient_dim)
      .def_property_readonly("intrinsic_dim", &LevelSetManifold::intrinsic_dim)
      .def("constraint", &LevelSetManifold::constraint, py::arg("x"))
      .def("jacobian", &LevelSetManifold::jacobian, py::arg("x"))
      .def("on_manifold", &LevelSetManifold::on_manifold, py::arg("x"))
      .def("project_tangent", &LevelSetManifold::project_tangent, py::arg("x"), py::arg("v"))
      .def("__repr__", &LevelSetManifold::describe);

  mod.def("sphere", &sphere, py::arg("n"), "Unit sphere in R^n.");
  mod.def("special_orthogonal", &special_orthogonal, py::arg("k"), "SO(k), flattened row-major k*k.");
  mod.def("dihedral", &dihedral, py::arg("atoms"), py::arg("indices"), py::arg("phi0"),
          "Point clouds with one dihedral angle fixed at phi0 (radians).");
  mod.def("projection_matrix", &projection_matrix, py::arg("m"), py::arg("x"));
  mod.def("dihedral_angle", &dihedral_angle, py::arg("x"), py::arg("indices"));

  mod.def(
      "newton_project",
      [](const LevelSetManifold& m, const Vec& x, const Vec& x_mid, double tol, int max_steps) {
        const ProjectionResult r = newton_project(m, x, x_mid, {tol, max_steps});
        return py::make_tuple(r.point, r.converged, r.iterations);
      },
      py::arg("m"), py::arg("x"), py::arg("x_mid"), py::arg("tol") = 1e-6, py::arg("max_steps") = 10,
      "Returns (point, converged, iterations).");
  mod.def("sphere_closed_form", &sphere_closed_form, py::arg("x"), py::arg("step"));
  mod.def(
      "refine_to_manifold",
      [](const LevelSetManifold& m, const Vec& x, double target_tol) {
        return refine_to_manifold(m, x, {0.1, target_tol, 1e3});
      },
      py::arg("m"), py::arg("x"), py::arg("target_tol") = 1e-5);

  py::class_<NoiseSchedule>(mod, "NoiseSchedule")
      .def(py::init([](double T, int N, double gamma_min, double gamma_max) {
             NoiseSchedule s{T, N, gamma_min, gamma_max};
             s.validate();
             return s;
           }),
           py::arg("T") = 1.0, py::arg("N") = 100, py::arg("gamma_min") = 0.01, py::arg("gamma_max") = 1.0)
      .def_readonly("T", &NoiseSchedule::T)
      .def_readonly("N", &NoiseSchedule::N)
      .def_readonly("gamma_min", &NoiseSchedule::gamma_min)
      .def_readonly("gamma_max", &NoiseSchedule::gamma_max)
      .def("sigma", &NoiseSchedule::sigma, py::arg("k"))
      .def("beta", &NoiseSchedule::beta, py::arg("k"))
      .def("time", &NoiseSchedule::time, py::arg("k"));

  mod.def("g_map", &g_map, py::arg("m"), py::arg("x"), py::arg("y"), py::arg("sigma"), py::arg("drift"));
  mod.def(
      "forward_step",
      [](const LevelSetManifold& m, const Vec& x, double sigma, std::uint64_t seed, double tol,
         int max_steps) -> py::object {
        Rng rng(seed);
        const auto out = forward_step(m, x, sigma, DriftSpec{}, rng, {tol, max_steps});
        if (!out) return py::none();
        return py::make_tuple(out->y, out->v);
      },
      py::arg("m"), py::arg("x"), py::arg("sigma"), py::arg("seed") = 0, py::arg("tol") = 1e-6,
      py::arg("max_steps") = 10, "Returns (y, v), or None when the projection fails.");
  mod.def(
      "log_forward_transition",
      [](const LevelSetManifold& m, const Vec& x, const Vec& y, double sigma, const Vec& drift) {
        return log_forward_transition(m, x, y, sigma, drift);
      },
      py::arg("m"), py::arg("x_k"), py::arg("x_k1"), py::arg("sigma"), py::arg("drift"));
  mod.def(
      "log_reverse_transition",
      [](const LevelSetManifold& m, const Vec& x, const Vec& y, double beta, const Vec& score, const Vec& drift) {
        return log_reverse_transition(m, x, y, beta, score, drift);
      },
      py::arg("m"), py::arg("x_k"), py::arg("x_k1"), py::arg("beta"), py::arg("score"), py::arg("drift"));
  mod.def(
      "simulate_forward",
      [](const LevelSetManifold& m, const Vec& x0, const NoiseSchedule& schedule, std::uint64_t seed,
         std::optional<Vec> reference, double kappa) -> py::object {
        Rng rng(seed);
        const auto traj = simulate_forward(m, x0, schedule, make_drift(std::move(reference), kappa), rng, {});
        if (!traj) return py::none();
        return py::cast(stack_rows(traj->points));
      },
      py::arg("m"), py::arg("x0"), py::arg("schedule"), py::arg("seed") = 0, py::arg("reference") = py::none(),
      py::arg("kappa") = 50.0, "Forward chain as an (N + 1) x n array, or None on failure.");

  mod.def(
      "kabsch",
      [](const Vec& x, const Vec& ref) {
        const Alignment a = kabsch(x, ref);
        return py::make_tuple(Mat3(a.rotation), Vec3(a.translation), a.rmsd);
      },
      py::arg("x"), py::arg("x_ref"), "Returns (rotation, translation, rmsd).");
  mod.def(
      "rmsd_potential",
      [](const Vec& x, const Vec& ref, double kappa) {
        const Potential p = rmsd_potential(x, ref, kappa);
        return py::make_tuple(p.value, p.drift);
      },
      py::arg("x"), py::arg("x_ref"), py::arg("kappa"), "Returns (V, b = -grad V).");
  mod.def("rigid_transform", &rigid_transform, py::arg("rotation"), py::arg("translation"), py::arg("x"));

  mod.def(
      "uniform_sphere",
      [](int n, int count, std::uint64_t seed) {
        Rng rng(seed);
        std::vector<Vec> pts;
        for (int i = 0; i < count; ++i) pts.push_back(uniform_sphere(n, rng));
        return stack_rows(pts);
      },
      py::arg("n"), py::arg("count"), py::arg("seed") = 0);
  mod.def(
      "haar_orthogonal",
      [](int k, std::uint64_t seed) {
        Rng rng(seed);
        return haar_orthogonal(k, rng);
      },
      py::arg("k"), py::arg("seed") = 0);
  mod.def("vmf_log_density", &vmf_log_density, py::arg("x"), py::arg("mu"), py::arg("kappa"));
  mod.def("log_sphere_area", &log_sphere_area, py::arg("n"));
  mod.def("latlon_to_xyz", &latlon_to_xyz, py::arg("lat_deg"), py::arg("lon_deg"));

  mod.def("trace_power", &trace_power, py::arg("s"), py::arg("p"));
  mod.def("wasserstein1_1d", &wasserstein1_1d, py::arg("a"), py::arg("b"));

  // Settings files and the command-line operations.
  py::class_<RunConfig>(mod, "RunConfig")
      .def_property_readonly("manifold", [](const RunConfig& c) { return c.manifold; })
      .def_property_readonly("seed", [](const RunConfig& c) { return c.seed; })
      .def_property_readonly("out_dir", [](const RunConfig& c) { return c.out_dir; })
      .def_property_readonly("schedule", [](const RunConfig& c) { return c.schedule; })
      .def("to_text", &RunConfig::to_text);
  mod.def("parse_config_text", &parse_config_text, py::arg("text"), py::arg("overrides") = std::vector<std::string>{});
  mod.def("parse_config", &parse_config, py::arg("path"), py::arg("overrides") = std::vector<std::string>{});
  mod.def("build_manifold", &build_manifold, py::arg("config"));
  mod.def(
      "dataset",
      [](const RunConfig& cfg) {
        const PreparedData d = prepare_data(cfg, build_manifold(cfg));
        py::dict out;
        out["train"] = stack_rows(d.train);
        out["val"] = stack_rows(d.val);
        out["test"] = stack_rows(d.test);
        return out;
      },
      py::arg("config"), "Train, val and test splits as row arrays.");

  mod.def(
      "train", [](const RunConfig& cfg) { cmd_train(cfg); }, py::arg("config"),
      py::call_guard<py::gil_scoped_release>());
  mod.def(
      "generate", [](const RunConfig& cfg) { cmd_generate(cfg); }, py::arg("config"),
      py::call_guard<py::gil_scoped_release>());
  mod.def(
      "nll",
      [](const RunConfig& cfg) {
        NllEstimate e;
        {
          py::gil_scoped_release release;
          e = cmd_nll(cfg);
        }
        return nll_dict(e);
      },
      py::arg("config"));
  mod.def("read_points_csv", [](const std::filesystem::path& p) { return stack_rows(read_points_csv(p)); },
          py::arg("path"));
  mod.def(
      "write_points_csv",
      [](const std::filesystem::path& p, const Mat& rows) {
        write_points_csv(p, unstack_rows(rows), static_cast<int>(rows.cols()));
      },
      py::arg("path"), py::arg("points"));
}
