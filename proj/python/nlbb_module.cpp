#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "nlbb/configspace.hpp"
#include "nlbb/measures.hpp"
#include "nlbb/dynamics.hpp"
#include "nlbb/mobility.hpp"

namespace py = pybind11;
using namespace nlbb;

PYBIND11_MODULE(_core, m) {
  m.doc() = "Transport distances and entropy flows for truncated lattice point-process laws";
  m.attr("__version__") = "0.1.0";

  py::register_exception<SizingError>(m, "SizingError");
  py::register_exception<ConfigError>(m, "ConfigurationError");
  py::register_exception<WindowError>(m, "WindowError");
  py::register_exception<ClipDefectError>(m, "ClipDefectError");
  py::register_exception<ConvergenceError>(m, "ConvergenceError");

  py::class_<LatticeWindow>(m, "LatticeWindow")
      .def(py::init([](int dim, std::vector<int> cells, double h, std::vector<int> origin) {
             LatticeWindow w{dim, std::move(cells), h, std::move(origin)};
             w.validate();
             return w;
           }),
           py::arg("dim"), py::arg("cells_per_axis"), py::arg("cell_side") = 1.0,
           py::arg("origin") = std::vector<int>{})
      .def_readonly("dim", &LatticeWindow::dim)
      .def_readonly("cells_per_axis", &LatticeWindow::cells_per_axis)
      .def_readonly("cell_side", &LatticeWindow::cell_side)
      .def_readonly("origin", &LatticeWindow::origin)
      .def ("cell_count", &LatticeWindow::cell_count)
      .def("volume", &LatticeWindow::volume)
      .def("__repr__", [](const LatticeWindow& w) {
        std::string s = "LatticeWindow(dim=" + std::to_string(w.dim) + ", cells=[";
        for (std::size_t i = 0; i < w.cells_per_axis.size(); ++i)
          s += (i ? "," : "") + std::to_string(w.cells_per_axis[i]);
        return s + "], h=" + std::to_string(w.cell_side) + ")";
      });

  py::class_<ConfigSpace, std::shared_ptr<ConfigSpace>>(m, "ConfigSpace")
      .def_property_readonly("n_max", &ConfigSpace::n_max)
      .def_property_readonly("sites", &ConfigSpace::sites)
      .def("__len__", &ConfigSpace::size)
      .def("size", &ConfigSpace::size)
      .def_property_readonly("site_volumes", &ConfigSpace::site_volumes)
      .def_property_readonly("window", &ConfigSpace::window)
      .def("state", [](const ConfigSpace& sp, Index i) {
        const auto st = sp.state(i);
        return std::vector<int>(st.begin(), st.end());
      })
      .def("index_of", [](const ConfigSpace& sp, const std::vector<int>& occ) {
        return sp.index_of(occ);
      })
      .def("add_point", &ConfigSpace::add_point)
      .def("remove_point", &ConfigSpace::remove_point)
      .def_property_readonly("reference_weights", &ConfigSpace::reference_weights)
      .def_property_readonly("truncation_mass", &ConfigSpace::truncation_mass);

  m.def("build_space", &build_space, py::arg("window"), py::arg("n_max"),
        py::arg("site_volumes") = std::vector<double>{},
        py::arg("state_cap") = kDefaultStateCap);
  m.attr("BOUNDARY") = kBoundary;

  py::class_<DensityMeasure>(m, "DensityMeasure")
      .def(py::init([](SpacePtr sp, std::vector<double> rho) {
             DensityMeasure P{std::move(sp), std::move(rho)};
             if (static_cast<Index>(P.rho.size()) != P.space->size())
               throw ConfigError("rho length must equal the state count");
             return P;
           }),
           py::arg("space"), py::arg("rho"))
      .def_readonly("space", &DensityMeasure::space)
      .def_readonly("rho", &DensityMeasure::rho)
      .def("mass", &DensityMeasure::mass)
      .def("prob", &DensityMeasure::prob)
      .def("valid", &DensityMeasure::valid, py::arg("tol") = 1e-12)
      .def("renormalize", &DensityMeasure::renormalize);

  m.def("uniform_density", &uniform_density);
  m.def("pointmass", &pointmass);
  m.def("pointmass", [](SpacePtr sp, const std::vector<int>& occ) {
    const Index i = sp->index_of(occ);
    if (i == kBoundary) throw ConfigError("occupancy outside the truncated space");
    return pointmass(std::move(sp), i);
  });
  m.def("poisson_density", &poisson_density);
  m.def("mixture", &mixture);
  m.def("restrict_measure", &restrict_measure);
  m.def("product_measure", [](const DensityMeasure& P, const DensityMeasure& Q) {
    double defect = 0;
    auto R = product_measure(P, Q, &defect);
    return py::make_tuple(R, defect);
  });
  m.def("shift_measure", [](const DensityMeasure& P, const std::vector<int>& z) {
    return shift_measure(P, z);
  });
  m.def("shift_torus", [](const DensityMeasure& P, const std::vector<int>& z) {
    return shift_torus(P, z);
  });
  m.def("random_density", &random_density, py::arg("space"), py::arg("seed"),
        py::arg("concentration") = 1.0);

  py::class_<FisherInfo>(m, "FisherInfo")
      .def_readonly("value", &FisherInfo::value)
      .def_readonly("in_domain", &FisherInfo::in_domain)
      .def("__repr__", [](const FisherInfo& f) {
        return "FisherInfo(value=" + std::to_string(f.value) +
               ", in_domain=" + (f.in_domain ? std::string("True") : std::string("False")) + ")";
      });
  py::class_<CampbellTable>(m, "CampbellTable")
      .def_readonly("values", &CampbellTable::values)
      .def("at", &CampbellTable::at)
      .def("total_mass", &CampbellTable::total_mass);

  py::class_<VelocityDensity>(m, "VelocityDensity")
      .def(py::init([](SpacePtr sp, std::vector<double> w) {
             if (w.size() != static_cast<std::size_t>(sp->size()) * sp->sites())
               throw ConfigError("velocity needs one entry per (state, site) pair");
             VelocityDensity v{std::move(sp), std::move(w)};
             if (!v.structurally_valid())
               throw ConfigError("velocity must vanish on missing edges and be finite");
             return v;
           }),
           py::arg("space"), py::arg("w"))
      .def_readonly("w", &VelocityDensity::w)
      .def_property_readonly("space", [](const VelocityDensity& v) { return v.space; })
      .def("at", [](const VelocityDensity& v, Index n, int j) { return v.at(n, j); })
      .def("structurally_valid", &VelocityDensity::structurally_valid);

  py::class_<CEPath>(m, "CEPath")
      .def(py::init([](SpacePtr sp, std::vector<double> knots,
                       std::vector<DensityMeasure> densities,
                       std::vector<VelocityDensity> velocities) {
             CEPath p{std::move(sp), std::move(knots), std::move(densities),
                      std::move(velocities)};
             p.validate();
             return p;
           }),
           py::arg("space"), py::arg("knots"), py::arg("densities"), py::arg("velocities"))
      .def_readonly("knots", &CEPath::knots)
      .def_readonly("densities", &CEPath::densities)
      .def_readonly("velocities", &CEPath::velocities)
      .def_property_readonly("space", [](const CEPath& p) { return p.space; })
      .def("intervals", &CEPath::intervals)
      .def("validate", &CEPath::validate, py::arg("mass_tol") = 1e-9);

  m.def("zero_velocity", &zero_velocity);
  m.def("uniform_knots", &uniform_knots);
  m.def("log_mean", &log_mean);
  m.def("mobility_alpha", &mobility_alpha);
  m.def("lagrangian", &lagrangian);
  m.def("action", &action);
  m.def("restrict_velocity", &restrict_velocity);
  m.def("product_velocity", &product_velocity);
  m.def("shift_torus_velocity", [](const VelocityDensity& V, const std::vector<int>& z) {
    return shift_torus_velocity(V, z);
  });
  m.def("specific_action", [](const std::vector<CEPath>& paths, double marginal_tol) {
    const auto sa = specific_action(paths, marginal_tol);
    return py::make_tuple(sa.per_volume, sa.sup);
  }, py::arg("paths"), py::arg("marginal_tol") = 1e-8);

  py::class_<ClippedMeasure>(m, "ClippedMeasure")
      .def_readonly("law", &ClippedMeasure::law)
      .def_readonly("clip_defect", &ClippedMeasure::clip_defect);

  py::class_<ShiftInvariance>(m, "ShiftInvariance")
      .def_readonly("invariant", &ShiftInvariance::invariant)
      .def_readonly("max_deviation", &ShiftInvariance::max_deviation);

  py::enum_<OUMethod>(m, "OUMethod")
      .value("generator", OUMethod::generator)
      .value("closedform", OUMethod::closedform);

  m.def("ce_residual", &ce_residual);
  m.def("poisson_path", &poisson_path, py::arg("space"), py::arg("c0"), py::arg("c1"),
        py::arg("t"));
  m.def("sample_poisson_path", &sample_poisson_path, py::arg("space"), py::arg("c0"),
        py::arg("c1"), py::arg("intervals"));
  m.def("thinning", &thinning, py::arg("P"), py::arg("p"));
  m.def("superpose", &superpose, py::arg("P"), py::arg("Q"), py::arg("max_clip_defect") = 0.999,
        py::arg("pair_cap") = kDefaultPairCap);
  m.def("thinning_interpolation", &thinning_interpolation, py::arg("P0"), py::arg("P1"),
        py::arg("t"), py::arg("max_clip_defect") = 0.999, py::arg("pair_cap") = kDefaultPairCap);
  m.def("thinning_velocity", &thinning_velocity, py::arg("P0"), py::arg("P1"), py::arg("t"),
        py::arg("pair_cap") = kDefaultPairCap);
  m.def("sample_thinning_path", &sample_thinning_path, py::arg("P0"), py::arg("P1"),
        py::arg("intervals"), py::arg("max_clip_defect") = 0.999,
        py::arg("pair_cap") = kDefaultPairCap);
  m.def(
      "ou_evolve",
      [](const DensityMeasure& P, double t, OUMethod method, bool report_clip_defect) {
        double defect = 0.0;
        DensityMeasure out = ou_evolve(P, t, method, report_clip_defect ? &defect : nullptr);
        return py::make_tuple(std::move(out), defect);
      },
      py::arg("P"), py::arg("t"), py::arg("method") = OUMethod::generator,
      py::arg("report_clip_defect") = false);
  m.def("is_shift_invariant",
        py::overload_cast<const VelocityDensity&, double>(&is_shift_invariant), py::arg("V"),
        py::arg("tol") = 1e-10);
  m.def("is_shift_invariant", py::overload_cast<const DensityMeasure&, double>(&is_shift_invariant),
        py::arg("P"), py::arg("tol") = 1e-10);

  m.def("entropy", &entropy);
  m.def("fisher", &fisher, py::arg("P"), py::arg("sentinel") = kFisherSentinel);
  m.def("laplace", [](const DensityMeasure& P, const std::vector<double>& f) {
    return laplace(P, f);
  });
  m.def("intensity", &intensity);
  m.def("campbell", &campbell);
  m.def("campbell_mecke", &campbell_mecke);
  m.def("tv_distance", &tv_distance);
}
