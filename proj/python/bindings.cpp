#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dupire/adjoint.hpp"
#include "dupire/bump.hpp"
#include "dupire/engine.hpp"
#include "dupire/errors.hpp"
#include "dupire/io.hpp"
#include "dupire/surface.hpp"

namespace py = pybind11;
using namespace pybind11::literals;
using namespace dupire;

namespace {

py::array_t<double> matrix_to_numpy(const Matrix& m) {
    py::array_t<double> out({m.rows(), m.cols()});
    std::copy(m.data(), m.data() + m.size(), out.mutable_data());
    return out;
}

Matrix numpy_to_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) {
        throw py::value_error("vols must be a 2-d array");
    }
    Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
    std::copy(a.data(), a.data() + a.size(), m.data());
    return m;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Dupire local volatility Monte Carlo pricer with adjoint vega surface";

    py::register_exception<Error>(m, "DupireError", PyExc_ValueError);

    py::enum_<Scheme>(m, "Scheme")
        .value("EULER", Scheme::Euler)
        .value("LOG_EULER", Scheme::LogEuler);
    py::enum_<InterpBackend>(m, "InterpBackend")
        .value("GATHER", InterpBackend::Gather)
        .value("ONE_HOT", InterpBackend::OneHot);
    py::enum_<PrecisionMode>(m, "PrecisionMode")
        .value("FULL", PrecisionMode::Full)
        .value("EMULATED_BF16", PrecisionMode::Emulatedbf16);
    py::enum_<PayoffKind>(m, "PayoffKind")
        .value("CALL", PayoffKind::EuropeanCall)
        .value("PUT", PayoffKind::EuropeanPut);

    py::class_<RngKey>(m, "RngKey")
        .def(py::init<std::uint64_t, std::uint64_t>(), "seed"_a = 0, "stream_salt"_a = 0)
        .def_readwrite("seed", &RngKey::seed)
        .def_readwrite("stream_salt", &RngKey::stream_salt);

    py::class_<VolSurface>(m, "VolSurface")
        .def(py::init([](std::vector<double> spots, std::vector<double> times,
                         const py::array_t<double, py::array::c_style | py::array::forcecast>& vols) {
                 return VolSurface(std::move(spots), std::move(times), numpy_to_matrix(vols));
             }),
             "spots"_a, "times"_a, "vols"_a)
        .def_property_readonly("spots", [](const VolSurface& s) { return s.spots(); })
        .def_property_readonly("times", [](const VolSurface& s) { return s.times(); })
        .def_property_readonly("vols", [](const VolSurface& s) { return matrix_to_numpy(s.vols()); })
        .def_property_readonly("shape", [](const VolSurface& s) {
            return py::make_tuple(s.n_spots(), s.n_times());
        });

    py::class_<BilinearWeights>(m, "BilinearWeights")
        .def_readonly("i", &BilinearWeights::i)
        .def_readonly("j", &BilinearWeights::j)
        .def_property_readonly("w", [](const BilinearWeights& w) {
            return py::make_tuple(w.w[0], w.w[1], w.w[2], w.w[3]);
        })
        .def_property_readonly("dwdx", [](const BilinearWeights& w) {
            return py::make_tuple(w.dwdx[0], w.dwdx[1], w.dwdx[2], w.dwdx[3]);
        });

    py::class_<SimConfig>(m, "SimConfig")
        .def(py::init<>())
        .def_readwrite("s0", &SimConfig::s0)
        .def_readwrite("maturity", &SimConfig::maturity)
        .def_readwrite("n_steps", &SimConfig::n_steps)
        .def_readwrite("n_paths", &SimConfig::n_paths)
        .def_readwrite("batch_size", &SimConfig::batch_size)
        .def_readwrite("scheme", &SimConfig::scheme)
        .def_readwrite("key", &SimConfig::key)
        .def_readwrite("precision", &SimConfig::precision)
        .def_readwrite("interp_backend", &SimConfig::interp_backend)
        .def("validate", &SimConfig::validate);

    py::class_<Payoff>(m, "Payoff")
        .def(py::init<PayoffKind, double>(), "kind"_a = PayoffKind::EuropeanCall,
             "strike"_a = 100.0)
        .def_readwrite("kind", &Payoff::kind)
        .def_readwrite("strike", &Payoff::strike);

    py::class_<PriceEstimate>(m, "PriceEstimate")
        .def_readonly("mean", &PriceEstimate::mean)
        .def_readonly("std_error", &PriceEstimate::std_error)
        .def_readonly("n_paths", &PriceEstimate::n_paths)
        .def("__repr__", [](const PriceEstimate& p) {
            return "PriceEstimate(mean=" + io::format_g17(p.mean) +
                   ", std_error=" + io::format_g17(p.std_error) + ")";
        });

    py::class_<SensitivityReport>(m, "SensitivityReport")
        .def_readonly("price", &SensitivityReport::price)
        .def_readonly("delta", &SensitivityReport::delta)
        .def_readonly("delta_se", &SensitivityReport::delta_se)
        .def_property_readonly("vega_grid", [](const SensitivityReport& r) {
            return matrix_to_numpy(r.vega_grid);
        })
        .def_property_readonly("vega_se_grid", [](const SensitivityReport& r) {
            return matrix_to_numpy(r.vega_se_grid);
        });

    py::class_<BumpReport>(m, "BumpReport")
        .def_property_readonly("grid", [](const BumpReport& r) { return matrix_to_numpy(r.grid); })
        .def_readonly("n_simulations", &BumpReport::n_simulations)
        .def_readonly("wall_ms", &BumpReport::wall_ms)
        .def_readonly("stride", &BumpReport::stride);

    py::class_<SyntheticSurfaceParams>(m, "SyntheticSurfaceParams")
        .def(py::init<>())
        .def_readwrite("n_spots", &SyntheticSurfaceParams::n_spots)
        .def_readwrite("n_times", &SyntheticSurfaceParams::n_times)
        .def_readwrite("s0", &SyntheticSurfaceParams::s0)
        .def_readwrite("base", &SyntheticSurfaceParams::base)
        .def_readwrite("skew", &SyntheticSurfaceParams::skew)
        .def_readwrite("lo", &SyntheticSurfaceParams::lo)
        .def_readwrite("hi", &SyntheticSurfaceParams::hi)
        .def_readwrite("maturity", &SyntheticSurfaceParams::maturity);

    // rng
    m.def("uniform", &uniform, "key"_a, "path"_a, "step"_a,
          "Counter-based uniform draw strictly inside (0, 1).");
    m.def("normal", &normal, "key"_a, "path"_a, "step"_a,
          "Standard normal draw, inverse-CDF transform of `uniform`.");
    m.def("inverse_normal_cdf", &inverse_normal_cdf, "u"_a);

    // numerics
    m.def("round_bf16", &round_bf16, "x"_a, "Round to bfloat16, ties to even.");

    // surface
    m.def("weights", &weights, "surface"_a, "x"_a, "t"_a);
    m.def(
        "interp_gather",
        [](const VolSurface& s, const std::vector<double>& xs, double t) {
            return interp_gather(s, xs, t);
        },
        "surface"_a, "xs"_a, "t"_a);
    m.def(
        "interp_onehot",
        [](const VolSurface& s, const std::vector<double>& xs, double t, PrecisionMode p) {
            return interp_onehot(s, xs, t, p);
        },
        "surface"_a, "xs"_a, "t"_a, "precision"_a = PrecisionMode::Full);
    m.def("dvol_dx", &dvol_dx, "surface"_a, "x"_a, "t"_a);
    m.def("synthetic_surface", &synthetic_surface, "params"_a);

    // engine
    m.def(
        "step_euler",
        [](double x, double sigma, double z, double dt, double floor_value) {
            const auto r = step_euler(x, sigma, z, dt, floor_value);
            return py::make_tuple(r.x, r.floored);
        },
        "x"_a, "sigma"_a, "z"_a, "dt"_a, "floor_value"_a);
    m.def("step_logeuler", &step_logeuler, "x"_a, "sigma"_a, "z"_a, "dt"_a);
    m.def("payoff_value", &payoff_value, "payoff"_a, "x_terminal"_a);
    m.def("payoff_grad", &payoff_grad, "payoff"_a, "x_terminal"_a);
    m.def("black_scholes_call", &black_scholes_call, "s0"_a, "k"_a, "sigma"_a, "t"_a);
    m.def("norm_cdf", &norm_cdf, "x"_a);
    m.def("price", &price, "config"_a, "surface"_a, "payoff"_a, "n_threads"_a = 1,
          py::call_guard<py::gil_scoped_release>(),
          "Monte Carlo price with standard error; bit-identical for any thread count.");

    // adjoint + bump
    m.def("greeks", &greeks, "config"_a, "surface"_a, "payoff"_a, "n_threads"_a = 1,
          py::call_guard<py::gil_scoped_release>(),
          "Price, delta and the full vega grid from one forward+backward pass.");
    m.def("bump_node", &bump_node, "config"_a, "surface"_a, "payoff"_a, "i"_a, "j"_a, "eps"_a,
          "n_threads"_a = 1, py::call_guard<py::gil_scoped_release>());
    m.def("bump_all", &bump_all, "config"_a, "surface"_a, "payoff"_a, "eps"_a, "n_threads"_a = 1,
          "stride"_a = 1, py::call_guard<py::gil_scoped_release>());
    m.def("bump_spot", &bump_spot, "config"_a, "surface"_a, "payoff"_a, "rel_eps"_a,
          "n_threads"_a = 1, py::call_guard<py::gil_scoped_release>());
    m.def("bump_uniform", &bump_uniform, "config"_a, "surface"_a, "payoff"_a, "eps"_a,
          "n_threads"_a = 1, py::call_guard<py::gil_scoped_release>());

    // surface file io
    m.def(
        "read_surface_tsv",
        [](const std::string& path) { return io::read_surface_tsv(path); }, "path"_a);
    m.def(
        "write_surface_tsv",
        [](const VolSurface& s, const std::string& path) { io::write_surface_tsv(s, path); },
        "surface"_a, "path"_a);

    m.attr("__version__") = std::string(io::kToolVersion);
}
