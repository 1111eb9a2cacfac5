#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mfe/chain.hpp"
#include "mfe/equilibrium.hpp"
#include "mfe/model.hpp"
#include "mfe/sim.hpp"
#include "mfe/stopping.hpp"

namespace py = pybind11;
using namespace mfe;

namespace {

// Distribution as a (nmax, 2) array indexed [n, z].
py::array_t<double> to_array(const Distribution& pi) {
    py::array_t<double> out({pi.nmax(), std::size_t{2}});
    auto view = out.mutable_unchecked<2>();
    for (std::size_t n = 0; n < pi.nmax(); ++n) {
        for (int z = 0; z < 2; ++z) view(n, z) = pi(z, n);
    }
    return out;
}

Distribution from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2 || a.shape(1) != 2) throw std::invalid_argument("distribution must have shape (nmax, 2)");
    const auto nmax = static_cast<std::size_t>(a.shape(0));
    std::vector<double> probs(a.data(), a.data() + 2 * nmax);
    return Distribution(nmax, std::move(probs));
}

// Value function arrays of shape (nmax, 2) indexed [n - 1, z].
py::array_t<double> values_array(std::span<const double> values, std::size_t nmax) {
    py::array_t<double> out({nmax, std::size_t{2}});
    std::copy(values.begin(), values.end(), out.mutable_data());
    return out;
}

py::dict candidate_dict(const EquilibriumCandidate& c) {
    py::dict d;
    d["n0"] = c.policy.n0;
    d["n1"] = c.policy.n1;
    d["c"] = c.c;
    d["kappa"] = c.kappa;
    d["c_tilde"] = c.c_tilde;
    d["dist"] = c.dist;
    d["d"] = c.d;
    d["box"] = py::make_tuple(py::make_tuple(c.box[0].lo, c.box[0].hi), py::make_tuple(c.box[1].lo, c.box[1].hi));
    d["pi"] = to_array(c.pi);
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Mean field equilibrium solver for nomadic agents competing for resources";

    py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);

    py::class_<RewardFn>(m, "RewardFn")
        .def_static("inverse_n", &RewardFn::inverse_n)
        .def_static("inverse_n_squared", &RewardFn::inverse_n_squared)
        .def_static("inverse_sqrt_n", &RewardFn::inverse_sqrt_n)
        .def_static("table", &RewardFn::table, py::arg("values"))
        .def_static("from_name", &RewardFn::from_name, py::arg("name"))
        .def("scaled", &RewardFn::scaled, py::arg("factor"))
        .def("__call__", [](const RewardFn& f, std::size_t n) { return f(n); })
        .def_property_readonly("name", &RewardFn::name)
        .def("__repr__", [](const RewardFn& f) { return "RewardFn('" + f.name() + "')"; });

    py::class_<ModelParams>(m, "ModelParams")
        .def(py::init([](double lambda, double gamma, double beta, double mu01, double mu10, RewardFn reward) {
                 ModelParams p{lambda, gamma, beta, mu01, mu10, std::move(reward)};
                 p.validate();
                 return p;
             }),
             py::arg("lambda_") = 1.0, py::arg("gamma") = 0.95, py::arg("beta") = 20.0, py::arg("mu01") = 1.0,
             py::arg("mu10") = 1.0, py::arg("reward") = RewardFn::inverse_n())
        .def_readwrite("lambda_", &ModelParams::lambda)
        .def_readwrite("gamma", &ModelParams::gamma)
        .def_readwrite("beta", &ModelParams::beta)
        .def_readwrite("mu01", &ModelParams::mu01)
        .def_readwrite("mu10", &ModelParams::mu10)
        .def_readwrite("reward", &ModelParams::reward);

    py::class_<ThresholdPolicy>(m, "ThresholdPolicy")
        .def(py::init([](double n0, double n1) {
                 ThresholdPolicy p{n0, n1};
                 p.validate();
                 return p;
             }),
             py::arg("n0"), py::arg("n1"))
        .def_readwrite("n0", &ThresholdPolicy::n0)
        .def_readwrite("n1", &ThresholdPolicy::n1)
        .def("__repr__", [](const ThresholdPolicy& p) {
            return "ThresholdPolicy(" + std::to_string(p.n0) + ", " + std::to_string(p.n1) + ")";
        });

    m.def("reward_eval", &reward_eval, py::arg("f"), py::arg("z"), py::arg("n"));
    m.def("switch_probability", &switch_probability, py::arg("policy"), py::arg("z"), py::arg("n"));

    m.def(
        "calibrate_kappa",
        [](const ModelParams& params, const ThresholdPolicy& policy, std::size_t nmax, double tol) {
            const KappaCalibration cal = calibrate_kappa(params, policy, Truncation{nmax}, tol);
            return py::make_tuple(cal.kappa, to_array(cal.pi));
        },
        py::arg("params"), py::arg("policy"), py::arg("nmax") = 200, py::arg("tol") = 1e-6,
        "Returns (kappa, pi) with pi[n, z] the stationary law of the all-agents chain.");

    m.def(
        "stationary",
        [](const ModelParams& params, const ThresholdPolicy& policy, double kappa, std::size_t nmax) {
            return to_array(stationary(build_generator_all(params, policy, kappa, Truncation{nmax})));
        },
        py::arg("params"), py::arg("policy"), py::arg("kappa"), py::arg("nmax") = 200);

    m.def(
        "mean_occupancy", [](const py::array_t<double>& pi) { return mean_occupancy(from_array(pi)); },
        py::arg("pi"));

    py::class_<EventProbs>(m, "EventProbs")
        .def_readonly("p_dec", &EventProbs::p_dec)
        .def_readonly("p_exit", &EventProbs::p_exit)
        .def_readonly("p_sur", &EventProbs::p_sur)
        .def_readonly("p_res", &EventProbs::p_res)
        .def_readonly("p_arr", &EventProbs::p_arr)
        .def("total", &EventProbs::total);
    m.def("event_probs", &event_probs, py::arg("params"), py::arg("kappa"), py::arg("z"), py::arg("n"));

    m.def(
        "value_iterate",
        [](const ModelParams& params, const ThresholdPolicy& policy, double kappa, double c, std::size_t nmax,
           double tol) {
            const ValueFunction vf = value_iterate(params, policy, kappa, c, Truncation{nmax}, tol);
            const ThresholdBox box = optimal_thresholds(vf, c, default_indifference_tolerance(params));
            py::dict d;
            d["v"] = values_array(vf.v_values(), vf.nmax());
            d["vhat"] = values_array(vf.vhat_values(), vf.nmax());
            d["iterations"] = vf.iterations();
            d["box"] = py::make_tuple(py::make_tuple(box[0].lo, box[0].hi), py::make_tuple(box[1].lo, box[1].hi));
            return d;
        },
        py::arg("params"), py::arg("policy"), py::arg("kappa"), py::arg("c"), py::arg("nmax") = 200,
        py::arg("tol") = 1e-10,
        "Solves the stopping problem; v and vhat are indexed [n - 1, z], box is the optimal-threshold box.");

    m.def(
        "bounds",
        [](const ModelParams& params) {
            const PayoffBounds b = bounds(params);
            return py::make_tuple(b.c_bar, b.c_under);
        },
        py::arg("params"), "Returns (c_bar, c_under).");
    m.def("g_bound", &g_bound, py::arg("params"), py::arg("n"));

    m.def(
        "evaluate",
        [](const ModelParams& params, const ThresholdPolicy& policy, double c, std::size_t nmax) {
            SearchConfig cfg;
            cfg.trunc.nmax = nmax;
            return candidate_dict(evaluate_candidate(params, policy, c, cfg));
        },
        py::arg("params"), py::arg("policy"), py::arg("c"), py::arg("nmax") = 200,
        "Fixed-point residual at one (policy, C).");

    m.def(
        "search",
        [](const ModelParams& params, double n_hi, double resolution, int levels, std::size_t top_q,
           double refinement_factor, std::optional<double> c_resolution, std::size_t keep, unsigned threads) {
            SearchConfig cfg;
            cfg.n_hi = n_hi;
            cfg.resolution = resolution;
            cfg.levels = levels;
            cfg.top_q = top_q;
            cfg.refinement_factor = refinement_factor;
            cfg.c_resolution = c_resolution;
            cfg.keep = keep;
            cfg.threads = threads;
            SearchResult r;
            {
                py::gil_scoped_release release;
                r = search(params, cfg);
            }
            py::list out;
            for (const auto& c : r.ranked) out.append(candidate_dict(c));
            return out;
        },
        py::arg("params"), py::arg("n_hi") = 50.0, py::arg("resolution") = 1.0, py::arg("levels") = 3,
        py::arg("top_q") = 5, py::arg("refinement_factor") = 5.0, py::arg("c_resolution") = py::none(),
        py::arg("keep") = 10, py::arg("threads") = 1, "Ranked approximate equilibria, best first.");

    m.def(
        "simulate",
        [](const ModelParams& params, const ThresholdPolicy& policy, std::size_t k, double horizon, double burn_in,
           std::uint64_t seed, bool exclude_self) {
            SimConfig cfg;
            cfg.params = params;
            cfg.policy = policy;
            cfg.k = k;
            cfg.horizon = horizon;
            cfg.burn_in = burn_in;
            cfg.seed = seed;
            cfg.snapshot_interval = horizon;
            cfg.exclude_self = exclude_self;
            SimResult r;
            {
                py::gil_scoped_release release;
                r = simulate(cfg);
            }
            py::dict d;
            d["empirical_dist"] = to_array(r.empirical_dist);
            d["welfare"] = welfare(r);
            d["mean_reward_per_epoch"] = r.mean_reward_per_epoch;
            d["epochs"] = r.event_counts.epochs;
            d["departures"] = r.event_counts.departures;
            d["switches"] = r.event_counts.switches;
            d["flips"] = r.event_counts.flips;
            return d;
        },
        py::arg("params"), py::arg("policy"), py::arg("k"), py::arg("horizon"), py::arg("burn_in") = 0.0,
        py::arg("seed") = 1, py::arg("exclude_self") = true);

    m.def(
        "total_variation",
        [](const py::array_t<double>& a, const py::array_t<double>& b) {
            return total_variation(from_array(a), from_array(b));
        },
        py::arg("a"), py::arg("b"));
}
