#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "nartsp/baselines.hpp"
#include "nartsp/evaluate.hpp"
#include "nartsp/io.hpp"
#include "nartsp/trainer.hpp"

namespace py = pybind11;
using namespace nartsp;

namespace {

using Coords = py::array_t<double, py::array::c_style | py::array::forcecast>;

TspInstance to_instance(const Coords& xy, const std::string& metric = "euclid") {
    if (xy.ndim() != 2 || xy.shape(1) != 2) throw DimensionError("coordinates must have shape (n, 2)");
    TspInstance inst;
    inst.name = "py";
    inst.metric = parse_metric(metric);
    auto r = xy.unchecked<2>();
    inst.coords.resize(static_cast<std::size_t>(xy.shape(0)));
    for (py::ssize_t i = 0; i < xy.shape(0); ++i) inst.coords[i] = {r(i, 0), r(i, 1)};
    inst.validate();
    return inst;
}

Coords to_array(const TspInstance& inst) {
    Coords a({static_cast<py::ssize_t>(inst.size()), py::ssize_t{2}});
    auto w = a.mutable_unchecked<2>();
    for (std::size_t i = 0; i < inst.size(); ++i) {
        w(i, 0) = inst.coords[i][0];
        w(i, 1) = inst.coords[i][1];
    }
    return a;
}

ModelOutput to_output(const Coords& beta, const Coords& scores) {
    const auto n = beta.size();
    if (beta.ndim() != 1 || scores.ndim() != 2 || scores.shape(0) != n || scores.shape(1) != n)
        throw DimensionError("expected beta of shape (n,) and scores of shape (n, n)");
    ModelOutput out;
    out.beta.assign(beta.data(), beta.data() + n);
    out.scores = SquareMatrix(static_cast<std::size_t>(n));
    auto s = scores.unchecked<2>();
    for (py::ssize_t i = 0; i < n; ++i)
        for (py::ssize_t j = 0; j < n; ++j) out.scores(i, j) = s(i, j);
    return out;
}

py::tuple from_output(const ModelOutput& o) {
    const auto n = static_cast<py::ssize_t>(o.size());
    py::array_t<double> beta(n);
    py::array_t<double> scores({n, n});
    std::copy(o.beta.begin(), o.beta.end(), beta.mutable_data());
    auto s = scores.mutable_unchecked<2>();
    for (py::ssize_t i = 0; i < n; ++i)
        for (py::ssize_t j = 0; j < n; ++j) s(i, j) = o.scores(i, j);
    return py::make_tuple(beta, scores);
}

TrainConfig make_config(const std::string& preset, const std::map<std::string, std::string>& overrides) {
    TrainConfig cfg;
    if (preset == "desk") cfg = TrainConfig::desk();
    else if (preset == "paper") cfg = TrainConfig::paper();
    else throw ConfigError("unknown preset '" + preset + "' (desk, paper)");
    for (const auto& [k, v] : overrides) apply_key_value(cfg, k, v);
    cfg.validate();
    return cfg;
}

py::dict stats_dict(const StepStats& s) {
    py::dict d;
    d["mean_sample"] = s.mean_sample;
    d["mean_greedy"] = s.mean_greedy;
    d["omega"] = s.omega;
    d["grad_norm"] = s.grad_norm;
    d["loss"] = s.loss;
    return d;
}

/// Inference-side wrapper: a float model from a checkpoint or a fresh seed.
struct PyModel {
    Model<float> model;

    std::vector<ModelOutput> infer(const py::array_t<double, py::array::c_style | py::array::forcecast>& xy) {
        std::vector<TspInstance> insts;
        if (xy.ndim() == 2) {
            insts.push_back(to_instance(xy));
        } else if (xy.ndim() == 3 && xy.shape(2) == 2) {
            for (py::ssize_t b = 0; b < xy.shape(0); ++b) {
                Coords one({xy.shape(1), py::ssize_t{2}});
                std::copy_n(xy.data(b, 0, 0), xy.shape(1) * 2, one.mutable_data());
                insts.push_back(to_instance(one));
            }
        } else {
            throw DimensionError("coordinates must have shape (n, 2) or (batch, n, 2)");
        }
        py::gil_scoped_release nogil;
        return model.infer(make_batch(insts, model.config()));
    }
};

}  // namespace

PYBIND11_MODULE(_nartsp, m) {
    m.doc() = "Non-autoregressive GNN solver for the travelling salesman problem";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<ContractError>(m, "ContractError", base.ptr());
    py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());

    // Instances and baselines.
    m.def("generate_uniform", [](std::size_t n, std::uint64_t seed) { return to_array(generate_uniform(n, seed)); },
          py::arg("n"), py::arg("seed"), "Uniform points in the unit square, shape (n, 2).");
    m.def(
        "generate_batch",
        [](std::size_t n, std::size_t count, std::uint64_t seed) {
            const auto insts = generate_uniform_batch(n, count, seed);
            Coords a({static_cast<py::ssize_t>(count), static_cast<py::ssize_t>(n), py::ssize_t{2}});
            auto w = a.mutable_unchecked<3>();
            for (std::size_t b = 0; b < count; ++b)
                for (std::size_t i = 0; i < n; ++i) {
                    w(b, i, 0) = insts[b].coords[i][0];
                    w(b, i, 1) = insts[b].coords[i][1];
                }
            return a;
        },
        py::arg("n"), py::arg("count"), py::arg("seed"));
    m.def(
        "load_tsplib",
        [](const std::string& path) {
            const auto inst = load_tsplib(path);
            py::dict d;
            d["name"] = inst.name;
            d["metric"] = std::string(metric_name(inst.metric));
            d["coords"] = inst.has_coords() ? py::object(to_array(inst)) : py::none();
            return d;
        },
        py::arg("path"));
    m.def("tour_length", [](const Coords& xy, const Tour& t, const std::string& metric) {
        return tour_length(t, distance_matrix(to_instance(xy, metric)));
    }, py::arg("coords"), py::arg("tour"), py::arg("metric") = "euclid");
    m.def("held_karp", [](const Coords& xy, std::size_t max_nodes) {
        const auto r = held_karp(to_instance(xy), max_nodes);
        return py::make_tuple(r.tour, r.length);
    }, py::arg("coords"), py::arg("max_nodes") = kHeldKarpDefaultMaxNodes, "Exact optimum: (tour, length).");
    m.def("brute_force", [](const Coords& xy) {
        const auto r = brute_force(to_instance(xy));
        return py::make_tuple(r.tour, r.length);
    }, py::arg("coords"));
    m.def("nearest_insertion", [](const Coords& xy) { return nearest_insertion(distance_matrix(to_instance(xy))); },
          py::arg("coords"));
    m.def("farthest_insertion", [](const Coords& xy) { return farthest_insertion(distance_matrix(to_instance(xy))); },
          py::arg("coords"));
    m.def("two_opt", [](const Coords& xy, const Tour& t) { return two_opt(t, distance_matrix(to_instance(xy))); },
          py::arg("coords"), py::arg("tour"));

    // Decoding over raw network outputs.
    m.def("greedy_decode", [](const Coords& beta, const Coords& scores) {
        const auto tr = greedy_decode(to_output(beta, scores));
        return py::make_tuple(tr.tour, tr.log_prob);
    }, py::arg("beta"), py::arg("scores"), "(tour, log_prob)");
    m.def("sample_decode", [](const Coords& beta, const Coords& scores, std::uint64_t seed) {
        const auto tr = sample_decode(to_output(beta, scores), seed);
        return py::make_tuple(tr.tour, tr.log_prob);
    }, py::arg("beta"), py::arg("scores"), py::arg("seed"));
    m.def("beam_search", [](const Coords& beta, const Coords& scores, std::size_t width) {
        std::vector<py::tuple> out;
        for (const auto& c : beam_search(to_output(beta, scores), width)) out.push_back(py::make_tuple(c.tour, c.log_prob));
        return out;
    }, py::arg("beta"), py::arg("scores"), py::arg("width"), "Completed hypotheses, best first: [(tour, log_prob)].");
    m.def("tour_log_prob", [](const Coords& beta, const Coords& scores, const Tour& t) {
        return tour_log_prob(to_output(beta, scores), t);
    }, py::arg("beta"), py::arg("scores"), py::arg("tour"));

    py::class_<PyModel>(m, "Model")
        .def(py::init([](std::uint64_t seed, const std::string& preset) {
                 const auto cfg = preset == "reference" ? ModelConfig::reference() : make_config(preset, {}).model;
                 return PyModel{Model<float>(cfg, seed)};
             }),
             py::arg("seed") = 1, py::arg("preset") = "desk", "Freshly initialized network (desk, paper or reference shape).")
        .def_static("load", [](const std::string& path) { return PyModel{restore_model<float>(load_checkpoint(path))}; },
                    py::arg("path"), "Network stored in a training checkpoint.")
        .def_property_readonly("parameter_count", [](const PyModel& p) { return p.model.parameter_count(); })
        .def(
            "infer",
            [](PyModel& p, const py::array_t<double, py::array::c_style | py::array::forcecast>& xy) -> py::object {
                auto outs = p.infer(xy);
                if (xy.ndim() == 2) return from_output(outs[0]);
                py::list l;
                for (const auto& o : outs) l.append(from_output(o));
                return l;
            },
            py::arg("coords"), "Eval-mode (beta, scores); a list of pairs for batched input.")
        .def(
            "solve",
            [](PyModel& p, const Coords& xy, const std::string& policy, std::size_t beam_width,
               const std::string& final_rule, std::uint64_t seed) {
                const auto inst = to_instance(xy);
                const auto out = p.infer(xy)[0];
                SolveOptions so;
                so.policy = parse_policy(policy);
                so.beam = {beam_width, parse_final_rule(final_rule)};
                so.seed = seed;
                const auto dm = distance_matrix(inst);
                const auto tour = decode_output(out, dm, so);
                return py::make_tuple(tour, tour_length(tour, dm));
            },
            py::arg("coords"), py::arg("policy") = "greedy", py::arg("beam_width") = 1,
            py::arg("final_rule") = "shortest_tour", py::arg("seed") = 1, "(tour, length)");

    py::class_<Trainer>(m, "Trainer")
        .def(py::init([](const std::string& preset, const std::map<std::string, std::string>& overrides) {
                 return std::make_unique<Trainer>(make_config(preset, overrides));
             }),
             py::arg("preset") = "desk", py::arg("overrides") = std::map<std::string, std::string>{},
             "overrides uses the key = value names of training config files, e.g. {'n': '10'}.")
        .def_static("resume", [](const std::string& path) { return std::make_unique<Trainer>(load_checkpoint(path)); },
                    py::arg("path"))
        .def_property_readonly("config", [](const Trainer& t) { return to_key_values(t.config()); })
        .def_property_readonly("epoch", &Trainer::epoch)
        .def_property_readonly("forward_count", &Trainer::forward_count)
        .def("train_step", [](Trainer& t) {
            StepStats s;
            {
                py::gil_scoped_release nogil;
                s = t.train_step();
            }
            return stats_dict(s);
        }, "One REINFORCE step with an Adam update.")
        .def("validate", [](Trainer& t) {
            py::gil_scoped_release nogil;
            return t.validate();
        }, "Greedy mean tour length on the validation set.")
        .def("save", [](Trainer& t, const std::string& path) { save_checkpoint(path, t.checkpoint()); }, py::arg("path"))
        .def("model", [](Trainer& t) {
            Model<float> copy(t.config().model, 0);
            copy_state(t.model(), copy);
            return PyModel{std::move(copy)};
        }, "Snapshot of the current network.")
        .def("run", [](Trainer& t, const std::string& out_dir, bool quiet) {
            TrainOptions opt;
            opt.out_dir = out_dir;
            opt.quiet = quiet;
            TrainSummary s;
            {
                py::gil_scoped_release nogil;
                s = t.run(opt);
            }
            py::dict d;
            d["epochs_run"] = s.epochs_run;
            d["best_validation"] = s.best_validation;
            d["validation_history"] = s.validation_history;
            d["elapsed_s"] = s.elapsed_s;
            d["best_path"] = s.best_path;
            d["last_path"] = s.last_path;
            return d;
        }, py::arg("out_dir"), py::arg("quiet") = true, "Remaining epochs; writes checkpoints and CSV logs to out_dir.");

    m.def("train_config", [](const std::string& preset) { return to_key_values(make_config(preset, {})); },
          py::arg("preset") = "desk", "Settings of a preset as a key -> value dict.");
}
