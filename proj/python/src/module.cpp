#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "oscope/bias_stats.hpp"
#include "oscope/caption_forge.hpp"
#include "oscope/contrastive_sim.hpp"
#include "oscope/embedding_store.hpp"
#include "oscope/errors.hpp"
#include "oscope/linear_probe.hpp"
#include "oscope/manifests.hpp"
#include "oscope/matching_eval.hpp"
#include "oscope/parallel.hpp"
#include "oscope/probe_retrieval.hpp"
#include "oscope/synthetic_encoders.hpp"
#include "pipeline.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace oscope;

namespace {

// JSON crosses the boundary as Python dicts/lists through the json module.
py::object to_py(const Json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

Json from_py(const py::handle& o) {
    return Json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

template <class T, class F>
std::vector<T> list_from_py(const py::handle& items, F parse) {
    std::vector<T> out;
    for (const auto& item : items) out.push_back(parse(from_py(item)));
    return out;
}

template <class T>
py::list list_to_py(const std::vector<T>& items) {
    py::list out;
    for (const auto& x : items) out.append(to_py(to_json(x)));
    return out;
}

MockEncoderConfig mock_config(const py::dict& d) {
    MockEncoderConfig cfg;
    if (d.contains("preset") && d["preset"].cast<std::string>() == "calibrated")
        cfg = MockEncoderConfig::calibrated(d.contains("decay") ? d["decay"].cast<double>() : 0.6,
                                            d.contains("size_exponent") ? d["size_exponent"].cast<double>() : 1.0);
    for (const auto& [k, v] : d) {
        const auto key = k.cast<std::string>();
        if (key == "preset") continue;
        if (key == "dim") cfg.dim = v.cast<std::size_t>();
        else if (key == "seed") cfg.seed = v.cast<std::uint64_t>();
        else if (key == "decay") cfg.text_decay = v.cast<double>();
        else if (key == "size_exponent") cfg.image_size_exponent = v.cast<double>();
        else if (key == "text_jitter") cfg.text_jitter = v.cast<double>();
        else if (key == "image_jitter") cfg.image_jitter = v.cast<double>();
        else if (key == "text_noise") cfg.text_noise = v.cast<double>();
        else throw ConfigError("unknown mock encoder field '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

py::array_t<float> store_matrix(const EmbeddingStore& s) {
    py::array_t<float> out({s.size(), s.dim()});
    std::copy(s.data().begin(), s.data().end(), out.mutable_data());
    return out;
}

py::dict probe_report_to_py(const ProbeReport& r) {
    py::dict d = to_py(to_json(r));
    d["retrieved"] = r.retrieved;
    return d;
}

}  // namespace

PYBIND11_MODULE(_oscope, m) {
    m.doc() = "Object-bias probes for contrastive vision-language embeddings";
    m.attr("__version__") = cli::tool_version();

    // One Python exception class per library error kind, all under OscopeError.
    // Value/key/index/IO errors also derive from the matching builtin. The
    // classes live as long as the interpreter, so the references are never released.
    static PyObject* base = PyErr_NewException("oscope.OscopeError", PyExc_RuntimeError, nullptr);
    m.attr("OscopeError") = py::handle(base);
    static auto* by_kind = new std::map<std::string, PyObject*>;
    const std::vector<std::tuple<const char*, const char*, PyObject*>> kinds{
        {"FormatError", "FormatError", nullptr},
        {"DuplicateIdError", "DuplicateIdError", nullptr},
        {"CorruptError", "CorruptError", nullptr},
        {"ValueError", "OscopeValueError", PyExc_ValueError},
        {"IoError", "IoError", PyExc_OSError},
        {"DimError", "DimError", PyExc_ValueError},
        {"IndexError", "OscopeIndexError", PyExc_IndexError},
        {"UnsupportedError", "UnsupportedError", nullptr},
        {"ConfigError", "ConfigError", nullptr},
        {"KeyError", "OscopeKeyError", PyExc_KeyError},
        {"TrainingError", "TrainingError", nullptr},
        {"SchemaError", "SchemaError", nullptr},
        {"MissingInputError", "MissingInputError", PyExc_FileNotFoundError}};
    for (const auto& [kind, name, builtin] : kinds) {
        py::object bases = builtin ? py::object(py::make_tuple(py::handle(base), py::handle(builtin)))
                                   : py::reinterpret_borrow<py::object>(base);
        PyObject* cls = PyErr_NewException((std::string("oscope.") + name).c_str(), bases.ptr(), nullptr);
        if (!cls) throw py::error_already_set();
        (*by_kind)[kind] = cls;
        m.attr(name) = py::handle(cls);
    }
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            auto it = by_kind->find(e.kind());
            PyErr_SetString(it == by_kind->end() ? base : it->second, e.what());
        }
    });

    m.def("set_thread_count", &set_thread_count, py::arg("n"), "Worker count; 0 restores the default.");
    m.def("thread_count", &thread_count);

    // Stores ------------------------------------------------------------------------
    py::class_<EmbeddingStore>(m, "EmbeddingStore")
        .def(py::init([](std::string model_id, const std::string& modality, std::size_t dim, bool normalized) {
                 return EmbeddingStore(std::move(model_id), modality_from_string(modality), dim, normalized);
             }),
             py::arg("model_id"), py::arg("modality"), py::arg("dim"), py::arg("normalized") = false)
        .def("add",
             [](EmbeddingStore& s, std::string id, py::array_t<double, py::array::c_style | py::array::forcecast> v) {
                 if (v.ndim() != 1) throw DimError("expected a 1-d vector");
                 s.add(std::move(id), std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
             })
        .def_property_readonly("model_id", &EmbeddingStore::model_id)
        .def_property_readonly("modality", [](const EmbeddingStore& s) { return std::string(to_string(s.modality())); })
        .def_property_readonly("dim", &EmbeddingStore::dim)
        .def_property_readonly("normalized", &EmbeddingStore::normalized)
        .def_property_readonly("ids", &EmbeddingStore::ids)
        .def("__len__", &EmbeddingStore::size)
        .def("__contains__", &EmbeddingStore::contains)
        .def("__eq__", [](const EmbeddingStore& a, const EmbeddingStore& b) { return a == b; })
        .def("vector",
             [](const EmbeddingStore& s, const std::string& id) {
                 auto v = s.at(id);
                 return py::array_t<float>(static_cast<py::ssize_t>(v.size()), v.data());
             })
        .def("matrix", &store_matrix, "Row-major (len, dim) float32 copy.")
        .def("to_bytes", [](const EmbeddingStore& s) { return py::bytes(encode_binary(s)); })
        .def_static("from_bytes", [](const py::bytes& b) { return decode_binary(std::string(b)); })
        .def("__repr__", [](const EmbeddingStore& s) {
            return "<EmbeddingStore '" + s.model_id() + "' " + std::string(to_string(s.modality())) + " n=" +
                   std::to_string(s.size()) + " dim=" + std::to_string(s.dim()) + ">";
        });

    m.def("load_store", [](const fs::path& p) { return load_store(p); }, py::arg("path"));
    m.def(
        "save_store",
        [](const EmbeddingStore& s, const fs::path& p, const std::string& format) {
            if (format != "binary" && format != "jsonl") throw ConfigError("format must be 'binary' or 'jsonl'");
            save_store(s, p, format == "binary" ? StoreFormat::Binary : StoreFormat::Jsonl);
        },
        py::arg("store"), py::arg("path"), py::arg("format") = "binary");
    m.def("normalize", &normalize, py::arg("store"));
    m.def(
        "cosine_matrix",
        [](const EmbeddingStore& q, const EmbeddingStore& g) {
            auto sm = cosine_matrix(q, g);
            py::array_t<double> out({sm.rows(), sm.cols()});
            std::copy(sm.values.begin(), sm.values.end(), out.mutable_data());
            return out;
        },
        py::arg("queries"), py::arg("gallery"));

    // Manifests -----------------------------------------------------------------------
    m.def("builtin_vocabularies", &builtin_vocabulary_names);
    m.def(
        "vocabulary",
        [](const std::string& name) {
            py::list out;
            const auto vocab = resolve_vocabulary(name);
            for (const auto& e : vocab.entries())
                out.append(py::make_tuple(e.name, std::string(to_string(e.size_class))));
            return out;
        },
        py::arg("name_or_path"), "(name, size class) pairs of a builtin or TSV vocabulary.");
    m.def(
        "gen_manifests",
        [](const std::string& vocab, int n_objects, std::size_t count, std::uint64_t seed) {
            auto mf = gen_manifests(resolve_vocabulary(vocab), n_objects, count, seed);
            return py::make_tuple(list_to_py(mf.scenes), list_to_py(mf.captions));
        },
        py::arg("vocab"), py::arg("n_objects"), py::arg("count"), py::arg("seed"),
        "Scenes and short captions as lists of dicts.");
    m.def(
        "single_object_captions", [](const std::string& vocab) { return list_to_py(single_object_captions(resolve_vocabulary(vocab))); },
        py::arg("vocab"));
    m.def(
        "scenario_trials",
        [](const py::list& scenes, const std::string& vocab, std::uint64_t seed) {
            auto sc = list_from_py<SceneSpec>(scenes, scene_from_json);
            std::vector<MatchTrial> trials;
            std::vector<CaptionSpec> caps;
            for (const auto& p : gen_scenario_pairs(sc, resolve_vocabulary(vocab), seed)) {
                trials.push_back(trial_from_pair(p));
                caps.push_back(p.correct);
                caps.push_back(p.incorrect);
            }
            return py::make_tuple(list_to_py(trials), list_to_py(caps));
        },
        py::arg("scenes"), py::arg("vocab"), py::arg("seed"), "(trials, captions) for both matching scenarios.");

    // Mock encoders ---------------------------------------------------------------------
    m.def(
        "mock_text_store",
        [](const py::dict& cfg, const py::list& captions) {
            return mock_text_store(mock_config(cfg), list_from_py<CaptionSpec>(captions, caption_from_json));
        },
        py::arg("config"), py::arg("captions"));
    m.def(
        "mock_image_store",
        [](const py::dict& cfg, const py::list& scenes, double large_scale) {
            return mock_image_store(mock_config(cfg), list_from_py<SceneSpec>(scenes, scene_from_json), large_scale);
        },
        py::arg("config"), py::arg("scenes"), py::arg("large_scale") = 3.0);

    // Probes ------------------------------------------------------------------------------
    m.def(
        "run_probe",
        [](const EmbeddingStore& queries, const EmbeddingStore& gallery, py::object captions, py::object scenes,
           py::object gallery_objects) {
            ProbeTask task;
            task.query_store = std::make_shared<EmbeddingStore>(queries);
            task.gallery_store = std::make_shared<EmbeddingStore>(gallery);
            if (captions.is_none() == scenes.is_none()) throw ConfigError("give exactly one of captions or scenes");
            if (!captions.is_none())
                task.query_groups = groups_by_position(list_from_py<CaptionSpec>(captions, caption_from_json));
            else
                task.query_groups = groups_by_size_role(list_from_py<SceneSpec>(scenes, scene_from_json));
            if (gallery_objects.is_none())
                task.gallery_object_of = identity_gallery_map(gallery);
            else
                task.gallery_object_of = gallery_objects.cast<std::unordered_map<std::string, std::string>>();
            return probe_report_to_py(run_probe(task));
        },
        py::arg("queries"), py::arg("gallery"), py::kw_only(), py::arg("captions") = py::none(),
        py::arg("scenes") = py::none(), py::arg("gallery_objects") = py::none(),
        "Argmax retrieval over the full gallery. Captions group by position, scenes by size role; "
        "gallery_objects maps gallery ids to object names (default: the ids themselves).");

    m.def(
        "train_probe",
        [](const EmbeddingStore& store, const std::map<std::string, std::string>& labels, const py::dict& config) {
            auto cfg = train_config_from_json(from_py(config));
            auto r = train_probe(store, labels, cfg);
            py::dict out;
            out["probe"] = to_py(to_json(r.probe));
            out["heldout_accuracy"] = r.heldout_accuracy;
            out["train_size"] = r.train_size;
            out["heldout_size"] = r.heldout_size;
            py::list history;
            for (const auto& e : r.history)
                history.append(py::dict(py::arg("epoch") = e.epoch, py::arg("learning_rate") = e.learning_rate,
                                        py::arg("train_loss") = e.train_loss,
                                        py::arg("train_accuracy") = e.train_accuracy));
            out["history"] = history;
            return out;
        },
        py::arg("store"), py::arg("labels"), py::arg("config") = py::dict());
    m.def(
        "eval_probe",
        [](const py::dict& probe, const EmbeddingStore& store, const std::map<std::string, std::string>& labels) {
            return eval_probe(linear_probe_from_json(from_py(probe)), store, labels);
        },
        py::arg("probe"), py::arg("store"), py::arg("labels"));

    m.def(
        "evaluate_matching",
        [](const py::list& trials, const EmbeddingStore& images, const EmbeddingStore& texts) {
            auto t = list_from_py<MatchTrial>(trials, trial_from_json);
            auto r = evaluate_matching(t, images, texts);
            py::dict out;
            out["accuracy"] = r.accuracy;
            for (auto s : {Scenario::One, Scenario::Two})
                if (std::any_of(t.begin(), t.end(), [&](const MatchTrial& x) { return x.scenario == s; }))
                    out[py::str("scenario_" + std::string(to_string(s)))] = scenario_accuracy(t, r, s);
            py::list scores;
            for (const auto& o : r.outcomes) scores.append(o.score);
            out["scores"] = scores;
            return out;
        },
        py::arg("trials"), py::arg("images"), py::arg("texts"));

    // Statistics --------------------------------------------------------------------------
    m.def(
        "largest_position_histogram",
        [](const py::list& records, std::optional<int> n_objects) {
            auto h = largest_position_histogram(list_from_py<AnalysisRecord>(records, analysis_record_from_json), n_objects);
            py::dict out;
            out["fractions"] = h.fractions;
            out["records_used"] = h.records_used;
            out["records_dropped"] = h.records_dropped;
            out["zero_area_objects"] = h.zero_area_objects;
            return out;
        },
        py::arg("records"), py::arg("n_objects") = py::none());
    m.def(
        "presence_by_position",
        [](const py::list& records) {
            return presence_by_position(list_from_py<DetectionRecord>(records, detection_record_from_json));
        },
        py::arg("records"));

    // Simulation ----------------------------------------------------------------------------
    m.def("analytic_limit", &analytic_limit, py::arg("b"), "e / (e + b)");
    m.def(
        "simulate_objective",
        [](std::size_t d, std::size_t k, std::size_t b, std::size_t trials, std::uint64_t seed,
           const std::string& distribution, bool direct_sampling) {
            if (distribution != "gaussian" && distribution != "rademacher")
                throw ConfigError("distribution must be 'gaussian' or 'rademacher'");
            SimConfig cfg{d, k, b, trials, seed,
                          distribution == "gaussian" ? LatentDistribution::Gaussian : LatentDistribution::Rademacher,
                          direct_sampling};
            auto s = objective_samples(cfg);
            py::dict out;
            out["ideal"] = to_py(to_json(summarize(s.ideal, b)));
            out["truncated"] = to_py(to_json(summarize(s.truncated, b)));
            return out;
        },
        py::arg("d"), py::arg("k"), py::arg("b"), py::arg("trials"), py::arg("seed"), py::arg("distribution") = "gaussian",
        py::arg("direct_sampling") = false);
    m.def(
        "toy_trainer",
        [](double size_order_correlation, std::size_t steps, std::uint64_t seed) {
            ToyTrainerConfig cfg;
            cfg.size_order_correlation = size_order_correlation;
            cfg.steps = steps;
            cfg.seed = seed;
            py::list out;
            for (const auto& c : toy_bias_trainer(cfg)) out.append(to_py(to_json(c)));
            return out;
        },
        py::arg("size_order_correlation"), py::arg("steps") = 300, py::arg("seed") = 0);

    // Experiments ---------------------------------------------------------------------------
    m.def(
        "run_experiment",
        [](const py::dict& config, const fs::path& out_dir, std::optional<fs::path> config_dir) {
            return to_py(cli::run_experiment(from_py(config), config_dir.value_or(fs::current_path()), out_dir));
        },
        py::arg("config"), py::arg("out_dir"), py::arg("config_dir") = py::none(),
        "Runs an experiment config (same schema as `oscope run`) and returns its run manifest.");
    m.def(
        "compare_runs",
        [](const std::vector<fs::path>& runs, const std::string& title) {
            auto r = cli::compare_runs(runs, title);
            return py::make_tuple(r.markdown, r.csv);
        },
        py::arg("runs"), py::arg("title") = "", "(markdown, csv) comparison tables.");
}
