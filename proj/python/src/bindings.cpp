#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "relunlearn/error.hpp"
#include "relunlearn/eval_harness.hpp"
#include "relunlearn/report.hpp"
#include "relunlearn/run_config.hpp"

namespace py = pybind11;
using namespace relunlearn;

namespace {

using Rows = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Modality modality_of(const std::string& name) {
    if (name == "text") return Modality::kText;
    if (name == "image") return Modality::kImage;
    throw Error(ErrorCode::kInvalidArgument, "modality must be 'text' or 'image', got '" + name + "'");
}

std::vector<FeaturePair> pairs_from(const std::pair<Rows, Rows>& arrays, const char* role) {
    const auto& [t, i] = arrays;
    if (t.rows() != i.rows()) {
        throw Error(ErrorCode::kDimensionMismatch, std::string(role) + ": text and image row counts differ");
    }
    std::vector<FeaturePair> out;
    for (Eigen::Index r = 0; r < t.rows(); ++r) out.push_back({t.row(r).transpose(), i.row(r).transpose()});
    return out;
}

// {"l1": (text_rows, image_rows), ..., "anchors": (...)}; missing roles stay empty.
LossBatch batch_from(const EncoderState& state, const std::map<std::string, std::pair<Rows, Rows>>& roles) {
    LossBatch b;
    for (const auto& [name, arrays] : roles) {
        if (name == "l1") b.l1 = pairs_from(arrays, "l1");
        else if (name == "l2") b.l2 = pairs_from(arrays, "l2");
        else if (name == "l3") b.l3 = pairs_from(arrays, "l3");
        else if (name == "l4") b.l4 = pairs_from(arrays, "l4");
        else if (name == "adv") b.adv = pairs_from(arrays, "adv");
        else if (name == "anchors") {
            for (auto& p : pairs_from(arrays, "anchors")) b.anchors.push_back(make_anchor(state, p.text, p.image));
        } else {
            throw Error(ErrorCode::kInvalidArgument, "unknown batch role '" + name + "'");
        }
    }
    return b;
}

std::pair<Rows, Rows> batch_role(const std::vector<FeaturePair>& pairs, Eigen::Index d) {
    Rows t(static_cast<Eigen::Index>(pairs.size()), d), i(static_cast<Eigen::Index>(pairs.size()), d);
    for (std::size_t r = 0; r < pairs.size(); ++r) {
        t.row(static_cast<Eigen::Index>(r)) = pairs[r].text.transpose();
        i.row(static_cast<Eigen::Index>(r)) = pairs[r].image.transpose();
    }
    return {t, i};
}

py::dict breakdown_dict(const LossBreakdown& b) {
    py::dict d;
    d["l1"] = b.l1;
    d["l2"] = b.l2;
    d["l3"] = b.l3;
    d["l4"] = b.l4;
    d["lc"] = b.lc;
    d["ladv"] = b.ladv;
    d["total"] = b.total;
    d["pull"] = b.pull_aggregate();
    return d;
}

py::dict gradient_dict(const GradientSet& g) {
    py::dict d;
    d["a_text"] = g.a_text;
    d["b_text"] = g.b_text;
    d["a_image"] = g.a_image;
    d["b_image"] = g.b_image;
    return d;
}

py::list log_list(const TrainLog& log) {
    py::list out;
    for (const auto& r : log.records) {
        py::dict d = breakdown_dict(r.losses);
        d["step"] = r.step;
        d["epoch"] = r.epoch;
        out.append(d);
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Relationship unlearning on a toy dual encoder with LoRA adapters.";

    // Library errors surface as relunlearn.Error with a `code` attribute.
    static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object value = py::reinterpret_borrow<py::object>(error)(e.what());
            value.attr("code") = std::string(to_string(e.code()));
            py::set_error(error, value);
        }
    });

    // ------------------------------------------------------------ graph
    py::class_<Triple>(m, "Triple")
        .def(py::init<std::string, std::string, std::string>(), py::arg("subject"), py::arg("relation"),
             py::arg("object"))
        .def_readwrite("subject", &Triple::subject)
        .def_readwrite("relation", &Triple::relation)
        .def_readwrite("object", &Triple::object)
        .def("__repr__", [](const Triple& t) { return "Triple(" + t.subject + ", " + t.relation + ", " + t.object + ")"; });

    py::class_<GraphSpec>(m, "GraphSpec")
        .def(py::init<>())
        .def_readwrite("forget", &GraphSpec::forget)
        .def_readwrite("subject_neighbors", &GraphSpec::subject_neighbors)
        .def_readwrite("object_neighbors", &GraphSpec::object_neighbors)
        .def_readwrite("alt_relation", &GraphSpec::alt_relation)
        .def_readwrite("neutral_edges", &GraphSpec::neutral_edges);
    m.def("hamburger_spec", &hamburger_spec);

    py::class_<RelationGraph>(m, "RelationGraph")
        .def_property_readonly("node_ids",
                               [](const RelationGraph& g) {
                                   std::vector<std::string> ids;
                                   for (const auto& n : g.nodes) ids.push_back(n.id);
                                   return ids;
                               })
        .def_property_readonly("edges",
                               [](const RelationGraph& g) {
                                   std::vector<std::pair<std::string, std::string>> out;
                                   for (const auto& e : g.edges) out.emplace_back(e.id, std::string(to_string(e.loss_role)));
                                   return out;
                               })
        .def("to_json", &emit_graph)
        .def("__eq__", [](const RelationGraph& a, const RelationGraph& b) { return a == b; });
    m.def("build_graph", &build_unlearn_graph, py::arg("spec"));
    m.def("parse_graph", [](const std::string& text) { return parse_graph(text); });
    m.def("validate_graph", &validate);
    m.def("assign_roles", [](const RelationGraph& g) {
        const RoleAssignment r = assign_roles(g);
        py::dict d;
        d["l3_edge"] = r.l3_edge;
        d["l1_edges"] = r.l1_edges;
        d["l2_nodes"] = r.l2_nodes;
        d["l4_edges"] = r.l4_edges;
        return d;
    });

    // ------------------------------------------------------------ corpus
    py::class_<CorpusConfig>(m, "CorpusConfig")
        .def(py::init<>())
        .def_readwrite("seed", &CorpusConfig::seed)
        .def_readwrite("eval_per_set", &CorpusConfig::eval_per_set)
        .def("set_count", [](CorpusConfig& c, const std::string& role, int n) {
            const auto r = parse_example_role(role);
            if (!r) throw Error(ErrorCode::kInvalidArgument, "unknown role '" + role + "'");
            c.counts.set(*r, n);
        })
        .def("set_all_counts", [](CorpusConfig& c, int n) {
            for (auto r : kAllRoles) c.counts.set(r, n);
        });

    py::class_<Corpus>(m, "Corpus")
        .def("captions",
             [](const Corpus& c, const std::string& role) {
                 const auto r = parse_example_role(role);
                 if (!r) throw Error(ErrorCode::kInvalidArgument, "unknown role '" + role + "'");
                 std::vector<std::string> out;
                 for (const auto& p : c.role(*r)) out.push_back(p.caption);
                 return out;
             })
        .def("to_json", &emit_corpus)
        .def("__eq__", [](const Corpus& a, const Corpus& b) { return a == b; });
    m.def("generate_corpus", &generate_corpus, py::arg("graph"), py::arg("config"));
    m.def("parse_corpus", [](const std::string& text) { return parse_corpus(text); });
    m.def("paraphrase_variants", py::overload_cast<std::string_view, int, std::uint64_t>(&paraphrase_variants),
          py::arg("caption"), py::arg("n"), py::arg("seed"));

    // ------------------------------------------------------------ encoder
    py::class_<EncoderConfig>(m, "EncoderConfig")
        .def(py::init<>())
        .def_readwrite("d_in", &EncoderConfig::d_in)
        .def_readwrite("d_out", &EncoderConfig::d_out)
        .def_readwrite("rank", &EncoderConfig::rank)
        .def_readwrite("alpha_lora", &EncoderConfig::alpha_lora)
        .def_readwrite("seed", &EncoderConfig::seed)
        .def_readwrite("base_scale", &EncoderConfig::base_scale)
        .def_readwrite("modality_gap", &EncoderConfig::modality_gap)
        .def_readwrite("image_noise", &EncoderConfig::image_noise)
        .def_readwrite("lora_init_std", &EncoderConfig::lora_init_std);

    py::class_<EncoderState>(m, "EncoderState")
        .def_readonly("config", &EncoderState::config)
        .def_property_readonly("w_text", [](const EncoderState& s) { return s.base->text; })
        .def_property_readonly("w_image", [](const EncoderState& s) { return s.base->image; })
        .def_property_readonly("scale", [](const EncoderState& s) { return s.lora_text.scale; })
        .def("adapters",
             [](const EncoderState& s) {
                 py::dict d;
                 d["a_text"] = s.lora_text.a;
                 d["b_text"] = s.lora_text.b;
                 d["a_image"] = s.lora_image.a;
                 d["b_image"] = s.lora_image.b;
                 return d;
             })
        .def("with_adapters",
             [](const EncoderState& s, const Eigen::MatrixXd& a_text, const Eigen::MatrixXd& b_text,
                const Eigen::MatrixXd& a_image, const Eigen::MatrixXd& b_image) {
                 EncoderState out = s;
                 for (auto [src, dst] : {std::pair{&a_text, &out.lora_text.a}, {&b_text, &out.lora_text.b},
                                         {&a_image, &out.lora_image.a}, {&b_image, &out.lora_image.b}}) {
                     if (src->rows() != dst->rows() || src->cols() != dst->cols()) {
                         throw Error(ErrorCode::kDimensionMismatch, "adapter shape does not match the encoder");
                     }
                     *dst = *src;
                 }
                 return out;
             },
             py::arg("a_text"), py::arg("b_text"), py::arg("a_image"), py::arg("b_image"))
        .def("featurize_text", [](const EncoderState& s, const std::string& c) { return s.featurizer().text(c).values; })
        .def("embed",
             [](const EncoderState& s, const Eigen::VectorXd& x, const std::string& modality, bool adapted) {
                 return embed(s, {x, modality_of(modality)}, adapted ? EmbedMode::kAdapted : EmbedMode::kBase).values;
             },
             py::arg("features"), py::arg("modality"), py::arg("adapted") = true);
    m.def("make_encoder", &make_encoder, py::arg("config"));
    m.def("reset_adapters", &reset_adapters);
    m.def("with_random_adapters", &with_random_adapters, py::arg("state"), py::arg("seed"), py::arg("stddev") = 0.1);

    // ------------------------------------------------------------ loss
    py::class_<LossWeights>(m, "LossWeights")
        .def(py::init<>())
        .def_readwrite("alpha", &LossWeights::alpha)
        .def_readwrite("beta", &LossWeights::beta)
        .def_readwrite("delta", &LossWeights::delta)
        .def_readwrite("gamma", &LossWeights::gamma)
        .def_readwrite("lambda_adv", &LossWeights::lambda_adv)
        .def_readwrite("push_margin", &LossWeights::push_margin);
    m.def("tuned_weights", &tuned_weights);

    m.def("random_batch",
          [](const EncoderState& s, std::size_t per_role, std::uint64_t seed) {
              const LossBatch b = random_batch(s, per_role, seed);
              const Eigen::Index d = s.config.d_in;
              std::map<std::string, std::pair<Rows, Rows>> out{{"l1", batch_role(b.l1, d)},
                                                               {"l2", batch_role(b.l2, d)},
                                                               {"l3", batch_role(b.l3, d)},
                                                               {"l4", batch_role(b.l4, d)},
                                                               {"adv", batch_role(b.adv, d)}};
              std::vector<FeaturePair> anchors;
              for (const auto& a : b.anchors) anchors.push_back({a.text, a.image});
              out["anchors"] = batch_role(anchors, d);
              return out;
          },
          py::arg("state"), py::arg("per_role"), py::arg("seed"),
          "Random unit feature pairs per role, as {role: (text_rows, image_rows)}.");
    m.def("total_loss",
          [](const EncoderState& s, const std::map<std::string, std::pair<Rows, Rows>>& batch, const LossWeights& w) {
              const TotalLoss t = total_loss(batch_from(s, batch), s, w);
              return py::make_tuple(breakdown_dict(t.breakdown), gradient_dict(t.grad));
          },
          py::arg("state"), py::arg("batch"), py::arg("weights"));
    m.def("grad_check",
          [](const EncoderState& s, const std::map<std::string, std::pair<Rows, Rows>>& batch, const LossWeights& w,
             double eps) { return grad_check(s, batch_from(s, batch), w, eps).max_relative_error; },
          py::arg("state"), py::arg("batch"), py::arg("weights"), py::arg("eps") = 1e-5);

    // ------------------------------------------------------------ training
    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("learning_rate", &TrainConfig::learning_rate)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("weight_decay", &TrainConfig::weight_decay)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("max_grad_norm", &TrainConfig::max_grad_norm)
        .def_readwrite("lc_ceiling", &TrainConfig::lc_ceiling);
    m.def("train",
          [](const EncoderState& initial, const Corpus& corpus, const LossWeights& w, const TrainConfig& c) {
              TrainResult r;
              {
                  py::gil_scoped_release release;
                  r = train(initial, featurize(corpus, initial), w, c);
              }
              return py::make_tuple(r.state, log_list(r.log));
          },
          py::arg("initial"), py::arg("corpus"), py::arg("weights"), py::arg("config"),
          "Returns (trained_state, per-step loss records).");
    m.def("save_checkpoint", [](const EncoderState& s, const std::string& path) { save_checkpoint(s, path); });
    m.def("load_checkpoint", [](const std::string& path) { return restore_encoder(load_checkpoint(path)); });
    m.def("checkpoint_bytes", [](const EncoderState& s) { return py::bytes(serialize_checkpoint(s)); });

    // ------------------------------------------------------------ evaluation
    m.def("evaluate",
          [](const EncoderState& base, const EncoderState& adapted, const Corpus& corpus, int threads) {
              Evaluation e;
              {
                  py::gil_scoped_release release;
                  e = evaluate(base, adapted, corpus, threads);
              }
              return report_json({{"evaluation", e, std::nullopt}});
          },
          py::arg("base"), py::arg("adapted"), py::arg("corpus"), py::arg("threads") = 1,
          "Report JSON with a single entry named 'evaluation'.");
    m.def("ablation",
          [](const EncoderState& initial, const Corpus& corpus, const std::vector<std::string>& names,
             const LossWeights& full, const TrainConfig& c, int threads) {
              std::vector<AblationVariant> variants;
              for (const auto& n : names) variants.push_back(named_variant(n, full));
              AblationReport r;
              {
                  py::gil_scoped_release release;
                  r = ablation_run(initial, corpus, variants, c, threads);
              }
              return report_json(report_entries(r));
          },
          py::arg("initial"), py::arg("corpus"), py::arg("variants"), py::arg("full_weights"), py::arg("config"),
          py::arg("threads") = 1, "Report JSON with one entry per variant.");
    m.def("variant_names", &variant_names);

    // ------------------------------------------------------------ run config
    py::class_<RunConfig>(m, "RunConfig")
        .def_readwrite("corpus", &RunConfig::corpus)
        .def_readwrite("encoder", &RunConfig::encoder)
        .def_readwrite("weights", &RunConfig::weights)
        .def_readwrite("train", &RunConfig::train)
        .def_readwrite("variants", &RunConfig::variants)
        .def_readwrite("out_dir", &RunConfig::out_dir)
        .def_readwrite("threads", &RunConfig::threads)
        .def("set_seed", &set_seed)
        .def("validate", &validate_run_config)
        .def("graph", &resolve_graph)
        .def("build_corpus", [](const RunConfig& c) { return resolve_corpus(c, resolve_graph(c)); })
        .def("to_json", &emit_run_manifest);
    m.def("default_run_config", &default_run_config);
    m.def("parse_run_config", [](const std::string& text) { return parse_run_config(text); });
}
