#include "relunlearn/run_config.hpp"

#include <set>

#include <nlohmann/json.hpp>

#include "relunlearn/error.hpp"
#include "relunlearn/eval_harness.hpp"
#include "relunlearn/report.hpp"

namespace relunlearn {

using ordered_json = nlohmann::ordered_json;

namespace {

// Reads one JSON object, rejecting keys nobody asked about.
class ObjectReader {
public:
    ObjectReader(const ordered_json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ParseError(0, path_, "expected an object");
    }

    bool has(const char* key) {
        seen_.insert(key);
        return j_.contains(key);
    }
    const ordered_json& at(const char* key) { return j_.at(key); }
    std::string path(const char* key) const { return path_ + "." + key; }

    void number(const char* key, double& out) {
        if (!has(key)) return;
        if (!at(key).is_number()) throw ParseError(0, path(key), "expected a number");
        out = at(key).get<double>();
    }
    void integer(const char* key, int& out) {
        if (!has(key)) return;
        if (!at(key).is_number_integer()) throw ParseError(0, path(key), "expected an integer");
        out = at(key).get<int>();
    }
    void unsigned_integer(const char* key, std::uint64_t& out) {
        if (!has(key)) return;
        if (!at(key).is_number_unsigned()) throw ParseError(0, path(key), "expected a non-negative integer");
        out = at(key).get<std::uint64_t>();
    }
    void text(const char* key, std::string& out) {
        if (!has(key)) return;
        if (!at(key).is_string()) throw ParseError(0, path(key), "expected a string");
        out = at(key).get<std::string>();
    }
    void strings(const char* key, std::vector<std::string>& out) {
        if (!has(key)) return;
        const auto& v = at(key);
        if (!v.is_array()) throw ParseError(0, path(key), "expected an array of strings");
        out.clear();
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_string()) throw ParseError(0, path(key) + "[" + std::to_string(i) + "]", "expected a string");
            out.push_back(v[i].get<std::string>());
        }
    }

    void finish() const {
        for (const auto& [key, _] : j_.items()) {
            if (!seen_.count(key)) throw ParseError(0, path_ + "." + key, "unknown key");
        }
    }

private:
    const ordered_json& j_;
    std::string path_;
    std::set<std::string, std::less<>> seen_;
};

Triple triple_from(const ordered_json& j, const std::string& path) {
    ObjectReader r(j, path);
    Triple t;
    for (auto [key, slot] : {std::pair{"subject", &t.subject}, {"relation", &t.relation}, {"object", &t.object}}) {
        if (!r.has(key)) throw ParseError(0, r.path(key), "missing field");
        r.text(key, *slot);
    }
    r.finish();
    return t;
}

ordered_json triple_json(const Triple& t) {
    return {{"subject", t.subject}, {"relation", t.relation}, {"object", t.object}};
}

std::vector<Triple> triples_from(const ordered_json& j, const std::string& path) {
    if (!j.is_array()) throw ParseError(0, path, "expected an array of triples");
    std::vector<Triple> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(triple_from(j[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

ordered_json triples_json(const std::vector<Triple>& ts) {
    ordered_json out = ordered_json::array();
    for (const auto& t : ts) out.push_back(triple_json(t));
    return out;
}

GraphSpec spec_from(const ordered_json& j, const std::string& path) {
    ObjectReader r(j, path);
    GraphSpec s;
    if (!r.has("forget")) throw ParseError(0, r.path("forget"), "missing field");
    s.forget = triple_from(r.at("forget"), r.path("forget"));
    r.strings("subject_neighbors", s.subject_neighbors);
    r.strings("object_neighbors", s.object_neighbors);
    r.text("alt_relation", s.alt_relation);
    if (r.has("neutral_edges")) s.neutral_edges = triples_from(r.at("neutral_edges"), r.path("neutral_edges"));
    r.finish();
    return s;
}

ordered_json spec_json(const GraphSpec& s) {
    return {{"forget", triple_json(s.forget)},
            {"subject_neighbors", s.subject_neighbors},
            {"object_neighbors", s.object_neighbors},
            {"alt_relation", s.alt_relation},
            {"neutral_edges", triples_json(s.neutral_edges)}};
}

void read_corpus(const ordered_json& j, const std::string& path, CorpusConfig& c) {
    ObjectReader r(j, path);
    r.unsigned_integer("seed", c.seed);
    r.integer("eval_per_set", c.eval_per_set);
    if (r.has("counts")) {
        ObjectReader counts(r.at("counts"), r.path("counts"));
        for (auto role : kAllRoles) {
            int v = c.counts.get(role);
            counts.integer(std::string(to_string(role)).c_str(), v);
            c.counts.set(role, v);
        }
        counts.finish();
    }
    if (r.has("active")) {
        ObjectReader active(r.at("active"), r.path("active"));
        for (auto role : kAllRoles) {
            const std::string key(to_string(role));
            if (!active.has(key.c_str())) continue;
            if (!active.at(key.c_str()).is_boolean()) throw ParseError(0, active.path(key.c_str()), "expected a boolean");
            c.active[static_cast<std::size_t>(role)] = active.at(key.c_str()).get<bool>();
        }
        active.finish();
    }
    if (r.has("neutral_concepts")) c.neutral_concepts = triples_from(r.at("neutral_concepts"), r.path("neutral_concepts"));
    if (r.has("eval_neutral_concepts")) {
        c.eval_neutral_concepts = triples_from(r.at("eval_neutral_concepts"), r.path("eval_neutral_concepts"));
    }
    r.strings("train_contexts", c.train_contexts);
    for (auto [key, slot] : {std::pair{"eval_contexts", &c.eval_contexts}, {"eval_styles", &c.eval_styles}}) {
        std::vector<std::string> v(slot->begin(), slot->end());
        r.strings(key, v);
        if (v.size() != 3) throw ParseError(0, r.path(key), "expected three tags: easy, medium, hard");
        std::copy(v.begin(), v.end(), slot->begin());
    }
    r.finish();
}

ordered_json corpus_json(const CorpusConfig& c) {
    ordered_json counts, active;
    for (auto role : kAllRoles) {
        counts[std::string(to_string(role))] = c.counts.get(role);
        active[std::string(to_string(role))] = c.is_active(role);
    }
    return {{"seed", c.seed},
            {"counts", counts},
            {"eval_per_set", c.eval_per_set},
            {"active", active},
            {"neutral_concepts", triples_json(c.neutral_concepts)},
            {"eval_neutral_concepts", triples_json(c.eval_neutral_concepts)},
            {"train_contexts", c.train_contexts},
            {"eval_contexts", c.eval_contexts},
            {"eval_styles", c.eval_styles}};
}

void read_encoder(const ordered_json& j, const std::string& path, EncoderConfig& c) {
    ObjectReader r(j, path);
    r.integer("d_in", c.d_in);
    r.integer("d_out", c.d_out);
    r.integer("rank", c.rank);
    r.number("alpha_lora", c.alpha_lora);
    r.unsigned_integer("seed", c.seed);
    r.number("base_scale", c.base_scale);
    r.number("modality_gap", c.modality_gap);
    r.number("image_noise", c.image_noise);
    r.number("lora_init_std", c.lora_init_std);
    r.finish();
}

ordered_json encoder_json(const EncoderConfig& c) {
    return {{"d_in", c.d_in},
            {"d_out", c.d_out},
            {"rank", c.rank},
            {"alpha_lora", c.alpha_lora},
            {"seed", c.seed},
            {"base_scale", c.base_scale},
            {"modality_gap", c.modality_gap},
            {"image_noise", c.image_noise},
            {"lora_init_std", c.lora_init_std}};
}

void read_weights(const ordered_json& j, const std::string& path, LossWeights& w) {
    ObjectReader r(j, path);
    r.number("alpha", w.alpha);
    r.number("beta", w.beta);
    r.number("delta", w.delta);
    r.number("gamma", w.gamma);
    r.number("lambda_adv", w.lambda_adv);
    r.number("push_margin", w.push_margin);
    r.finish();
}

ordered_json weights_json(const LossWeights& w) {
    return {{"alpha", w.alpha}, {"beta", w.beta},           {"delta", w.delta},
            {"gamma", w.gamma}, {"lambda_adv", w.lambda_adv}, {"push_margin", w.push_margin}};
}

void read_train(const ordered_json& j, const std::string& path, TrainConfig& c) {
    ObjectReader r(j, path);
    r.number("learning_rate", c.learning_rate);
    r.integer("batch_size", c.batch_size);
    r.integer("epochs", c.epochs);
    r.number("beta1", c.beta1);
    r.number("beta2", c.beta2);
    r.number("adam_eps", c.adam_eps);
    r.number("weight_decay", c.weight_decay);
    r.unsigned_integer("seed", c.seed);
    r.number("max_grad_norm", c.max_grad_norm);
    r.number("lc_ceiling", c.lc_ceiling);
    r.finish();
}

ordered_json train_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size}, {"epochs", c.epochs},
            {"beta1", c.beta1},                 {"beta2", c.beta2},           {"adam_eps", c.adam_eps},
            {"weight_decay", c.weight_decay},   {"seed", c.seed},             {"max_grad_norm", c.max_grad_norm},
            {"lc_ceiling", c.lc_ceiling}};
}

ordered_json parse_json(std::string_view text, const char* what) {
    try {
        return ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(0, "", std::string(what) + " is not valid JSON: " + e.what());
    }
}

}  // namespace

RunConfig default_run_config() {
    RunConfig c;
    c.graph_spec = hamburger_spec();
    return c;
}

void set_seed(RunConfig& config, std::uint64_t seed) {
    config.corpus.seed = seed;
    config.encoder.seed = seed;
    config.train.seed = seed;
}

RunConfig parse_run_config(std::string_view text) {
    const ordered_json root = parse_json(text, "run config");
    ObjectReader r(root, "$");
    RunConfig c = default_run_config();

    const bool has_spec = r.has("graph_spec");
    const bool has_manifest = r.has("graph_manifest");
    const bool has_graph = r.has("graph");
    if (has_spec + has_manifest + has_graph > 1) {
        throw ParseError(0, "$", "give only one of graph_spec, graph_manifest and graph");
    }
    if (has_spec || has_manifest || has_graph) c.graph_spec.reset();
    if (has_spec) c.graph_spec = spec_from(r.at("graph_spec"), "$.graph_spec");
    if (has_manifest) {
        std::string path;
        r.text("graph_manifest", path);
        c.graph_manifest = path;
    }
    if (has_graph) c.graph = parse_graph(r.at("graph").dump());

    if (r.has("corpus_file")) {
        std::string path;
        r.text("corpus_file", path);
        c.corpus_file = path;
    }
    if (r.has("corpus")) read_corpus(r.at("corpus"), "$.corpus", c.corpus);
    if (r.has("encoder")) read_encoder(r.at("encoder"), "$.encoder", c.encoder);
    if (r.has("weights")) read_weights(r.at("weights"), "$.weights", c.weights);
    if (r.has("train")) read_train(r.at("train"), "$.train", c.train);
    // The run seed wins over the per-block seeds.
    if (r.has("seed")) {
        std::uint64_t seed = 0;
        r.unsigned_integer("seed", seed);
        set_seed(c, seed);
    }
    r.strings("variants", c.variants);
    r.text("out_dir", c.out_dir);
    r.integer("threads", c.threads);
    r.finish();
    return c;
}

RunConfig load_run_config(const std::string& path) {
    try {
        return parse_run_config(read_file(path));
    } catch (const Error& e) {
        throw Error(e.code(), "config '" + path + "': " + e.what());
    }
}

void validate_run_config(const RunConfig& c) {
    const int sources = c.graph_spec.has_value() + c.graph_manifest.has_value() + c.graph.has_value();
    if (sources != 1) throw Error(ErrorCode::kInvalidArgument, "a run needs exactly one graph source");
    validate_config(c.encoder);
    validate_weights(c.weights);
    validate_train_config(c.train);
    if (c.threads < 0) throw Error(ErrorCode::kInvalidArgument, "threads must not be negative");
    for (const auto& v : c.variants) named_variant(v, c.weights);
    // A manifest file is only read when the graph is resolved.
    if (!c.graph_manifest) resolve_graph(c);
}

RelationGraph resolve_graph(const RunConfig& c) {
    if (c.graph) {
        if (const auto problems = validate(*c.graph); !problems.empty()) {
            throw Error(ErrorCode::kInvalidGraph, "inline graph is invalid: " + problems.front());
        }
        return *c.graph;
    }
    if (c.graph_manifest) return load_graph(*c.graph_manifest);
    if (c.graph_spec) return build_unlearn_graph(*c.graph_spec);
    throw Error(ErrorCode::kInvalidArgument, "a run needs exactly one graph source");
}

Corpus resolve_corpus(const RunConfig& c, const RelationGraph& graph) {
    if (c.corpus_file) {
        try {
            return parse_corpus(read_file(*c.corpus_file));
        } catch (const Error& e) {
            throw Error(e.code(), "corpus '" + *c.corpus_file + "': " + e.what());
        }
    }
    return generate_corpus(graph, c.corpus);
}

std::string emit_run_manifest(const RunConfig& c) {
    ordered_json root;
    root["graph"] = ordered_json::parse(emit_graph(resolve_graph(c)));
    if (c.corpus_file) root["corpus_file"] = *c.corpus_file;
    root["corpus"] = corpus_json(c.corpus);
    root["encoder"] = encoder_json(c.encoder);
    root["weights"] = weights_json(c.weights);
    root["train"] = train_json(c.train);
    root["variants"] = c.variants;
    root["out_dir"] = c.out_dir;
    root["threads"] = c.threads;
    return root.dump(2) + "\n";
}

GraphSpec parse_graph_spec(std::string_view text) { return spec_from(parse_json(text, "graph spec"), "$"); }

std::string emit_graph_spec(const GraphSpec& spec) { return spec_json(spec).dump(2) + "\n"; }

}  // namespace relunlearn
