// relunlearn: graph construction, corpus generation, training, evaluation and
// ablation runs for relation-aware unlearning on the toy dual encoder.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "relunlearn/error.hpp"
#include "relunlearn/eval_harness.hpp"
#include "relunlearn/report.hpp"
#include "relunlearn/run_config.hpp"

namespace fs = std::filesystem;
using namespace relunlearn;

namespace {

struct CommonOptions {
    std::string config_path;
    std::string out_dir;
    std::optional<int> threads;
    std::optional<std::uint64_t> seed;
    std::string graph_path;
};

struct Overrides {
    std::optional<int> epochs;
    std::optional<double> lr;
    std::optional<int> batch_size;
    std::optional<double> alpha, beta, delta, gamma, lambda_adv, margin;
    std::optional<int> per_role;
    std::optional<int> eval_per_set;
    std::optional<int> d_in, d_out, rank;
    std::string corpus_path;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_graph = true) {
    cmd->add_option("-c,--config", o.config_path, "Run config JSON; flags override it")->check(CLI::ExistingFile);
    cmd->add_option("-o,--out", o.out_dir, "Output directory (default $RELUNLEARN_OUT/<command>, or runs/<command>)");
    cmd->add_option("--threads", o.threads, "Worker cap; 0 uses every core")->check(CLI::NonNegativeNumber);
    cmd->add_option("--seed", o.seed, "Run seed for corpus, encoder and training");
    if (with_graph) cmd->add_option("--graph", o.graph_path, "Graph manifest to use")->check(CLI::ExistingFile);
}

void add_overrides(CLI::App* cmd, Overrides& o, bool training) {
    cmd->add_option("--per-role", o.per_role, "Training pairs per role");
    cmd->add_option("--eval-per-set", o.eval_per_set, "Pairs per evaluation set");
    cmd->add_option("--d-in", o.d_in, "Feature dimension");
    cmd->add_option("--d-out", o.d_out, "Embedding dimension");
    cmd->add_option("--rank", o.rank, "LoRA rank");
    if (!training) return;
    cmd->add_option("--corpus", o.corpus_path, "Corpus JSON to train on instead of generating one")
        ->check(CLI::ExistingFile);
    cmd->add_option("--epochs", o.epochs, "Training epochs");
    cmd->add_option("--lr", o.lr, "AdamW learning rate");
    cmd->add_option("--batch-size", o.batch_size, "Pairs per role per step");
    cmd->add_option("--alpha", o.alpha, "L2 weight");
    cmd->add_option("--beta", o.beta, "L1 weight");
    cmd->add_option("--delta", o.delta, "L4 weight");
    cmd->add_option("--gamma", o.gamma, "Lc weight");
    cmd->add_option("--lambda-adv", o.lambda_adv, "Ladv weight");
    cmd->add_option("--margin", o.margin, "Push margin");
}

std::string default_out(const std::string& command) {
    const char* root = std::getenv("RELUNLEARN_OUT");
    return (fs::path(root && *root ? root : "runs") / command).string();
}

RunConfig resolve_config(const CommonOptions& c, const Overrides* o, const std::string& command) {
    RunConfig cfg = c.config_path.empty() ? default_run_config() : load_run_config(c.config_path);
    if (!c.graph_path.empty()) {
        cfg.graph_spec.reset();
        cfg.graph.reset();
        cfg.graph_manifest = c.graph_path;
    }
    if (c.seed) set_seed(cfg, *c.seed);
    if (c.threads) cfg.threads = *c.threads;
    if (!c.out_dir.empty()) {
        cfg.out_dir = c.out_dir;
    } else if (cfg.out_dir.empty()) {
        cfg.out_dir = default_out(command);
    }
    if (o) {
        if (o->per_role) {
            for (auto role : kAllRoles) cfg.corpus.counts.set(role, *o->per_role);
        }
        if (o->eval_per_set) cfg.corpus.eval_per_set = *o->eval_per_set;
        if (o->d_in) cfg.encoder.d_in = *o->d_in;
        if (o->d_out) cfg.encoder.d_out = *o->d_out;
        if (o->rank) cfg.encoder.rank = *o->rank;
        if (!o->corpus_path.empty()) cfg.corpus_file = o->corpus_path;
        if (o->epochs) cfg.train.epochs = *o->epochs;
        if (o->lr) cfg.train.learning_rate = *o->lr;
        if (o->batch_size) cfg.train.batch_size = *o->batch_size;
        if (o->alpha) cfg.weights.alpha = *o->alpha;
        if (o->beta) cfg.weights.beta = *o->beta;
        if (o->delta) cfg.weights.delta = *o->delta;
        if (o->gamma) cfg.weights.gamma = *o->gamma;
        if (o->lambda_adv) cfg.weights.lambda_adv = *o->lambda_adv;
        if (o->margin) cfg.weights.push_margin = *o->margin;
    }
    validate_run_config(cfg);
    return cfg;
}

std::string in_out(const RunConfig& cfg, const std::string& name) { return (fs::path(cfg.out_dir) / name).string(); }

void write_manifest(const RunConfig& cfg) {
    const std::string path = in_out(cfg, "run_manifest.json");
    write_file(path, emit_run_manifest(cfg));
    std::cout << "wrote " << path << "\n";
}

// ---------------------------------------------------------------- graph

struct GraphArgs {
    std::string spec_path;
    std::string subject, relation, object, alt_relation;
    std::vector<std::string> subject_neighbors, object_neighbors, neutral;
};

Triple parse_triple_flag(const std::string& text) {
    const auto a = text.find('|');
    const auto b = a == std::string::npos ? a : text.find('|', a + 1);
    if (b == std::string::npos || text.find('|', b + 1) != std::string::npos) {
        throw Error(ErrorCode::kInvalidArgument, "expected subject|relation|object, got '" + text + "'");
    }
    return {text.substr(0, a), text.substr(a + 1, b - a - 1), text.substr(b + 1)};
}

int cmd_graph(const CommonOptions& common, const GraphArgs& g) {
    RunConfig cfg = resolve_config(common, nullptr, "graph");
    const bool from_flags = !g.subject.empty() || !g.relation.empty() || !g.object.empty();
    if (from_flags || !g.spec_path.empty()) {
        GraphSpec spec;
        if (!g.spec_path.empty()) {
            spec = parse_graph_spec(read_file(g.spec_path));
        } else {
            if (g.subject.empty() || g.relation.empty() || g.object.empty()) {
                throw Error(ErrorCode::kInvalidArgument, "--subject, --relation and --object go together");
            }
            spec.forget = {g.subject, g.relation, g.object};
            spec.subject_neighbors = g.subject_neighbors;
            spec.object_neighbors = g.object_neighbors;
            spec.alt_relation = g.alt_relation;
            for (const auto& n : g.neutral) spec.neutral_edges.push_back(parse_triple_flag(n));
        }
        cfg.graph_spec = spec;
        cfg.graph_manifest.reset();
        cfg.graph.reset();
    }
    const RelationGraph graph = resolve_graph(cfg);
    const RoleAssignment roles = assign_roles(graph);
    const std::string path = in_out(cfg, "graph.json");
    write_file(path, emit_graph(graph));
    std::cout << "graph: " << graph.nodes.size() << " nodes, " << graph.edges.size() << " edges; forget edge "
              << roles.l3_edge << ", " << roles.l1_edges.size() << " safe, " << roles.l4_edges.size() << " neutral\n"
              << "wrote " << path << "\n";
    return 0;
}

// ---------------------------------------------------------------- corpus

int cmd_corpus(const CommonOptions& common, const Overrides& o, const std::string& import_path) {
    const RunConfig cfg = resolve_config(common, &o, "corpus");
    const RelationGraph graph = resolve_graph(cfg);
    Corpus corpus = generate_corpus(graph, cfg.corpus);
    if (!import_path.empty()) {
        Corpus imported = import_manifest(import_path, cfg.encoder.d_in);
        corpus.train = std::move(imported.train);
    }
    if (const auto bad = disjointness_violations(corpus); !bad.empty()) {
        throw Error(ErrorCode::kInvalidArgument, "evaluation pair leaks into training: " + bad.front());
    }
    const Featurizer f = make_encoder(cfg.encoder).featurizer();
    std::vector<ExamplePair> cached;
    for (auto role : kAllRoles) {
        for (ExamplePair p : corpus.role(role)) {
            if (!p.text_features) p.text_features = f.text(p.caption).values;
            if (!p.image_features) p.image_features = f.image(p.scene).values;
            cached.push_back(std::move(p));
        }
    }
    write_file(in_out(cfg, "corpus.json"), emit_corpus(corpus));
    write_file(in_out(cfg, "embeddings.tsv"), emit_embedding_manifest(cached, cfg.encoder.d_in));
    for (auto role : kAllRoles) std::cout << to_string(role) << ": " << corpus.role(role).size() << " pairs\n";
    std::cout << corpus.attacks.size() << " attack sets, " << corpus.preservation.size() << " preservation sets, "
              << corpus.eval_anchors.size() << " held-out anchors\n"
              << "wrote " << in_out(cfg, "corpus.json") << "\nwrote " << in_out(cfg, "embeddings.tsv") << "\n";
    write_manifest(cfg);
    return 0;
}

// ---------------------------------------------------------------- train

int cmd_train(const CommonOptions& common, const Overrides& o) {
    const RunConfig cfg = resolve_config(common, &o, "train");
    const RelationGraph graph = resolve_graph(cfg);
    const Corpus corpus = resolve_corpus(cfg, graph);
    const EncoderState initial = make_encoder(cfg.encoder);
    const TrainResult result = train(initial, featurize(corpus, initial), cfg.weights, cfg.train);

    for (std::size_t e = 0; e < result.log.epoch_seconds.size(); ++e) {
        std::printf("epoch %zu: l3 %.4f  lc %.4f  ladv %.4f  pull %.4f  total %.4f  (%.2fs)\n", e + 1,
                    epoch_mean(result.log, e, &LossBreakdown::l3), epoch_mean(result.log, e, &LossBreakdown::lc),
                    epoch_mean(result.log, e, &LossBreakdown::ladv),
                    epoch_mean(result.log, e, &LossBreakdown::l1) + epoch_mean(result.log, e, &LossBreakdown::l2) +
                        epoch_mean(result.log, e, &LossBreakdown::l4),
                    epoch_mean(result.log, e, &LossBreakdown::total), result.log.epoch_seconds[e]);
    }
    const double last_lc = epoch_mean(result.log, result.log.epoch_seconds.size() - 1, &LossBreakdown::lc);
    if (last_lc > cfg.train.lc_ceiling) {
        std::printf("warning: last-epoch mean lc %.4f exceeds the ceiling %.4f\n", last_lc, cfg.train.lc_ceiling);
    }
    write_file(in_out(cfg, "checkpoint.bin"), serialize_checkpoint(result.state, &result.optimizer));
    write_file(in_out(cfg, "loss_curve.tsv"), emit_loss_curve(result.log.records));
    std::cout << "wrote " << in_out(cfg, "checkpoint.bin") << "\nwrote " << in_out(cfg, "loss_curve.tsv") << "\n";
    write_manifest(cfg);
    return 0;
}

// ---------------------------------------------------------------- eval

int cmd_eval(const CommonOptions& common, const Overrides& o, const std::string& checkpoint, const std::string& name) {
    const RunConfig cfg = resolve_config(common, &o, "eval");
    const Checkpoint ck = load_checkpoint(checkpoint);
    const EncoderState adapted = restore_encoder(ck);
    const RelationGraph graph = resolve_graph(cfg);
    const Corpus corpus = resolve_corpus(cfg, graph);
    const EncoderState base = reset_adapters(adapted);
    const std::vector<ReportEntry> entries = {{name, evaluate(base, adapted, corpus, cfg.threads), std::nullopt}};
    for (const auto& p : emit_report(entries, cfg.out_dir)) std::cout << "wrote " << p << "\n";
    std::cout << render_text(entries);
    write_manifest(cfg);
    return 0;
}

// ---------------------------------------------------------------- ablate

int cmd_ablate(const CommonOptions& common, const Overrides& o, const std::vector<std::string>& variant_flags) {
    RunConfig cfg = resolve_config(common, &o, "ablate");
    if (!variant_flags.empty()) cfg.variants = variant_flags;
    validate_run_config(cfg);
    std::vector<AblationVariant> variants;
    for (const auto& v : cfg.variants) variants.push_back(named_variant(v, cfg.weights));

    const RelationGraph graph = resolve_graph(cfg);
    const Corpus corpus = resolve_corpus(cfg, graph);
    const EncoderState initial = make_encoder(cfg.encoder);
    const AblationReport report = ablation_run(initial, corpus, variants, cfg.train, cfg.threads);
    for (const auto& v : report.variants) {
        write_file(in_out(cfg, v.variant.name + ".ckpt"), serialize_checkpoint(v.state));
    }
    for (const auto& p : emit_report(report_entries(report), cfg.out_dir)) std::cout << "wrote " << p << "\n";
    std::cout << render_text(report_entries(report));
    write_manifest(cfg);
    return 0;
}

// ---------------------------------------------------------------- gradcheck

struct GradCheckArgs {
    int d_in = 16;
    int d_out = 8;
    int rank = 2;
    double eps = 1e-5;
    int seeds = 3;
    int per_role = 4;
    double tolerance = 1e-4;
};

int cmd_gradcheck(const CommonOptions& common, const GradCheckArgs& a) {
    const LossWeights weights = common.config_path.empty() ? LossWeights{} : load_run_config(common.config_path).weights;
    const std::uint64_t first = common.seed.value_or(1);
    double worst = 0.0;
    for (int i = 0; i < a.seeds; ++i) {
        EncoderConfig c;
        c.d_in = a.d_in;
        c.d_out = a.d_out;
        c.rank = a.rank;
        c.seed = first + static_cast<std::uint64_t>(i);
        const EncoderState state = with_random_adapters(make_encoder(c), c.seed);
        const LossBatch batch = random_batch(state, static_cast<std::size_t>(a.per_role), c.seed);
        const GradCheckResult r = grad_check(state, batch, weights, a.eps);
        std::printf("seed %llu: max relative error %.3e over %zu coordinates (worst %s)\n",
                    static_cast<unsigned long long>(c.seed), r.max_relative_error, r.coordinates,
                    r.worst_coordinate.c_str());
        worst = std::max(worst, r.max_relative_error);
    }
    const bool ok = worst <= a.tolerance;
    std::printf("%s: max relative error %.3e (tolerance %.1e)\n", ok ? "PASS" : "FAIL", worst, a.tolerance);
    return ok ? 0 : 1;
}

// ---------------------------------------------------------------- report

int cmd_report(const std::string& input, const std::string& out_dir) {
    fs::path path(input);
    if (fs::is_directory(path)) path /= "report.json";
    const std::vector<ReportEntry> entries = parse_report(read_file(path.string()));
    std::cout << render_text(entries);
    if (!out_dir.empty()) {
        for (const auto& p : emit_report(entries, out_dir)) std::cout << "wrote " << p << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Relation-aware unlearning on a toy dual encoder"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "relunlearn 0.1.0");

    CommonOptions common;
    Overrides overrides;

    auto* graph_cmd = app.add_subcommand("graph", "Build and write a relation graph manifest");
    GraphArgs graph_args;
    add_common(graph_cmd, common, false);
    graph_cmd->add_option("--spec", graph_args.spec_path, "Graph spec JSON")->check(CLI::ExistingFile);
    graph_cmd->add_option("--subject", graph_args.subject, "Forget-tuple subject (O1)");
    graph_cmd->add_option("--relation", graph_args.relation, "Forget relation (R1)");
    graph_cmd->add_option("--object", graph_args.object, "Forget-tuple object (O2)");
    graph_cmd->add_option("--subject-neighbor", graph_args.subject_neighbors, "Object that keeps R1 with O2");
    graph_cmd->add_option("--object-neighbor", graph_args.object_neighbors, "Object that O1 keeps R1 with");
    graph_cmd->add_option("--alt-relation", graph_args.alt_relation, "Safe relation between O1 and O2");
    graph_cmd->add_option("--neutral", graph_args.neutral, "Neutral edge as subject|relation|object");

    auto* corpus_cmd = app.add_subcommand("corpus", "Generate the training corpus, evaluation sets and feature cache");
    std::string import_path;
    add_common(corpus_cmd, common);
    add_overrides(corpus_cmd, overrides, false);
    corpus_cmd->add_option("--import", import_path, "Embedding manifest whose rows replace the training roles")
        ->check(CLI::ExistingFile);

    auto* train_cmd = app.add_subcommand("train", "Train the LoRA adapters and write a checkpoint");
    add_common(train_cmd, common);
    add_overrides(train_cmd, overrides, true);

    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint against the frozen base");
    std::string checkpoint, entry_name = "full";
    add_common(eval_cmd, common);
    add_overrides(eval_cmd, overrides, true);
    eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint from `train`")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--name", entry_name, "Report entry name");

    auto* ablate_cmd = app.add_subcommand("ablate", "Train and evaluate loss ablations from one initial state");
    std::vector<std::string> variants;
    add_common(ablate_cmd, common);
    add_overrides(ablate_cmd, overrides, true);
    ablate_cmd->add_option("--variants", variants, "Variants, e.g. baseline,full,minus-lc")->delimiter(',');

    auto* gc_cmd = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
    GradCheckArgs gc;
    gc_cmd->add_option("-c,--config", common.config_path, "Run config whose loss weights to check")
        ->check(CLI::ExistingFile);
    gc_cmd->add_option("--seed", common.seed, "First seed");
    gc_cmd->add_option("--d-in", gc.d_in, "Feature dimension");
    gc_cmd->add_option("--d-out", gc.d_out, "Embedding dimension");
    gc_cmd->add_option("--rank", gc.rank, "LoRA rank");
    gc_cmd->add_option("--eps", gc.eps, "Finite-difference step");
    gc_cmd->add_option("--seeds", gc.seeds, "Number of seeds")->check(CLI::PositiveNumber);
    gc_cmd->add_option("--per-role", gc.per_role, "Random pairs per role")->check(CLI::PositiveNumber);
    gc_cmd->add_option("--tolerance", gc.tolerance, "Maximum relative error");

    auto* report_cmd = app.add_subcommand("report", "Print a report and optionally re-emit its tables");
    std::string report_input, report_out;
    report_cmd->add_option("input", report_input, "report.json or the directory holding it")->required();
    report_cmd->add_option("-o,--out", report_out, "Directory to re-emit tables into");

    CLI11_PARSE(app, argc, argv);

    try {
        if (graph_cmd->parsed()) return cmd_graph(common, graph_args);
        if (corpus_cmd->parsed()) return cmd_corpus(common, overrides, import_path);
        if (train_cmd->parsed()) return cmd_train(common, overrides);
        if (eval_cmd->parsed()) return cmd_eval(common, overrides, checkpoint, entry_name);
        if (ablate_cmd->parsed()) return cmd_ablate(common, overrides, variants);
        if (gc_cmd->parsed()) return cmd_gradcheck(common, gc);
        if (report_cmd->parsed()) return cmd_report(report_input, report_out);
    } catch (const Error& e) {
        std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
