#include <doctest.h>

#include <filesystem>

#include "relunlearn/report.hpp"
#include "relunlearn/run_config.hpp"
#include "test_support.hpp"

using namespace relunlearn;
using namespace relunlearn::testing;

TEST_SUITE("cli") {

TEST_CASE("defaults") {
    const RunConfig c = default_run_config();
    REQUIRE(c.graph_spec.has_value());
    CHECK(c.graph_spec->forget == Triple{"kid", "eating", "hamburger"});
    CHECK(c.weights == tuned_weights());
    CHECK(c.train.learning_rate == 1e-3);
    CHECK(c.train.batch_size == 32);
    CHECK(c.train.epochs == 3);
    CHECK(c.train.weight_decay == 0.01);
    CHECK(c.variants == std::vector<std::string>{"baseline", "full", "minus-lc", "minus-ladv"});
    validate_run_config(c);
    CHECK(parse_run_config("{}").weights == c.weights);
}

TEST_CASE("overlays and the run seed") {
    const RunConfig c = parse_run_config(R"({
        "seed": 11,
        "corpus": {"seed": 3, "counts": {"L1": 64}, "eval_per_set": 5},
        "encoder": {"d_in": 256, "rank": 4},
        "weights": {"gamma": 2.5, "push_margin": -0.3},
        "train": {"epochs": 2, "learning_rate": 0.01}
    })");
    CHECK(c.corpus.seed == 11);
    CHECK(c.encoder.seed == 11);
    CHECK(c.train.seed == 11);
    CHECK(c.corpus.counts.l1 == 64);
    CHECK(c.corpus.counts.l2 == 1024);
    CHECK(c.corpus.eval_per_set == 5);
    CHECK(c.encoder.d_in == 256);
    CHECK(c.encoder.d_out == 64);
    CHECK(c.weights.gamma == 2.5);
    CHECK(c.weights.alpha == tuned_weights().alpha);
    CHECK(c.weights.push_margin == -0.3);
    CHECK(c.train.epochs == 2);
    CHECK(c.train.learning_rate == 0.01);
}

TEST_CASE("strict parsing") {
    auto field_of = [](const std::string& text) {
        try {
            parse_run_config(text);
        } catch (const ParseError& e) {
            return e.field();
        }
        FAIL("accepted: " << text);
        return std::string();
    };
    CHECK(field_of(R"({"trian": {}})") == "$.trian");
    CHECK(field_of(R"({"train": {"epoch": 3}})") == "$.train.epoch");
    CHECK(field_of(R"({"train": {"epochs": "3"}})") == "$.train.epochs");
    CHECK(field_of(R"({"corpus": {"counts": {"L9": 1}}})") == "$.corpus.counts.L9");
    CHECK(field_of(R"({"corpus": {"eval_styles": ["photo"]}})") == "$.corpus.eval_styles");
    CHECK(field_of(R"({"graph_spec": {}, "graph_manifest": "g.json"})") == "$");
    CHECK(field_of(R"({"graph_spec": {"alt_relation": "x"}})") == "$.graph_spec.forget");
    CHECK_THROWS_AS(parse_run_config("{"), ParseError);
}

TEST_CASE("validation") {
    RunConfig c = default_run_config();
    c.graph_spec.reset();
    CHECK(code_of([&] { validate_run_config(c); }) == ErrorCode::kInvalidArgument);
    c = default_run_config();
    c.variants = {"full", "minus-magic"};
    CHECK(code_of([&] { validate_run_config(c); }) == ErrorCode::kInvalidArgument);
    c = default_run_config();
    c.train.epochs = 0;
    CHECK(code_of([&] { validate_run_config(c); }) == ErrorCode::kInvalidArgument);
    c = default_run_config();
    c.threads = -2;
    CHECK(code_of([&] { validate_run_config(c); }) == ErrorCode::kInvalidArgument);
    c = default_run_config();
    c.graph_spec->forget.object = "kid";
    CHECK(code_of([&] { validate_run_config(c); }) == ErrorCode::kDuplicateLabel);
}

TEST_CASE("run manifest reproduces the resolved configuration") {
    RunConfig c = default_run_config();
    c.corpus.counts.l4 = 77;
    c.encoder.rank = 3;
    c.train.lc_ceiling = 0.02;
    c.weights.lambda_adv = 0.5;
    c.variants = {"full", "minus-l2"};
    c.out_dir = "runs/x";
    c.threads = 3;
    set_seed(c, 123);
    const std::string manifest = emit_run_manifest(c);
    const RunConfig back = parse_run_config(manifest);
    CHECK(back.graph.has_value());
    CHECK_FALSE(back.graph_spec.has_value());
    CHECK(*back.graph == resolve_graph(c));
    CHECK(back.corpus == c.corpus);
    CHECK(back.encoder == c.encoder);
    CHECK(back.weights == c.weights);
    CHECK(back.train == c.train);
    CHECK(back.variants == c.variants);
    CHECK(back.out_dir == "runs/x");
    CHECK(back.threads == 3);
    CHECK(emit_run_manifest(back) == manifest);
}

TEST_CASE("graph sources resolve to the same graph") {
    const RelationGraph expected = build_unlearn_graph(hamburger_spec());
    const auto dir = std::filesystem::temp_directory_path() / "relunlearn-tests" / "cfg";
    const std::string graph_path = (dir / "graph.json").string();
    write_file(graph_path, emit_graph(expected));
    const std::string config_path = (dir / "run.json").string();
    write_file(config_path, "{\"graph_manifest\": \"" + graph_path + "\"}");
    const RunConfig from_file = load_run_config(config_path);
    CHECK(resolve_graph(from_file) == expected);
    CHECK(resolve_graph(parse_run_config("{\"graph_spec\": " + emit_graph_spec(hamburger_spec()) + "}")) == expected);
    CHECK(parse_graph_spec(emit_graph_spec(hamburger_spec())) == hamburger_spec());
    CHECK(code_of([] { load_run_config("/nonexistent/run.json"); }) == ErrorCode::kIo);
}

TEST_CASE("corpus file source") {
    RunConfig c = default_run_config();
    c.corpus.counts = {4, 4, 4, 4, 4, 4};
    c.corpus.eval_per_set = 3;
    const RelationGraph g = resolve_graph(c);
    const Corpus generated = resolve_corpus(c, g);
    const auto path = (std::filesystem::temp_directory_path() / "relunlearn-tests" / "cfg" / "corpus.json").string();
    write_file(path, emit_corpus(generated));
    c.corpus_file = path;
    CHECK(resolve_corpus(c, g) == generated);
    c.corpus_file = path + ".missing";
    CHECK(code_of([&] { resolve_corpus(c, g); }) == ErrorCode::kIo);
}

}  // TEST_SUITE
