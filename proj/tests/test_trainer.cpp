#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "relunlearn/trainer.hpp"
#include "test_support.hpp"

using namespace relunlearn;
using namespace relunlearn::testing;

namespace {

Eigen::MatrixXd scalar(double x) { return Eigen::MatrixXd::Constant(1, 1, x); }

FeaturizedCorpus toy_corpus(int per_role, const EncoderState& state, std::uint64_t seed = 7) {
    CorpusConfig c;
    c.seed = seed;
    for (ExampleRole r : kAllRoles) c.counts.set(r, per_role);
    c.eval_per_set = 4;
    return featurize(generate_corpus(build_unlearn_graph(hamburger_spec()), c), state);
}

EncoderConfig tiny_encoder(std::uint64_t seed = 3) {
    EncoderConfig c;
    c.d_in = 64;
    c.d_out = 16;
    c.rank = 4;
    c.seed = seed;
    return c;
}

std::string temp_path(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "relunlearn-tests";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("AdamW single-step arithmetic") {
    TrainConfig c;
    c.weight_decay = 0.0;
    SUBCASE("unit gradient, fresh moments") {
        Eigen::MatrixXd theta = scalar(1.0), m = scalar(0.0), v = scalar(0.0);
        adamw_update(theta, m, v, scalar(1.0), c, 1);
        // m_hat = v_hat = 1, so the step is lr / (1 + eps).
        CHECK(theta(0, 0) == doctest::Approx(1.0 - 1e-3 / (1.0 + 1e-8)).epsilon(1e-15));
        CHECK(theta(0, 0) == doctest::Approx(0.999).epsilon(1e-10));
        CHECK(m(0, 0) == doctest::Approx(0.1));
        CHECK(v(0, 0) == doctest::Approx(0.001));
    }
    SUBCASE("zero gradient without decay leaves parameters unchanged") {
        Eigen::MatrixXd theta = scalar(0.37), m = scalar(0.0), v = scalar(0.0);
        adamw_update(theta, m, v, scalar(0.0), c, 1);
        CHECK(theta(0, 0) == 0.37);
    }
    SUBCASE("decoupled decay only") {
        c.weight_decay = 0.01;
        Eigen::MatrixXd theta = scalar(1.0), m = scalar(0.0), v = scalar(0.0);
        adamw_update(theta, m, v, scalar(0.0), c, 1);
        CHECK(theta(0, 0) == doctest::Approx(0.99999).epsilon(1e-15));
    }
    SUBCASE("second step matches a hand recurrence") {
        Eigen::MatrixXd theta = scalar(1.0), m = scalar(0.0), v = scalar(0.0);
        adamw_update(theta, m, v, scalar(1.0), c, 1);
        adamw_update(theta, m, v, scalar(-2.0), c, 2);
        const double m2 = 0.9 * 0.1 + 0.1 * -2.0;
        const double v2 = 0.999 * 0.001 + 0.001 * 4.0;
        const double mh = m2 / (1 - 0.81), vh = v2 / (1 - 0.999 * 0.999);
        const double expected = 1.0 - 1e-3 / (1.0 + 1e-8) - 1e-3 * mh / (std::sqrt(vh) + 1e-8);
        CHECK(theta(0, 0) == doctest::Approx(expected).epsilon(1e-14));
    }
}

TEST_CASE("train config validation") {
    TrainConfig c;
    c.epochs = 0;
    CHECK(code_of([&] { validate_train_config(c); }) == ErrorCode::kInvalidArgument);
    c = TrainConfig{};
    c.learning_rate = -1;
    CHECK(code_of([&] { validate_train_config(c); }) == ErrorCode::kInvalidArgument);
    c = TrainConfig{};
    c.batch_size = 0;
    CHECK(code_of([&] { validate_train_config(c); }) == ErrorCode::kInvalidArgument);
    c = TrainConfig{};
    c.beta1 = 1.0;
    CHECK(code_of([&] { validate_train_config(c); }) == ErrorCode::kInvalidArgument);
    const EncoderState s = make_encoder(tiny_encoder());
    TrainConfig zero;
    zero.epochs = 0;
    CHECK(code_of([&] { train(s, toy_corpus(8, s), tuned_weights(), zero); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("batches") {
    const EncoderState s = make_encoder(tiny_encoder());
    const FeaturizedCorpus fc = toy_corpus(32, s);
    const auto active = active_roles(LossWeights{});
    const auto plans = make_batches(fc, 32, 7, 0, active);
    REQUIRE(plans.size() == 1);
    for (ExampleRole r : kAllRoles) {
        auto idx = plans[0].indices[static_cast<std::size_t>(r)];
        CHECK(idx.size() == 32);
        std::sort(idx.begin(), idx.end());
        CHECK(std::adjacent_find(idx.begin(), idx.end()) == idx.end());
    }
    const auto again = make_batches(fc, 32, 7, 0, active);
    CHECK(again[0].indices == plans[0].indices);
    CHECK(make_batches(fc, 32, 7, 1, active)[0].indices != plans[0].indices);
    CHECK(make_batches(fc, 8, 7, 0, active).size() == 4);

    try {
        make_batches(fc, 64, 7, 0, active);
        FAIL("oversized batch accepted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kBatchTooLarge);
        CHECK(std::string(e.what()).find("smaller") != std::string::npos);
    }

    // Inactive roles are skipped.
    LossWeights baseline = tuned_weights();
    baseline.alpha = baseline.beta = baseline.delta = baseline.gamma = baseline.lambda_adv = 0.0;
    const auto only_l3 = active_roles(baseline);
    CHECK(only_l3[static_cast<std::size_t>(ExampleRole::kL3)]);
    CHECK_FALSE(only_l3[static_cast<std::size_t>(ExampleRole::kL1)]);
    // Inactive roles are still sliced when present, so their terms are
    // logged, but neither their size nor their absence is an error.
    FeaturizedCorpus sparse = fc;
    sparse.roles[static_cast<std::size_t>(ExampleRole::kL1)].resize(4);
    sparse.roles[static_cast<std::size_t>(ExampleRole::kL4)].clear();
    const auto lone = make_batches(sparse, 16, 7, 0, only_l3);
    REQUIRE(lone.size() == 2);
    const LossBatch batch = gather(sparse, lone[0]);
    CHECK(batch.l1.size() == 4);
    CHECK(batch.l4.empty());
    CHECK(batch.l3.size() == 16);
    CHECK(code_of([&] { make_batches(sparse, 16, 7, 0, active); }) == ErrorCode::kBatchTooLarge);
}

TEST_CASE("empty active role is an error") {
    const EncoderState s = make_encoder(tiny_encoder());
    FeaturizedCorpus fc = toy_corpus(8, s);
    fc.roles[static_cast<std::size_t>(ExampleRole::kL4)].clear();
    CHECK(code_of([&] { make_batches(fc, 4, 1, 0, active_roles(LossWeights{})); }) == ErrorCode::kMissingRole);
}

TEST_CASE("featurize rejects imported vectors of the wrong size") {
    const EncoderState s = make_encoder(tiny_encoder());
    ExamplePair p{"a kid", {{"kid"}, std::nullopt, {}, "photo", 0}, ExampleRole::kL2, "external",
                  Eigen::VectorXd::Ones(10), Eigen::VectorXd::Ones(10)};
    CHECK(code_of([&] { featurize_pair(p, s.featurizer()); }) == ErrorCode::kDimensionMismatch);
    p.text_features = Eigen::VectorXd::Ones(64);
    p.image_features = Eigen::VectorXd::Ones(64);
    CHECK(featurize_pair(p, s.featurizer()).text == Eigen::VectorXd::Ones(64));
}

TEST_CASE("one step moves the adapters and leaves the base alone") {
    const EncoderState initial = make_encoder(tiny_encoder());
    const Eigen::MatrixXd w_text = initial.base->text;
    const FeaturizedCorpus fc = toy_corpus(16, initial);
    const LossBatch batch = gather(fc, make_batches(fc, 16, 1, 0, active_roles(tuned_weights()))[0]);
    EncoderState s = initial;
    OptimizerState opt = OptimizerState::fresh(s);
    const LossBreakdown b = step(s, opt, batch, tuned_weights(), TrainConfig{});
    CHECK(opt.step == 1);
    CHECK(b.lc == 0.0);
    CHECK(s.lora_text.b != initial.lora_text.b);
    CHECK(s.base->text == w_text);
    bool moved = false;
    for (const auto& p : batch.l3) {
        const auto base = embed(initial, {p.text, Modality::kText}, EmbedMode::kAdapted);
        const auto adapted = embed(s, {p.text, Modality::kText}, EmbedMode::kAdapted);
        moved |= base.values != adapted.values;
    }
    CHECK(moved);
}

TEST_CASE("non-finite parameters and gradients abort with a diagnosis") {
    const EncoderState initial = make_encoder(tiny_encoder());
    const FeaturizedCorpus fc = toy_corpus(8, initial);
    LossBatch batch = gather(fc, make_batches(fc, 8, 1, 0, active_roles(LossWeights{}))[0]);
    EncoderState s = initial;
    OptimizerState opt = OptimizerState::fresh(s);
    s.lora_text.a(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK(code_of([&] { step(s, opt, batch, LossWeights{}, TrainConfig{}); }) == ErrorCode::kNonFinite);

    s = initial;
    batch.l4.front().text[0] = std::numeric_limits<double>::infinity();
    try {
        step(s, opt, batch, LossWeights{}, TrainConfig{});
        FAIL("non-finite input accepted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kNonFinite);
        CHECK(std::string(e.what()).find("L4") != std::string::npos);
    }
}

TEST_CASE("training lowers L3, keeps the base frozen and is deterministic") {
    const EncoderState initial = make_encoder(tiny_encoder());
    const BaseProjections before = *initial.base;
    const FeaturizedCorpus fc = toy_corpus(128, initial);
    TrainConfig c;
    const TrainResult a = train(initial, fc, tuned_weights(), c);
    const TrainResult b = train(initial, fc, tuned_weights(), c);
    CHECK(a.log.records.size() == 3 * 4);
    CHECK(a.log.epoch_seconds.size() == 3);
    CHECK(epoch_mean(a.log, 2, &LossBreakdown::l3) < epoch_mean(a.log, 0, &LossBreakdown::l3));
    CHECK(a.log.records.back().losses.l3 < a.log.records.front().losses.l3);
    CHECK(a.state.base->text == before.text);
    CHECK(a.state.base->image == before.image);
    CHECK(a.state.lora_text.a == b.state.lora_text.a);
    CHECK(a.state.lora_image.b == b.state.lora_image.b);
    CHECK(serialize_checkpoint(a.state, &a.optimizer) == serialize_checkpoint(b.state, &b.optimizer));
    for (const auto& r : a.log.records) {
        const auto& l = r.losses;
        const LossWeights w = tuned_weights();
        REQUIRE(std::abs(l.total - (l.l3 + w.alpha * l.l2 + w.beta * l.l1 + w.delta * l.l4 + w.gamma * l.lc +
                                    w.lambda_adv * l.ladv)) <= 1e-12);
    }
    c.seed = 8;
    CHECK(train(initial, fc, tuned_weights(), c).state.lora_text.b != a.state.lora_text.b);
    CHECK(code_of([&] { epoch_mean(a.log, 5, &LossBreakdown::l3); }) == ErrorCode::kEmptySet);
}

TEST_CASE("gradient clipping bounds the update") {
    const EncoderState initial = make_encoder(tiny_encoder());
    const FeaturizedCorpus fc = toy_corpus(8, initial);
    const LossBatch batch = gather(fc, make_batches(fc, 8, 1, 0, active_roles(LossWeights{}))[0]);
    TrainConfig c;
    c.max_grad_norm = 1e-9;
    c.weight_decay = 0.0;
    EncoderState s = initial;
    OptimizerState opt = OptimizerState::fresh(s);
    step(s, opt, batch, LossWeights{}, c);
    // Adam normalizes the step, so clipping shows up in the moments.
    CHECK(std::sqrt(opt.m.squared_norm()) <= 1e-10 * (1 + 1e-9));
}

TEST_CASE("checkpoint round trip and stable bytes") {
    const EncoderState initial = make_encoder(tiny_encoder());
    const FeaturizedCorpus fc = toy_corpus(16, initial);
    TrainConfig c;
    c.epochs = 1;
    c.batch_size = 8;
    const TrainResult r = train(initial, fc, tuned_weights(), c);
    const std::string path = temp_path("state.ckpt");
    save_checkpoint(r.state, path, &r.optimizer);
    const Checkpoint ck = load_checkpoint(path);
    CHECK(ck.config == r.state.config);
    CHECK(ck.text.a == r.state.lora_text.a);
    CHECK(ck.image.b == r.state.lora_image.b);
    REQUIRE(ck.optimizer.has_value());
    CHECK(ck.optimizer->step == r.optimizer.step);
    CHECK(ck.optimizer->v.b_text == r.optimizer.v.b_text);
    const EncoderState restored = restore_encoder(ck, &r.state.config);
    CHECK(restored.base->text == r.state.base->text);
    CHECK(serialize_checkpoint(restored, &*ck.optimizer) == serialize_checkpoint(r.state, &r.optimizer));
    CHECK_FALSE(deserialize_checkpoint(serialize_checkpoint(r.state)).optimizer.has_value());
}

TEST_CASE("checkpoint corruption") {
    const EncoderState s = with_random_adapters(make_encoder(tiny_encoder()), 1);
    const std::string bytes = serialize_checkpoint(s);
    CHECK(code_of([&] { deserialize_checkpoint(bytes.substr(0, bytes.size() / 2)); }) == ErrorCode::kCorruptFile);
    CHECK(code_of([&] { deserialize_checkpoint(""); }) == ErrorCode::kCorruptFile);
    CHECK(code_of([&] { deserialize_checkpoint(bytes + "x"); }) == ErrorCode::kCorruptFile);
    std::string flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x10;
    CHECK(code_of([&] { deserialize_checkpoint(flipped); }) == ErrorCode::kCorruptFile);
    std::string magic = bytes;
    magic[0] = 'X';
    CHECK(code_of([&] { deserialize_checkpoint(magic); }) == ErrorCode::kCorruptFile);
    std::string version = bytes;
    version[8] = 2;  // u32 version follows the 8-byte magic
    CHECK(code_of([&] { deserialize_checkpoint(version); }) == ErrorCode::kVersionMismatch);

    // A checkpoint from other dimensions does not restore into this encoder.
    EncoderConfig other = tiny_encoder();
    other.d_out = 8;
    const Checkpoint ck = deserialize_checkpoint(serialize_checkpoint(make_encoder(other)));
    const EncoderConfig expected = tiny_encoder();
    CHECK(code_of([&] { restore_encoder(ck, &expected); }) == ErrorCode::kDimensionMismatch);
    CHECK(code_of([&] { load_checkpoint(temp_path("missing.ckpt")); }) == ErrorCode::kIo);
}

TEST_CASE("property: deserialize(serialize(s)) == s over random states") {
    std::mt19937_64 rng(99);
    for (int i = 0; i < 120; ++i) {
        std::optional<OptimizerState> opt;
        const EncoderState s = random_state(rng, opt, i % 2 == 1);
        const EncoderConfig& c = s.config;
        const std::string bytes = serialize_checkpoint(s, opt ? &*opt : nullptr);
        const Checkpoint ck = deserialize_checkpoint(bytes);
        REQUIRE(ck.config == c);
        REQUIRE(ck.text.a == s.lora_text.a);
        REQUIRE(ck.text.b == s.lora_text.b);
        REQUIRE(ck.image.a == s.lora_image.a);
        REQUIRE(ck.image.b == s.lora_image.b);
        REQUIRE(ck.text.scale == s.lora_text.scale);
        REQUIRE(ck.optimizer.has_value() == opt.has_value());
        const EncoderState back = restore_encoder(ck);
        REQUIRE(serialize_checkpoint(back, ck.optimizer ? &*ck.optimizer : nullptr) == bytes);
    }
}

}  // TEST_SUITE
