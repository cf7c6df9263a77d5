#include "relunlearn/unlearn_loss.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>

#include "relunlearn/error.hpp"
#include "relunlearn/hashing.hpp"

namespace relunlearn {

void validate_weights(const LossWeights& w) {
    for (double v : {w.alpha, w.beta, w.delta, w.gamma, w.lambda_adv}) {
        if (!std::isfinite(v) || v < 0.0) throw Error(ErrorCode::kInvalidArgument, "loss weights must be finite and >= 0");
    }
    if (!(w.push_margin >= -1.0 && w.push_margin <= 1.0)) {
        throw Error(ErrorCode::kInvalidArgument, "push margin must lie in [-1, 1]");
    }
}

LossWeights tuned_weights() {
    LossWeights w;
    w.alpha = 0.1;
    w.beta = 0.1;
    w.delta = 0.1;
    w.gamma = 20.0;
    w.lambda_adv = 1.0;
    return w;
}

GradientSet GradientSet::zeros_like(const EncoderState& s) {
    return {Eigen::MatrixXd::Zero(s.lora_text.a.rows(), s.lora_text.a.cols()),
            Eigen::MatrixXd::Zero(s.lora_text.b.rows(), s.lora_text.b.cols()),
            Eigen::MatrixXd::Zero(s.lora_image.a.rows(), s.lora_image.a.cols()),
            Eigen::MatrixXd::Zero(s.lora_image.b.rows(), s.lora_image.b.cols())};
}

GradientSet& GradientSet::operator+=(const GradientSet& o) {
    a_text += o.a_text;
    b_text += o.b_text;
    a_image += o.a_image;
    b_image += o.b_image;
    return *this;
}

GradientSet& GradientSet::operator*=(double k) {
    a_text *= k;
    b_text *= k;
    a_image *= k;
    b_image *= k;
    return *this;
}

void GradientSet::add_scaled(const GradientSet& o, double k) {
    a_text += k * o.a_text;
    b_text += k * o.b_text;
    a_image += k * o.a_image;
    b_image += k * o.b_image;
}

double GradientSet::max_abs() const {
    return std::max({a_text.cwiseAbs().maxCoeff(), b_text.cwiseAbs().maxCoeff(), a_image.cwiseAbs().maxCoeff(),
                     b_image.cwiseAbs().maxCoeff()});
}

double GradientSet::squared_norm() const {
    return a_text.squaredNorm() + b_text.squaredNorm() + a_image.squaredNorm() + b_image.squaredNorm();
}

bool GradientSet::all_finite() const {
    return a_text.allFinite() && b_text.allFinite() && a_image.allFinite() && b_image.allFinite();
}

AnchorExample make_anchor(const EncoderState& state, Eigen::VectorXd text, Eigen::VectorXd image) {
    Projector base(state, EmbedMode::kBase);
    AnchorExample a;
    a.base_text = base.embed(Modality::kText, text);
    a.base_image = base.embed(Modality::kImage, image);
    a.text = std::move(text);
    a.image = std::move(image);
    return a;
}

namespace {

// Accumulates adapter gradients from gradients w.r.t. projected vectors u = W'x:
// dL/dB += s * g (A x)^T and dL/dA += s * (B^T g) x^T.
class GradientSink {
public:
    explicit GradientSink(const EncoderState& state) : state_(state), grad_(GradientSet::zeros_like(state)) {}

    void add(Modality m, const Eigen::VectorXd& g_u, const Eigen::VectorXd& x) {
        const LoraAdapter& lora = state_.lora(m);
        Eigen::MatrixXd& da = m == Modality::kText ? grad_.a_text : grad_.a_image;
        Eigen::MatrixXd& db = m == Modality::kText ? grad_.b_text : grad_.b_image;
        const Eigen::VectorXd ax = lora.a * x;
        const Eigen::VectorXd btg = lora.b.transpose() * g_u;
        db.noalias() += lora.scale * g_u * ax.transpose();
        da.noalias() += lora.scale * btg * x.transpose();
    }

    GradientSet take() { return std::move(grad_); }

private:
    const EncoderState& state_;
    GradientSet grad_;
};

// Same convention as cosine(): identical unit vectors give exactly 1, so
// zero-init adapters produce exact zeros rather than rounding residue.
double unit_dot(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a == b) return 1.0;
    return std::clamp(a.dot(b), -1.0, 1.0);
}

struct PairForward {
    Eigen::VectorXd t;  // unit text embedding
    Eigen::VectorXd i;  // unit image embedding
    double text_norm;
    double image_norm;
    double cos;
};

PairForward forward(const Projector& p, const FeaturePair& pair) {
    Eigen::VectorXd u = p.project(Modality::kText, pair.text);
    Eigen::VectorXd v = p.project(Modality::kImage, pair.image);
    const double nu = u.norm(), nv = v.norm();
    if (!(nu >= kMinProjectedNorm) || !(nv >= kMinProjectedNorm)) {
        throw Error(ErrorCode::kDegenerateOutput, "projected embedding has near-zero norm");
    }
    PairForward f{u / nu, v / nv, nu, nv, 0.0};
    f.cos = unit_dot(f.t, f.i);
    return f;
}

// Adds dL/dcos * dcos/d(theta) for one pair.
void backward_pair(GradientSink& sink, const FeaturePair& pair, const PairForward& f, double dl_dcos) {
    sink.add(Modality::kText, dl_dcos * (f.i - f.cos * f.t) / f.text_norm, pair.text);
    sink.add(Modality::kImage, dl_dcos * (f.t - f.cos * f.i) / f.image_norm, pair.image);
}

TermValue pull_impl(std::span<const FeaturePair> pairs, const EncoderState& state, const Projector& p, bool want_grad) {
    if (pairs.empty()) throw Error(ErrorCode::kEmptySet, "pull loss needs at least one pair");
    GradientSink sink(state);
    const double inv_n = 1.0 / static_cast<double>(pairs.size());
    double sum = 0.0;
    for (const auto& pair : pairs) {
        auto f = forward(p, pair);
        sum += 1.0 - f.cos;
        if (want_grad) backward_pair(sink, pair, f, -inv_n);
    }
    return {sum * inv_n, sink.take()};
}

TermValue push_impl(std::span<const FeaturePair> pairs, const EncoderState& state, double margin, const Projector& p,
                    bool want_grad) {
    if (pairs.empty()) throw Error(ErrorCode::kEmptySet, "push loss needs at least one pair");
    GradientSink sink(state);
    const double inv_n = 1.0 / static_cast<double>(pairs.size());
    double sum = 0.0;
    for (const auto& pair : pairs) {
        auto f = forward(p, pair);
        if (f.cos > margin) {
            sum += f.cos - margin;
            if (want_grad) backward_pair(sink, pair, f, inv_n);
        }
    }
    return {sum * inv_n, sink.take()};
}

TermValue consistency_impl(std::span<const AnchorExample> anchors, const EncoderState& state, const Projector& p,
                           bool want_grad) {
    if (anchors.empty()) throw Error(ErrorCode::kEmptySet, "consistency loss needs at least one anchor");
    GradientSink sink(state);
    const double inv_n = 1.0 / (2.0 * static_cast<double>(anchors.size()));
    double sum = 0.0;
    auto one = [&](Modality m, const Eigen::VectorXd& x, const Eigen::VectorXd& base) {
        Eigen::VectorXd u = p.project(m, x);
        const double nu = u.norm();
        if (!(nu >= kMinProjectedNorm)) throw Error(ErrorCode::kDegenerateOutput, "projected anchor has near-zero norm");
        Eigen::VectorXd a = u / nu;
        const double c = unit_dot(a, base);
        sum += 1.0 - c;
        if (want_grad) sink.add(m, -inv_n * (base - c * a) / nu, x);
    };
    for (const auto& anchor : anchors) {
        one(Modality::kText, anchor.text, anchor.base_text);
        one(Modality::kImage, anchor.image, anchor.base_image);
    }
    return {sum * inv_n, sink.take()};
}

}  // namespace

TermValue pull_loss(std::span<const FeaturePair> pairs, const EncoderState& state) {
    return pull_impl(pairs, state, Projector(state, EmbedMode::kAdapted), true);
}

TermValue push_loss(std::span<const FeaturePair> pairs, const EncoderState& state, double margin) {
    if (!(margin >= -1.0 && margin <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "push margin must lie in [-1, 1]");
    return push_impl(pairs, state, margin, Projector(state, EmbedMode::kAdapted), true);
}

TermValue consistency_loss(std::span<const AnchorExample> anchors, const EncoderState& state) {
    return consistency_impl(anchors, state, Projector(state, EmbedMode::kAdapted), true);
}

TotalLoss total_loss(const LossBatch& batch, const EncoderState& state, const LossWeights& w) {
    validate_weights(w);
    auto require = [](bool non_empty, double weight, const char* term) {
        if (weight > 0.0 && !non_empty) {
            throw Error(ErrorCode::kMissingRole, std::string("loss term ") + term + " has positive weight but no examples");
        }
    };
    if (batch.l3.empty()) throw Error(ErrorCode::kMissingRole, "loss term L3 has no examples");
    require(!batch.l1.empty(), w.beta, "L1");
    require(!batch.l2.empty(), w.alpha, "L2");
    require(!batch.l4.empty(), w.delta, "L4");
    require(!batch.anchors.empty(), w.gamma, "Lc");
    require(!batch.adv.empty(), w.lambda_adv, "Ladv");

    const Projector p(state, EmbedMode::kAdapted);
    TotalLoss out{{}, GradientSet::zeros_like(state)};
    LossBreakdown& b = out.breakdown;

    auto l3 = push_impl(batch.l3, state, w.push_margin, p, true);
    b.l3 = l3.value;
    out.grad += l3.grad;

    auto add_term = [&](double& slot, double weight, auto&& eval) {
        TermValue t = eval(weight > 0.0);
        slot = t.value;
        if (weight > 0.0) out.grad.add_scaled(t.grad, weight);
    };
    if (!batch.l2.empty()) add_term(b.l2, w.alpha, [&](bool g) { return pull_impl(batch.l2, state, p, g); });
    if (!batch.l1.empty()) add_term(b.l1, w.beta, [&](bool g) { return pull_impl(batch.l1, state, p, g); });
    if (!batch.l4.empty()) add_term(b.l4, w.delta, [&](bool g) { return pull_impl(batch.l4, state, p, g); });
    if (!batch.anchors.empty()) add_term(b.lc, w.gamma, [&](bool g) { return consistency_impl(batch.anchors, state, p, g); });
    if (!batch.adv.empty()) {
        add_term(b.ladv, w.lambda_adv, [&](bool g) { return push_impl(batch.adv, state, w.push_margin, p, g); });
    }

    b.total = b.l3 + w.alpha * b.l2 + w.beta * b.l1 + w.delta * b.l4 + w.gamma * b.lc + w.lambda_adv * b.ladv;
    return out;
}

GradCheckResult grad_check(const EncoderState& state, const LossBatch& batch, const LossWeights& weights, double eps) {
    if (!(eps > 0.0 && eps <= 1e-2)) throw Error(ErrorCode::kInvalidArgument, "grad_check eps must lie in (0, 1e-2]");
    const GradientSet analytic = total_loss(batch, state, weights).grad;
    EncoderState probe = state;

    auto loss_at = [&]() {
        const double v = total_loss(batch, probe, weights).breakdown.total;
        if (!std::isfinite(v)) throw Error(ErrorCode::kNonFinite, "non-finite loss during gradient check");
        return v;
    };

    GradCheckResult result;
    auto check = [&](Eigen::MatrixXd& param, const Eigen::MatrixXd& grad, const char* name) {
        for (Eigen::Index i = 0; i < param.rows(); ++i) {
            for (Eigen::Index j = 0; j < param.cols(); ++j) {
                const double saved = param(i, j);
                param(i, j) = saved + eps;
                const double up = loss_at();
                param(i, j) = saved - eps;
                const double down = loss_at();
                param(i, j) = saved;
                const double fd = (up - down) / (2.0 * eps);
                const double an = grad(i, j);
                const double rel = std::abs(an - fd) / std::max(1e-8, std::abs(an) + std::abs(fd));
                ++result.coordinates;
                if (result.worst_coordinate.empty() || rel > result.max_relative_error) {
                    result.max_relative_error = rel;
                    result.worst_coordinate = std::string(name) + "(" + std::to_string(i) + "," + std::to_string(j) + ")";
                }
            }
        }
    };
    check(probe.lora_text.a, analytic.a_text, "text.A");
    check(probe.lora_text.b, analytic.b_text, "text.B");
    check(probe.lora_image.a, analytic.a_image, "image.A");
    check(probe.lora_image.b, analytic.b_image, "image.B");
    return result;
}

namespace {

void fill_gaussian(Eigen::MatrixXd& m, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = dist(rng);
    }
}

Eigen::VectorXd random_unit(Eigen::Index dim, std::mt19937_64& rng) {
    Eigen::MatrixXd v(dim, 1);
    fill_gaussian(v, 1.0, rng);
    return v.col(0).normalized();
}

}  // namespace

EncoderState with_random_adapters(const EncoderState& state, std::uint64_t seed, double stddev) {
    EncoderState out = state;
    std::mt19937_64 rng(derive_seed(seed, "random-adapters"));
    for (auto* m : {&out.lora_text.a, &out.lora_text.b, &out.lora_image.a, &out.lora_image.b}) fill_gaussian(*m, stddev, rng);
    return out;
}

LossBatch random_batch(const EncoderState& state, std::size_t per_role, std::uint64_t seed) {
    std::mt19937_64 rng(derive_seed(seed, "random-batch"));
    const Eigen::Index d = state.config.d_in;
    auto pairs = [&] {
        std::vector<FeaturePair> out;
        for (std::size_t i = 0; i < per_role; ++i) {
            Eigen::VectorXd t = random_unit(d, rng);
            out.push_back({std::move(t), random_unit(d, rng)});
        }
        return out;
    };
    LossBatch b;
    b.l1 = pairs();
    b.l2 = pairs();
    b.l3 = pairs();
    b.l4 = pairs();
    b.adv = pairs();
    for (std::size_t i = 0; i < per_role; ++i) {
        Eigen::VectorXd t = random_unit(d, rng);
        b.anchors.push_back(make_anchor(state, std::move(t), random_unit(d, rng)));
    }
    return b;
}

// ---------------------------------------------------------------- loss curve log

namespace {

void append_number(std::string& out, double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

}  // namespace

std::string format_loss_record(const LossRecord& r) {
    std::string out = std::to_string(r.step) + "\t" + std::to_string(r.epoch);
    const auto& l = r.losses;
    for (double v : {l.l1, l.l2, l.l3, l.l4, l.lc, l.ladv, l.total, l.pull_aggregate()}) {
        out.push_back('\t');
        append_number(out, v);
    }
    return out;
}

std::string emit_loss_curve(std::span<const LossRecord> records) {
    std::string out(kLossCurveHeader);
    out.push_back('\n');
    for (const auto& r : records) {
        out += format_loss_record(r);
        out.push_back('\n');
    }
    return out;
}

std::vector<LossRecord> parse_loss_curve(std::string_view text) {
    std::vector<LossRecord> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line_no == 1) {
            if (line != kLossCurveHeader) throw ParseError(1, "header", "unexpected loss-curve header");
            continue;
        }
        if (line.empty()) continue;
        double values[10];
        std::size_t field = 0, p = 0;
        while (field < 10) {
            auto res = std::from_chars(line.data() + p, line.data() + line.size(), values[field]);
            if (res.ec != std::errc()) throw ParseError(line_no, "column " + std::to_string(field), "expected a number");
            p = static_cast<std::size_t>(res.ptr - line.data());
            ++field;
            if (field < 10) {
                if (p >= line.size() || line[p] != '\t') throw ParseError(line_no, "", "expected 10 columns");
                ++p;
            }
        }
        if (p != line.size()) throw ParseError(line_no, "", "trailing data");
        LossRecord r;
        r.step = static_cast<std::size_t>(values[0]);
        r.epoch = static_cast<std::size_t>(values[1]);
        r.losses = {values[2], values[3], values[4], values[5], values[6], values[7], values[8]};
        out.push_back(r);
    }
    if (line_no == 0) throw ParseError(1, "header", "empty loss-curve log");
    return out;
}

}  // namespace relunlearn
