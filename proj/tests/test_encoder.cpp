#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "kprompt/assembler.hpp"
#include "kprompt/encoder.hpp"
#include "kprompt/errors.hpp"
#include "kprompt/prompt.hpp"
#include "kprompt/rng.hpp"
#include "kprompt/tensor.hpp"
#include "kprompt/vocab.hpp"

using namespace kprompt;

namespace {

const double kNinf = -std::numeric_limits<double>::infinity();

Matrix random_matrix(int rows, int cols, Rng& rng, double stddev = 1.0) {
    Matrix m(rows, cols);
    for (double& x : m.a) x = rng.normal(0.0, stddev);
    return m;
}

Vocab demo_vocab() {
    return Vocab::build({{"a", "b", "c", "d", "e", "x", "y", "z", "alpha", "beta"}});
}

KnowledgePrompt prompt_of(std::vector<std::string> words) {
    KnowledgePrompt p;
    p.tokens.push_back(tokens::kTrigOpen);
    for (auto& w : words) p.tokens.push_back(std::move(w));
    p.tokens.push_back(tokens::kTrigClose);
    return p;
}

InputSequence demo_sequence(const Vocab& v) {
    return assemble({"a", "b", "c", "d"}, {prompt_of({"x", "y"}), prompt_of({"z"})}, v);
}

ModelConfig small_config(const Vocab& v, int layers = 2) {
    ModelConfig cfg;
    cfg.hidden = 8;
    cfg.layers = layers;
    cfg.heads = 2;
    cfg.ffn_mult = 2;
    cfg.max_position = 32;
    cfg.vocab_size = static_cast<int>(v.size());
    return cfg;
}

// Dense reference for one attention head.
Matrix attention_oracle(const Matrix& Q, const Matrix& K, const Matrix& V,
                        const std::vector<std::vector<double>>& mask) {
    int n = Q.rows, d = Q.cols;
    Matrix out(n, V.cols);
    for (int i = 0; i < n; ++i) {
        std::vector<double> w(static_cast<std::size_t>(n));
        double mx = kNinf;
        for (int j = 0; j < n; ++j) {
            double dot = 0.0;
            for (int c = 0; c < d; ++c) dot += Q.at(i, c) * K.at(j, c);
            w[static_cast<std::size_t>(j)] = dot / std::sqrt(static_cast<double>(d)) +
                                             mask[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            mx = std::max(mx, w[static_cast<std::size_t>(j)]);
        }
        double z = 0.0;
        for (double& x : w) {
            x = x == kNinf ? 0.0 : std::exp(x - mx);
            z += x;
        }
        for (int j = 0; j < n; ++j)
            for (int c = 0; c < V.cols; ++c)
                out.at(i, c) += w[static_cast<std::size_t>(j)] / z * V.at(j, c);
    }
    return out;
}

}  // namespace

TEST_CASE("model config validation") {
    Vocab v = demo_vocab();
    ModelConfig cfg = small_config(v);
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.head_dim() == 4);
    CHECK(cfg.ffn_dim() == 16);

    ModelConfig bad = cfg;
    bad.heads = 3;  // does not divide 8
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.vocab_size = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.dropout = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.layers = -1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("parameter init: shapes, gains, zeros, f32 grid") {
    Vocab v = demo_vocab();
    ModelConfig cfg = small_config(v);
    Rng rng(11);
    auto p = ModelParams::init(cfg, rng);

    CHECK(p.at("emb.tok").rows == cfg.vocab_size);
    CHECK(p.at("emb.tok").cols == 8);
    CHECK(p.at("layer00.ffn.w1").rows == 8);
    CHECK(p.at("layer00.ffn.w1").cols == 16);
    CHECK(p.at("layer01.attn.q_w").rows == 8);
    CHECK(p.at("task.pri.cls_w").cols == 2);
    CHECK(p.at("task.mlm.bias").cols == cfg.vocab_size);
    CHECK_THROWS_AS(p.at("layer02.ln1.g"), NumericalError);

    for (double x : p.at("layer00.ln1.g").a) CHECK(x == 1.0);
    for (double x : p.at("task.pri.ln.g").a) CHECK(x == 1.0);
    for (double x : p.at("layer00.attn.q_b").a) CHECK(x == 0.0);
    for (double x : p.at("task.mlm.bias").a) CHECK(x == 0.0);

    double acc = 0.0;
    std::size_t n = 0;
    for (double x : p.at("emb.tok").a) {
        CHECK(x == static_cast<double>(static_cast<float>(x)));  // quantized
        acc += x * x;
        ++n;
    }
    double rms = std::sqrt(acc / static_cast<double>(n));
    CHECK(rms > 0.01);
    CHECK(rms < 0.03);

    std::size_t count = 0;
    for (const auto& [name, m] : p.tensors()) count += m.size();
    CHECK(p.parameter_count() == count);

    Rng rng2(11);
    auto q = ModelParams::init(cfg, rng2);
    for (const auto& [name, m] : p.tensors()) CHECK(q.at(name).a == m.a);
}

TEST_CASE("from_tensors round-trip and validation") {
    Vocab v = demo_vocab();
    ModelConfig cfg = small_config(v);
    Rng rng(4);
    auto p = ModelParams::init(cfg, rng);

    auto q = ModelParams::from_tensors(cfg, p.tensors());
    for (const auto& [name, m] : p.tensors()) CHECK(q.at(name).a == m.a);
    CHECK(q.version() == 1);

    auto missing = p.tensors();
    missing.erase("task.mpm.w2");
    CHECK_THROWS_AS(ModelParams::from_tensors(cfg, missing), DataError);

    auto extra = p.tensors();
    extra["task.unknown"] = Matrix(1, 1);
    CHECK_THROWS_AS(ModelParams::from_tensors(cfg, extra), DataError);

    auto reshaped = p.tensors();
    reshaped["emb.seg"] = Matrix(3, 8);
    CHECK_THROWS_AS(ModelParams::from_tensors(cfg, reshaped), DataError);
}

TEST_CASE("activation scalars") {
    CHECK(gelu(0.0) == 0.0);
    CHECK(gelu(1.0) == doctest::Approx(0.8413447461).epsilon(1e-9));
    CHECK(gelu(-1.0) == doctest::Approx(-0.1586552539).epsilon(1e-8));
    CHECK(gelu(6.0) == doctest::Approx(6.0).epsilon(1e-8));
    for (double x : {-2.0, -0.7, 0.0, 0.3, 1.9}) {
        double h = 1e-6;
        double fd = (gelu(x + h) - gelu(x - h)) / (2 * h);
        CHECK(gelu_grad(x) == doctest::Approx(fd).epsilon(1e-6));
    }
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(sigmoid(40.0) == doctest::Approx(1.0));
    CHECK(sigmoid(-40.0) == doctest::Approx(0.0));
    CHECK(sigmoid(1.3) + sigmoid(-1.3) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("layer norm standardizes each row") {
    Rng rng(9);
    Matrix x = random_matrix(5, 16, rng, 3.0);
    Matrix gamma(1, 16), beta(1, 16);
    for (int j = 0; j < 16; ++j) {
        gamma.at(0, j) = 1.0;
        beta.at(0, j) = 0.0;
    }
    LayerNormTape tape;
    Matrix y = layer_norm(x, gamma, beta, tape);
    for (int i = 0; i < 5; ++i) {
        double mean = 0.0, var = 0.0;
        for (int j = 0; j < 16; ++j) mean += y.at(i, j);
        mean /= 16;
        for (int j = 0; j < 16; ++j) var += (y.at(i, j) - mean) * (y.at(i, j) - mean);
        var /= 16;
        CHECK(std::fabs(mean) < 1e-12);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-4));  // eps shrinks it slightly
    }

    for (int j = 0; j < 16; ++j) {
        gamma.at(0, j) = 2.0;
        beta.at(0, j) = -1.0;
    }
    Matrix y2 = layer_norm(x, gamma, beta, tape);
    for (std::size_t i = 0; i < y2.a.size(); ++i)
        CHECK(y2.a[i] == doctest::Approx(2.0 * y.a[i] - 1.0).epsilon(1e-12));

    Matrix bad_gamma(1, 8);
    CHECK_THROWS_AS(layer_norm(x, bad_gamma, beta, tape), NumericalError);
}

TEST_CASE("layer norm backward against finite differences") {
    Rng rng(21);
    Matrix x = random_matrix(3, 6, rng);
    Matrix gamma = random_matrix(1, 6, rng), beta = random_matrix(1, 6, rng);
    Matrix w = random_matrix(3, 6, rng);  // loss = sum(w .* LN(x))

    LayerNormTape tape;
    layer_norm(x, gamma, beta, tape);
    Matrix dgamma(1, 6), dbeta(1, 6);
    Matrix dx = layer_norm_backward(w, gamma, tape, dgamma, dbeta);

    auto loss = [&](const Matrix& xx, const Matrix& g, const Matrix& b) {
        LayerNormTape t;
        Matrix y = layer_norm(xx, g, b, t);
        double s = 0.0;
        for (std::size_t i = 0; i < y.a.size(); ++i) s += w.a[i] * y.a[i];
        return s;
    };
    const double eps = 1e-6;
    for (std::size_t i = 0; i < x.a.size(); ++i) {
        Matrix xp = x, xm = x;
        xp.a[i] += eps;
        xm.a[i] -= eps;
        double fd = (loss(xp, gamma, beta) - loss(xm, gamma, beta)) / (2 * eps);
        CHECK(dx.a[i] == doctest::Approx(fd).epsilon(1e-5));
    }
    for (std::size_t i = 0; i < gamma.a.size(); ++i) {
        Matrix gp = gamma, gm = gamma;
        gp.a[i] += eps;
        gm.a[i] -= eps;
        double fd = (loss(x, gp, beta) - loss(x, gm, beta)) / (2 * eps);
        CHECK(dgamma.a[i] == doctest::Approx(fd).epsilon(1e-5));
        Matrix bp = beta, bm = beta;
        bp.a[i] += eps;
        bm.a[i] -= eps;
        fd = (loss(x, gamma, bp) - loss(x, gamma, bm)) / (2 * eps);
        CHECK(dbeta.a[i] == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("attention matches the dense oracle") {
    Rng rng(33);
    for (int trial = 0; trial < 10; ++trial) {
        int n = 3 + static_cast<int>(rng.uniform_index(4));
        Matrix Q = random_matrix(n, 4, rng), K = random_matrix(n, 4, rng),
               V = random_matrix(n, 4, rng);
        std::vector<std::vector<double>> mask(static_cast<std::size_t>(n),
                                              std::vector<double>(static_cast<std::size_t>(n), 0.0));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (i != j && rng.uniform01() < 0.25) {
                    mask[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = kNinf;
                    mask[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = kNinf;
                }
        Matrix got = attention(Q, K, V, mask);
        Matrix want = attention_oracle(Q, K, V, mask);
        for (std::size_t i = 0; i < got.a.size(); ++i)
            CHECK(got.a[i] == doctest::Approx(want.a[i]).epsilon(1e-12));
    }
}

TEST_CASE("a row seeing one key copies that value row") {
    Rng rng(7);
    Matrix Q = random_matrix(4, 3, rng), K = random_matrix(4, 3, rng), V = random_matrix(4, 3, rng);
    std::vector<std::vector<double>> mask(4, std::vector<double>(4, 0.0));
    for (int j = 0; j < 4; ++j)
        if (j != 2) mask[0][static_cast<std::size_t>(j)] = kNinf;  // row 0 sees only key 2
    Matrix out = attention(Q, K, V, mask);
    for (int c = 0; c < 3; ++c) CHECK(out.at(0, c) == V.at(2, c));  // weight exactly 1
}

TEST_CASE("attention rejects fully masked rows and non-finite input") {
    Matrix Q(2, 2), K(2, 2), V(2, 2);
    std::vector<std::vector<double>> mask(2, std::vector<double>(2, 0.0));
    mask[1][0] = mask[1][1] = kNinf;
    CHECK_THROWS_AS(attention(Q, K, V, mask), NumericalError);

    std::vector<std::vector<double>> open(2, std::vector<double>(2, 0.0));
    Matrix bad = Q;
    bad.at(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(attention(bad, K, V, open), NumericalError);
}

TEST_CASE("embedding sums token, position, and segment rows") {
    Vocab v = demo_vocab();
    ModelConfig cfg = small_config(v, 0);
    Rng rng(15);
    auto p = ModelParams::init(cfg, rng);
    auto seq = demo_sequence(v);
    Matrix e = embed(p, seq);
    REQUIRE(e.rows == static_cast<int>(seq.token_ids.size()));
    for (int i = 0; i < e.rows; ++i)
        for (int j = 0; j < 8; ++j) {
            double want = p.at("emb.tok").at(seq.token_ids[static_cast<std::size_t>(i)], j) +
                          p.at("emb.pos").at(seq.position_ids[static_cast<std::size_t>(i)], j) +
                          p.at("emb.seg").at(seq.segment_ids[static_cast<std::size_t>(i)], j);
            CHECK(e.at(i, j) == want);
        }

    InputSequence broken = seq;
    broken.token_ids[0] = cfg.vocab_size;
    CHECK_THROWS_AS(embed(p, broken), DataError);
    broken = seq;
    broken.position_ids[1] = cfg.max_position;
    CHECK_THROWS_AS(embed(p, broken), DataError);
}

TEST_CASE("zero-layer forward is the embedding") {
    Vocab v = demo_vocab();
    Rng rng(2);
    auto p = ModelParams::init(small_config(v, 0), rng);
    auto seq = demo_sequence(v);
    auto [out, tape] = forward(p, seq);
    CHECK(out.a == embed(p, seq).a);
    CHECK(tape.layers.empty());
    CHECK(tape.params_version == p.version());
}

TEST_CASE("forward blocks cross-prompt attention exactly") {
    Vocab v = demo_vocab();
    Rng rng(19);
    auto p = ModelParams::init(small_config(v), rng);
    auto seq = demo_sequence(v);
    auto [out, tape] = forward(p, seq);

    REQUIRE(tape.layers.size() == 2);
    for (const LayerTape& lt : tape.layers) {
        REQUIRE(lt.attn_probs.size() == 2);
        for (const Matrix& probs : lt.attn_probs) {
            for (int i = 0; i < probs.rows; ++i) {
                double sum = 0.0;
                for (int j = 0; j < probs.cols; ++j) {
                    sum += probs.at(i, j);
                    int pi = seq.prompt_index[static_cast<std::size_t>(i)];
                    int pj = seq.prompt_index[static_cast<std::size_t>(j)];
                    if (pi > 0 && pj > 0 && pi != pj)
                        CHECK(probs.at(i, j) == 0.0);  // exact, not approximate
                    else
                        CHECK(probs.at(i, j) > 0.0);
                }
                CHECK(std::fabs(sum - 1.0) <= 1e-12);
            }
        }
    }
}

TEST_CASE("forward is a pure function of params and sequence") {
    Vocab v = demo_vocab();
    Rng rng(5);
    auto p = ModelParams::init(small_config(v), rng);
    auto seq = demo_sequence(v);
    auto a = forward(p, seq).first;
    auto b = forward(p, seq).first;
    CHECK(a.a == b.a);
}

TEST_CASE("permuting prompts permutes hidden rows and preserves context rows") {
    Vocab v = demo_vocab();
    Rng rng(27);
    auto p = ModelParams::init(small_config(v), rng);
    std::vector<KnowledgePrompt> prompts{prompt_of({"x", "y"}), prompt_of({"z"}),
                                         prompt_of({"alpha", "beta", "a"})};
    auto base_seq = assemble({"a", "b", "c"}, prompts, v);
    auto base = forward(p, base_seq).first;

    std::vector<std::size_t> perm{2, 0, 1};
    std::vector<KnowledgePrompt> shuffled{prompts[2], prompts[0], prompts[1]};
    auto move_seq = assemble({"a", "b", "c"}, shuffled, v);
    auto moved = forward(p, move_seq).first;

    int ctx_end = base_seq.prompt_spans[0].begin;
    for (int i = 0; i < ctx_end; ++i)
        for (int j = 0; j < 8; ++j)
            CHECK(moved.at(i, j) == doctest::Approx(base.at(i, j)).epsilon(1e-9));
    for (std::size_t new_u = 0; new_u < perm.size(); ++new_u) {
        const PromptSpan& src = base_seq.prompt_spans[perm[new_u]];
        const PromptSpan& dst = move_seq.prompt_spans[new_u];
        for (int off = 0; off < src.end - src.begin; ++off)
            for (int j = 0; j < 8; ++j)
                CHECK(moved.at(dst.begin + off, j) ==
                      doctest::Approx(base.at(src.begin + off, j)).epsilon(1e-9));
    }
}

TEST_CASE("backward of a zero upstream gradient is zero") {
    Vocab v = demo_vocab();
    Rng rng(3);
    auto p = ModelParams::init(small_config(v), rng);
    auto seq = demo_sequence(v);
    auto [out, tape] = forward(p, seq);
    Gradients grads;
    backward(p, tape, Matrix(out.rows, out.cols), grads);
    CHECK(grads.global_norm() == 0.0);
}

TEST_CASE("backward rejects a stale tape") {
    Vocab v = demo_vocab();
    Rng rng(3);
    auto p = ModelParams::init(small_config(v), rng);
    auto seq = demo_sequence(v);
    auto [out, tape] = forward(p, seq);
    p.bump_version();
    Gradients grads;
    CHECK_THROWS_AS(backward(p, tape, out, grads), NumericalError);
}

TEST_CASE("encoder gradients agree with central differences") {
    Vocab v = demo_vocab();
    Rng rng(101);
    auto p = ModelParams::init(small_config(v), rng);
    auto seq = demo_sequence(v);

    auto [out, tape] = forward(p, seq);
    Matrix w = random_matrix(out.rows, out.cols, rng);
    Gradients analytic;
    backward(p, tape, w, analytic);

    auto loss_fn = [&]() {
        auto o = forward(p, seq).first;
        double s = 0.0;
        for (std::size_t i = 0; i < o.a.size(); ++i) s += w.a[i] * o.a[i];
        return s;
    };
    Rng pick(55);
    auto report = finite_difference_check(p, loss_fn, analytic, 1e-4, 1e-4, 4, pick);
    INFO("worst ", report.worst_tensor, "[", report.worst_index, "] rel ", report.max_rel_err);
    CHECK(report.pass);
    CHECK(report.coords_checked >= 100);
}

TEST_CASE("finite differences are near-exact on a linear loss") {
    Vocab v = demo_vocab();
    ModelConfig cfg = small_config(v, 0);
    Rng rng(8);
    auto p = ModelParams::init(cfg, rng);
    auto before = p.tensors();

    Matrix coef = random_matrix(p.at("emb.tok").rows, 8, rng);
    auto loss_fn = [&]() {
        double s = 0.0;
        const Matrix& m = p.at("emb.tok");
        for (std::size_t i = 0; i < m.a.size(); ++i) s += coef.a[i] * m.a[i];
        return s;
    };
    Gradients analytic;
    analytic.of("emb.tok", p.at("emb.tok")) = coef;
    Rng pick(1);
    auto report = finite_difference_check(p, loss_fn, analytic, 1e-4, 1e-8, 3, pick);
    CHECK(report.pass);
    CHECK(report.max_rel_err < 1e-8);
    for (const auto& [name, m] : p.tensors()) CHECK(m.a == before.at(name).a);  // restored
}

TEST_CASE("zero tolerance fails on any curvature") {
    Vocab v = demo_vocab();
    Rng rng(14);
    auto p = ModelParams::init(small_config(v, 0), rng);
    auto loss_fn = [&]() {
        double s = 0.0;
        for (double x : p.at("emb.tok").a) s += x * x * x;
        return s;
    };
    Gradients analytic;
    Matrix& g = analytic.of("emb.tok", p.at("emb.tok"));
    for (std::size_t i = 0; i < g.a.size(); ++i) {
        double x = p.at("emb.tok").a[i];
        g.a[i] = 3.0 * x * x;
    }
    Rng pick(2);
    auto report = finite_difference_check(p, loss_fn, analytic, 1e-2, 0.0, 2, pick);
    CHECK_FALSE(report.pass);  // central difference of x^3 carries an eps^2 bias
    CHECK(report.max_rel_err > 0.0);
}
