#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "kprompt/checkpoint.hpp"
#include "kprompt/encoder.hpp"
#include "kprompt/errors.hpp"
#include "kprompt/optimizer.hpp"
#include "kprompt/rng.hpp"

using namespace kprompt;

namespace {

ModelParams small_params(std::uint64_t seed = 5) {
    ModelConfig cfg;
    cfg.hidden = 8;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.ffn_mult = 2;
    cfg.max_position = 16;
    cfg.vocab_size = 20;
    Rng rng(seed);
    return ModelParams::init(cfg, rng);
}

OptimConfig plain_config(double lr) {
    OptimConfig cfg;
    cfg.lr = lr;
    cfg.clip_norm = 0.0;  // disabled
    cfg.warmup_steps = 0;
    cfg.total_steps = 0;
    return cfg;
}

Gradients random_grads(const ModelParams& p, Rng& rng, double scale = 0.01) {
    Gradients g;
    for (const auto& [name, t] : p.tensors()) {
        Matrix& m = g.of(name, t);
        for (double& v : m.a) v = rng.normal(0.0, scale);
    }
    return g;
}

bool same_tensors(const std::map<std::string, Matrix>& a, const std::map<std::string, Matrix>& b) {
    if (a.size() != b.size()) return false;
    for (const auto& [name, t] : a) {
        auto it = b.find(name);
        if (it == b.end() || !it->second.same_shape(t) || it->second.a != t.a) return false;
    }
    return true;
}

// One coordinate of the production update rule, replicated operation for
// operation (including the float32 rounding of parameters and moments).
struct ScalarAdam {
    double m = 0.0, v = 0.0;
    int t = 0;

    void step(double& p, double g, const OptimConfig& c) {
        ++t;
        m = c.beta1 * m + (1.0 - c.beta1) * g;
        v = c.beta2 * v + (1.0 - c.beta2) * g * g;
        double bc1 = 1.0 - std::pow(c.beta1, t);
        double bc2 = 1.0 - std::pow(c.beta2, t);
        double update = (m / bc1) / (std::sqrt(v / bc2) + c.eps);
        p -= c.lr * (update + c.weight_decay * p);
        p = static_cast<double>(static_cast<float>(p));
        m = static_cast<double>(static_cast<float>(m));
        v = static_cast<double>(static_cast<float>(v));
    }
};

}  // namespace

TEST_CASE("lr schedule warms up linearly and decays to zero") {
    OptimConfig cfg;
    cfg.lr = 0.1;
    cfg.warmup_steps = 10;
    cfg.total_steps = 110;

    CHECK(lr_at(cfg, 1) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(lr_at(cfg, 5) == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(lr_at(cfg, 10) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(lr_at(cfg, 60) == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(lr_at(cfg, 110) == 0.0);
    CHECK(lr_at(cfg, 500) == 0.0);  // clamped past the end
    CHECK_THROWS_AS(lr_at(cfg, 0), ConfigError);

    OptimConfig constant = cfg;
    constant.warmup_steps = 0;
    constant.total_steps = 0;
    CHECK(lr_at(constant, 1) == 0.1);
    CHECK(lr_at(constant, 12345) == 0.1);

    OptimConfig warm_only = cfg;
    warm_only.warmup_steps = 4;
    warm_only.total_steps = 0;  // constant after warm-up
    CHECK(lr_at(warm_only, 2) == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(lr_at(warm_only, 7) == 0.1);
}

TEST_CASE("optimizer config validation") {
    OptimConfig cfg = plain_config(1e-3);
    cfg.lr = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = plain_config(1e-3);
    cfg.beta2 = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = plain_config(1e-3);
    cfg.eps = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = plain_config(1e-3);
    cfg.weight_decay = -0.01;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = plain_config(1e-3);
    cfg.warmup_steps = 10;
    cfg.total_steps = 5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("a zero learning rate leaves parameters bitwise untouched") {
    ModelParams p = small_params();
    auto before = p.tensors();

    AdamW opt(plain_config(0.0), p);
    Rng rng(71);
    Gradients g = random_grads(p, rng);
    opt.step(p, g);

    CHECK(opt.steps_taken() == 1);
    CHECK(opt.last_lr() == 0.0);
    CHECK(same_tensors(p.tensors(), before));
}

TEST_CASE("a zero-gradient step applies pure decoupled weight decay") {
    ModelParams p = small_params();
    auto before = p.tensors();

    OptimConfig cfg = plain_config(0.05);
    cfg.weight_decay = 0.1;
    AdamW opt(cfg, p);
    std::uint64_t version = p.version();

    Gradients empty;
    opt.step(p, empty);

    CHECK(p.version() == version + 1);
    for (const auto& [name, t] : before) {
        const Matrix& after = p.at(name);
        for (std::size_t i = 0; i < t.a.size(); ++i) {
            double x = t.a[i];
            x -= cfg.lr * (0.0 + cfg.weight_decay * x);
            CHECK(after.a[i] == static_cast<double>(static_cast<float>(x)));
        }
    }
}

TEST_CASE("gradient clipping rescales to the configured global norm") {
    ModelParams p = small_params();
    OptimConfig cfg = plain_config(1e-3);
    cfg.clip_norm = 1.0;
    AdamW opt(cfg, p);

    Gradients g;
    Matrix& gt = g.of("emb.tok", p.at("emb.tok"));
    gt.at(0, 0) = 3.0;
    gt.at(0, 1) = 4.0;  // global norm 5, so the clip scales by 1/5
    opt.step(p, g);

    const Matrix& m1 = opt.first_moment().at("emb.tok");
    CHECK(m1.at(0, 0) ==
          static_cast<double>(static_cast<float>((1.0 - cfg.beta1) * (3.0 * (1.0 / 5.0)))));
    CHECK(m1.at(0, 1) ==
          static_cast<double>(static_cast<float>((1.0 - cfg.beta1) * (4.0 * (1.0 / 5.0)))));
    CHECK(m1.at(0, 2) == 0.0);
}

TEST_CASE("a non-finite gradient fails loudly") {
    ModelParams p = small_params();
    OptimConfig cfg = plain_config(1e-3);
    cfg.clip_norm = 1.0;
    AdamW opt(cfg, p);

    Gradients g;
    g.of("emb.tok", p.at("emb.tok")).at(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(opt.step(p, g), NumericalError);
}

TEST_CASE("adamw matches a scalar reference over several steps") {
    ModelParams p = small_params();
    OptimConfig cfg = plain_config(0.01);
    cfg.weight_decay = 0.02;
    AdamW opt(cfg, p);

    const char* name = "task.mlm.bias";
    ScalarAdam ref;
    double rp = p.at(name).at(0, 3);

    double pulses[] = {0.4, -0.2, 0.9, 0.05};
    for (double pulse : pulses) {
        Gradients g;
        g.of(name, p.at(name)).at(0, 3) = pulse;
        opt.step(p, g);
        ref.step(rp, pulse, cfg);

        CHECK(p.at(name).at(0, 3) == rp);
        CHECK(opt.first_moment().at(name).at(0, 3) == ref.m);
        CHECK(opt.second_moment().at(name).at(0, 3) == ref.v);
    }
    CHECK(opt.steps_taken() == 4);
}

TEST_CASE("checkpoints round-trip parameters, progress, and moments bitwise") {
    ModelParams p = small_params(31);
    OptimConfig cfg = plain_config(5e-3);
    AdamW opt(cfg, p);
    Rng rng(93);
    for (int s = 0; s < 3; ++s) {
        Gradients g = random_grads(p, rng);
        opt.step(p, g);
    }

    auto path = (std::filesystem::temp_directory_path() / "optim_roundtrip.kpck").string();
    TrainProgress progress{2, 57, 17};
    save_checkpoint(path, p, progress, &opt);

    Checkpoint ck = load_checkpoint(path);
    CHECK(ck.progress.epochs_done == 2);
    CHECK(ck.progress.global_step == 57);
    CHECK(ck.progress.seed == 17);
    REQUIRE(ck.has_optimizer);
    CHECK(ck.optim_step == 3);
    CHECK(same_tensors(ck.params.tensors(), p.tensors()));
    CHECK(same_tensors(ck.first_moment, opt.first_moment()));
    CHECK(same_tensors(ck.second_moment, opt.second_moment()));

    // A restored optimizer continues exactly where the original one left off.
    AdamW resumed(cfg, ck.params);
    resumed.restore(ck.optim_step, std::move(ck.first_moment), std::move(ck.second_moment));
    CHECK(resumed.steps_taken() == 3);

    Rng ga(555), gb(555);
    Gradients next_a = random_grads(p, ga);
    Gradients next_b = random_grads(ck.params, gb);
    opt.step(p, next_a);
    resumed.step(ck.params, next_b);
    CHECK(same_tensors(p.tensors(), ck.params.tensors()));
    CHECK(same_tensors(opt.first_moment(), resumed.first_moment()));
}

TEST_CASE("a checkpoint saved without an optimizer omits the moments") {
    ModelParams p = small_params();
    auto path = (std::filesystem::temp_directory_path() / "optim_bare.kpck").string();
    save_checkpoint(path, p, TrainProgress{1, 9, 4});

    Checkpoint ck = load_checkpoint(path);
    CHECK_FALSE(ck.has_optimizer);
    CHECK(ck.first_moment.empty());
    CHECK(ck.second_moment.empty());
    CHECK(same_tensors(ck.params.tensors(), p.tensors()));
}

TEST_CASE("corrupted checkpoints are rejected") {
    ModelParams p = small_params();
    AdamW opt(plain_config(1e-3), p);
    auto path = (std::filesystem::temp_directory_path() / "optim_corrupt.kpck").string();
    save_checkpoint(path, p, TrainProgress{1, 1, 1}, &opt);

    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_checkpoint(path + ".does.not.exist"), DataError);
    }
    SUBCASE("truncated file") {
        auto size = std::filesystem::file_size(path);
        std::filesystem::resize_file(path, size / 2);
        CHECK_THROWS_AS(load_checkpoint(path), DataError);
    }
    SUBCASE("bad magic") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.put('X');
        f.close();
        CHECK_THROWS_AS(load_checkpoint(path), DataError);
    }
}

TEST_CASE("restore validates the moment tensors") {
    ModelParams p = small_params();
    AdamW opt(plain_config(1e-3), p);

    auto m = opt.first_moment();
    auto v = opt.second_moment();
    CHECK_THROWS_AS(opt.restore(-1, m, v), DataError);

    auto missing = m;
    missing.erase("emb.tok");
    CHECK_THROWS_AS(opt.restore(1, missing, v), DataError);

    auto reshaped = m;
    reshaped.at("emb.tok") = Matrix(1, 1);
    CHECK_THROWS_WITH_AS(opt.restore(1, reshaped, v), doctest::Contains("emb.tok"), DataError);
}
