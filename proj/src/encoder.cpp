#include "kprompt/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "kprompt/errors.hpp"

namespace kprompt {

namespace {
constexpr double kLnEps = 1e-5;
constexpr double kInitStd = 0.02;
const double kNegInf = -std::numeric_limits<double>::infinity();

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string layer_key(int l) {
    std::string n = std::to_string(l);
    return n.size() < 2 ? "layer0" + n : "layer" + n;
}
}  // namespace

void ModelConfig::validate() const {
    if (hidden <= 0) throw ConfigError("model: hidden must be positive");
    if (layers < 0) throw ConfigError("model: layers must be non-negative");
    if (heads <= 0 || hidden % heads != 0)
        throw ConfigError("model: heads must divide hidden");
    if (ffn_mult <= 0) throw ConfigError("model: ffn multiplier must be positive");
    if (max_position <= 0) throw ConfigError("model: max position must be positive");
    if (vocab_size <= 0) throw ConfigError("model: vocab size must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model: dropout must be in [0,1)");
}

ModelParams ModelParams::shaped(const ModelConfig& cfg) {
    cfg.validate();
    ModelParams p;
    p.cfg_ = cfg;
    int h = cfg.hidden;
    int f = cfg.ffn_dim();
    auto& t = p.tensors_;
    t["emb.tok"] = Matrix(cfg.vocab_size, h);
    t["emb.pos"] = Matrix(cfg.max_position, h);
    t["emb.seg"] = Matrix(2, h);
    for (int l = 0; l < cfg.layers; ++l) {
        std::string k = layer_key(l);
        for (const char* proj : {"q", "k", "v", "o"}) {
            t[k + ".attn." + proj + "_w"] = Matrix(h, h);
            t[k + ".attn." + proj + "_b"] = Matrix(1, h);
        }
        t[k + ".ln1.g"] = Matrix(1, h);
        t[k + ".ln1.b"] = Matrix(1, h);
        t[k + ".ffn.w1"] = Matrix(h, f);
        t[k + ".ffn.b1"] = Matrix(1, f);
        t[k + ".ffn.w2"] = Matrix(f, h);
        t[k + ".ffn.b2"] = Matrix(1, h);
        t[k + ".ln2.g"] = Matrix(1, h);
        t[k + ".ln2.b"] = Matrix(1, h);
    }
    t["task.pri.w1"] = Matrix(h, h);
    t["task.pri.ln.g"] = Matrix(1, h);
    t["task.pri.ln.b"] = Matrix(1, h);
    t["task.pri.cls_w"] = Matrix(h, 2);
    t["task.pri.cls_b"] = Matrix(1, 2);
    t["task.mpm.w2"] = Matrix(h, h);
    t["task.mpm.ln.g"] = Matrix(1, h);
    t["task.mpm.ln.b"] = Matrix(1, h);
    t["task.mlm.bias"] = Matrix(1, cfg.vocab_size);
    return p;
}

ModelParams ModelParams::init(const ModelConfig& cfg, Rng& rng) {
    ModelParams p = shaped(cfg);
    for (auto& [name, m] : p.tensors_) {
        if (ends_with(name, ".g")) {
            std::fill(m.a.begin(), m.a.end(), 1.0);
        } else if (ends_with(name, ".b") || ends_with(name, "_b") || ends_with(name, "b1") ||
                   ends_with(name, "b2") || ends_with(name, "bias")) {
            // zero-initialized
        } else {
            for (double& x : m.a) x = rng.normal(0.0, kInitStd);
        }
    }
    p.quantize_f32();
    return p;
}

ModelParams ModelParams::from_tensors(const ModelConfig& cfg, std::map<std::string, Matrix> tensors) {
    ModelParams p = shaped(cfg);
    for (auto& [name, m] : p.tensors_) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw DataError("checkpoint missing tensor: " + name);
        if (!m.same_shape(it->second)) throw DataError("checkpoint tensor shape mismatch: " + name);
        m = std::move(it->second);
    }
    if (tensors.size() != p.tensors_.size()) {
        for (const auto& [name, m] : tensors)
            if (!p.tensors_.count(name)) throw DataError("checkpoint has unknown tensor: " + name);
    }
    p.version_ = 1;
    return p;
}

const Matrix& ModelParams::at(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw NumericalError("unknown parameter tensor: " + name);
    return it->second;
}

Matrix& ModelParams::at(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw NumericalError("unknown parameter tensor: " + name);
    return it->second;
}

void ModelParams::quantize_f32() {
    for (auto& [name, m] : tensors_)
        for (double& x : m.a) x = static_cast<double>(static_cast<float>(x));
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, m] : tensors_) n += m.size();
    return n;
}

Matrix& Gradients::of(const std::string& name, const Matrix& like) {
    auto it = g.find(name);
    if (it == g.end()) it = g.emplace(name, Matrix(like.rows, like.cols)).first;
    else if (!it->second.same_shape(like))
        throw NumericalError("gradient shape mismatch: " + name);
    return it->second;
}

const Matrix* Gradients::find(const std::string& name) const {
    auto it = g.find(name);
    return it == g.end() ? nullptr : &it->second;
}

double Gradients::global_norm() const {
    double ss = 0.0;
    for (const auto& [name, m] : g)
        for (double x : m.a) ss += x * x;
    return std::sqrt(ss);
}

void Gradients::scale(double s) {
    for (auto& [name, m] : g)
        for (double& x : m.a) x *= s;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double gelu_grad(double x) {
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

Matrix layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta, LayerNormTape& tape) {
    if (gamma.cols != x.cols || beta.cols != x.cols) throw NumericalError("layer_norm: shape mismatch");
    Matrix out(x.rows, x.cols);
    tape.xhat = Matrix(x.rows, x.cols);
    tape.invstd.assign(static_cast<std::size_t>(x.rows), 0.0);
    for (int i = 0; i < x.rows; ++i) {
        const double* r = x.row(i);
        double mean = 0.0;
        for (int j = 0; j < x.cols; ++j) mean += r[j];
        mean /= x.cols;
        double var = 0.0;
        for (int j = 0; j < x.cols; ++j) var += (r[j] - mean) * (r[j] - mean);
        var /= x.cols;
        double inv = 1.0 / std::sqrt(var + kLnEps);
        tape.invstd[static_cast<std::size_t>(i)] = inv;
        for (int j = 0; j < x.cols; ++j) {
            double xh = (r[j] - mean) * inv;
            tape.xhat.at(i, j) = xh;
            out.at(i, j) = gamma.at(0, j) * xh + beta.at(0, j);
        }
    }
    return out;
}

Matrix layer_norm_backward(const Matrix& dy, const Matrix& gamma, const LayerNormTape& tape,
                           Matrix& dgamma, Matrix& dbeta) {
    int rows = dy.rows, cols = dy.cols;
    Matrix dx(rows, cols);
    for (int i = 0; i < rows; ++i) {
        double inv = tape.invstd[static_cast<std::size_t>(i)];
        double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
        for (int j = 0; j < cols; ++j) {
            double dxh = dy.at(i, j) * gamma.at(0, j);
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * tape.xhat.at(i, j);
        }
        mean_dxhat /= cols;
        mean_dxhat_xhat /= cols;
        for (int j = 0; j < cols; ++j) {
            double dxh = dy.at(i, j) * gamma.at(0, j);
            dx.at(i, j) = inv * (dxh - mean_dxhat - tape.xhat.at(i, j) * mean_dxhat_xhat);
            dgamma.at(0, j) += dy.at(i, j) * tape.xhat.at(i, j);
            dbeta.at(0, j) += dy.at(i, j);
        }
    }
    return dx;
}

namespace {

// Row softmax over logits that may hold -inf; every row must keep at least one
// finite entry (the diagonal is never masked).
Matrix masked_softmax_rows(Matrix logits) {
    for (int i = 0; i < logits.rows; ++i) {
        double* r = logits.row(i);
        double mx = kNegInf;
        for (int j = 0; j < logits.cols; ++j) mx = std::max(mx, r[j]);
        if (!std::isfinite(mx)) throw NumericalError("attention: fully masked row");
        double z = 0.0;
        for (int j = 0; j < logits.cols; ++j) {
            r[j] = r[j] == kNegInf ? 0.0 : std::exp(r[j] - mx);
            z += r[j];
        }
        for (int j = 0; j < logits.cols; ++j) r[j] /= z;
    }
    return logits;
}

Matrix head_logits(const Matrix& Qm, const Matrix& Km, const std::vector<std::vector<double>>& mask) {
    int n = Qm.rows, d = Qm.cols;
    if (mask.size() != static_cast<std::size_t>(n)) throw NumericalError("attention: mask shape mismatch");
    double scale = 1.0 / std::sqrt(static_cast<double>(d));
    Matrix logits = matmul_nt(Qm, Km);
    for (int i = 0; i < n; ++i) {
        if (mask[static_cast<std::size_t>(i)].size() != static_cast<std::size_t>(n))
            throw NumericalError("attention: mask shape mismatch");
        for (int j = 0; j < n; ++j)
            logits.at(i, j) = logits.at(i, j) * scale + mask[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    return logits;
}

Matrix slice_cols(const Matrix& m, int c0, int width) {
    Matrix out(m.rows, width);
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < width; ++j) out.at(i, j) = m.at(i, c0 + j);
    return out;
}

void add_into_cols(Matrix& dst, const Matrix& src, int c0) {
    for (int i = 0; i < src.rows; ++i)
        for (int j = 0; j < src.cols; ++j) dst.at(i, c0 + j) += src.at(i, j);
}

Matrix dropout_mask(int rows, int cols, double rate, Rng& rng) {
    Matrix m(rows, cols);
    double keep = 1.0 - rate;
    for (double& x : m.a) x = rng.uniform01() < rate ? 0.0 : 1.0 / keep;
    return m;
}

void apply_mask_inplace(Matrix& x, const Matrix& mask) {
    for (std::size_t i = 0; i < x.a.size(); ++i) x.a[i] *= mask.a[i];
}

}  // namespace

Matrix attention(const Matrix& Qm, const Matrix& Km, const Matrix& Vm,
                 const std::vector<std::vector<double>>& mask) {
    if (!all_finite(Qm) || !all_finite(Km) || !all_finite(Vm))
        throw NumericalError("attention: non-finite input");
    Matrix probs = masked_softmax_rows(head_logits(Qm, Km, mask));
    return matmul(probs, Vm);
}

Matrix embed(const ModelParams& p, const InputSequence& seq) {
    const Matrix& tok = p.at("emb.tok");
    const Matrix& pos = p.at("emb.pos");
    const Matrix& seg = p.at("emb.seg");
    int n = static_cast<int>(seq.length());
    int h = p.config().hidden;
    Matrix out(n, h);
    for (int i = 0; i < n; ++i) {
        int t = seq.token_ids[static_cast<std::size_t>(i)];
        int q = seq.position_ids[static_cast<std::size_t>(i)];
        int s = seq.segment_ids[static_cast<std::size_t>(i)];
        if (t < 0 || t >= tok.rows) throw DataError("embed: token id out of range: " + std::to_string(t));
        if (q < 0 || q >= pos.rows) throw DataError("embed: position id out of range: " + std::to_string(q));
        if (s < 0 || s >= seg.rows) throw DataError("embed: segment id out of range: " + std::to_string(s));
        for (int j = 0; j < h; ++j) out.at(i, j) = tok.at(t, j) + pos.at(q, j) + seg.at(s, j);
    }
    return out;
}

std::pair<Matrix, ActivationTape> forward(const ModelParams& p, const InputSequence& seq,
                                          Rng* dropout_rng) {
    const ModelConfig& cfg = p.config();
    int n = static_cast<int>(seq.length());
    int h = cfg.hidden;
    int d = cfg.head_dim();
    bool drop = cfg.dropout > 0.0 && dropout_rng != nullptr;

    ActivationTape tape;
    tape.params_version = p.version();
    tape.token_ids = seq.token_ids;
    tape.position_ids = seq.position_ids;
    tape.segment_ids = seq.segment_ids;
    tape.embedded = embed(p, seq);

    Matrix x = tape.embedded;
    if (drop) {
        tape.emb_drop = dropout_mask(n, h, cfg.dropout, *dropout_rng);
        apply_mask_inplace(x, tape.emb_drop);
    }

    tape.layers.resize(static_cast<std::size_t>(cfg.layers));
    for (int l = 0; l < cfg.layers; ++l) {
        LayerTape& lt = tape.layers[static_cast<std::size_t>(l)];
        std::string key = layer_key(l);
        lt.input = x;

        lt.q = matmul(x, p.at(key + ".attn.q_w"));
        add_bias(lt.q, p.at(key + ".attn.q_b"));
        lt.k = matmul(x, p.at(key + ".attn.k_w"));
        add_bias(lt.k, p.at(key + ".attn.k_b"));
        lt.v = matmul(x, p.at(key + ".attn.v_w"));
        add_bias(lt.v, p.at(key + ".attn.v_b"));

        lt.attn_ctx = Matrix(n, h);
        lt.attn_probs.resize(static_cast<std::size_t>(cfg.heads));
        for (int s = 0; s < cfg.heads; ++s) {
            Matrix Qs = slice_cols(lt.q, s * d, d);
            Matrix Ks = slice_cols(lt.k, s * d, d);
            Matrix Vs = slice_cols(lt.v, s * d, d);
            Matrix probs = masked_softmax_rows(head_logits(Qs, Ks, seq.mask));
            add_into_cols(lt.attn_ctx, matmul(probs, Vs), s * d);
            lt.attn_probs[static_cast<std::size_t>(s)] = std::move(probs);
        }

        lt.attn_out = matmul(lt.attn_ctx, p.at(key + ".attn.o_w"));
        add_bias(lt.attn_out, p.at(key + ".attn.o_b"));
        if (drop) {
            lt.attn_drop = dropout_mask(n, h, cfg.dropout, *dropout_rng);
            apply_mask_inplace(lt.attn_out, lt.attn_drop);
        }

        Matrix res1(n, h);
        for (std::size_t i = 0; i < res1.a.size(); ++i) res1.a[i] = lt.input.a[i] + lt.attn_out.a[i];
        lt.ln1_out = layer_norm(res1, p.at(key + ".ln1.g"), p.at(key + ".ln1.b"), lt.ln1);

        lt.ffn_pre = matmul(lt.ln1_out, p.at(key + ".ffn.w1"));
        add_bias(lt.ffn_pre, p.at(key + ".ffn.b1"));
        lt.ffn_act = Matrix(n, cfg.ffn_dim());
        for (std::size_t i = 0; i < lt.ffn_act.a.size(); ++i) lt.ffn_act.a[i] = gelu(lt.ffn_pre.a[i]);
        lt.ffn_out = matmul(lt.ffn_act, p.at(key + ".ffn.w2"));
        add_bias(lt.ffn_out, p.at(key + ".ffn.b2"));
        if (drop) {
            lt.ffn_drop = dropout_mask(n, h, cfg.dropout, *dropout_rng);
            apply_mask_inplace(lt.ffn_out, lt.ffn_drop);
        }

        Matrix res2(n, h);
        for (std::size_t i = 0; i < res2.a.size(); ++i) res2.a[i] = lt.ln1_out.a[i] + lt.ffn_out.a[i];
        x = layer_norm(res2, p.at(key + ".ln2.g"), p.at(key + ".ln2.b"), lt.ln2);
    }

    if (!all_finite(x)) throw NumericalError("forward: non-finite hidden state");
    tape.output = x;
    return {x, std::move(tape)};
}

void backward(const ModelParams& p, const ActivationTape& tape, const Matrix& d_output,
              Gradients& grads) {
    if (tape.params_version != p.version())
        throw NumericalError("backward: stale activation tape (parameters changed since forward)");
    const ModelConfig& cfg = p.config();
    int n = d_output.rows;
    int h = cfg.hidden;
    int d = cfg.head_dim();
    if (n != static_cast<int>(tape.token_ids.size()) || d_output.cols != h)
        throw NumericalError("backward: gradient shape mismatch");

    Matrix dx = d_output;
    for (int l = cfg.layers - 1; l >= 0; --l) {
        const LayerTape& lt = tape.layers[static_cast<std::size_t>(l)];
        std::string key = layer_key(l);

        // x_out = LN2(ln1_out + ffn_out)
        Matrix d_res2 = layer_norm_backward(dx, p.at(key + ".ln2.g"), lt.ln2,
                                            grads.of(key + ".ln2.g", p.at(key + ".ln2.g")),
                                            grads.of(key + ".ln2.b", p.at(key + ".ln2.b")));
        Matrix d_ln1_out = d_res2;
        Matrix d_ffn_out = std::move(d_res2);
        if (lt.ffn_drop.size() > 0) apply_mask_inplace(d_ffn_out, lt.ffn_drop);

        {
            Matrix db2 = col_sums(d_ffn_out);
            Matrix& gb2 = grads.of(key + ".ffn.b2", p.at(key + ".ffn.b2"));
            for (std::size_t i = 0; i < gb2.a.size(); ++i) gb2.a[i] += db2.a[i];
        }
        {
            Matrix dw2 = matmul_tn(lt.ffn_act, d_ffn_out);
            Matrix& gw2 = grads.of(key + ".ffn.w2", p.at(key + ".ffn.w2"));
            for (std::size_t i = 0; i < gw2.a.size(); ++i) gw2.a[i] += dw2.a[i];
        }
        Matrix d_act = matmul_nt(d_ffn_out, p.at(key + ".ffn.w2"));
        Matrix d_pre(n, cfg.ffn_dim());
        for (std::size_t i = 0; i < d_pre.a.size(); ++i)
            d_pre.a[i] = d_act.a[i] * gelu_grad(lt.ffn_pre.a[i]);
        {
            Matrix db1 = col_sums(d_pre);
            Matrix& gb1 = grads.of(key + ".ffn.b1", p.at(key + ".ffn.b1"));
            for (std::size_t i = 0; i < gb1.a.size(); ++i) gb1.a[i] += db1.a[i];
            Matrix dw1 = matmul_tn(lt.ln1_out, d_pre);
            Matrix& gw1 = grads.of(key + ".ffn.w1", p.at(key + ".ffn.w1"));
            for (std::size_t i = 0; i < gw1.a.size(); ++i) gw1.a[i] += dw1.a[i];
        }
        {
            Matrix more = matmul_nt(d_pre, p.at(key + ".ffn.w1"));
            for (std::size_t i = 0; i < d_ln1_out.a.size(); ++i) d_ln1_out.a[i] += more.a[i];
        }

        // ln1_out = LN1(input + attn_out)
        Matrix d_res1 = layer_norm_backward(d_ln1_out, p.at(key + ".ln1.g"), lt.ln1,
                                            grads.of(key + ".ln1.g", p.at(key + ".ln1.g")),
                                            grads.of(key + ".ln1.b", p.at(key + ".ln1.b")));
        Matrix d_input = d_res1;
        Matrix d_attn_out = std::move(d_res1);
        if (lt.attn_drop.size() > 0) apply_mask_inplace(d_attn_out, lt.attn_drop);

        {
            Matrix dbo = col_sums(d_attn_out);
            Matrix& gbo = grads.of(key + ".attn.o_b", p.at(key + ".attn.o_b"));
            for (std::size_t i = 0; i < gbo.a.size(); ++i) gbo.a[i] += dbo.a[i];
            Matrix dwo = matmul_tn(lt.attn_ctx, d_attn_out);
            Matrix& gwo = grads.of(key + ".attn.o_w", p.at(key + ".attn.o_w"));
            for (std::size_t i = 0; i < gwo.a.size(); ++i) gwo.a[i] += dwo.a[i];
        }
        Matrix d_ctx = matmul_nt(d_attn_out, p.at(key + ".attn.o_w"));

        Matrix dq(n, h), dk(n, h), dv(n, h);
        double scale = 1.0 / std::sqrt(static_cast<double>(d));
        for (int s = 0; s < cfg.heads; ++s) {
            const Matrix& probs = lt.attn_probs[static_cast<std::size_t>(s)];
            Matrix d_ctx_s = slice_cols(d_ctx, s * d, d);
            Matrix Qs = slice_cols(lt.q, s * d, d);
            Matrix Ks = slice_cols(lt.k, s * d, d);
            Matrix Vs = slice_cols(lt.v, s * d, d);

            Matrix d_probs = matmul_nt(d_ctx_s, Vs);
            add_into_cols(dv, matmul_tn(probs, d_ctx_s), s * d);

            Matrix d_logits(n, n);
            for (int i = 0; i < n; ++i) {
                double dot = 0.0;
                for (int j = 0; j < n; ++j) dot += d_probs.at(i, j) * probs.at(i, j);
                for (int j = 0; j < n; ++j)
                    d_logits.at(i, j) = probs.at(i, j) * (d_probs.at(i, j) - dot);
            }
            Matrix dQs = matmul(d_logits, Ks);
            Matrix dKs = matmul_tn(d_logits, Qs);
            for (double& xg : dQs.a) xg *= scale;
            for (double& xg : dKs.a) xg *= scale;
            add_into_cols(dq, dQs, s * d);
            add_into_cols(dk, dKs, s * d);
        }

        struct ProjGrad {
            const Matrix* dmat;
            const char* wname;
            const char* bname;
        };
        const ProjGrad projs[] = {{&dq, ".attn.q_w", ".attn.q_b"},
                                  {&dk, ".attn.k_w", ".attn.k_b"},
                                  {&dv, ".attn.v_w", ".attn.v_b"}};
        for (const auto& pr : projs) {
            Matrix db = col_sums(*pr.dmat);
            Matrix& gb = grads.of(key + pr.bname, p.at(key + pr.bname));
            for (std::size_t i = 0; i < gb.a.size(); ++i) gb.a[i] += db.a[i];
            Matrix dw = matmul_tn(lt.input, *pr.dmat);
            Matrix& gw = grads.of(key + pr.wname, p.at(key + pr.wname));
            for (std::size_t i = 0; i < gw.a.size(); ++i) gw.a[i] += dw.a[i];
            Matrix dxp = matmul_nt(*pr.dmat, p.at(key + pr.wname));
            for (std::size_t i = 0; i < d_input.a.size(); ++i) d_input.a[i] += dxp.a[i];
        }

        dx = std::move(d_input);
    }

    if (tape.emb_drop.size() > 0) apply_mask_inplace(dx, tape.emb_drop);

    Matrix& gtok = grads.of("emb.tok", p.at("emb.tok"));
    Matrix& gpos = grads.of("emb.pos", p.at("emb.pos"));
    Matrix& gseg = grads.of("emb.seg", p.at("emb.seg"));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < h; ++j) {
            double gi = dx.at(i, j);
            gtok.at(tape.token_ids[static_cast<std::size_t>(i)], j) += gi;
            gpos.at(tape.position_ids[static_cast<std::size_t>(i)], j) += gi;
            gseg.at(tape.segment_ids[static_cast<std::size_t>(i)], j) += gi;
        }
}

FiniteDiffReport finite_difference_check(ModelParams& params,
                                         const std::function<double()>& loss_fn,
                                         const Gradients& analytic, double eps, double tol,
                                         std::size_t per_tensor, Rng& rng) {
    FiniteDiffReport report;
    report.tolerance = tol;
    for (const auto& [name, tensor] : params.tensors()) {
        std::vector<std::size_t> coords;
        if (tensor.size() <= per_tensor) {
            coords.resize(tensor.size());
            for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
        } else {
            std::unordered_set<std::size_t> seen;
            while (seen.size() < per_tensor) seen.insert(rng.uniform_index(tensor.size()));
            coords.assign(seen.begin(), seen.end());
            std::sort(coords.begin(), coords.end());
        }
        const Matrix* grad = analytic.find(name);
        Matrix& mutable_tensor = params.at(name);
        for (std::size_t idx : coords) {
            double orig = mutable_tensor.a[idx];
            mutable_tensor.a[idx] = orig + eps;
            double f_plus = loss_fn();
            mutable_tensor.a[idx] = orig - eps;
            double f_minus = loss_fn();
            mutable_tensor.a[idx] = orig;
            double fd = (f_plus - f_minus) / (2.0 * eps);
            double an = grad ? grad->a[idx] : 0.0;
            double denom = std::max({std::fabs(fd), std::fabs(an), 1e-6});
            double rel = std::fabs(fd - an) / denom;
            ++report.coords_checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_tensor = name;
                report.worst_index = static_cast<int>(idx);
            }
        }
    }
    report.pass = report.max_rel_err <= tol;
    return report;
}

}  // namespace kprompt
