#include "kprompt/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "kprompt/errors.hpp"

namespace kprompt {

namespace {

Matrix row_matrix(const std::vector<double>& v) {
    Matrix m(1, static_cast<int>(v.size()));
    m.a = v;
    return m;
}

std::vector<double> softmax(std::vector<double> x) {
    double mx = *std::max_element(x.begin(), x.end());
    double z = 0.0;
    for (double& v : x) {
        v = std::exp(v - mx);
        z += v;
    }
    for (double& v : x) v /= z;
    return x;
}

void check_pos(int pos, int n, const char* what) {
    if (pos < 0 || pos >= n) throw DataError(std::string(what) + " position out of range");
}

// Mean over the entity's mentions of that mention's mean token input embedding.
std::vector<double> mention_embedding(EntityId e, const ModelParams& p, const VerbalizerTable& verb,
                                      const Vocab& vocab) {
    const Matrix& tok = p.at("emb.tok");
    const auto& mentions = verb.verbalize(e);
    if (mentions.empty()) throw DataError("verbalizer has no mentions for entity " + std::to_string(e));
    std::vector<double> out(static_cast<std::size_t>(tok.cols), 0.0);
    for (const auto& mention : mentions) {
        if (mention.empty()) throw DataError("verbalizer mention is empty");
        double w = 1.0 / (static_cast<double>(mentions.size()) * static_cast<double>(mention.size()));
        for (const auto& word : mention) {
            const double* row = tok.row(vocab.id(word));
            for (std::size_t j = 0; j < out.size(); ++j) out[j] += w * row[j];
        }
    }
    return out;
}

void scatter_mention_gradient(EntityId e, const std::vector<double>& d_embed, const ModelParams& p,
                              const VerbalizerTable& verb, const Vocab& vocab, Gradients& grads) {
    Matrix& gtok = grads.of("emb.tok", p.at("emb.tok"));
    const auto& mentions = verb.verbalize(e);
    for (const auto& mention : mentions) {
        double w = 1.0 / (static_cast<double>(mentions.size()) * static_cast<double>(mention.size()));
        for (const auto& word : mention) {
            double* row = gtok.row(vocab.id(word));
            for (std::size_t j = 0; j < d_embed.size(); ++j) row[j] += w * d_embed[j];
        }
    }
}

}  // namespace

PromptRep prompt_representation(const Matrix& hidden, int trig_open, int trig_close,
                                const ModelParams& p) {
    check_pos(trig_open, hidden.rows, "trigger");
    check_pos(trig_close, hidden.rows, "trigger");
    int h = hidden.cols;
    PromptRep rep;
    rep.boundary_sum.resize(static_cast<std::size_t>(h));
    for (int j = 0; j < h; ++j)
        rep.boundary_sum[static_cast<std::size_t>(j)] = hidden.at(trig_open, j) + hidden.at(trig_close, j);

    Matrix s = matmul(row_matrix(rep.boundary_sum), p.at("task.pri.w1"));
    rep.pre_ln.resize(static_cast<std::size_t>(h));
    for (int j = 0; j < h; ++j) rep.pre_ln[static_cast<std::size_t>(j)] = sigmoid(s.at(0, j));

    Matrix normed = layer_norm(row_matrix(rep.pre_ln), p.at("task.pri.ln.g"), p.at("task.pri.ln.b"),
                               rep.ln);
    rep.h_p = normed.a;
    return rep;
}

PriResult pri_forward(const Matrix& hidden, const PriExample& ex, const ModelParams& p) {
    if (ex.label != 0 && ex.label != 1) throw DataError("pri label must be 0 or 1");
    PriResult res;
    res.rep = prompt_representation(hidden, ex.trig_open, ex.trig_close, p);

    Matrix logits = matmul(row_matrix(res.rep.h_p), p.at("task.pri.cls_w"));
    add_bias(logits, p.at("task.pri.cls_b"));
    auto probs = softmax(logits.a);
    res.probs[0] = probs[0];
    res.probs[1] = probs[1];
    res.loss = -std::log(probs[static_cast<std::size_t>(ex.label)]);
    if (!std::isfinite(res.loss)) throw NumericalError("pri loss non-finite");
    return res;
}

void pri_backward(const PriResult& res, const PriExample& ex, const ModelParams& p, double scale,
                  Gradients& grads, Matrix& d_hidden) {
    int h = static_cast<int>(res.rep.h_p.size());
    std::vector<double> dlogits = {res.probs[0] * scale, res.probs[1] * scale};
    dlogits[static_cast<std::size_t>(ex.label)] -= scale;

    Matrix& gcls_w = grads.of("task.pri.cls_w", p.at("task.pri.cls_w"));
    Matrix& gcls_b = grads.of("task.pri.cls_b", p.at("task.pri.cls_b"));
    for (int c = 0; c < 2; ++c) {
        gcls_b.at(0, c) += dlogits[static_cast<std::size_t>(c)];
        for (int j = 0; j < h; ++j)
            gcls_w.at(j, c) += res.rep.h_p[static_cast<std::size_t>(j)] * dlogits[static_cast<std::size_t>(c)];
    }

    Matrix dh_p(1, h);
    const Matrix& cls_w = p.at("task.pri.cls_w");
    for (int j = 0; j < h; ++j)
        dh_p.at(0, j) = cls_w.at(j, 0) * dlogits[0] + cls_w.at(j, 1) * dlogits[1];

    Matrix d_pre = layer_norm_backward(dh_p, p.at("task.pri.ln.g"), res.rep.ln,
                                       grads.of("task.pri.ln.g", p.at("task.pri.ln.g")),
                                       grads.of("task.pri.ln.b", p.at("task.pri.ln.b")));

    Matrix ds(1, h);
    for (int j = 0; j < h; ++j) {
        double sg = res.rep.pre_ln[static_cast<std::size_t>(j)];
        ds.at(0, j) = d_pre.at(0, j) * sg * (1.0 - sg);
    }

    Matrix& gw1 = grads.of("task.pri.w1", p.at("task.pri.w1"));
    const Matrix& w1 = p.at("task.pri.w1");
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < h; ++j)
            gw1.at(i, j) += res.rep.boundary_sum[static_cast<std::size_t>(i)] * ds.at(0, j);

    for (int i = 0; i < h; ++i) {
        double g = 0.0;
        for (int j = 0; j < h; ++j) g += ds.at(0, j) * w1.at(i, j);
        d_hidden.at(ex.trig_open, i) += g;
        d_hidden.at(ex.trig_close, i) += g;
    }
}

namespace {

MaskRep mask_representation(const Matrix& hidden, int mask_pos, const ModelParams& p) {
    check_pos(mask_pos, hidden.rows, "[MASK]");
    int h = hidden.cols;
    MaskRep rep;
    rep.hidden_row.resize(static_cast<std::size_t>(h));
    for (int j = 0; j < h; ++j) rep.hidden_row[static_cast<std::size_t>(j)] = hidden.at(mask_pos, j);

    Matrix t = matmul(row_matrix(rep.hidden_row), p.at("task.mpm.w2"));
    rep.pre_ln.resize(static_cast<std::size_t>(h));
    for (int j = 0; j < h; ++j) rep.pre_ln[static_cast<std::size_t>(j)] = sigmoid(t.at(0, j));
    Matrix normed = layer_norm(row_matrix(rep.pre_ln), p.at("task.mpm.ln.g"), p.at("task.mpm.ln.b"),
                               rep.ln);
    rep.h_m = normed.a;
    return rep;
}

double q_of(const MpmExample& ex, EntityId e) {
    auto it = ex.q.find(e);
    if (it == ex.q.end() || it->second <= 0.0)
        throw DataError("mpm candidate has no positive q score: entity " + std::to_string(e));
    return it->second;
}

}  // namespace

double mpm_score(const Matrix& hidden, const MpmExample& ex, EntityId e, const ModelParams& p,
                 const VerbalizerTable& verb, const Vocab& vocab) {
    MaskRep rep = mask_representation(hidden, ex.mask_pos, p);
    auto embed = mention_embedding(e, p, verb, vocab);
    double dot = 0.0;
    for (std::size_t j = 0; j < embed.size(); ++j) dot += rep.h_m[j] * embed[j];
    return dot - std::log(q_of(ex, e));
}

MpmResult mpm_forward(const Matrix& hidden, const MpmExample& ex, const ModelParams& p,
                      const VerbalizerTable& verb, const Vocab& vocab) {
    if (ex.negatives.empty()) throw DataError("mpm example has no negatives");
    for (EntityId neg : ex.negatives)
        if (neg == ex.positive) throw DataError("mpm positive appears among negatives");

    MpmResult res;
    res.rep = mask_representation(hidden, ex.mask_pos, p);
    res.candidates.push_back(ex.positive);
    res.candidates.insert(res.candidates.end(), ex.negatives.begin(), ex.negatives.end());

    for (EntityId e : res.candidates) {
        auto embed = mention_embedding(e, p, verb, vocab);
        double dot = 0.0;
        for (std::size_t j = 0; j < embed.size(); ++j) dot += res.rep.h_m[j] * embed[j];
        double g = dot - std::log(q_of(ex, e));
        if (!std::isfinite(g)) throw NumericalError("mpm score non-finite");
        res.scores.push_back(g);
        res.cand_embed.push_back(std::move(embed));
    }

    res.probs = softmax(res.scores);
    res.loss = -std::log(res.probs[0]);
    if (!std::isfinite(res.loss)) throw NumericalError("mpm loss non-finite");
    return res;
}

void mpm_backward(const MpmResult& res, const MpmExample& ex, const ModelParams& p,
                  const VerbalizerTable& verb, const Vocab& vocab, double scale, Gradients& grads,
                  Matrix& d_hidden) {
    int h = static_cast<int>(res.rep.h_m.size());
    std::vector<double> d_hm(static_cast<std::size_t>(h), 0.0);
    for (std::size_t i = 0; i < res.candidates.size(); ++i) {
        double dscore = (res.probs[i] - (i == 0 ? 1.0 : 0.0)) * scale;
        for (int j = 0; j < h; ++j)
            d_hm[static_cast<std::size_t>(j)] += dscore * res.cand_embed[i][static_cast<std::size_t>(j)];
        std::vector<double> d_embed(static_cast<std::size_t>(h));
        for (int j = 0; j < h; ++j)
            d_embed[static_cast<std::size_t>(j)] = dscore * res.rep.h_m[static_cast<std::size_t>(j)];
        scatter_mention_gradient(res.candidates[i], d_embed, p, verb, vocab, grads);
    }

    Matrix d_norm = row_matrix(d_hm);
    Matrix d_pre = layer_norm_backward(d_norm, p.at("task.mpm.ln.g"), res.rep.ln,
                                       grads.of("task.mpm.ln.g", p.at("task.mpm.ln.g")),
                                       grads.of("task.mpm.ln.b", p.at("task.mpm.ln.b")));

    Matrix dt(1, h);
    for (int j = 0; j < h; ++j) {
        double sg = res.rep.pre_ln[static_cast<std::size_t>(j)];
        dt.at(0, j) = d_pre.at(0, j) * sg * (1.0 - sg);
    }

    Matrix& gw2 = grads.of("task.mpm.w2", p.at("task.mpm.w2"));
    const Matrix& w2 = p.at("task.mpm.w2");
    for (int i = 0; i < h; ++i) {
        double hrow = res.rep.hidden_row[static_cast<std::size_t>(i)];
        for (int j = 0; j < h; ++j) gw2.at(i, j) += hrow * dt.at(0, j);
    }
    for (int i = 0; i < h; ++i) {
        double g = 0.0;
        for (int j = 0; j < h; ++j) g += dt.at(0, j) * w2.at(i, j);
        d_hidden.at(ex.mask_pos, i) += g;
    }
}

std::vector<double> mlm_logits(const Matrix& hidden, int pos, const ModelParams& p) {
    check_pos(pos, hidden.rows, "mlm");
    const Matrix& tok = p.at("emb.tok");
    const Matrix& bias = p.at("task.mlm.bias");
    std::vector<double> logits(static_cast<std::size_t>(tok.rows));
    for (int v = 0; v < tok.rows; ++v) {
        const double* row = tok.row(v);
        double s = 0.0;
        for (int j = 0; j < hidden.cols; ++j) s += hidden.at(pos, j) * row[j];
        logits[static_cast<std::size_t>(v)] = s + bias.at(0, v);
    }
    return logits;
}

MlmResult mlm_forward(const Matrix& hidden, const std::vector<int>& labels, const ModelParams& p) {
    MlmResult res;
    double sum = 0.0;
    for (int i = 0; i < static_cast<int>(labels.size()); ++i) {
        int label = labels[static_cast<std::size_t>(i)];
        if (label == kIgnoreLabel) continue;
        if (label < 0 || label >= p.config().vocab_size)
            throw DataError("mlm label out of range: " + std::to_string(label));
        auto probs = softmax(mlm_logits(hidden, i, p));
        sum += -std::log(probs[static_cast<std::size_t>(label)]);
        res.positions.push_back(i);
        res.probs.push_back(std::move(probs));
    }
    if (!res.positions.empty()) res.loss = sum / static_cast<double>(res.positions.size());
    if (!std::isfinite(res.loss)) throw NumericalError("mlm loss non-finite");
    return res;
}

void mlm_backward(const MlmResult& res, const std::vector<int>& labels, const Matrix& hidden,
                  const ModelParams& p, double scale, Gradients& grads, Matrix& d_hidden) {
    if (res.positions.empty()) return;
    const Matrix& tok = p.at("emb.tok");
    Matrix& gtok = grads.of("emb.tok", tok);
    Matrix& gbias = grads.of("task.mlm.bias", p.at("task.mlm.bias"));
    double per_pos = scale / static_cast<double>(res.positions.size());

    for (std::size_t k = 0; k < res.positions.size(); ++k) {
        int pos = res.positions[k];
        int label = labels[static_cast<std::size_t>(pos)];
        const auto& probs = res.probs[k];
        for (int v = 0; v < tok.rows; ++v) {
            double dlogit = (probs[static_cast<std::size_t>(v)] - (v == label ? 1.0 : 0.0)) * per_pos;
            if (dlogit == 0.0) continue;
            gbias.at(0, v) += dlogit;
            const double* erow = tok.row(v);
            double* grow = gtok.row(v);
            for (int j = 0; j < hidden.cols; ++j) {
                d_hidden.at(pos, j) += dlogit * erow[j];
                grow[j] += dlogit * hidden.at(pos, j);
            }
        }
    }
}

LossBreakdown total_loss(const ModelParams& p, const std::vector<ExampleSupervision>& batch,
                         const VerbalizerTable& verb, const Vocab& vocab, double lambda, double mu,
                         Gradients* grads, Rng* dropout_rng) {
    if (lambda < 0.0 || lambda > 1.0 || mu < 0.0 || mu > 1.0)
        throw ConfigError("loss coefficients must lie in [0,1]");

    LossBreakdown out;
    for (const auto& ex : batch) {
        bool has_mlm = std::any_of(ex.seq.mlm_labels.begin(), ex.seq.mlm_labels.end(),
                                   [](int l) { return l != kIgnoreLabel; });
        if (has_mlm) ++out.mlm_count;
        if (ex.pri) ++out.pri_count;
        if (ex.mpm) ++out.mpm_count;
    }

    for (const auto& ex : batch) {
        auto [hidden, tape] = forward(p, ex.seq, dropout_rng);
        Matrix d_hidden(hidden.rows, hidden.cols);
        bool need_backward = false;

        MlmResult mlm = mlm_forward(hidden, ex.seq.mlm_labels, p);
        if (!mlm.positions.empty()) {
            out.mlm += mlm.loss / static_cast<double>(out.mlm_count);
            if (grads) {
                mlm_backward(mlm, ex.seq.mlm_labels, hidden, p, 1.0 / out.mlm_count, *grads, d_hidden);
                need_backward = true;
            }
        }
        if (ex.pri) {
            PriResult pri = pri_forward(hidden, *ex.pri, p);
            out.pri += pri.loss / static_cast<double>(out.pri_count);
            if (grads && lambda > 0.0) {
                pri_backward(pri, *ex.pri, p, lambda / out.pri_count, *grads, d_hidden);
                need_backward = true;
            }
        }
        if (ex.mpm) {
            MpmResult mpm = mpm_forward(hidden, *ex.mpm, p, verb, vocab);
            out.mpm += mpm.loss / static_cast<double>(out.mpm_count);
            if (grads && mu > 0.0) {
                mpm_backward(mpm, *ex.mpm, p, verb, vocab, mu / out.mpm_count, *grads, d_hidden);
                need_backward = true;
            }
        }

        if (grads && need_backward) backward(p, tape, d_hidden, *grads);
    }

    out.total = out.mlm + lambda * out.pri + mu * out.mpm;
    if (!std::isfinite(out.total)) throw NumericalError("total loss non-finite");
    return out;
}

}  // namespace kprompt
