#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "kprompt/assembler.hpp"
#include "kprompt/rng.hpp"
#include "kprompt/tensor.hpp"

namespace kprompt {

struct ModelConfig {
    int hidden = 64;
    int layers = 2;
    int heads = 4;
    int ffn_mult = 4;
    int max_position = kDefaultMaxSeqLen;
    int vocab_size = 0;
    double dropout = 0.0;

    int head_dim() const { return hidden / heads; }
    int ffn_dim() const { return hidden * ffn_mult; }
    void validate() const;
};

// Named parameter tensors. Keys sort deterministically (layers zero-padded),
// which fixes both the init order and every reduction that walks the map.
//   emb.tok (V,h)  emb.pos (P,h)  emb.seg (2,h)
//   layerNN.attn.{q,k,v,o}_{w,b}  layerNN.ln{1,2}.{g,b}
//   layerNN.ffn.{w1,b1,w2,b2}
//   task.pri.w1 (h,h)  task.pri.ln.{g,b}  task.pri.cls_{w,b} (h,2)/(1,2)
//   task.mpm.w2 (h,h)  task.mpm.ln.{g,b}
//   task.mlm.bias (1,V)   -- MLM logits tie to emb.tok
class ModelParams {
public:
    ModelParams() = default;
    static ModelParams init(const ModelConfig& cfg, Rng& rng);
    static ModelParams from_tensors(const ModelConfig& cfg, std::map<std::string, Matrix> tensors);

    const ModelConfig& config() const { return cfg_; }
    const Matrix& at(const std::string& name) const;
    Matrix& at(const std::string& name);  // mutation does NOT bump the version
    const std::map<std::string, Matrix>& tensors() const { return tensors_; }

    // Tapes record the version at forward time; optimizer steps and loads bump
    // it so a backward over mutated parameters fails loudly.
    std::uint64_t version() const { return version_; }
    void bump_version() { ++version_; }

    // Rounds every value through float32 so checkpoints round-trip bitwise.
    void quantize_f32();

    std::size_t parameter_count() const;

private:
    static ModelParams shaped(const ModelConfig& cfg);

    ModelConfig cfg_;
    std::map<std::string, Matrix> tensors_;
    std::uint64_t version_ = 0;
};

struct Gradients {
    std::map<std::string, Matrix> g;

    Matrix& of(const std::string& name, const Matrix& like);
    const Matrix* find(const std::string& name) const;
    double global_norm() const;
    void scale(double s);
    void clear() { g.clear(); }
};

struct LayerNormTape {
    Matrix xhat;                 // normalized pre-affine values
    std::vector<double> invstd;  // per row
};

struct LayerTape {
    Matrix input;                   // block input x
    Matrix q, k, v;                 // n x h, heads packed
    std::vector<Matrix> attn_probs; // per head, n x n
    Matrix attn_ctx;                // concatenated head outputs
    Matrix attn_out;                // after output projection (+dropout)
    Matrix attn_drop;               // kept-mask / (1-p); empty when dropout off
    LayerNormTape ln1;
    Matrix ln1_out;
    Matrix ffn_pre;                 // ln1_out * w1 + b1
    Matrix ffn_act;                 // gelu(ffn_pre)
    Matrix ffn_out;                 // (+dropout)
    Matrix ffn_drop;
    LayerNormTape ln2;
};

struct ActivationTape {
    std::uint64_t params_version = 0;
    std::vector<int> token_ids, position_ids, segment_ids;
    Matrix embedded;
    Matrix emb_drop;
    std::vector<LayerTape> layers;
    Matrix output;
};

double gelu(double x);
double gelu_grad(double x);
double sigmoid(double x);

// y = gamma .* xhat + beta, row-wise stats, eps 1e-5.
Matrix layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta, LayerNormTape& tape);
Matrix layer_norm_backward(const Matrix& dy, const Matrix& gamma, const LayerNormTape& tape,
                           Matrix& dgamma, Matrix& dbeta);

// Single-head scaled dot-product attention with additive mask.
Matrix attention(const Matrix& Qm, const Matrix& Km, const Matrix& Vm,
                 const std::vector<std::vector<double>>& mask);

Matrix embed(const ModelParams& p, const InputSequence& seq);

// Post-norm encoder; dropout_rng enables inverted dropout when cfg.dropout > 0.
std::pair<Matrix, ActivationTape> forward(const ModelParams& p, const InputSequence& seq,
                                          Rng* dropout_rng = nullptr);

// Accumulates exact analytic gradients of sum(d_output .* output) into grads.
void backward(const ModelParams& p, const ActivationTape& tape, const Matrix& d_output,
              Gradients& grads);

struct FiniteDiffReport {
    double max_rel_err = 0.0;
    std::string worst_tensor;
    int worst_index = -1;
    int coords_checked = 0;
    double tolerance = 0.0;
    bool pass = false;
};

// Central finite differences of loss_fn against analytic grads over up to
// per_tensor sampled coordinates of every tensor. Restores params on exit.
FiniteDiffReport finite_difference_check(ModelParams& params,
                                         const std::function<double()>& loss_fn,
                                         const Gradients& analytic, double eps, double tol,
                                         std::size_t per_tensor, Rng& rng);

}  // namespace kprompt
