#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "grd/rng.hpp"
#include "grd/tensor.hpp"

namespace grd {

/// Named parameter tensors with matching gradient slots. Iteration order is
/// insertion order everywhere (initialization, optimizer, checkpoints), which
/// is what makes runs bit-reproducible.
class ParamStore {
public:
    enum class Init { Normal, Zero, One };

    struct Param {
        std::string name;
        Init init;
        Tensor2 value;
        Tensor2 grad;
    };

    int add(const std::string& name, int rows, int cols, Init init);
    int find(const std::string& name) const;  // -1 when absent

    Param& at(int handle) { return params_[handle]; }
    const Param& at(int handle) const { return params_[handle]; }
    int count() const { return static_cast<int>(params_.size()); }

    std::size_t total_values() const;
    void zero_grads();

    /// Weights ~ N(0, 0.02), biases 0, norm gains 1; one stream, insertion
    /// order, element order.
    void initialize(std::uint64_t seed);

private:
    std::vector<Param> params_;
};

// ---------------------------------------------------------------------------
// Layers. Forward passes fill caches; backward passes consume them, add into
// the store's gradient slots, and hand back the gradient w.r.t. their input.
// Rows of different sequences are concatenated into one matrix; only
// attention cares about the sequence boundaries (uniform seq_len).
// ---------------------------------------------------------------------------

struct Linear {
    int w = -1, b = -1;
    int in = 0, out = 0;

    static Linear create(ParamStore& store, const std::string& prefix, int in, int out);
    Tensor2 forward(const ParamStore& store, const Tensor2& x) const;
    Tensor2 backward(ParamStore& store, const Tensor2& x, const Tensor2& dy) const;
};

struct LayerNormCache {
    Tensor2 xhat;
    std::vector<double> inv_std;
};

struct LayerNorm {
    int gain = -1, shift = -1;
    int width = 0;
    static constexpr double kEps = 1e-5;

    static LayerNorm create(ParamStore& store, const std::string& prefix, int width);
    Tensor2 forward(const ParamStore& store, const Tensor2& x, LayerNormCache* cache) const;
    Tensor2 backward(ParamStore& store, const LayerNormCache& cache, const Tensor2& dy) const;
};

Tensor2 gelu(const Tensor2& x);
Tensor2 gelu_backward(const Tensor2& x, const Tensor2& dy);

struct AttentionCache {
    Tensor2 x, q, k, v;
    Tensor2 heads;               // concatenated head outputs, before the out projection
    std::vector<Tensor2> probs;  // one T x T row-stochastic matrix per (sequence, head)
};

/// Scaled dot-product self-attention. With `causal` set, row t attends to
/// rows <= t of its own sequence only; influence is exactly lower-triangular
/// (masked probabilities are identically zero, never just small).
struct MultiHeadAttention {
    Linear wq, wk, wv, wo;
    int d_model = 0, n_heads = 0;
    bool causal = true;

    static MultiHeadAttention create(ParamStore& store, const std::string& prefix, int d_model,
                                     int n_heads, bool causal);
    Tensor2 forward(const ParamStore& store, const Tensor2& x, int seq_len,
                    AttentionCache* cache) const;
    Tensor2 backward(ParamStore& store, const AttentionCache& cache, int seq_len,
                     const Tensor2& dy) const;
};

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment buffers parallel to a ParamStore.
class AdamState {
public:
    explicit AdamState(const ParamStore& store);

    /// Applies one bias-corrected update from the stored gradients, in
    /// parameter order. `handles` empty means every parameter; otherwise only
    /// the listed ones are touched (moments still advance only for those).
    void update(ParamStore& store, const AdamConfig& cfg, double lr_scale = 1.0,
                const std::vector<int>& handles = {});

    std::int64_t step() const { return step_; }

private:
    std::vector<Tensor2> m_, v_;
    std::int64_t step_ = 0;
};

// ---------------------------------------------------------------------------
// Verification
// ---------------------------------------------------------------------------

/// Central-difference check of the analytic gradients of `loss_fn`.
/// loss_fn(true) must populate store gradients (after zero_grads);
/// loss_fn(false) must only return the loss. Probes are drawn uniformly over
/// scalar parameters; returns the worst |analytic - numeric| relative to
/// max(1, |analytic|, |numeric|).
double gradient_check(const std::function<double(bool)>& loss_fn, ParamStore& store, int probes,
                      double h, RngStream& rng);

}  // namespace grd
