#include "grd/nn.hpp"

#include <cmath>

#include "grd/errors.hpp"

namespace grd {

// ---------------------------------------------------------------------------
// ParamStore
// ---------------------------------------------------------------------------

int ParamStore::add(const std::string& name, int rows, int cols, Init init) {
    if (find(name) >= 0) throw InvalidConfig("duplicate parameter name '" + name + "'");
    Param p;
    p.name = name;
    p.init = init;
    p.value = Tensor2(rows, cols);
    p.grad = Tensor2(rows, cols);
    params_.push_back(std::move(p));
    return static_cast<int>(params_.size()) - 1;
}

int ParamStore::find(const std::string& name) const {
    for (int i = 0; i < count(); ++i)
        if (params_[i].name == name) return i;
    return -1;
}

std::size_t ParamStore::total_values() const {
    std::size_t n = 0;
    for (const Param& p : params_) n += p.value.size();
    return n;
}

void ParamStore::zero_grads() {
    for (Param& p : params_) p.grad.set_zero();
}

void ParamStore::initialize(std::uint64_t seed) {
    RngStream rng(seed);
    for (Param& p : params_) {
        switch (p.init) {
            case Init::Normal:
                for (double& v : p.value.data) v = rng.normal(0.0, 0.02);
                break;
            case Init::Zero:
                p.value.set_zero();
                break;
            case Init::One:
                std::fill(p.value.data.begin(), p.value.data.end(), 1.0);
                break;
        }
        p.grad.set_zero();
    }
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

Linear Linear::create(ParamStore& store, const std::string& prefix, int in, int out) {
    Linear l;
    l.in = in;
    l.out = out;
    l.w = store.add(prefix + ".w", in, out, ParamStore::Init::Normal);
    l.b = store.add(prefix + ".b", 1, out, ParamStore::Init::Zero);
    return l;
}

Tensor2 Linear::forward(const ParamStore& store, const Tensor2& x) const {
    if (x.cols != in)
        throw ShapeMismatch("linear expects width " + std::to_string(in) + ", got " +
                            std::to_string(x.cols));
    Tensor2 y(x.rows, out);
    y.mat().noalias() = x.mat() * store.at(w).value.mat();
    y.mat().rowwise() += store.at(b).value.mat().row(0);
    return y;
}

Tensor2 Linear::backward(ParamStore& store, const Tensor2& x, const Tensor2& dy) const {
    if (dy.cols != out || dy.rows != x.rows) throw ShapeMismatch("linear backward shapes");
    store.at(w).grad.mat().noalias() += x.mat().transpose() * dy.mat();
    store.at(b).grad.mat().row(0) += dy.mat().colwise().sum();
    Tensor2 dx(x.rows, in);
    dx.mat().noalias() = dy.mat() * store.at(w).value.mat().transpose();
    return dx;
}

// ---------------------------------------------------------------------------
// LayerNorm
// ---------------------------------------------------------------------------

LayerNorm LayerNorm::create(ParamStore& store, const std::string& prefix, int width) {
    LayerNorm ln;
    ln.width = width;
    ln.gain = store.add(prefix + ".gain", 1, width, ParamStore::Init::One);
    ln.shift = store.add(prefix + ".shift", 1, width, ParamStore::Init::Zero);
    return ln;
}

Tensor2 LayerNorm::forward(const ParamStore& store, const Tensor2& x, LayerNormCache* cache) const {
    if (x.cols != width) throw ShapeMismatch("layer norm width");
    const double n = static_cast<double>(width);
    Tensor2 y(x.rows, x.cols);
    if (cache) {
        cache->xhat = Tensor2(x.rows, x.cols);
        cache->inv_std.assign(x.rows, 0.0);
    }
    const auto g = store.at(gain).value.mat().row(0);
    const auto s = store.at(shift).value.mat().row(0);
    for (int r = 0; r < x.rows; ++r) {
        const auto row = x.mat().row(r);
        const double mean = row.mean();
        const double var = (row.array() - mean).square().sum() / n;
        const double inv = 1.0 / std::sqrt(var + kEps);
        const Eigen::RowVectorXd xhat = (row.array() - mean).matrix() * inv;
        y.mat().row(r) = (xhat.array() * g.array() + s.array()).matrix();
        if (cache) {
            cache->xhat.mat().row(r) = xhat;
            cache->inv_std[r] = inv;
        }
    }
    return y;
}

Tensor2 LayerNorm::backward(ParamStore& store, const LayerNormCache& cache, const Tensor2& dy) const {
    const double n = static_cast<double>(width);
    Tensor2 dx(dy.rows, dy.cols);
    auto dgain = store.at(gain).grad.mat().row(0);
    auto dshift = store.at(shift).grad.mat().row(0);
    const auto g = store.at(gain).value.mat().row(0);
    for (int r = 0; r < dy.rows; ++r) {
        const auto dyr = dy.mat().row(r);
        const auto xhat = cache.xhat.mat().row(r);
        dgain += (dyr.array() * xhat.array()).matrix();
        dshift += dyr;

        // dx = inv_std/n * (n*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat))
        const Eigen::RowVectorXd dxhat = (dyr.array() * g.array()).matrix();
        const double sum_dxhat = dxhat.sum();
        const double sum_dxhat_xhat = (dxhat.array() * xhat.array()).sum();
        dx.mat().row(r) =
            (cache.inv_std[r] / n) *
            (n * dxhat.array() - sum_dxhat - xhat.array() * sum_dxhat_xhat).matrix();
    }
    return dx;
}

// ---------------------------------------------------------------------------
// GELU
// ---------------------------------------------------------------------------

Tensor2 gelu(const Tensor2& x) {
    Tensor2 y(x.rows, x.cols);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double v = x.data[i];
        y.data[i] = 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
    }
    return y;
}

Tensor2 gelu_backward(const Tensor2& x, const Tensor2& dy) {
    Tensor2 dx(x.rows, x.cols);
    constexpr double kInvSqrt2Pi = 0.3989422804014327;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double v = x.data[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        dx.data[i] = dy.data[i] * (cdf + v * pdf);
    }
    return dx;
}

// ---------------------------------------------------------------------------
// MultiHeadAttention
// ---------------------------------------------------------------------------

MultiHeadAttention MultiHeadAttention::create(ParamStore& store, const std::string& prefix,
                                              int d_model, int n_heads, bool causal) {
    if (n_heads < 1 || d_model % n_heads != 0)
        throw InvalidHeads("d_model " + std::to_string(d_model) + " not divisible by " +
                           std::to_string(n_heads) + " heads");
    MultiHeadAttention a;
    a.d_model = d_model;
    a.n_heads = n_heads;
    a.causal = causal;
    a.wq = Linear::create(store, prefix + ".wq", d_model, d_model);
    a.wk = Linear::create(store, prefix + ".wk", d_model, d_model);
    a.wv = Linear::create(store, prefix + ".wv", d_model, d_model);
    a.wo = Linear::create(store, prefix + ".wo", d_model, d_model);
    return a;
}

Tensor2 MultiHeadAttention::forward(const ParamStore& store, const Tensor2& x, int seq_len,
                                    AttentionCache* cache) const {
    if (x.cols != d_model) throw ShapeMismatch("attention input width");
    if (seq_len < 1 || x.rows % seq_len != 0)
        throw ShapeMismatch("attention rows not a multiple of the sequence length");
    const int n_seq = x.rows / seq_len;
    const int hd = d_model / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    Tensor2 q = wq.forward(store, x);
    Tensor2 k = wk.forward(store, x);
    Tensor2 v = wv.forward(store, x);
    Tensor2 heads(x.rows, d_model);

    std::vector<Tensor2> probs(static_cast<std::size_t>(n_seq) * n_heads);
    for (int s = 0; s < n_seq; ++s) {
        const int r0 = s * seq_len;
        for (int h = 0; h < n_heads; ++h) {
            const int c0 = h * hd;
            auto qh = q.mat().block(r0, c0, seq_len, hd);
            auto kh = k.mat().block(r0, c0, seq_len, hd);
            auto vh = v.mat().block(r0, c0, seq_len, hd);

            Tensor2& p = probs[static_cast<std::size_t>(s) * n_heads + h];
            p = Tensor2(seq_len, seq_len);
            RowMatrix scores = (qh * kh.transpose()) * scale;
            for (int i = 0; i < seq_len; ++i) {
                const int limit = causal ? i + 1 : seq_len;
                double mx = scores(i, 0);
                for (int j = 1; j < limit; ++j) mx = std::max(mx, scores(i, j));
                double sum = 0.0;
                for (int j = 0; j < limit; ++j) {
                    const double e = std::exp(scores(i, j) - mx);
                    p.at(i, j) = e;
                    sum += e;
                }
                for (int j = 0; j < limit; ++j) p.at(i, j) /= sum;
                // entries past `limit` stay exactly zero
            }
            heads.mat().block(r0, c0, seq_len, hd).noalias() = p.mat() * vh;
        }
    }

    Tensor2 y = wo.forward(store, heads);
    if (cache) {
        cache->x = x;
        cache->q = std::move(q);
        cache->k = std::move(k);
        cache->v = std::move(v);
        cache->heads = std::move(heads);
        cache->probs = std::move(probs);
    }
    return y;
}

Tensor2 MultiHeadAttention::backward(ParamStore& store, const AttentionCache& cache, int seq_len,
                                     const Tensor2& dy) const {
    const int n_seq = dy.rows / seq_len;
    const int hd = d_model / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    const Tensor2 dheads = wo.backward(store, cache.heads, dy);

    Tensor2 dq(dy.rows, d_model), dk(dy.rows, d_model), dv(dy.rows, d_model);
    for (int s = 0; s < n_seq; ++s) {
        const int r0 = s * seq_len;
        for (int h = 0; h < n_heads; ++h) {
            const int c0 = h * hd;
            const Tensor2& p = cache.probs[static_cast<std::size_t>(s) * n_heads + h];
            auto qh = cache.q.mat().block(r0, c0, seq_len, hd);
            auto kh = cache.k.mat().block(r0, c0, seq_len, hd);
            auto vh = cache.v.mat().block(r0, c0, seq_len, hd);
            auto dout = dheads.mat().block(r0, c0, seq_len, hd);

            dv.mat().block(r0, c0, seq_len, hd).noalias() = p.mat().transpose() * dout;

            RowMatrix dp = dout * vh.transpose();
            RowMatrix ds = RowMatrix::Zero(seq_len, seq_len);
            for (int i = 0; i < seq_len; ++i) {
                const int limit = causal ? i + 1 : seq_len;
                double dot = 0.0;
                for (int j = 0; j < limit; ++j) dot += dp(i, j) * p.at(i, j);
                for (int j = 0; j < limit; ++j) ds(i, j) = p.at(i, j) * (dp(i, j) - dot);
            }
            dq.mat().block(r0, c0, seq_len, hd).noalias() = (ds * kh) * scale;
            dk.mat().block(r0, c0, seq_len, hd).noalias() = (ds.transpose() * qh) * scale;
        }
    }

    Tensor2 dx = wq.backward(store, cache.x, dq);
    dx.mat() += wk.backward(store, cache.x, dk).mat();
    dx.mat() += wv.backward(store, cache.x, dv).mat();
    return dx;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

AdamState::AdamState(const ParamStore& store) {
    m_.reserve(store.count());
    v_.reserve(store.count());
    for (int i = 0; i < store.count(); ++i) {
        m_.emplace_back(store.at(i).value.rows, store.at(i).value.cols);
        v_.emplace_back(store.at(i).value.rows, store.at(i).value.cols);
    }
}

void AdamState::update(ParamStore& store, const AdamConfig& cfg, double lr_scale,
                       const std::vector<int>& handles) {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
    const double lr = cfg.lr * lr_scale;

    auto apply = [&](int idx) {
        ParamStore::Param& p = store.at(idx);
        Tensor2& m = m_[idx];
        Tensor2& v = v_[idx];
        for (std::size_t i = 0; i < p.value.data.size(); ++i) {
            const double g = p.grad.data[i];
            m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * g;
            v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            p.value.data[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    };

    if (handles.empty()) {
        for (int i = 0; i < store.count(); ++i) apply(i);
    } else {
        for (int i : handles) apply(i);
    }
}

// ---------------------------------------------------------------------------
// gradient_check
// ---------------------------------------------------------------------------

double gradient_check(const std::function<double(bool)>& loss_fn, ParamStore& store, int probes,
                      double h, RngStream& rng) {
    store.zero_grads();
    loss_fn(true);
    std::vector<Tensor2> analytic;
    analytic.reserve(store.count());
    for (int i = 0; i < store.count(); ++i) analytic.push_back(store.at(i).grad);

    double worst = 0.0;
    for (int probe = 0; probe < probes; ++probe) {
        const int pi = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(store.count())));
        ParamStore::Param& p = store.at(pi);
        const std::size_t ei = rng.uniform_int(p.value.data.size());

        const double saved = p.value.data[ei];
        p.value.data[ei] = saved + h;
        const double lp = loss_fn(false);
        p.value.data[ei] = saved - h;
        const double lm = loss_fn(false);
        p.value.data[ei] = saved;

        const double numeric = (lp - lm) / (2.0 * h);
        const double a = analytic[pi].data[ei];
        const double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace grd
