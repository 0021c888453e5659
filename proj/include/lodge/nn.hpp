#pragma once

// Differentiable building blocks with hand-written backward passes.
//
// Layers hold only parameters. Activations needed by backward live in a
// per-call context owned by the caller, so a frozen layer can run forward on
// many threads at once. Backward accumulates into Param::grad.
//
// Batches are stacked row-wise: B samples of S rows each form a (B*S) x D
// matrix. Row-local layers ignore the split; attention and FiLM take `seq`.

#include <cstdint>
#include <string>
#include <vector>

#include "lodge/rng.hpp"
#include "lodge/tensor.hpp"

namespace lodge::nn {

struct Param {
    std::string name;
    Mat value;
    Mat grad;

    Param() = default;
    Param(std::string n, Mat v) : name(std::move(n)), value(std::move(v)), grad(value.rows, value.cols) {}
    void zero_grad() { grad.fill(0.0); }
};

using ParamList = std::vector<Param*>;

void zero_grads(const ParamList& ps);
std::size_t param_count(const ParamList& ps);

// y = x W + b, W: in x out.
struct Linear {
    Param w, b;

    Linear() = default;
    Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng, double gain = 1.0);
    std::size_t in() const { return w.value.rows; }
    std::size_t out() const { return w.value.cols; }

    Mat forward(const Mat& x) const;
    // Needs the forward input; returns dL/dx.
    Mat backward(const Mat& x, const Mat& dy);
    void collect(ParamList& out);
};

struct LayerNorm {
    Param g, b;
    double eps = 1e-5;

    struct Ctx {
        Mat xhat;
        std::vector<double> rstd;
    };

    LayerNorm() = default;
    LayerNorm(const std::string& name, std::size_t dim);
    Mat forward(const Mat& x, Ctx& ctx) const;
    Mat backward(const Ctx& ctx, const Mat& dy);
    void collect(ParamList& out);
};

// Exact (erf) GELU.
Mat gelu(const Mat& x);
Mat gelu_backward(const Mat& x, const Mat& dy);

// Row-wise softmax and its backward given the softmax output.
Mat softmax_rows(const Mat& x);
Mat softmax_rows_backward(const Mat& y, const Mat& dy);

// Single-head scaled dot-product attention with input/output projections.
// Queries come from xq (B*Sq rows), keys and values from xkv (B*Sk rows).
struct Attention {
    Linear q, k, v, o;

    struct Ctx {
        Mat xq, xkv;
        Mat Q, K, V;
        std::vector<Mat> P;  // per sample, Sq x Sk
        Mat ctx;             // B*Sq x D before the output projection
        std::size_t sq = 0, sk = 0;
    };

    Attention() = default;
    Attention(const std::string& name, std::size_t dim, std::size_t kv_dim, Rng& rng);
    Mat forward(const Mat& xq, std::size_t sq, const Mat& xkv, std::size_t sk, Ctx& ctx) const;
    // Returns (dxq, dxkv). For self-attention add both into the same input.
    std::pair<Mat, Mat> backward(const Ctx& ctx, const Mat& dy);
    void collect(ParamList& out);
};

// Per-sample feature-wise modulation gamma(c) * x + beta(c), c: B x C.
// The map is zero-initialized with gamma bias 1, so it starts as the identity.
struct FiLM {
    Linear map;  // C -> 2D, [gamma | beta]

    struct Ctx {
        Mat x, c, gb;
        std::size_t seq = 0;
    };

    FiLM() = default;
    FiLM(const std::string& name, std::size_t cond_dim, std::size_t dim);
    Mat forward(const Mat& x, std::size_t seq, const Mat& c, Ctx& ctx) const;
    // Returns (dx, dc).
    std::pair<Mat, Mat> backward(const Ctx& ctx, const Mat& dy);
    void collect(ParamList& out);
};

// [sin(t w_0), cos(t w_0), sin(t w_1), ...], w_i = 10000^(-2i/dim). dim must be even.
std::vector<double> sinusoidal_embed(double t, std::size_t dim);
// One row per value.
Mat sinusoidal_rows(const std::vector<double>& ts, std::size_t dim);

// shadow <- decay * shadow + (1 - decay) * value
void ema_update(std::vector<Mat>& shadow, const ParamList& params, double decay);
std::vector<Mat> snapshot(const ParamList& params);
void load_values(const ParamList& params, const std::vector<Mat>& values);

}  // namespace lodge::nn
