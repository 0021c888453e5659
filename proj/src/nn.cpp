#include "lodge/nn.hpp"

#include <cmath>
#include <numbers>

namespace lodge::nn {

void zero_grads(const ParamList& ps) {
    for (Param* p : ps) p->zero_grad();
}

std::size_t param_count(const ParamList& ps) {
    std::size_t n = 0;
    for (const Param* p : ps) n += p->value.size();
    return n;
}

// ---------------------------------------------------------------------------

Linear::Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng, double gain)
    : w(name + ".w", rng.normal_mat(in, out, gain / std::sqrt(static_cast<double>(in)))),
      b(name + ".b", Mat(1, out)) {}

Mat Linear::forward(const Mat& x) const {
    if (x.cols != in()) throw ShapeError(w.name + ": input width " + std::to_string(x.cols) + ", expected " + std::to_string(in()));
    Mat y(x.rows, out());
    for (std::size_t r = 0; r < y.rows; ++r)
        for (std::size_t c = 0; c < y.cols; ++c) y(r, c) = b.value.data[c];
    matmul_acc(x, w.value, y);
    return y;
}

Mat Linear::backward(const Mat& x, const Mat& dy) {
    require_shape(dy, x.rows, out(), "Linear::backward");
    matmul_tn_acc(x, dy, w.grad);
    for (std::size_t r = 0; r < dy.rows; ++r)
        for (std::size_t c = 0; c < dy.cols; ++c) b.grad.data[c] += dy(r, c);
    return matmul_nt(dy, w.value);
}

void Linear::collect(ParamList& out) {
    out.push_back(&w);
    out.push_back(&b);
}

// ---------------------------------------------------------------------------

LayerNorm::LayerNorm(const std::string& name, std::size_t dim) : g(name + ".g", Mat(1, dim, 1.0)), b(name + ".b", Mat(1, dim)) {}

Mat LayerNorm::forward(const Mat& x, Ctx& ctx) const {
    const std::size_t d = g.value.cols;
    require_shape(x, x.rows, d, "LayerNorm");
    ctx.xhat = Mat(x.rows, d);
    ctx.rstd.assign(x.rows, 0.0);
    Mat y(x.rows, d);
    for (std::size_t r = 0; r < x.rows; ++r) {
        double mean = 0.0;
        for (std::size_t c = 0; c < d; ++c) mean += x(r, c);
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t c = 0; c < d; ++c) var += (x(r, c) - mean) * (x(r, c) - mean);
        var /= static_cast<double>(d);
        const double rs = 1.0 / std::sqrt(var + eps);
        ctx.rstd[r] = rs;
        for (std::size_t c = 0; c < d; ++c) {
            const double xh = (x(r, c) - mean) * rs;
            ctx.xhat(r, c) = xh;
            y(r, c) = xh * g.value.data[c] + b.value.data[c];
        }
    }
    return y;
}

Mat LayerNorm::backward(const Ctx& ctx, const Mat& dy) {
    const std::size_t d = g.value.cols;
    require_shape(dy, ctx.xhat.rows, d, "LayerNorm::backward");
    Mat dx(dy.rows, d);
    const double inv_d = 1.0 / static_cast<double>(d);
    for (std::size_t r = 0; r < dy.rows; ++r) {
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double gxh = dy(r, c) * g.value.data[c];
            s1 += gxh;
            s2 += gxh * ctx.xhat(r, c);
            g.grad.data[c] += dy(r, c) * ctx.xhat(r, c);
            b.grad.data[c] += dy(r, c);
        }
        for (std::size_t c = 0; c < d; ++c) {
            const double gxh = dy(r, c) * g.value.data[c];
            dx(r, c) = ctx.rstd[r] * (gxh - inv_d * s1 - ctx.xhat(r, c) * inv_d * s2);
        }
    }
    return dx;
}

void LayerNorm::collect(ParamList& out) {
    out.push_back(&g);
    out.push_back(&b);
}

// ---------------------------------------------------------------------------

constexpr double kInvSqrt2 = 0.70710678118654752440;

Mat gelu(const Mat& x) {
    Mat y(x.rows, x.cols);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x.data[i];
        y.data[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    }
    return y;
}

Mat gelu_backward(const Mat& x, const Mat& dy) {
    require_shape(dy, x.rows, x.cols, "gelu_backward");
    const double k = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;  // 1/sqrt(2 pi)
    Mat dx(x.rows, x.cols);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x.data[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = k * std::exp(-0.5 * v * v);
        dx.data[i] = dy.data[i] * (cdf + v * pdf);
    }
    return dx;
}

Mat softmax_rows(const Mat& x) {
    Mat y(x.rows, x.cols);
    for (std::size_t r = 0; r < x.rows; ++r) {
        double mx = x(r, 0);
        for (std::size_t c = 1; c < x.cols; ++c) mx = std::max(mx, x(r, c));
        double sum = 0.0;
        for (std::size_t c = 0; c < x.cols; ++c) {
            y(r, c) = std::exp(x(r, c) - mx);
            sum += y(r, c);
        }
        const double inv = 1.0 / sum;
        for (std::size_t c = 0; c < x.cols; ++c) y(r, c) *= inv;
    }
    return y;
}

Mat softmax_rows_backward(const Mat& y, const Mat& dy) {
    require_shape(dy, y.rows, y.cols, "softmax_rows_backward");
    Mat dx(y.rows, y.cols);
    for (std::size_t r = 0; r < y.rows; ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < y.cols; ++c) dot += y(r, c) * dy(r, c);
        for (std::size_t c = 0; c < y.cols; ++c) dx(r, c) = y(r, c) * (dy(r, c) - dot);
    }
    return dx;
}

// ---------------------------------------------------------------------------

Attention::Attention(const std::string& name, std::size_t dim, std::size_t kv_dim, Rng& rng)
    : q(name + ".q", dim, dim, rng), k(name + ".k", kv_dim, dim, rng), v(name + ".v", kv_dim, dim, rng),
      o(name + ".o", dim, dim, rng) {}

Mat Attention::forward(const Mat& xq, std::size_t sq, const Mat& xkv, std::size_t sk, Ctx& ctx) const {
    if (sq == 0 || sk == 0 || xq.rows % sq != 0 || xkv.rows % sk != 0 || xq.rows / sq != xkv.rows / sk) {
        throw ShapeError("attention: batch split mismatch");
    }
    const std::size_t batch = xq.rows / sq;
    const std::size_t d = q.out();
    ctx.xq = xq;
    ctx.xkv = xkv;
    ctx.sq = sq;
    ctx.sk = sk;
    ctx.Q = q.forward(xq);
    ctx.K = k.forward(xkv);
    ctx.V = v.forward(xkv);
    ctx.P.assign(batch, Mat());
    ctx.ctx = Mat(xq.rows, d);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t b = 0; b < batch; ++b) {
        const Mat Qb = ctx.Q.slice_rows(b * sq, sq);
        const Mat Kb = ctx.K.slice_rows(b * sk, sk);
        const Mat Vb = ctx.V.slice_rows(b * sk, sk);
        Mat S = matmul_nt(Qb, Kb);
        scale_inplace(S, scale);
        ctx.P[b] = softmax_rows(S);
        ctx.ctx.set_rows(b * sq, matmul(ctx.P[b], Vb));
    }
    return o.forward(ctx.ctx);
}

std::pair<Mat, Mat> Attention::backward(const Ctx& ctx, const Mat& dy) {
    const std::size_t sq = ctx.sq, sk = ctx.sk;
    const std::size_t batch = ctx.xq.rows / sq;
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.out()));
    const Mat dctx = o.backward(ctx.ctx, dy);
    Mat dQ(ctx.Q.rows, ctx.Q.cols), dK(ctx.K.rows, ctx.K.cols), dV(ctx.V.rows, ctx.V.cols);
    for (std::size_t b = 0; b < batch; ++b) {
        const Mat Qb = ctx.Q.slice_rows(b * sq, sq);
        const Mat Kb = ctx.K.slice_rows(b * sk, sk);
        const Mat Vb = ctx.V.slice_rows(b * sk, sk);
        const Mat dC = dctx.slice_rows(b * sq, sq);
        const Mat dP = matmul_nt(dC, Vb);
        dV.set_rows(b * sk, matmul_tn(ctx.P[b], dC));
        Mat dS = softmax_rows_backward(ctx.P[b], dP);
        scale_inplace(dS, scale);
        dQ.set_rows(b * sq, matmul(dS, Kb));
        dK.set_rows(b * sk, matmul_tn(dS, Qb));
    }
    Mat dxq = q.backward(ctx.xq, dQ);
    Mat dxkv = k.backward(ctx.xkv, dK);
    add_inplace(dxkv, v.backward(ctx.xkv, dV));
    return {std::move(dxq), std::move(dxkv)};
}

void Attention::collect(ParamList& out) {
    q.collect(out);
    k.collect(out);
    v.collect(out);
    o.collect(out);
}

// ---------------------------------------------------------------------------

FiLM::FiLM(const std::string& name, std::size_t cond_dim, std::size_t dim) {
    map.w = Param(name + ".w", Mat(cond_dim, 2 * dim));
    Mat bias(1, 2 * dim);
    for (std::size_t c = 0; c < dim; ++c) bias.data[c] = 1.0;
    map.b = Param(name + ".b", bias);
}

Mat FiLM::forward(const Mat& x, std::size_t seq, const Mat& c, Ctx& ctx) const {
    const std::size_t d = map.out() / 2;
    if (seq == 0 || x.rows != c.rows * seq || x.cols != d) throw ShapeError(map.w.name + ": FiLM shape mismatch");
    ctx.x = x;
    ctx.c = c;
    ctx.seq = seq;
    ctx.gb = map.forward(c);
    Mat y(x.rows, d);
    for (std::size_t r = 0; r < x.rows; ++r) {
        const std::size_t s = r / seq;
        for (std::size_t j = 0; j < d; ++j) y(r, j) = ctx.gb(s, j) * x(r, j) + ctx.gb(s, d + j);
    }
    return y;
}

std::pair<Mat, Mat> FiLM::backward(const Ctx& ctx, const Mat& dy) {
    const std::size_t d = map.out() / 2;
    Mat dx(dy.rows, d);
    Mat dgb(ctx.c.rows, 2 * d);
    for (std::size_t r = 0; r < dy.rows; ++r) {
        const std::size_t s = r / ctx.seq;
        for (std::size_t j = 0; j < d; ++j) {
            dx(r, j) = ctx.gb(s, j) * dy(r, j);
            dgb(s, j) += ctx.x(r, j) * dy(r, j);
            dgb(s, d + j) += dy(r, j);
        }
    }
    Mat dc = map.backward(ctx.c, dgb);
    return {std::move(dx), std::move(dc)};
}

void FiLM::collect(ParamList& out) { map.collect(out); }

// ---------------------------------------------------------------------------

std::vector<double> sinusoidal_embed(double t, std::size_t dim) {
    if (dim == 0 || dim % 2 != 0) throw std::invalid_argument("sinusoidal_embed: dim must be even and positive");
    std::vector<double> e(dim);
    for (std::size_t i = 0; i < dim / 2; ++i) {
        const double w = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
        e[2 * i] = std::sin(t * w);
        e[2 * i + 1] = std::cos(t * w);
    }
    return e;
}

Mat sinusoidal_rows(const std::vector<double>& ts, std::size_t dim) {
    Mat m(ts.size(), dim);
    for (std::size_t r = 0; r < ts.size(); ++r) {
        const auto e = sinusoidal_embed(ts[r], dim);
        std::copy(e.begin(), e.end(), m.row(r).begin());
    }
    return m;
}

void ema_update(std::vector<Mat>& shadow, const ParamList& params, double decay) {
    if (shadow.size() != params.size()) throw std::invalid_argument("ema_update: shadow/param count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        Mat& s = shadow[i];
        const Mat& v = params[i]->value;
        require_shape(s, v.rows, v.cols, "ema_update");
        for (std::size_t j = 0; j < s.size(); ++j) s.data[j] = decay * s.data[j] + (1.0 - decay) * v.data[j];
    }
}

std::vector<Mat> snapshot(const ParamList& params) {
    std::vector<Mat> out;
    out.reserve(params.size());
    for (const Param* p : params) out.push_back(p->value);
    return out;
}

void load_values(const ParamList& params, const std::vector<Mat>& values) {
    if (values.size() != params.size()) throw std::invalid_argument("load_values: count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        require_shape(values[i], params[i]->value.rows, params[i]->value.cols, params[i]->name.c_str());
        params[i]->value = values[i];
    }
}

}  // namespace lodge::nn
