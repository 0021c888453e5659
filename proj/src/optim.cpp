#include "lodge/optim.hpp"

#include <cmath>

namespace lodge::nn {

void OptimState::init(const ParamList& ps) {
    step = 0;
    m.clear();
    v.clear();
    n.clear();
    prev_grad.clear();
    for (const Param* p : ps) {
        m.emplace_back(p->value.rows, p->value.cols);
        v.emplace_back(p->value.rows, p->value.cols);
        n.emplace_back(p->value.rows, p->value.cols);
        prev_grad.emplace_back(p->value.rows, p->value.cols);
    }
}

void check_grads(const ParamList& ps) {
    for (const Param* p : ps) {
        if (!all_finite(p->grad)) throw NonFiniteGradient("non-finite gradient in " + p->name);
    }
}

namespace {
void require_state(const ParamList& ps, OptimState& st) {
    if (st.m.size() != ps.size()) {
        if (st.step != 0 || !st.m.empty()) throw std::invalid_argument("optimizer state does not match parameters");
        st.init(ps);
    }
}
}  // namespace

void adan_step(const ParamList& ps, OptimState& st, const AdanConfig& cfg) {
    check_grads(ps);
    require_state(ps, st);
    ++st.step;
    const double k = static_cast<double>(st.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, k);
    const double bc2 = 1.0 - std::pow(cfg.beta2, k);
    const double bc3 = std::sqrt(1.0 - std::pow(cfg.beta3, k));
    for (std::size_t i = 0; i < ps.size(); ++i) {
        Mat& w = ps[i]->value;
        const Mat& g = ps[i]->grad;
        Mat& m = st.m[i];
        Mat& v = st.v[i];
        Mat& n = st.n[i];
        Mat& pg = st.prev_grad[i];
        if (st.step == 1) pg = g;
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double diff = g.data[j] - pg.data[j];
            const double upd = g.data[j] + cfg.beta2 * diff;
            m.data[j] = cfg.beta1 * m.data[j] + (1.0 - cfg.beta1) * g.data[j];
            v.data[j] = cfg.beta2 * v.data[j] + (1.0 - cfg.beta2) * diff;
            n.data[j] = cfg.beta3 * n.data[j] + (1.0 - cfg.beta3) * upd * upd;
            const double denom = std::sqrt(n.data[j]) / bc3 + cfg.eps;
            const double step = (m.data[j] / bc1 + cfg.beta2 * v.data[j] / bc2) / denom;
            if (cfg.weight_decay != 0.0) w.data[j] *= 1.0 - cfg.lr * cfg.weight_decay;
            w.data[j] -= cfg.lr * step;
        }
        pg = g;
    }
}

void adam_step(const ParamList& ps, OptimState& st, const AdamConfig& cfg) {
    check_grads(ps);
    require_state(ps, st);
    ++st.step;
    const double k = static_cast<double>(st.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, k);
    const double bc2 = 1.0 - std::pow(cfg.beta2, k);
    for (std::size_t i = 0; i < ps.size(); ++i) {
        Mat& w = ps[i]->value;
        const Mat& g = ps[i]->grad;
        for (std::size_t j = 0; j < w.size(); ++j) {
            st.m[i].data[j] = cfg.beta1 * st.m[i].data[j] + (1.0 - cfg.beta1) * g.data[j];
            st.v[i].data[j] = cfg.beta2 * st.v[i].data[j] + (1.0 - cfg.beta2) * g.data[j] * g.data[j];
            const double mh = st.m[i].data[j] / bc1;
            const double vh = st.v[i].data[j] / bc2;
            w.data[j] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
        }
    }
}

double clip_grad_norm(const ParamList& ps, double max_norm) {
    double ss = 0.0;
    for (const Param* p : ps) ss += sum_squares(p->grad);
    const double norm = std::sqrt(ss);
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (Param* p : ps) scale_inplace(p->grad, s);
    }
    return norm;
}

}  // namespace lodge::nn
