#include "lodge/denoiser.hpp"

#include "lodge/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace lodge {

void DenoiserConfig::validate() const {
    if (model_dim == 0 || model_dim % 2 != 0) throw std::invalid_argument("model_dim must be even and positive");
    if (time_embed_dim == 0 || time_embed_dim % 2 != 0) throw std::invalid_argument("time_embed_dim must be even and positive");
    if (blocks == 0 || cond_dim == 0 || seq_len == 0 || mlp_ratio == 0) throw std::invalid_argument("denoiser sizes must be positive");
    if (heads != 1) throw std::invalid_argument("only single-head attention is implemented");
    if (foot_refine && seq_len < 2) throw std::invalid_argument("foot refine needs at least 2 frames");
    if (!(fps > 0.0)) throw std::invalid_argument("fps must be positive");
}

nlohmann::json DenoiserConfig::to_json() const {
    return {{"model_dim", model_dim}, {"blocks", blocks},         {"heads", heads},
            {"time_embed_dim", time_embed_dim}, {"cond_dim", cond_dim}, {"seq_len", seq_len},
            {"mlp_ratio", mlp_ratio}, {"cond_encoder", cond_encoder}, {"foot_refine", foot_refine},
            {"fps", fps}};
}

DenoiserConfig DenoiserConfig::from_json(const nlohmann::json& j) {
    DenoiserConfig c;
    c.model_dim = j.value("model_dim", c.model_dim);
    c.blocks = j.value("blocks", c.blocks);
    c.heads = j.value("heads", c.heads);
    c.time_embed_dim = j.value("time_embed_dim", c.time_embed_dim);
    c.cond_dim = j.value("cond_dim", c.cond_dim);
    c.seq_len = j.value("seq_len", c.seq_len);
    c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
    c.cond_encoder = j.value("cond_encoder", c.cond_encoder);
    c.foot_refine = j.value("foot_refine", c.foot_refine);
    c.fps = j.value("fps", c.fps);
    c.validate();
    return c;
}

const std::vector<std::size_t>& foot_refine_channels() {
    static const std::vector<std::size_t> ch = [] {
        std::vector<std::size_t> v{motion::kTransOffset, motion::kTransOffset + 1, motion::kTransOffset + 2};
        namespace J = motion::joint;
        for (int j : {J::l_hip, J::r_hip, J::l_knee, J::r_knee, J::l_ankle, J::r_ankle}) {
            for (std::size_t c = 0; c < 6; ++c) v.push_back(motion::kRotOffset + 6 * static_cast<std::size_t>(j) + c);
        }
        return v;
    }();
    return ch;
}

struct Denoiser::Tape {
    struct BlockTape {
        nn::LayerNorm::Ctx ln1, ln2, ln3;
        nn::Attention::Ctx sa, ca;
        nn::FiLM::Ctx f1, f2, f3;
        Mat a3, mh, mg;
    };
    std::size_t B = 0, S = 0, Sc = 0;
    Mat x, cond;
    Mat te, tp, tg, temb;
    // encoder
    nn::LayerNorm::Ctx e_ln1, e_ln2;
    nn::Attention::Ctx e_attn;
    Mat e_b, e_h, e_g;
    Mat c;
    std::vector<BlockTape> blocks;
    nn::LayerNorm::Ctx lo;
    Mat lo_y;
    // foot refine
    Mat y0, feat, fr_a;
    nn::LayerNorm::Ctx fr_ln;
    nn::Attention::Ctx fr_att;
};

Denoiser::TapePtr Denoiser::make_tape() { return TapePtr(new Tape()); }

void Denoiser::TapeDeleter::operator()(Tape* t) const { delete t; }

Denoiser::~Denoiser() = default;

Denoiser::Denoiser(const Denoiser& o)
    : cfg_(o.cfg_), in_proj_(o.in_proj_), time1_(o.time1_), time2_(o.time2_), cond_proj_(o.cond_proj_),
      out_proj_(o.out_proj_), ln_out_(o.ln_out_), blocks_(o.blocks_),
      encoder_(o.encoder_ ? std::make_unique<Encoder>(*o.encoder_) : nullptr),
      refine_(o.refine_ ? std::make_unique<FootRefine>(*o.refine_) : nullptr), contact_(o.contact_), norm_(o.norm_) {}

Denoiser& Denoiser::operator=(const Denoiser& o) {
    if (this != &o) {
        Denoiser tmp(o);
        *this = std::move(tmp);
    }
    return *this;
}

Denoiser::Denoiser(const DenoiserConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(derive_seed(seed, {0xDE7015E}));
    const std::size_t D = cfg_.model_dim;
    in_proj_ = nn::Linear("in_proj", motion::kMotionDim, D, rng);
    time1_ = nn::Linear("time1", cfg_.time_embed_dim, D, rng);
    time2_ = nn::Linear("time2", D, D, rng);
    cond_proj_ = nn::Linear("cond_proj", cfg_.cond_dim, D, rng);
    if (cfg_.cond_encoder) {
        encoder_ = std::make_unique<Encoder>();
        encoder_->ln1 = nn::LayerNorm("enc.ln1", D);
        encoder_->ln2 = nn::LayerNorm("enc.ln2", D);
        encoder_->attn = nn::Attention("enc.attn", D, D, rng);
        encoder_->fc1 = nn::Linear("enc.fc1", D, cfg_.mlp_ratio * D, rng);
        encoder_->fc2 = nn::Linear("enc.fc2", cfg_.mlp_ratio * D, D, rng);
    }
    for (std::size_t i = 0; i < cfg_.blocks; ++i) {
        const std::string p = "blk" + std::to_string(i) + ".";
        Block b;
        b.ln1 = nn::LayerNorm(p + "ln1", D);
        b.ln2 = nn::LayerNorm(p + "ln2", D);
        b.ln3 = nn::LayerNorm(p + "ln3", D);
        b.self_attn = nn::Attention(p + "sa", D, D, rng);
        b.cross_attn = nn::Attention(p + "ca", D, D, rng);
        b.film1 = nn::FiLM(p + "film1", D, D);
        b.film2 = nn::FiLM(p + "film2", D, D);
        b.film3 = nn::FiLM(p + "film3", D, D);
        b.fc1 = nn::Linear(p + "fc1", D, cfg_.mlp_ratio * D, rng);
        b.fc2 = nn::Linear(p + "fc2", cfg_.mlp_ratio * D, D, rng);
        blocks_.push_back(std::move(b));
    }
    ln_out_ = nn::LayerNorm("ln_out", D);
    out_proj_ = nn::Linear("out_proj", D, motion::kMotionDim, rng);
    out_proj_.w.value.fill(0.0);
    if (cfg_.foot_refine) {
        refine_ = std::make_unique<FootRefine>();
        refine_->ln = nn::LayerNorm("refine.ln", D);
        refine_->feat_proj = nn::Linear("refine.feat", foot::kFeatureDim, D, rng);
        refine_->attn = nn::Attention("refine.attn", D, D, rng);
        refine_->out = nn::Linear("refine.out", D, foot_refine_channels().size(), rng);
        refine_->out.w.value.fill(0.0);
    }
}

nn::ParamList Denoiser::params() {
    nn::ParamList ps;
    in_proj_.collect(ps);
    time1_.collect(ps);
    time2_.collect(ps);
    cond_proj_.collect(ps);
    if (encoder_) {
        encoder_->ln1.collect(ps);
        encoder_->attn.collect(ps);
        encoder_->ln2.collect(ps);
        encoder_->fc1.collect(ps);
        encoder_->fc2.collect(ps);
    }
    for (Block& b : blocks_) {
        b.ln1.collect(ps);
        b.self_attn.collect(ps);
        b.film1.collect(ps);
        b.ln2.collect(ps);
        b.cross_attn.collect(ps);
        b.film2.collect(ps);
        b.ln3.collect(ps);
        b.fc1.collect(ps);
        b.fc2.collect(ps);
        b.film3.collect(ps);
    }
    ln_out_.collect(ps);
    out_proj_.collect(ps);
    if (refine_) {
        refine_->ln.collect(ps);
        refine_->feat_proj.collect(ps);
        refine_->attn.collect(ps);
        refine_->out.collect(ps);
    }
    return ps;
}

void Denoiser::set_normalizer(const Normalizer& n) {
    n.validate();
    norm_ = n;
}

Mat Normalizer::encode(const Mat& data) const {
    require_shape(data, data.rows, motion::kMotionDim, "normalizer encode");
    Mat out(data.rows, data.cols);
    for (std::size_t r = 0; r < data.rows; ++r)
        for (std::size_t c = 0; c < data.cols; ++c) out(r, c) = (data(r, c) - mean[c]) / scale[c];
    return out;
}

Mat Normalizer::decode(const Mat& model) const {
    require_shape(model, model.rows, motion::kMotionDim, "normalizer decode");
    Mat out(model.rows, model.cols);
    for (std::size_t r = 0; r < model.rows; ++r)
        for (std::size_t c = 0; c < model.cols; ++c) out(r, c) = model(r, c) * scale[c] + mean[c];
    return out;
}

Mat Normalizer::backward(const Mat& ddata) const {
    require_shape(ddata, ddata.rows, motion::kMotionDim, "normalizer backward");
    Mat out(ddata.rows, ddata.cols);
    for (std::size_t r = 0; r < ddata.rows; ++r)
        for (std::size_t c = 0; c < ddata.cols; ++c) out(r, c) = ddata(r, c) * scale[c];
    return out;
}

void Normalizer::validate() const {
    if (mean.size() != motion::kMotionDim || scale.size() != motion::kMotionDim) throw ShapeError("normalizer needs 139 channels");
    for (std::size_t c = 0; c < mean.size(); ++c) {
        if (!std::isfinite(mean[c]) || !std::isfinite(scale[c]) || !(scale[c] > 0.0)) {
            throw std::invalid_argument("normalizer: channel " + std::to_string(c) + " is not finite or has non-positive scale");
        }
    }
}

void put_normalizer(ckpt::Checkpoint& c, const Normalizer& n) {
    n.validate();
    Mat m(1, motion::kMotionDim), sc(1, motion::kMotionDim);
    std::copy(n.mean.begin(), n.mean.end(), m.data.begin());
    std::copy(n.scale.begin(), n.scale.end(), sc.data.begin());
    c.put("norm/mean", std::move(m));
    c.put("norm/scale", std::move(sc));
}

Normalizer get_normalizer(const ckpt::Checkpoint& c) {
    const Mat& m = c.get("norm/mean");
    const Mat& sc = c.get("norm/scale");
    require_shape(m, 1, motion::kMotionDim, "norm/mean");
    require_shape(sc, 1, motion::kMotionDim, "norm/scale");
    Normalizer n;
    n.mean.assign(m.data.begin(), m.data.end());
    n.scale.assign(sc.data.begin(), sc.data.end());
    n.validate();
    return n;
}

Normalizer fit_normalizer(const std::vector<const Mat*>& data, double min_scale) {
    Normalizer n;
    std::size_t rows = 0;
    for (const Mat* m : data) {
        require_shape(*m, m->rows, motion::kMotionDim, "fit_normalizer");
        for (std::size_t r = 0; r < m->rows; ++r)
            for (std::size_t c = 0; c < m->cols; ++c) n.mean[c] += (*m)(r, c);
        rows += m->rows;
    }
    if (rows < 2) throw std::invalid_argument("fit_normalizer: need at least 2 frames");
    for (double& v : n.mean) v /= static_cast<double>(rows);
    std::vector<double> var(motion::kMotionDim, 0.0);
    for (const Mat* m : data)
        for (std::size_t r = 0; r < m->rows; ++r)
            for (std::size_t c = 0; c < m->cols; ++c) var[c] += ((*m)(r, c) - n.mean[c]) * ((*m)(r, c) - n.mean[c]);
    for (std::size_t c = 0; c < var.size(); ++c) n.scale[c] = std::max(min_scale, std::sqrt(var[c] / static_cast<double>(rows - 1)));
    return n;
}

namespace {
void add_pe(Mat& h, const std::vector<double>& pos) {
    if (pos.size() != h.rows) throw ShapeError("positions must have one entry per row");
    const Mat pe = nn::sinusoidal_rows(pos, h.cols);
    add_inplace(h, pe);
}
}  // namespace

Mat Denoiser::cond_path(const Mat& cond, std::size_t Sc, const std::vector<double>& cond_pos, Tape& tp) const {
    Mat c = cond_proj_.forward(cond);
    add_pe(c, cond_pos);
    if (encoder_) {
        const Mat a = encoder_->ln1.forward(c, tp.e_ln1);
        add_inplace(c, encoder_->attn.forward(a, Sc, a, Sc, tp.e_attn));
        tp.e_b = encoder_->ln2.forward(c, tp.e_ln2);
        tp.e_h = encoder_->fc1.forward(tp.e_b);
        tp.e_g = nn::gelu(tp.e_h);
        add_inplace(c, encoder_->fc2.forward(tp.e_g));
    }
    tp.c = c;
    return c;
}

Mat Denoiser::encode_cond(const Mat& cond, std::size_t cond_len, const std::vector<double>& cond_pos) const {
    require_shape(cond, cond.rows, cfg_.cond_dim, "encode_cond");
    if (cond_len == 0 || cond.rows % cond_len != 0) throw ShapeError("encode_cond: rows must split into samples");
    Tape tp;
    return cond_path(cond, cond_len, cond_pos, tp);
}

Mat Denoiser::forward(const DenoiserInput& in, Tape* tape) const {
    TapePtr local;
    if (!tape) {
        local = make_tape();
        tape = local.get();
    }
    Tape& tp = *tape;
    if (!in.x || !in.cond) throw std::invalid_argument("denoiser: missing input");
    const std::size_t B = in.t.size();
    if (B == 0 || in.x->rows % B != 0) throw ShapeError("denoiser: rows must split into the batch");
    const std::size_t S = in.x->rows / B;
    const std::size_t Sc = in.cond_len;
    require_shape(*in.x, B * S, motion::kMotionDim, "denoiser x");
    require_shape(*in.cond, B * Sc, cfg_.cond_dim, "denoiser cond");
    if (cfg_.foot_refine && S < 2) throw ShapeError("foot refine needs at least 2 frames per sample");
    tp.B = B;
    tp.S = S;
    tp.Sc = Sc;
    tp.x = *in.x;
    tp.cond = *in.cond;

    Mat h = in_proj_.forward(*in.x);
    add_pe(h, in.pos);

    tp.te = nn::sinusoidal_rows(in.t, cfg_.time_embed_dim);
    tp.tp = time1_.forward(tp.te);
    tp.tg = nn::gelu(tp.tp);
    tp.temb = time2_.forward(tp.tg);

    const Mat c = cond_path(*in.cond, Sc, in.cond_pos, tp);

    tp.blocks.resize(blocks_.size());
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const Block& b = blocks_[i];
        auto& bt = tp.blocks[i];
        Mat a = b.ln1.forward(h, bt.ln1);
        add_inplace(h, b.film1.forward(b.self_attn.forward(a, S, a, S, bt.sa), S, tp.temb, bt.f1));
        a = b.ln2.forward(h, bt.ln2);
        add_inplace(h, b.film2.forward(b.cross_attn.forward(a, S, c, Sc, bt.ca), S, tp.temb, bt.f2));
        bt.a3 = b.ln3.forward(h, bt.ln3);
        bt.mh = b.fc1.forward(bt.a3);
        bt.mg = nn::gelu(bt.mh);
        add_inplace(h, b.film3.forward(b.fc2.forward(bt.mg), S, tp.temb, bt.f3));
    }
    tp.lo_y = ln_out_.forward(h, tp.lo);
    Mat y = out_proj_.forward(tp.lo_y);
    if (!refine_) return y;

    tp.y0 = norm_.decode(y);
    tp.feat = foot::foot_features(tp.y0, S, cfg_.fps, motion::KinematicChain::smpl22(), contact_);
    const Mat q = refine_->ln.forward(h, tp.fr_ln);
    Mat kv = refine_->feat_proj.forward(tp.feat);
    add_pe(kv, in.pos);
    tp.fr_a = refine_->attn.forward(q, S, kv, S, tp.fr_att);
    const Mat r = refine_->out.forward(tp.fr_a);
    const auto& ch = foot_refine_channels();
    for (std::size_t row = 0; row < y.rows; ++row)
        for (std::size_t k = 0; k < ch.size(); ++k) y(row, ch[k]) += r(row, k);
    return y;
}

DenoiserGrads Denoiser::backward(const Tape& tp, const Mat& dy) {
    const std::size_t S = tp.S;
    require_shape(dy, tp.B * S, motion::kMotionDim, "denoiser backward");
    Mat dy0 = dy;
    Mat dh_refine;
    if (refine_) {
        const auto& ch = foot_refine_channels();
        Mat dr(dy.rows, ch.size());
        for (std::size_t row = 0; row < dy.rows; ++row)
            for (std::size_t k = 0; k < ch.size(); ++k) dr(row, k) = dy(row, ch[k]);
        const Mat da = refine_->out.backward(tp.fr_a, dr);
        auto [dq, dkv] = refine_->attn.backward(tp.fr_att, da);
        const Mat dfeat = refine_->feat_proj.backward(tp.feat, dkv);
        add_inplace(dy0, norm_.backward(foot::foot_features_backward(tp.y0, S, cfg_.fps, motion::KinematicChain::smpl22(), contact_, dfeat)));
        dh_refine = refine_->ln.backward(tp.fr_ln, dq);
    }
    Mat dh = ln_out_.backward(tp.lo, out_proj_.backward(tp.lo_y, dy0));
    if (refine_) add_inplace(dh, dh_refine);

    Mat dtemb(tp.temb.rows, tp.temb.cols);
    Mat dc(tp.c.rows, tp.c.cols);
    for (std::size_t i = blocks_.size(); i-- > 0;) {
        Block& b = blocks_[i];
        const auto& bt = tp.blocks[i];
        {
            auto [ds, dt] = b.film3.backward(bt.f3, dh);
            add_inplace(dtemb, dt);
            const Mat dmh = nn::gelu_backward(bt.mh, b.fc2.backward(bt.mg, ds));
            add_inplace(dh, b.ln3.backward(bt.ln3, b.fc1.backward(bt.a3, dmh)));
        }
        {
            auto [ds, dt] = b.film2.backward(bt.f2, dh);
            add_inplace(dtemb, dt);
            auto [dq, dkv] = b.cross_attn.backward(bt.ca, ds);
            add_inplace(dc, dkv);
            add_inplace(dh, b.ln2.backward(bt.ln2, dq));
        }
        {
            auto [ds, dt] = b.film1.backward(bt.f1, dh);
            add_inplace(dtemb, dt);
            auto [dq, dkv] = b.self_attn.backward(bt.sa, ds);
            add_inplace(dq, dkv);
            add_inplace(dh, b.ln1.backward(bt.ln1, dq));
        }
    }
    DenoiserGrads g;
    g.dx = in_proj_.backward(tp.x, dh);

    const Mat dtp = nn::gelu_backward(tp.tp, time2_.backward(tp.tg, dtemb));
    time1_.backward(tp.te, dtp);

    if (encoder_) {
        const Mat dg = encoder_->fc2.backward(tp.e_g, dc);
        add_inplace(dc, encoder_->ln2.backward(tp.e_ln2, encoder_->fc1.backward(tp.e_b, nn::gelu_backward(tp.e_h, dg))));
        auto [dq, dkv] = encoder_->attn.backward(tp.e_attn, dc);
        add_inplace(dq, dkv);
        add_inplace(dc, encoder_->ln1.backward(tp.e_ln1, dq));
    }
    g.dcond = cond_proj_.backward(tp.cond, dc);
    return g;
}

void copy_values(Denoiser& dst, Denoiser& src) {
    const nn::ParamList a = dst.params(), b = src.params();
    if (a.size() != b.size()) throw std::invalid_argument("copy_values: models differ");
    for (std::size_t i = 0; i < a.size(); ++i) {
        require_shape(b[i]->value, a[i]->value.rows, a[i]->value.cols, a[i]->name.c_str());
        a[i]->value = b[i]->value;
    }
}

}  // namespace lodge
