#include "lodge/train.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>

#include "lodge/container.hpp"

namespace lodge::train {

double ema_decay_at(double decay, long step) {
    const double k = static_cast<double>(step);
    return std::min(decay, (1.0 + k) / (10.0 + k));
}

void TrainState::attach(nn::ParamList ps) {
    params = std::move(ps);
    opt.init(params);
    ema = nn::snapshot(params);
    step = 0;
    log.clear();
}

void TrainState::apply(const TrainConfig& cfg) {
    nn::check_grads(params);
    if (cfg.clip > 0.0) nn::clip_grad_norm(params, cfg.clip);
    if (cfg.optimizer == "adam") {
        nn::adam_step(params, opt, cfg.adam());
    } else {
        nn::adan_step(params, opt, cfg.adan());
    }
    ++step;
    nn::ema_update(ema, params, ema_decay_at(cfg.ema_decay, step));
}

void TrainState::save(ckpt::Checkpoint& c, const std::string& prefix) const {
    ckpt::put_params(c, prefix + "param/", params);
    ckpt::put_values(c, prefix + "ema/", params, ema);
    if (!opt.m.empty()) {
        ckpt::put_values(c, prefix + "opt.m/", params, opt.m);
        ckpt::put_values(c, prefix + "opt.v/", params, opt.v);
        ckpt::put_values(c, prefix + "opt.n/", params, opt.n);
        ckpt::put_values(c, prefix + "opt.prev/", params, opt.prev_grad);
    }
    Mat lg(log.size(), 9);
    for (std::size_t i = 0; i < log.size(); ++i) {
        const LossRecord& r = log[i];
        const double row[9] = {static_cast<double>(r.step), r.total, r.recon, r.joint, r.vel, r.acc, r.contact, r.genre, r.disc};
        std::copy(row, row + 9, lg.row(i).begin());
    }
    if (!log.empty()) c.put(prefix + "log", std::move(lg));
    c.meta[prefix + "step"] = step;
    c.meta[prefix + "opt_step"] = opt.step;
}

void TrainState::load(const ckpt::Checkpoint& c, const std::string& prefix) {
    ckpt::get_params(c, prefix + "param/", params);
    ema = ckpt::get_values(c, prefix + "ema/", params);
    opt.init(params);
    if (!params.empty() && c.has(prefix + "opt.m/" + params.front()->name)) {
        opt.m = ckpt::get_values(c, prefix + "opt.m/", params);
        opt.v = ckpt::get_values(c, prefix + "opt.v/", params);
        opt.n = ckpt::get_values(c, prefix + "opt.n/", params);
        opt.prev_grad = ckpt::get_values(c, prefix + "opt.prev/", params);
    }
    step = c.meta.value(prefix + "step", 0L);
    opt.step = c.meta.value(prefix + "opt_step", 0L);
    log.clear();
    if (c.has(prefix + "log")) {
        const Mat& lg = c.get(prefix + "log");
        require_shape(lg, lg.rows, 9, "loss log");
        for (std::size_t i = 0; i < lg.rows; ++i) {
            log.push_back({static_cast<long>(lg(i, 0)), lg(i, 1), lg(i, 2), lg(i, 3), lg(i, 4), lg(i, 5), lg(i, 6), lg(i, 7), lg(i, 8)});
        }
    }
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& log) {
    std::ofstream f(path);
    if (!f) throw io::FormatError("cannot write " + path.string());
    f << "step,total,recon,joint,vel,acc,contact,genre,disc\n";
    f << std::setprecision(10);
    for (const auto& r : log) {
        f << r.step << ',' << r.total << ',' << r.recon << ',' << r.joint << ',' << r.vel << ',' << r.acc << ','
          << r.contact << ',' << r.genre << ',' << r.disc << '\n';
    }
}

}  // namespace lodge::train
