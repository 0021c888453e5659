#pragma once

// Optimizer + EMA bookkeeping shared by every trainer, and its checkpoint form.

#include <filesystem>
#include <vector>

#include "lodge/checkpoint.hpp"
#include "lodge/config.hpp"
#include "lodge/nn.hpp"
#include "lodge/optim.hpp"

namespace lodge::train {

struct LossRecord {
    long step = 0;
    double total = 0, recon = 0, joint = 0, vel = 0, acc = 0, contact = 0, genre = 0, disc = 0;
};

// Effective EMA decay at optimizer step k (1-based): min(decay, (1 + k) / (10 + k)).
double ema_decay_at(double decay, long step);

struct TrainState {
    nn::ParamList params;  // not owned
    nn::OptimState opt;
    std::vector<Mat> ema;
    long step = 0;
    std::vector<LossRecord> log;

    // Fresh optimizer state; EMA starts at the current values.
    void attach(nn::ParamList ps);
    // Clip, optimizer step, EMA update, step counter.
    void apply(const TrainConfig& cfg);

    void save(ckpt::Checkpoint& c, const std::string& prefix) const;
    // Restores values, EMA, optimizer moments, the step counter and the loss log.
    void load(const ckpt::Checkpoint& c, const std::string& prefix);
};

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& log);

}  // namespace lodge::train
