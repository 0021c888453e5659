#pragma once

// Checkpoints: the binary container with kind "checkpoint", 64-bit payload of
// concatenated tensors, and a header listing each tensor's name and shape.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "lodge/nn.hpp"

namespace lodge::ckpt {

struct NamedTensor {
    std::string name;
    Mat value;
};

struct Checkpoint {
    nlohmann::json meta = nlohmann::json::object();
    std::vector<NamedTensor> tensors;

    bool has(const std::string& name) const;
    const Mat& get(const std::string& name) const;
    void put(const std::string& name, Mat value);
};

void save(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load(const std::filesystem::path& path);

// "<prefix><param name>" for every parameter.
void put_values(Checkpoint& c, const std::string& prefix, const nn::ParamList& ps, const std::vector<Mat>& values);
void put_params(Checkpoint& c, const std::string& prefix, const nn::ParamList& ps);
std::vector<Mat> get_values(const Checkpoint& c, const std::string& prefix, const nn::ParamList& ps);
void get_params(const Checkpoint& c, const std::string& prefix, const nn::ParamList& ps);

}  // namespace lodge::ckpt
