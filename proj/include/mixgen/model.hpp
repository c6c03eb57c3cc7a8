#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "json.hpp"
#include "mixgen/backbone.hpp"
#include "mixgen/diffhead.hpp"

namespace mixgen {

struct ModelConfig {
    BackboneConfig backbone;
    HeadConfig head;
    DiffLossConfig loss;

    bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& cfg);
// Throws InvalidConfig.
ModelConfig model_config_from_json(const nlohmann::json& j);

// Backbone plus diffusion head; the head is conditioned on the backbone's
// hidden size.
template <class T>
struct Model {
    ModelConfig cfg;
    Backbone<T> backbone;
    DiffHead<T> head;

    Model(ModelConfig config, std::uint64_t seed);

    // Every trainable leaf, backbone first.
    std::vector<std::pair<std::string, Tensor<T>>> parameters() const;
    void zero_grad();
};

struct LossOptions {
    double word_weight = 1.0;   // w
    double gate_weight = 0.0;   // 0 disables the routing term
    bool mask_prefix = true;    // supervise only targets after <bos>
};

template <class T>
struct LossParts {
    Tensor<T> total, l_w, l_d, l_gate;
    Tensor<T> hidden;  // backbone output, kept for inspection
    std::int64_t word_targets = 0, number_targets = 0;
};

// Algorithm 1: word cross-entropy on shifted targets, DiffMul diffusion loss
// on the hidden state preceding each numeric target, optional gate loss.
template <class T>
LossParts<T> joint_loss(const Model<T>& model, const Batch& batch, const LossOptions& opt, std::mt19937_64& rng);

}  // namespace mixgen
