#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "mixgen/checkpoint.hpp"
#include "mixgen/model.hpp"
#include "mixgen/optim.hpp"
#include "mixgen/seqformat.hpp"

namespace mixgen {

struct TrainConfig {
    double word_weight = 1.0;
    std::int64_t batch_size = 16;
    std::int64_t steps = 1000;
    double lr = 1e-3;
    std::int64_t warmup = 0;
    double min_lr_ratio = 0.0;
    std::uint64_t seed = 0;
    bool augment = false;
    bool mask_prefix = true;
    double gate_weight = 0.0;
    double clip = 1.0;

    bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

// --- augmentation (Algorithm 6) ----------------------------------------------

struct Augmented {
    Mat3 lattice{};
    std::vector<Vec3> frac;
};

Mat3 random_rotation(std::mt19937_64& rng);
// Rows of `lattice` rotated by R, frac shifted by tau modulo 1. Throws SingularLattice.
Augmented augment_material(const Mat3& lattice, std::span<const Vec3> frac, const Mat3& rotation, const Vec3& tau);
Augmented augment_material(const Mat3& lattice, std::span<const Vec3> frac, std::mt19937_64& rng);

// --- training loop -----------------------------------------------------------

struct StepResult {
    std::int64_t step = 0;
    double total = 0, l_w = 0, l_d = 0, l_gate = 0;
    double grad_norm = 0, lr = 0;
};

// A named group of records visited `multiplier` times per epoch.
struct DataSource {
    std::vector<DomainRecord> records;
    int multiplier = 1;
};

class Trainer {
public:
    Trainer(const ModelConfig& model_cfg, const TrainConfig& train_cfg, std::vector<DataSource> sources);

    Model<float>& model() { return model_; }
    const Model<float>& model() const { return model_; }
    const TrainConfig& config() const { return cfg_; }
    std::int64_t step_count() const { return step_; }

    // One optimizer update on the next batch drawn from the sources.
    StepResult step();
    // One optimizer update on an explicit batch. Throws NaNLoss.
    StepResult train_step(std::span<const MixedSequence> batch);
    std::vector<MixedSequence> next_batch();

    // `extra` keys are stored next to the training state (run provenance).
    void save(const std::filesystem::path& path, const nlohmann::json& extra = {}) const;
    // Restores parameters, optimizer moments, RNG and step counter. The
    // checkpoint's model and training configs must equal this session's.
    void load(const std::filesystem::path& path);

private:
    void refill_order();

    ModelConfig model_cfg_;
    TrainConfig cfg_;
    Model<float> model_;
    Adam<float> adam_;
    std::vector<DataSource> sources_;
    std::vector<std::pair<std::size_t, std::size_t>> order_;  // (source, record)
    std::size_t cursor_ = 0;
    std::int64_t epoch_ = 0;
    std::int64_t step_ = 0;
    std::mt19937_64 rng_;
};

// Model-only checkpoint helpers (sampling, guidance).
void save_model(const std::filesystem::path& path, const Model<float>& model, const nlohmann::json& extra = {});
Model<float> load_model(const std::filesystem::path& path);
// Loads parameters into an existing model; VersionMismatch names the first
// differing config field. Nothing is modified on failure.
void load_model_into(Model<float>& model, const std::filesystem::path& path);

}  // namespace mixgen
