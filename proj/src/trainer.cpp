#include "mixgen/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mixgen/error.hpp"
#include "mixgen/rng.hpp"

namespace mixgen {

nlohmann::json to_json(const TrainConfig& c) {
    return {{"word_weight", c.word_weight}, {"batch_size", c.batch_size}, {"steps", c.steps},
            {"lr", c.lr},                   {"warmup", c.warmup},         {"min_lr_ratio", c.min_lr_ratio},
            {"seed", c.seed},               {"augment", c.augment},       {"mask_prefix", c.mask_prefix},
            {"gate_weight", c.gate_weight}, {"clip", c.clip}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    try {
        TrainConfig c;
        c.word_weight = j.at("word_weight");
        c.batch_size = j.at("batch_size");
        c.steps = j.at("steps");
        c.lr = j.at("lr");
        c.warmup = j.at("warmup");
        c.min_lr_ratio = j.at("min_lr_ratio");
        c.seed = j.at("seed");
        c.augment = j.at("augment");
        c.mask_prefix = j.at("mask_prefix");
        c.gate_weight = j.at("gate_weight");
        c.clip = j.at("clip");
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidConfig, std::string("train config: ") + e.what());
    }
}

// ----------------------------------------------------------------------------
// Augmentation

Mat3 random_rotation(std::mt19937_64& rng) {
    std::normal_distribution<double> n01;
    double q[4];
    double norm = 0.0;
    do {
        norm = 0.0;
        for (double& v : q) {
            v = n01(rng);
            norm += v * v;
        }
    } while (norm < 1e-12);
    norm = std::sqrt(norm);
    const double w = q[0] / norm, x = q[1] / norm, y = q[2] / norm, z = q[3] / norm;
    return {Vec3{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)},
            Vec3{2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)},
            Vec3{2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}};
}

Augmented augment_material(const Mat3& L, std::span<const Vec3> frac, const Mat3& R, const Vec3& tau) {
    const double det = L[0][0] * (L[1][1] * L[2][2] - L[1][2] * L[2][1]) -
                       L[0][1] * (L[1][0] * L[2][2] - L[1][2] * L[2][0]) +
                       L[0][2] * (L[1][0] * L[2][1] - L[1][1] * L[2][0]);
    double scale = 1.0;
    for (const auto& row : L) scale *= std::sqrt(row[0] * row[0] + row[1] * row[1] + row[2] * row[2]);
    if (!(std::abs(det) > 1e-10 * scale) || scale == 0.0) {
        throw Error(ErrorKind::SingularLattice, "lattice determinant " + std::to_string(det));
    }
    Augmented out;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) out.lattice[i][j] = R[j][0] * L[i][0] + R[j][1] * L[i][1] + R[j][2] * L[i][2];
    for (const auto& f : frac) {
        Vec3 g;
        for (int c = 0; c < 3; ++c) {
            double v = f[c] + tau[c];
            v -= std::floor(v);
            g[c] = v >= 1.0 ? 0.0 : v;
        }
        out.frac.push_back(g);
    }
    return out;
}

Augmented augment_material(const Mat3& lattice, std::span<const Vec3> frac, std::mt19937_64& rng) {
    Mat3 R = random_rotation(rng);
    std::normal_distribution<double> n01;
    Vec3 tau{n01(rng), n01(rng), n01(rng)};
    return augment_material(lattice, frac, R, tau);
}

// ----------------------------------------------------------------------------
// Trainer

Trainer::Trainer(const ModelConfig& model_cfg, const TrainConfig& train_cfg, std::vector<DataSource> sources)
    : model_cfg_(model_cfg),
      cfg_(train_cfg),
      model_(model_cfg, train_cfg.seed),
      adam_(model_.parameters()),
      sources_(std::move(sources)),
      rng_(derive_seed(train_cfg.seed, 1)) {
    if (cfg_.batch_size < 1 || cfg_.word_weight < 0.0) {
        throw Error(ErrorKind::InvalidConfig, "batch_size must be >= 1 and word_weight >= 0");
    }
}

void Trainer::refill_order() {
    order_.clear();
    for (std::size_t s = 0; s < sources_.size(); ++s) {
        for (int m = 0; m < sources_[s].multiplier; ++m) {
            for (std::size_t i = 0; i < sources_[s].records.size(); ++i) order_.emplace_back(s, i);
        }
    }
    if (order_.empty()) throw Error(ErrorKind::EmptySet, "training data is empty");
    std::mt19937_64 shuffle_rng(derive_seed(cfg_.seed, 1000 + static_cast<std::uint64_t>(epoch_)));
    std::shuffle(order_.begin(), order_.end(), shuffle_rng);
    cursor_ = 0;
}

std::vector<MixedSequence> Trainer::next_batch() {
    const auto& vocab = Vocabulary::standard();
    std::vector<MixedSequence> batch;
    while (static_cast<std::int64_t>(batch.size()) < cfg_.batch_size) {
        if (order_.empty() || cursor_ >= order_.size()) {
            if (!order_.empty()) ++epoch_;
            refill_order();
        }
        auto [s, i] = order_[cursor_++];
        DomainRecord rec = sources_[s].records[i];
        if (cfg_.augment) {
            if (auto* m = std::get_if<Material>(&rec.body)) {
                auto a = augment_material(m->lattice, m->frac_coords, rng_);
                m->lattice = a.lattice;
                m->frac_coords = std::move(a.frac);
            }
        }
        batch.push_back(encode(rec, vocab));
    }
    return batch;
}

StepResult Trainer::step() {
    auto batch = next_batch();
    return train_step(batch);
}

StepResult Trainer::train_step(std::span<const MixedSequence> seqs) {
    const Batch batch = make_batch(seqs, Vocabulary::standard());
    LossOptions opt;
    opt.word_weight = cfg_.word_weight;
    opt.gate_weight = model_cfg_.backbone.gating ? cfg_.gate_weight : 0.0;
    opt.mask_prefix = cfg_.mask_prefix;

    model_.zero_grad();
    auto parts = joint_loss(model_, batch, opt, rng_);
    StepResult r;
    r.step = step_;
    r.total = parts.total.item();
    r.l_w = parts.l_w.item();
    r.l_d = parts.l_d.item();
    r.l_gate = parts.l_gate.item();
    auto params = model_.parameters();
    auto max_abs_grad = [&] {
        double m = 0.0;
        for (const auto& [_, p] : params)
            for (float g : p.grad()) m = std::max(m, double(std::abs(g)));
        return m;
    };
    if (!std::isfinite(r.total)) {
        std::ostringstream os;
        os << "step " << step_ << ": total=" << r.total << " l_w=" << r.l_w << " l_d=" << r.l_d
           << " l_gate=" << r.l_gate << " max|grad|=" << max_abs_grad();
        throw Error(ErrorKind::NaNLoss, os.str());
    }
    if (parts.total.requires_grad()) parts.total.backward();
    r.grad_norm = clip_grad_norm(params, cfg_.clip);
    if (!std::isfinite(r.grad_norm)) {
        std::ostringstream os;
        os << "step " << step_ << ": non-finite gradient, max|grad|=" << max_abs_grad();
        throw Error(ErrorKind::NaNLoss, os.str());
    }
    r.lr = cosine_lr(cfg_.lr, step_, cfg_.steps, cfg_.warmup, cfg_.min_lr_ratio);
    adam_.step(r.lr);
    ++step_;
    return r;
}

namespace {

CheckpointData model_arrays(const Model<float>& model) {
    CheckpointData data;
    for (const auto& [name, t] : model.parameters()) {
        data.arrays.push_back({"param/" + name, DType::F32, t.shape(), {t.data().begin(), t.data().end()}});
    }
    return data;
}

// Validates every parameter before touching the model.
void assign_params(Model<float>& model, const CheckpointData& data) {
    auto params = model.parameters();
    std::vector<const NamedArray*> found;
    for (const auto& [name, t] : params) {
        const auto* a = data.find("param/" + name);
        if (!a) throw Error(ErrorKind::CorruptFile, "checkpoint lacks parameter " + name);
        if (a->shape != t.shape()) {
            throw Error(ErrorKind::VersionMismatch, "parameter " + name + " has shape " + shape_str(a->shape) +
                                                        ", session expects " + shape_str(t.shape()));
        }
        found.push_back(a);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto out = params[i].second.mutable_data();
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = static_cast<float>(found[i]->values[k]);
    }
}

void require_same(const nlohmann::json& ckpt, const nlohmann::json& session, const char* what) {
    auto diffs = config_differences(ckpt, session);
    if (!diffs.empty()) {
        throw Error(ErrorKind::VersionMismatch, std::string(what) + " config differs at " + diffs.front() +
                                                    " (checkpoint vs session)");
    }
}

}  // namespace

void Trainer::save(const std::filesystem::path& path, const nlohmann::json& extra) const {
    CheckpointData data = model_arrays(model_);
    auto& self = const_cast<Trainer&>(*this);
    const auto& params = adam_.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& [name, t] = params[i];
        const auto& m = self.adam_.first_moments()[i];
        const auto& v = self.adam_.second_moments()[i];
        data.arrays.push_back({"adam.m/" + name, DType::F32, t.shape(), {m.begin(), m.end()}});
        data.arrays.push_back({"adam.v/" + name, DType::F32, t.shape(), {v.begin(), v.end()}});
    }
    data.config = {{"model", to_json(model_.cfg)},
                   {"train", to_json(cfg_)},
                   {"step", step_},
                   {"adam_steps", adam_.steps()},
                   {"epoch", epoch_},
                   {"cursor", cursor_},
                   {"rng", rng_state(rng_)}};
    if (extra.is_object()) {
        for (auto it = extra.begin(); it != extra.end(); ++it) data.config[it.key()] = it.value();
    }
    write_checkpoint(path, data);
}

void Trainer::load(const std::filesystem::path& path) {
    const CheckpointData data = read_checkpoint(path);
    if (!data.config.contains("model") || !data.config.contains("train")) {
        throw Error(ErrorKind::CorruptFile, "checkpoint has no training state");
    }
    require_same(data.config.at("model"), to_json(model_.cfg), "model");
    require_same(data.config.at("train"), to_json(cfg_), "training");
    const auto& params = adam_.params();
    for (const auto& [name, t] : params) {
        for (const char* kind : {"adam.m/", "adam.v/"}) {
            const auto* a = data.find(kind + name);
            if (!a || a->shape != t.shape()) throw Error(ErrorKind::CorruptFile, "optimizer state for " + name);
        }
    }
    assign_params(model_, data);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& name = params[i].first;
        const auto* m = data.find("adam.m/" + name);
        const auto* v = data.find("adam.v/" + name);
        std::transform(m->values.begin(), m->values.end(), adam_.first_moments()[i].begin(),
                       [](double x) { return float(x); });
        std::transform(v->values.begin(), v->values.end(), adam_.second_moments()[i].begin(),
                       [](double x) { return float(x); });
    }
    adam_.set_steps(data.config.at("adam_steps"));
    step_ = data.config.at("step");
    epoch_ = data.config.at("epoch");
    set_rng_state(rng_, data.config.at("rng"));
    refill_order();
    cursor_ = data.config.at("cursor");
}

void save_model(const std::filesystem::path& path, const Model<float>& model, const nlohmann::json& extra) {
    CheckpointData data = model_arrays(model);
    data.config = {{"model", to_json(model.cfg)}};
    if (extra.is_object()) {
        for (auto it = extra.begin(); it != extra.end(); ++it) data.config[it.key()] = it.value();
    }
    write_checkpoint(path, data);
}

Model<float> load_model(const std::filesystem::path& path) {
    const CheckpointData data = read_checkpoint(path);
    if (!data.config.contains("model")) throw Error(ErrorKind::CorruptFile, "checkpoint has no model config");
    Model<float> model(model_config_from_json(data.config.at("model")), 0);
    assign_params(model, data);
    return model;
}

void load_model_into(Model<float>& model, const std::filesystem::path& path) {
    const CheckpointData data = read_checkpoint(path);
    if (!data.config.contains("model")) throw Error(ErrorKind::CorruptFile, "checkpoint has no model config");
    require_same(data.config.at("model"), to_json(model.cfg), "model");
    assign_params(model, data);
}

}  // namespace mixgen
