#include "mixgen/model.hpp"

#include "mixgen/error.hpp"

namespace mixgen {

nlohmann::json to_json(const ModelConfig& cfg) {
    const auto& b = cfg.backbone;
    const auto& h = cfg.head;
    return {
        {"backbone",
         {{"hidden_size", b.hidden_size},
          {"intermediate_size", b.intermediate_size},
          {"num_layers", b.num_layers},
          {"num_heads", b.num_heads},
          {"num_kv_heads", b.num_kv_heads},
          {"vocab_size", b.vocab_size},
          {"max_position", b.max_position},
          {"positions", b.positions == PositionScheme::Rope ? "rope" : "learned"},
          {"rope_theta", b.rope_theta},
          {"norm_eps", b.norm_eps},
          {"gating", b.gating}}},
        {"head",
         {{"width", h.width},
          {"resblocks", h.resblocks},
          {"cond_dim", h.cond_dim},
          {"freq_dim", h.freq_dim},
          {"T_train", h.T_train},
          {"beta_start", h.beta_start},
          {"beta_end", h.beta_end}}},
        {"loss", {{"M", cfg.loss.M}, {"vlb_weight", cfg.loss.vlb_weight}}},
    };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    try {
        ModelConfig c;
        const auto& b = j.at("backbone");
        c.backbone.hidden_size = b.at("hidden_size");
        c.backbone.intermediate_size = b.at("intermediate_size");
        c.backbone.num_layers = b.at("num_layers");
        c.backbone.num_heads = b.at("num_heads");
        c.backbone.num_kv_heads = b.at("num_kv_heads");
        c.backbone.vocab_size = b.at("vocab_size");
        c.backbone.max_position = b.at("max_position");
        c.backbone.positions = b.at("positions") == "rope" ? PositionScheme::Rope : PositionScheme::Learned;
        c.backbone.rope_theta = b.at("rope_theta");
        c.backbone.norm_eps = b.at("norm_eps");
        c.backbone.gating = b.at("gating");
        const auto& h = j.at("head");
        c.head.width = h.at("width");
        c.head.resblocks = h.at("resblocks");
        c.head.cond_dim = h.at("cond_dim");
        c.head.freq_dim = h.at("freq_dim");
        c.head.T_train = h.at("T_train");
        c.head.beta_start = h.at("beta_start");
        c.head.beta_end = h.at("beta_end");
        c.loss.M = j.at("loss").at("M");
        c.loss.vlb_weight = j.at("loss").at("vlb_weight");
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidConfig, std::string("model config: ") + e.what());
    }
}

namespace {

ModelConfig normalized(ModelConfig cfg) {
    if (cfg.backbone.vocab_size == 0) cfg.backbone.vocab_size = static_cast<std::int64_t>(Vocabulary::standard().size());
    cfg.head.cond_dim = cfg.backbone.hidden_size;
    return cfg;
}

}  // namespace

template <class T>
Model<T>::Model(ModelConfig config, std::uint64_t seed)
    : cfg(normalized(std::move(config))), backbone(cfg.backbone, seed), head(cfg.head, seed ^ 0x9e3779b97f4a7c15ULL) {}

template <class T>
std::vector<std::pair<std::string, Tensor<T>>> Model<T>::parameters() const {
    auto out = backbone.params().items();
    for (const auto& p : head.params().items()) out.push_back(p);
    return out;
}

template <class T>
void Model<T>::zero_grad() {
    backbone.params().zero_grad();
    head.params().zero_grad();
}

template <class T>
LossParts<T> joint_loss(const Model<T>& model, const Batch& batch, const LossOptions& opt, std::mt19937_64& rng) {
    const auto& vocab = Vocabulary::standard();
    const auto bos = vocab.specials().bos;
    LossParts<T> out;
    out.hidden = model.backbone.forward(batch);

    std::vector<std::int64_t> word_rows, num_rows, gate_rows;
    std::vector<std::int32_t> word_targets, gate_labels;
    std::vector<double> x0;
    for (std::int64_t r = 0; r < batch.B; ++r) {
        const std::int64_t len = batch.lengths[r];
        std::int64_t first = 1;
        if (opt.mask_prefix) {
            for (std::int64_t j = 0; j < len; ++j) {
                const auto k = r * batch.L + j;
                if (!batch.m_val[k] && batch.ids[k] == bos) {
                    first = j + 1;
                    break;
                }
            }
        }
        for (std::int64_t j = std::max<std::int64_t>(first, 1); j < len; ++j) {
            const auto k = r * batch.L + j;
            if (batch.m_pad[k]) break;
            gate_rows.push_back(k - 1);
            gate_labels.push_back(batch.m_val[k] ? 1 : 0);
            if (batch.m_val[k]) {
                num_rows.push_back(k - 1);
                for (int c = 0; c < 3; ++c) x0.push_back(batch.values[k * 3 + c]);
            } else {
                word_rows.push_back(k - 1);
                word_targets.push_back(batch.ids[k]);
            }
        }
    }
    out.word_targets = static_cast<std::int64_t>(word_rows.size());
    out.number_targets = static_cast<std::int64_t>(num_rows.size());

    if (!word_rows.empty()) {
        auto logits = model.backbone.word_logits(gather_rows(out.hidden, std::span<const std::int64_t>(word_rows)));
        out.l_w = cross_entropy(logits, std::span<const std::int32_t>(word_targets));
    } else {
        out.l_w = Tensor<T>::scalar(T(0));
    }
    if (!num_rows.empty()) {
        auto cond = gather_rows(out.hidden, std::span<const std::int64_t>(num_rows));
        out.l_d = diffloss_forward(model.head, x0, cond, model.cfg.loss, rng);
    } else {
        out.l_d = Tensor<T>::scalar(T(0));
    }
    out.total = add(out.l_d, scale(out.l_w, T(opt.word_weight)));
    if (opt.gate_weight > 0.0 && !gate_rows.empty()) {
        auto logits = model.backbone.gate_logits(gather_rows(out.hidden, std::span<const std::int64_t>(gate_rows)));
        out.l_gate = cross_entropy(logits, std::span<const std::int32_t>(gate_labels));
        out.total = add(out.total, scale(out.l_gate, T(opt.gate_weight)));
    } else {
        out.l_gate = Tensor<T>::scalar(T(0));
    }
    return out;
}

template struct Model<float>;
template struct Model<double>;
template LossParts<float> joint_loss(const Model<float>&, const Batch&, const LossOptions&, std::mt19937_64&);
template LossParts<double> joint_loss(const Model<double>&, const Batch&, const LossOptions&, std::mt19937_64&);

}  // namespace mixgen
