#include "mixgen/backbone.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "mixgen/error.hpp"

namespace mixgen {

void validate(const BackboneConfig& cfg) {
    std::string bad;
    auto need = [&](bool ok, const char* what) {
        if (!ok) bad += std::string(bad.empty() ? "" : "; ") + what;
    };
    need(cfg.hidden_size > 0, "hidden_size must be positive");
    need(cfg.intermediate_size > 0, "intermediate_size must be positive");
    need(cfg.num_layers >= 0, "num_layers must be non-negative");
    need(cfg.num_heads > 0 && cfg.hidden_size % cfg.num_heads == 0, "hidden_size must be divisible by num_heads");
    need(cfg.num_kv_heads > 0 && cfg.num_heads % cfg.num_kv_heads == 0, "num_kv_heads must divide num_heads");
    need(cfg.positions != PositionScheme::Rope || cfg.num_heads <= 0 || (cfg.hidden_size / cfg.num_heads) % 2 == 0,
         "rotary embeddings need an even head dimension");
    need(cfg.max_position > 0, "max_position must be positive");
    if (!bad.empty()) throw Error(ErrorKind::InvalidConfig, bad);
}

Batch make_batch(std::span<const MixedSequence> seqs, const Vocabulary& vocab) {
    Batch b;
    b.B = static_cast<std::int64_t>(seqs.size());
    for (const auto& s : seqs) b.L = std::max<std::int64_t>(b.L, static_cast<std::int64_t>(s.length()));
    const auto n = static_cast<std::size_t>(b.B * b.L);
    b.ids.assign(n, vocab.specials().pad);
    b.values.assign(n * kPayloadWidth, 0.0);
    b.m_val.assign(n, 0);
    b.m_pad.assign(n, 1);
    for (std::int64_t r = 0; r < b.B; ++r) {
        const auto& s = seqs[r];
        b.lengths.push_back(static_cast<std::int64_t>(s.length()));
        for (std::size_t i = 0; i < s.length(); ++i) {
            const auto k = static_cast<std::size_t>(r * b.L) + i;
            b.ids[k] = s.ids[i];
            b.m_val[k] = s.m_val[i];
            b.m_pad[k] = s.m_pad.empty() ? 0 : s.m_pad[i];
            for (std::size_t c = 0; c < kPayloadWidth; ++c) b.values[k * kPayloadWidth + c] = s.values[i][c];
        }
    }
    return b;
}

template <class T>
Backbone<T>::Backbone(const BackboneConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg_.vocab_size == 0) cfg_.vocab_size = static_cast<std::int64_t>(Vocabulary::standard().size());
    validate(cfg_);
    std::mt19937_64 rng(seed);
    const auto H = cfg_.hidden_size;
    const auto I = cfg_.intermediate_size;
    const auto hd = H / cfg_.num_heads;
    const auto kv = cfg_.num_kv_heads * hd;
    const double out_std = 0.02 / std::sqrt(2.0 * double(std::max<std::int64_t>(cfg_.num_layers, 1)));

    embed_table_ = params_.add("embed.table", {cfg_.vocab_size, H}, Init::Normal, rng);
    value_w_ = params_.add("embed.value.w", {3, H}, Init::XavierUniform, rng);
    value_b_ = params_.add("embed.value.b", {H}, Init::Zeros, rng);
    if (cfg_.positions == PositionScheme::Learned) {
        pos_table_ = params_.add("embed.pos", {cfg_.max_position, H}, Init::Normal, rng);
    }
    for (std::int64_t l = 0; l < cfg_.num_layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        Layer layer;
        layer.attn_norm = params_.add(p + "attn_norm", {H}, Init::Ones, rng);
        layer.wq = params_.add(p + "wq", {H, H}, Init::Normal, rng);
        layer.wk = params_.add(p + "wk", {H, kv}, Init::Normal, rng);
        layer.wv = params_.add(p + "wv", {H, kv}, Init::Normal, rng);
        layer.wo = params_.add(p + "wo", {H, H}, Init::Normal, rng, out_std);
        layer.ffn_norm = params_.add(p + "ffn_norm", {H}, Init::Ones, rng);
        layer.w_gate = params_.add(p + "w_gate", {H, I}, Init::Normal, rng);
        layer.w_up = params_.add(p + "w_up", {H, I}, Init::Normal, rng);
        layer.w_down = params_.add(p + "w_down", {I, H}, Init::Normal, rng, out_std);
        layers_.push_back(std::move(layer));
    }
    final_norm_ = params_.add("final_norm", {H}, Init::Ones, rng);
    head_w_ = params_.add("word_head.w", {H, cfg_.vocab_size}, Init::Normal, rng);
    head_b_ = params_.add("word_head.b", {cfg_.vocab_size}, Init::Zeros, rng);
    if (cfg_.gating) {
        gate_w_ = params_.add("gate_head.w", {H, 2}, Init::Zeros, rng);
        gate_b_ = params_.add("gate_head.b", {2}, Init::Zeros, rng);
    }
}

template <class T>
Tensor<T> Backbone<T>::embed(const Batch& batch) const {
    const auto n = batch.B * batch.L;
    auto words = embedding(embed_table_, std::span<const std::int32_t>(batch.ids));
    std::vector<T> vals(batch.values.begin(), batch.values.end());
    auto numbers = linear(Tensor<T>::from({n, 3}, std::move(vals)), value_w_, value_b_);
    return select_rows(std::span<const std::uint8_t>(batch.m_val), numbers, words);
}

template <class T>
Tensor<T> Backbone<T>::decode_hidden(const Tensor<T>& input, const Batch& batch) const {
    const auto B = batch.B, L = batch.L;
    if (L > cfg_.max_position) {
        throw Error(ErrorKind::LengthOverflow,
                    "length " + std::to_string(L) + " exceeds max_position " + std::to_string(cfg_.max_position));
    }
    for (std::int64_t r = 0; r < B; ++r) {
        bool seen_pad = false;
        for (std::int64_t i = 0; i < L; ++i) {
            bool pad = batch.m_pad[r * L + i];
            if (seen_pad && !pad) throw Error(ErrorKind::ShapeMismatch, "padding must be a suffix", i);
            seen_pad = seen_pad || pad;
        }
    }
    const auto H = cfg_.hidden_size;
    const auto nh = cfg_.num_heads;
    const auto nkv = cfg_.num_kv_heads;
    const auto hd = H / nh;
    const T inv_sqrt = T(1.0 / std::sqrt(double(hd)));
    const T eps = T(cfg_.norm_eps);

    Tensor<T> x = input;
    if (cfg_.positions == PositionScheme::Learned) {
        std::vector<std::int64_t> pos;
        for (std::int64_t r = 0; r < B; ++r)
            for (std::int64_t i = 0; i < L; ++i) pos.push_back(i);
        x = add(x, gather_rows(pos_table_, std::span<const std::int64_t>(pos)));
    }
    auto to_heads = [&](const Tensor<T>& t, std::int64_t heads) { return reshape(t, {B, L, heads, hd}); };
    for (const auto& layer : layers_) {
        auto a = rms_norm(x, layer.attn_norm, eps);
        auto q = to_heads(matmul(a, layer.wq), nh);
        auto k = to_heads(matmul(a, layer.wk), nkv);
        auto v = to_heads(matmul(a, layer.wv), nkv);
        if (cfg_.positions == PositionScheme::Rope) {
            q = rope(q, cfg_.rope_theta);
            k = rope(k, cfg_.rope_theta);
        }
        k = repeat_heads(k, nh / nkv);
        v = repeat_heads(v, nh / nkv);
        auto qh = reshape(permute(q, {0, 2, 1, 3}), {B * nh, L, hd});
        auto kh = reshape(permute(k, {0, 2, 1, 3}), {B * nh, L, hd});
        auto vh = reshape(permute(v, {0, 2, 1, 3}), {B * nh, L, hd});
        auto scores = causal_masked_fill(scale(bmm(qh, kh, true), inv_sqrt), -std::numeric_limits<T>::infinity());
        auto o = bmm(softmax(scores, -1), vh);
        o = reshape(permute(reshape(o, {B, nh, L, hd}), {0, 2, 1, 3}), {B * L, H});
        x = add(x, matmul(o, layer.wo));

        auto f = rms_norm(x, layer.ffn_norm, eps);
        auto g = mul(silu(matmul(f, layer.w_gate)), matmul(f, layer.w_up));
        x = add(x, matmul(g, layer.w_down));
    }
    return rms_norm(x, final_norm_, eps);
}

template <class T>
Tensor<T> Backbone<T>::word_logits(const Tensor<T>& h) const {
    return linear(h, head_w_, head_b_);
}

template <class T>
Tensor<T> Backbone<T>::gate_logits(const Tensor<T>& h) const {
    if (!cfg_.gating) throw Error(ErrorKind::GatingDisabled, "backbone was built without a gating head");
    return linear(h, gate_w_, gate_b_);
}

template <class T>
GateDecision Backbone<T>::gate(std::span<const T> h_last) const {
    if (!cfg_.gating) throw Error(ErrorKind::GatingDisabled, "backbone was built without a gating head");
    if (static_cast<std::int64_t>(h_last.size()) != cfg_.hidden_size) {
        throw Error(ErrorKind::ShapeMismatch, "gate input has " + std::to_string(h_last.size()) + " features");
    }
    NoGradGuard ng;
    auto h = Tensor<T>::from({1, cfg_.hidden_size}, std::vector<T>(h_last.begin(), h_last.end()));
    auto p = softmax(gate_logits(h), -1);
    GateDecision d;
    d.p_word = p.data()[0];
    d.p_number = p.data()[1];
    d.route = d.p_number > d.p_word ? Route::Number : Route::Word;
    return d;
}

template class Backbone<float>;
template class Backbone<double>;

}  // namespace mixgen
