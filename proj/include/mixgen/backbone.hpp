#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mixgen/nn.hpp"
#include "mixgen/seqformat.hpp"
#include "mixgen/tensor.hpp"

namespace mixgen {

enum class PositionScheme { Rope, Learned };

struct BackboneConfig {
    std::int64_t hidden_size = 128;
    std::int64_t intermediate_size = 512;
    std::int64_t num_layers = 4;
    std::int64_t num_heads = 4;
    std::int64_t num_kv_heads = 4;
    std::int64_t vocab_size = 0;  // 0: size of the standard vocabulary
    std::int64_t max_position = 512;
    PositionScheme positions = PositionScheme::Rope;
    double rope_theta = 10000.0;
    double norm_eps = 1e-6;
    bool gating = false;

    bool operator==(const BackboneConfig&) const = default;
};

// Throws InvalidConfig.
void validate(const BackboneConfig& cfg);

// Right-padded batch in the layout the backbone consumes.
struct Batch {
    std::int64_t B = 0, L = 0;
    std::vector<std::int32_t> ids;     // B*L
    std::vector<double> values;        // B*L*3
    std::vector<std::uint8_t> m_val;   // B*L
    std::vector<std::uint8_t> m_pad;   // B*L
    std::vector<std::int64_t> lengths; // real length per row
};

Batch make_batch(std::span<const MixedSequence> seqs, const Vocabulary& vocab);

enum class Route { Word, Number };

struct GateDecision {
    Route route = Route::Word;
    double p_word = 0.5;
    double p_number = 0.5;
};

template <class T>
class Backbone {
public:
    Backbone(const BackboneConfig& cfg, std::uint64_t seed);

    const BackboneConfig& config() const { return cfg_; }
    ParamStore<T>& params() { return params_; }
    const ParamStore<T>& params() const { return params_; }

    // [B*L, hidden]. Throws IdOutOfRange.
    Tensor<T> embed(const Batch& batch) const;
    // Causal decoder stack plus final norm; [B*L, hidden]. Throws LengthOverflow.
    Tensor<T> decode_hidden(const Tensor<T>& x, const Batch& batch) const;
    Tensor<T> forward(const Batch& batch) const { return decode_hidden(embed(batch), batch); }

    // Logits at row i score the token at i+1.
    Tensor<T> word_logits(const Tensor<T>& h) const;
    // [rows, 2]: column 0 = word, column 1 = number. Throws GatingDisabled.
    Tensor<T> gate_logits(const Tensor<T>& h) const;
    GateDecision gate(std::span<const T> h_last) const;

private:
    struct Layer {
        Tensor<T> attn_norm, wq, wk, wv, wo, ffn_norm, w_gate, w_up, w_down;
    };

    BackboneConfig cfg_;
    ParamStore<T> params_;
    Tensor<T> embed_table_, value_w_, value_b_, pos_table_;
    std::vector<Layer> layers_;
    Tensor<T> final_norm_, head_w_, head_b_, gate_w_, gate_b_;
};

}  // namespace mixgen
