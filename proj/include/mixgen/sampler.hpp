#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mixgen/model.hpp"
#include "mixgen/seqformat.hpp"

namespace mixgen {

enum class Routing { Grammar, Gate };

struct SampleConfig {
    double temperature = 1.0;
    double top_p = 1.0;
    std::int64_t max_length = 512;
    int steps = 200;
    Routing routing = Routing::Grammar;
    double guidance = 1.0;  // strength g, used only when a weak model is given
    std::uint64_t seed = 0;
    int jobs = 1;
    std::int64_t batch = 64;  // prompts forwarded together per thread
    bool strict = false;      // refuse an untrained diffusion head

    bool operator==(const SampleConfig&) const = default;
};

// Throws InvalidConfig.
void validate(const SampleConfig& cfg);

// Property targets given as raw values.
struct ConditionSpec {
    std::vector<std::pair<std::string, double>> entries;
    bool transform = true;  // apply signed_log

    // Sorted, transformed conditions. Throws InvalidConfig on duplicates,
    // UnknownSymbol on tokens that are not property tokens.
    std::vector<Condition> conditions() const;
};

// Ids kept by nucleus filtering with their renormalized probabilities, in
// descending probability order (ties by ascending id).
std::vector<std::pair<TokenId, double>> top_p_support(std::span<const double> probs, double top_p);

// Temperature, then top-p, then a categorical draw. Ids in `banned` get zero mass.
TokenId next_word(std::span<const double> logits, double temperature, double top_p, std::mt19937_64& rng,
                  std::span<const TokenId> banned = {});

// Condition prefix plus <bos>, the sites and <coord>: the generation prompt
// for a material of known composition.
MixedSequence material_prompt(std::span<const std::string> sites, const std::vector<Condition>& conditions = {});
// Condition prefix plus <bos>.
MixedSequence condition_prompt(Domain domain, const std::vector<Condition>& conditions);

struct Generated {
    MixedSequence seq;
    bool truncated = false;
    bool malformed = false;  // the model emitted words the grammar rejects; generation stopped there
};

class Sampler {
public:
    // `weak` enables weak-checkpoint guidance with strength cfg.guidance.
    // Throws InvalidConfig, GatingDisabled (gate routing without a gating head).
    Sampler(const Model<float>& model, SampleConfig cfg, const Model<float>* weak = nullptr);

    // Prompt i draws from the stream derive_seed(cfg.seed, i). Throws
    // GrammarViolation for malformed prompts in grammar mode.
    std::vector<Generated> generate(std::span<const MixedSequence> prompts) const;

    const SampleConfig& config() const { return cfg_; }

private:
    void run(std::span<const MixedSequence> prompts, std::span<const std::size_t> index,
             std::vector<Generated>& out) const;

    const Model<float>& model_;
    const Model<float>* weak_;
    SampleConfig cfg_;
};

// Validates that every numeric/word position of `prompt` agrees with the
// grammar. Throws GrammarViolation with the offending position.
void check_prompt(const MixedSequence& prompt, const Vocabulary& vocab);

}  // namespace mixgen
