#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <map>
#include <random>

#include "mixgen/conditioning.hpp"
#include "mixgen/error.hpp"
#include "mixgen/optim.hpp"
#include "mixgen/sampler.hpp"

using namespace mixgen;

namespace {

ModelConfig tiny_model(bool gating = false) {
    ModelConfig c;
    c.backbone.hidden_size = 16;
    c.backbone.intermediate_size = 32;
    c.backbone.num_layers = 2;
    c.backbone.num_heads = 2;
    c.backbone.num_kv_heads = 1;
    c.backbone.max_position = 64;
    c.backbone.gating = gating;
    c.head.width = 16;
    c.head.resblocks = 2;
    c.head.freq_dim = 16;
    c.head.T_train = 100;
    c.loss.M = 2;
    return c;
}

Tensor<float> param(const Model<float>& m, const std::string& name) {
    for (const auto& [n, t] : m.parameters())
        if (n == name) return t;
    FAIL("no parameter " << name);
    return {};
}

// Random weights, with the word head pushed hard towards <eos> and optionally
// the gate towards numbers.
void prepare(Model<float>& m, std::uint64_t seed, double gate_number_bias = 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 0.1);
    for (auto& [_, t] : m.parameters())
        for (auto& v : t.mutable_data()) v = float(v + n(rng));
    param(m, "word_head.b").mutable_data()[Vocabulary::standard().specials().eos] = 60.0f;
    if (m.cfg.backbone.gating) {
        auto b = param(m, "gate_head.b").mutable_data();
        b[0] = 0.0f;
        b[1] = float(gate_number_bias);
    }
}

std::size_t count_numbers(const MixedSequence& s) {
    std::size_t n = 0;
    for (auto v : s.m_val) n += v;
    return n;
}

template <class F>
ErrorKind kind_of(F f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("no error thrown");
    return ErrorKind::Io;
}

}  // namespace

TEST_CASE("signed log") {
    CHECK(signed_log(0.0) == 0.0);
    CHECK(signed_log(400.0) == doctest::Approx(5.99396).epsilon(1e-6));
    CHECK(signed_log(400.0) == std::log(401.0));
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int i = 0; i < 10000; ++i) {
        const double x = u(rng), y = u(rng);
        CHECK(std::abs(signed_log_inverse(signed_log(x)) - x) <= 1e-12 * std::max(1.0, std::abs(x)));
        CHECK(signed_log(-x) == -signed_log(x));
        if (x < y) CHECK(signed_log(x) < signed_log(y));
    }
}

TEST_CASE("top-p worked example") {
    const std::vector<double> p{0.5, 0.3, 0.15, 0.05};
    const auto kept = top_p_support(p, 0.8);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].first == 0);
    CHECK(kept[1].first == 1);
    CHECK(kept[0].second == doctest::Approx(0.625).epsilon(1e-15));
    CHECK(kept[1].second == doctest::Approx(0.375).epsilon(1e-15));
    CHECK(top_p_support(p, 1.0).size() == 4);
    CHECK(top_p_support(p, 0.5).size() == 1);
}

TEST_CASE("top-p support is the minimal descending prefix") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0, 1);
    std::uniform_int_distribution<int> level(0, 3);
    for (int trial = 0; trial < 2000; ++trial) {
        const int V = 1 + trial % 12;
        std::vector<double> p(V);
        double z = 0;
        // Coarse levels create ties.
        for (auto& v : p) z += (v = trial % 2 ? u(rng) : 1.0 + level(rng));
        for (auto& v : p) v /= z;
        const double top = 0.05 + 0.95 * u(rng);
        const auto kept = top_p_support(p, top);
        REQUIRE(!kept.empty());
        std::vector<bool> in(V, false);
        double mass = 0, renorm = 0;
        for (const auto& [id, q] : kept) {
            in[id] = true;
            mass += p[id];
            renorm += q;
        }
        CHECK(renorm == doctest::Approx(1.0));
        for (const auto& [id, q] : kept) CHECK(q == doctest::Approx(p[id] / mass));
        CHECK(mass >= top * (1 - 1e-12));
        CHECK(mass - p[kept.back().first] < top);
        for (int a = 0; a < V; ++a)
            for (int b = 0; b < V; ++b)
                if (in[a] && !in[b]) {
                    CHECK(p[a] >= p[b]);
                    if (p[a] == p[b]) CHECK(a < b);
                }
        for (std::size_t k = 1; k < kept.size(); ++k) CHECK(p[kept[k - 1].first] >= p[kept[k].first]);
    }
}

TEST_CASE("next word with identity warpers is a categorical over the softmax") {
    const std::vector<double> logits{0.3, -1.0, 1.2, 0.0, 0.5};
    std::vector<double> p(logits.size());
    double z = 0;
    for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(logits[i]));
    for (auto& v : p) v /= z;
    std::mt19937_64 rng(3);
    const int N = 200000;
    std::vector<int> counts(p.size(), 0);
    for (int i = 0; i < N; ++i) counts[next_word(logits, 1.0, 1.0, rng)]++;
    double chi2 = 0;
    for (std::size_t i = 0; i < p.size(); ++i) chi2 += std::pow(counts[i] - N * p[i], 2) / (N * p[i]);
    boost::math::chi_squared dist(double(p.size() - 1));
    CHECK(boost::math::cdf(boost::math::complement(dist, chi2)) > 0.01);
}

TEST_CASE("next word at low temperature is the argmax") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n01;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> logits(30);
        for (auto& v : logits) v = n01(rng);
        const auto best = TokenId(std::max_element(logits.begin(), logits.end()) - logits.begin());
        auto shifted = logits;
        for (auto& v : shifted) v += 123.0;
        int hits = 0, shifted_hits = 0;
        for (int i = 0; i < 1000; ++i) {
            hits += next_word(logits, 1e-4, 1.0, rng) == best;
            shifted_hits += next_word(shifted, 1e-4, 0.9, rng) == best;
        }
        CHECK(hits == 1000);
        CHECK(shifted_hits == 1000);
    }
}

TEST_CASE("next word never draws banned ids") {
    std::mt19937_64 rng(5);
    const std::vector<double> logits{5.0, 0.0, 4.0, 0.0};
    const TokenId banned[] = {0, 2};
    for (int i = 0; i < 2000; ++i) {
        const auto id = next_word(logits, 1.0, 1.0, rng, banned);
        CHECK((id == 1 || id == 3));
    }
}

TEST_CASE("condition specs") {
    ConditionSpec spec;
    spec.entries = {{"<scale>", 5.0}, {"<bulk>", 400.0}};
    const auto c = spec.conditions();
    REQUIRE(c.size() == 2);
    CHECK(c[0].token == "<bulk>");
    CHECK(c[0].value == std::log(401.0));
    CHECK(c[1].token == "<scale>");
    spec.transform = false;
    CHECK(spec.conditions()[0].value == 400.0);

    ConditionSpec dup{{{"<bulk>", 1.0}, {"<bulk>", 2.0}}};
    CHECK(kind_of([&] { dup.conditions(); }) == ErrorKind::InvalidConfig);
    ConditionSpec word{{{"Fe", 1.0}}};
    CHECK(kind_of([&] { word.conditions(); }) == ErrorKind::UnknownSymbol);
    ConditionSpec unknown{{{"<nope>", 1.0}}};
    CHECK(kind_of([&] { unknown.conditions(); }) == ErrorKind::UnknownSymbol);
}

TEST_CASE("prompts") {
    const auto& vocab = Vocabulary::standard();
    const std::vector<std::string> sites{"Cl", "Na", "Na"};
    const auto p = material_prompt(sites, {{"<scale>", 1.5}});
    CHECK(p.ids.back() == vocab.specials().coord);
    CHECK(p.ids[0] == vocab.id("<scale>"));
    CHECK(p.m_val[1] == 1);
    CHECK(p.values[1][0] == 1.5);
    const auto st = grammar_state(p, vocab);
    CHECK(st.expects_number);
    CHECK(st.numbers_remaining == 3 + sites.size());
    CHECK_NOTHROW(check_prompt(p, vocab));

    const auto c = condition_prompt(Domain::Material, {{"<bulk>", 2.0}});
    CHECK(c.ids.back() == vocab.specials().bos);
    CHECK(c.length() == 3);
    CHECK_NOTHROW(check_prompt(c, vocab));

    auto bad = p;
    bad.push_word(vocab.specials().eos);
    try {
        check_prompt(bad, vocab);
        FAIL("expected GrammarViolation");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::GrammarViolation);
        CHECK(e.position() == p.length());
    }
}

TEST_CASE("config validation and construction errors") {
    Model<float> plain(tiny_model(), 1);
    SampleConfig cfg;
    cfg.temperature = 0;
    CHECK(kind_of([&] { Sampler(plain, cfg); }) == ErrorKind::InvalidConfig);
    cfg = {};
    cfg.top_p = 1.5;
    CHECK(kind_of([&] { Sampler(plain, cfg); }) == ErrorKind::InvalidConfig);
    cfg = {};
    cfg.routing = Routing::Gate;
    CHECK(kind_of([&] { Sampler(plain, cfg); }) == ErrorKind::GatingDisabled);

    auto other = tiny_model();
    other.head.T_train = 50;
    Model<float> weak(other, 2);
    CHECK(kind_of([&] { Sampler(plain, SampleConfig{}, &weak); }) == ErrorKind::ScheduleMismatch);

    SampleConfig strict;
    strict.strict = true;
    Sampler s(plain, strict);
    const std::vector<MixedSequence> prompts{material_prompt(std::vector<std::string>{"Na"})};
    CHECK(kind_of([&] { s.generate(prompts); }) == ErrorKind::UntrainedHead);
}

TEST_CASE("complete prompts come back unchanged") {
    Model<float> model(tiny_model(), 1);
    prepare(model, 2);
    Material m{{"Cl", "Na"}, {Vec3{5, 0, 0}, Vec3{0, 5, 0}, Vec3{0, 0, 5}}, {{0, 0, 0}, {0.5, 0.5, 0.5}}};
    DomainRecord r;
    r.body = m;
    const auto full = encode(r, Vocabulary::standard());
    Sampler s(model, SampleConfig{});
    const auto out = s.generate(std::vector<MixedSequence>{full});
    CHECK(out[0].seq.ids == full.ids);
    CHECK(out[0].seq.values == full.values);
    CHECK(out[0].seq.m_val == full.m_val);
    CHECK_FALSE(out[0].truncated);
}

TEST_CASE("grammar routing fills exactly the demanded payloads") {
    const auto& vocab = Vocabulary::standard();
    Model<float> model(tiny_model(), 3);
    prepare(model, 4);
    SampleConfig cfg;
    cfg.steps = 5;
    Sampler s(model, cfg);
    std::vector<MixedSequence> prompts;
    std::vector<std::size_t> sizes;
    for (int i = 0; i < 32; ++i) {
        std::vector<std::string> sites(1 + i % 5, i % 2 ? "O" : "Fe");
        sizes.push_back(sites.size());
        prompts.push_back(material_prompt(sites));
    }
    const auto out = s.generate(prompts);
    for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK_FALSE(out[i].truncated);
        CHECK(count_numbers(out[i].seq) == 3 + sizes[i]);
        CHECK(out[i].seq.ids.back() == vocab.specials().eos);
        CHECK(out[i].seq.length() == prompts[i].length() + 3 + sizes[i] + 1);
        const auto rec = decode(out[i].seq, vocab);
        CHECK(std::get<Material>(rec.body).sites.size() == sizes[i]);
    }
}

TEST_CASE("gate routing is cut off by grammar bounds") {
    const auto& vocab = Vocabulary::standard();
    Model<float> model(tiny_model(true), 5);
    prepare(model, 6, 30.0);
    SampleConfig cfg;
    cfg.routing = Routing::Gate;
    cfg.steps = 5;
    Sampler s(model, cfg);
    const std::vector<std::string> sites{"Li", "O"};
    const auto out = s.generate(std::vector<MixedSequence>{material_prompt(sites)});
    CHECK(count_numbers(out[0].seq) == 5);
    CHECK(out[0].seq.ids.back() == vocab.specials().eos);
    CHECK_NOTHROW(decode(out[0].seq, vocab));

    // A gate that always picks words ends the sequence straight after <coord>.
    prepare(model, 6, -30.0);
    const auto early = s.generate(std::vector<MixedSequence>{material_prompt(sites)});
    CHECK(count_numbers(early[0].seq) == 0);
    CHECK(early[0].seq.ids.back() == vocab.specials().eos);
}

TEST_CASE("generation stops at max length with a truncation flag") {
    Model<float> model(tiny_model(), 7);
    prepare(model, 8);
    SampleConfig cfg;
    cfg.steps = 3;
    const auto prompt = material_prompt(std::vector<std::string>{"Na", "Cl", "Cl"});
    cfg.max_length = static_cast<std::int64_t>(prompt.length()) + 2;
    Sampler s(model, cfg);
    const auto out = s.generate(std::vector<MixedSequence>{prompt});
    CHECK(out[0].truncated);
    CHECK(out[0].seq.length() == prompt.length() + 2);
    CHECK(kind_of([&] { decode(out[0].seq, Vocabulary::standard()); }) == ErrorKind::Truncated);
}

TEST_CASE("generation is deterministic for a fixed seed") {
    Model<float> model(tiny_model(), 9);
    // Moderate eos bias so that word draws and sequence lengths vary.
    prepare(model, 10);
    param(model, "word_head.b").mutable_data()[Vocabulary::standard().specials().eos] = 1.0f;
    std::vector<MixedSequence> prompts;
    for (int i = 0; i < 6; ++i) prompts.push_back(condition_prompt(Domain::Molecule, {{"<gap>", 0.1 * i}}));
    SampleConfig cfg;
    cfg.steps = 4;
    cfg.max_length = 40;
    cfg.seed = 77;
    cfg.batch = 1;
    const auto a = Sampler(model, cfg).generate(prompts);
    const auto b = Sampler(model, cfg).generate(prompts);
    cfg.jobs = 3;
    const auto c = Sampler(model, cfg).generate(prompts);
    bool varied = false;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        CHECK(a[i].seq == b[i].seq);
        CHECK(a[i].seq == c[i].seq);
        CHECK(a[i].truncated == c[i].truncated);
        CHECK(a[i].malformed == c[i].malformed);
        varied = varied || a[i].seq.length() != a[0].seq.length();
    }
    CHECK(varied);
    cfg.seed = 78;
    cfg.jobs = 1;
    const auto d = Sampler(model, cfg).generate(prompts);
    bool differs = false;
    for (std::size_t i = 0; i < prompts.size(); ++i) differs = differs || !(d[i].seq == a[i].seq);
    CHECK(differs);
}

TEST_CASE("guidance with an identical weak model changes nothing") {
    Model<float> model(tiny_model(), 11);
    prepare(model, 12);
    Model<float> twin(tiny_model(), 11);
    prepare(twin, 12);
    SampleConfig cfg;
    cfg.steps = 6;
    cfg.guidance = 2.0;
    const std::vector<MixedSequence> prompts{material_prompt(std::vector<std::string>{"Cu", "S"})};
    const auto plain = Sampler(model, cfg).generate(prompts);
    const auto guided = Sampler(model, cfg, &twin).generate(prompts);
    CHECK(plain[0].seq == guided[0].seq);
}

namespace {

// Trains a head on two Dirac modes at +-0.8 (all channels equal) under a
// constant condition, from one fixed run.
DiffHead<float> two_dirac_head(int steps) {
    HeadConfig hc;
    hc.width = 32;
    hc.resblocks = 2;
    hc.cond_dim = 4;
    hc.freq_dim = 16;
    hc.T_train = 100;
    DiffHead<float> head(hc, 21);
    DiffLossConfig lc;
    lc.M = 4;
    Adam<float> adam(head.params().items());
    std::mt19937_64 rng(22);
    const int N = 32;
    auto cond = Tensor<float>::from({N, 4}, std::vector<float>(N * 4, 1.0f));
    for (int s = 0; s < steps; ++s) {
        std::vector<double> x0;
        for (int i = 0; i < N; ++i) {
            const double v = rng() % 2 ? 0.8 : -0.8;
            x0.insert(x0.end(), {v, v, v});
        }
        head.params().zero_grad();
        auto loss = diffloss_forward(head, x0, cond, lc, rng);
        loss.backward();
        adam.step(2e-3);
    }
    return head;
}

}  // namespace

TEST_CASE("weak checkpoint guidance concentrates a two dirac toy") {
    const auto weak = two_dirac_head(60);
    const auto strong = two_dirac_head(1500);
    const int N = 256;
    auto cond = Tensor<float>::from({N, 4}, std::vector<float>(N * 4, 1.0f));
    auto spread = [&](double g) {
        std::vector<std::mt19937_64> rngs;
        for (int i = 0; i < N; ++i) rngs.emplace_back(1000 + i);
        WeakGuidance<float> guide{&weak, cond, g};
        const auto xs = diffhead_sample(strong, cond, 50, std::span(rngs), &guide);
        double ss = 0;
        for (const auto& x : xs)
            for (double v : x) {
                const double e = v - (v >= 0 ? 0.8 : -0.8);
                ss += e * e;
            }
        return std::sqrt(ss / (3.0 * N));
    };
    const double s0 = spread(0.0), s2 = spread(2.0);
    MESSAGE("spread around nearest mode: g=0 " << s0 << ", g=2 " << s2);
    CHECK(s2 < s0);
}
