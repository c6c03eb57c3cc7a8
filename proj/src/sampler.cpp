#include "mixgen/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <thread>

#include "mixgen/conditioning.hpp"
#include "mixgen/error.hpp"
#include "mixgen/rng.hpp"

namespace mixgen {

void validate(const SampleConfig& c) {
    std::string bad;
    auto need = [&](bool ok, const std::string& what) {
        if (!ok) bad += (bad.empty() ? "" : "; ") + what;
    };
    need(c.temperature > 0.0 && std::isfinite(c.temperature), "temperature must be > 0");
    need(c.top_p > 0.0 && c.top_p <= 1.0, "top_p must be in (0, 1]");
    need(c.max_length >= 1, "max_length must be >= 1");
    need(c.steps >= 1, "steps must be >= 1");
    need(c.jobs >= 1, "jobs must be >= 1");
    need(c.batch >= 1, "batch must be >= 1");
    need(std::isfinite(c.guidance), "guidance must be finite");
    if (!bad.empty()) throw Error(ErrorKind::InvalidConfig, bad);
}

std::vector<Condition> ConditionSpec::conditions() const {
    const auto& vocab = Vocabulary::standard();
    std::set<std::string> seen;
    std::vector<Condition> out;
    for (const auto& [token, raw] : entries) {
        if (!seen.insert(token).second) throw Error(ErrorKind::InvalidConfig, "condition " + token + " given twice");
        auto id = vocab.find(token);
        if (!id || !vocab.is_property(*id)) throw Error(ErrorKind::UnknownSymbol, "property token '" + token + "'");
        out.push_back({token, transform ? signed_log(raw) : raw});
    }
    sort_conditions(out);
    return out;
}

std::vector<std::pair<TokenId, double>> top_p_support(std::span<const double> probs, double top_p) {
    std::vector<TokenId> order(probs.size());
    std::iota(order.begin(), order.end(), TokenId(0));
    std::stable_sort(order.begin(), order.end(), [&](TokenId a, TokenId b) { return probs[a] > probs[b]; });
    std::vector<std::pair<TokenId, double>> kept;
    double mass = 0.0;
    for (TokenId id : order) {
        if (probs[id] <= 0.0) break;
        kept.emplace_back(id, probs[id]);
        mass += probs[id];
        if (mass >= top_p * (1.0 - 1e-12)) break;
    }
    for (auto& [_, p] : kept) p /= mass;
    return kept;
}

TokenId next_word(std::span<const double> logits, double temperature, double top_p, std::mt19937_64& rng,
                  std::span<const TokenId> banned) {
    std::vector<double> p(logits.size());
    std::vector<bool> off(logits.size(), false);
    for (TokenId id : banned) {
        if (id >= 0 && static_cast<std::size_t>(id) < off.size()) off[id] = true;
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!off[i]) mx = std::max(mx, logits[i] / temperature);
    }
    double z = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = off[i] ? 0.0 : std::exp(logits[i] / temperature - mx);
        z += p[i];
    }
    for (auto& v : p) v /= z;
    auto kept = top_p_support(p, top_p);
    std::vector<double> w;
    for (const auto& [_, q] : kept) w.push_back(q);
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    return kept[pick(rng)].first;
}

namespace {

MixedSequence cut_after(const MixedSequence& full, TokenId token) {
    MixedSequence out;
    out.domain = full.domain;
    for (std::size_t i = 0; i < full.length(); ++i) {
        if (full.m_val[i]) {
            out.push_number(full.ids[i], full.values[i]);
        } else {
            out.push_word(full.ids[i]);
        }
        if (!full.m_val[i] && full.ids[i] == token) break;
    }
    return out;
}

}  // namespace

MixedSequence material_prompt(std::span<const std::string> sites, const std::vector<Condition>& conditions) {
    Material m;
    m.sites.assign(sites.begin(), sites.end());
    m.frac_coords.assign(sites.size(), Vec3{0, 0, 0});
    DomainRecord r;
    r.body = std::move(m);
    r.conditions = conditions;
    const auto& vocab = Vocabulary::standard();
    return cut_after(encode(r, vocab), vocab.specials().coord);
}

MixedSequence condition_prompt(Domain domain, const std::vector<Condition>& conditions) {
    DomainRecord r;
    switch (domain) {
        case Domain::Material: r.body = Material{{"H"}, {}, {Vec3{}}}; break;
        case Domain::Molecule: r.body = Molecule{"C", {Vec3{}}}; break;
        case Domain::Protein: r.body = Protein{"A", {Vec3{}}, std::nullopt}; break;
        case Domain::Docking: r.body = Docking{{"C"}, {Vec3{}}, "C", {Vec3{}}, {Vec3{}}}; break;
    }
    r.conditions = conditions;
    const auto& vocab = Vocabulary::standard();
    return cut_after(encode(r, vocab), vocab.specials().bos);
}

void check_prompt(const MixedSequence& prompt, const Vocabulary& vocab) {
    MixedSequence prefix;
    prefix.domain = prompt.domain;
    for (std::size_t i = 0; i < prompt.length(); ++i) {
        if (!prompt.m_val[i] && !vocab.contains(prompt.ids[i])) {
            throw Error(ErrorKind::GrammarViolation, "token id out of vocabulary", i);
        }
        const auto st = grammar_state(prefix, vocab);
        if (st.complete) throw Error(ErrorKind::GrammarViolation, "prompt continues after <eos>", i);
        if (prompt.m_val[i] && st.bounded && !st.expects_number) {
            throw Error(ErrorKind::GrammarViolation, "numeric value where the grammar expects a word", i);
        }
        if (!prompt.m_val[i] && st.expects_number) {
            throw Error(ErrorKind::GrammarViolation, "word where the grammar expects a number", i);
        }
        if (prompt.m_val[i]) {
            prefix.push_number(prompt.ids[i], prompt.values[i]);
        } else {
            prefix.push_word(prompt.ids[i]);
        }
    }
}

Sampler::Sampler(const Model<float>& model, SampleConfig cfg, const Model<float>* weak)
    : model_(model), weak_(weak), cfg_(cfg) {
    validate(cfg_);
    if (cfg_.routing == Routing::Gate && !model_.cfg.backbone.gating) {
        throw Error(ErrorKind::GatingDisabled, "gate routing needs a model trained with a gating head");
    }
    if (weak_ && !(weak_->cfg.head.T_train == model_.cfg.head.T_train &&
                   weak_->cfg.head.beta_start == model_.cfg.head.beta_start &&
                   weak_->cfg.head.beta_end == model_.cfg.head.beta_end)) {
        throw Error(ErrorKind::ScheduleMismatch, "weak model was trained on a different diffusion schedule");
    }
}

std::vector<Generated> Sampler::generate(std::span<const MixedSequence> prompts) const {
    const auto& vocab = Vocabulary::standard();
    if (cfg_.routing == Routing::Grammar) {
        for (const auto& p : prompts) check_prompt(p, vocab);
    }
    std::vector<Generated> out(prompts.size());
    const auto jobs = static_cast<std::size_t>(std::max(1, cfg_.jobs));
    std::vector<std::vector<std::size_t>> parts(std::min(jobs, std::max<std::size_t>(prompts.size(), 1)));
    for (std::size_t i = 0; i < prompts.size(); ++i) parts[i % parts.size()].push_back(i);
    if (parts.size() == 1) {
        run(prompts, parts[0], out);
    } else {
        std::vector<std::exception_ptr> errors(parts.size());
        std::vector<std::thread> threads;
        for (std::size_t j = 0; j < parts.size(); ++j) {
            threads.emplace_back([&, j] {
                try {
                    run(prompts, parts[j], out);
                } catch (...) {
                    errors[j] = std::current_exception();
                }
            });
        }
        for (auto& t : threads) t.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }
    return out;
}

void Sampler::run(std::span<const MixedSequence> prompts, std::span<const std::size_t> index,
                  std::vector<Generated>& out) const {
    const auto& vocab = Vocabulary::standard();
    const auto& sp = vocab.specials();
    const TokenId banned[] = {sp.pad, sp.num};
    const auto H = model_.cfg.backbone.hidden_size;
    const auto limit = std::min<std::int64_t>(cfg_.max_length, model_.cfg.backbone.max_position);
    NoGradGuard ng;

    for (std::size_t start = 0; start < index.size(); start += static_cast<std::size_t>(cfg_.batch)) {
        const auto stop = std::min(index.size(), start + static_cast<std::size_t>(cfg_.batch));
        std::vector<std::size_t> rows(index.begin() + start, index.begin() + stop);
        std::vector<MixedSequence> seqs;
        std::vector<std::mt19937_64> rngs;
        std::vector<bool> done;
        for (std::size_t i : rows) {
            MixedSequence s = prompts[i];
            s.m_pad.assign(s.length(), 0);
            seqs.push_back(std::move(s));
            rngs.emplace_back(derive_seed(cfg_.seed, i));
            done.push_back(grammar_state(seqs.back(), vocab).complete);
        }
        std::vector<bool> truncated(rows.size(), false), malformed(rows.size(), false);

        while (true) {
            std::vector<std::size_t> active;
            for (std::size_t r = 0; r < rows.size(); ++r) {
                if (done[r]) continue;
                if (static_cast<std::int64_t>(seqs[r].length()) >= limit) {
                    done[r] = true;
                    truncated[r] = true;
                    continue;
                }
                active.push_back(r);
            }
            if (active.empty()) break;

            std::vector<MixedSequence> cur;
            for (std::size_t r : active) cur.push_back(seqs[r]);
            const Batch batch = make_batch(cur, vocab);
            auto hidden = model_.backbone.forward(batch);
            std::vector<std::int64_t> last;
            for (std::size_t a = 0; a < active.size(); ++a) {
                last.push_back(static_cast<std::int64_t>(a) * batch.L + batch.lengths[a] - 1);
            }
            auto h_last = gather_rows(hidden, std::span<const std::int64_t>(last));

            std::vector<std::size_t> word_rows, num_rows;
            for (std::size_t a = 0; a < active.size(); ++a) {
                GrammarState st;
                try {
                    st = grammar_state(seqs[active[a]], vocab);
                } catch (const Error& e) {
                    if (e.kind() != ErrorKind::GrammarViolation) throw;
                    done[active[a]] = true;
                    malformed[active[a]] = true;
                    continue;
                }
                bool number;
                if (cfg_.routing == Routing::Grammar) {
                    number = st.expects_number;
                } else {
                    number = model_.backbone.gate(h_last.data().subspan(a * H, H)).route == Route::Number;
                    if (number && st.bounded && !st.expects_number) number = false;
                }
                (number ? num_rows : word_rows).push_back(a);
            }

            if (!word_rows.empty()) {
                std::vector<std::int64_t> pick(word_rows.begin(), word_rows.end());
                auto logits = model_.backbone.word_logits(gather_rows(h_last, std::span<const std::int64_t>(pick)));
                const auto V = logits.dim(1);
                for (std::size_t k = 0; k < word_rows.size(); ++k) {
                    const std::size_t r = active[word_rows[k]];
                    auto row = logits.data().subspan(k * V, V);
                    std::vector<double> l(row.begin(), row.end());
                    const TokenId id = next_word(l, cfg_.temperature, cfg_.top_p, rngs[r], banned);
                    seqs[r].push_word(id);
                    if (id == sp.eos) done[r] = true;
                }
            }
            if (!num_rows.empty()) {
                std::vector<std::int64_t> pick(num_rows.begin(), num_rows.end());
                auto cond = gather_rows(h_last, std::span<const std::int64_t>(pick));
                std::vector<std::mt19937_64> streams;
                for (std::size_t a : num_rows) streams.push_back(rngs[active[a]]);
                WeakGuidance<float> guide;
                if (weak_) {
                    std::vector<MixedSequence> sub;
                    for (std::size_t a : num_rows) sub.push_back(seqs[active[a]]);
                    const Batch wb = make_batch(sub, vocab);
                    auto wh = weak_->backbone.forward(wb);
                    std::vector<std::int64_t> wl;
                    for (std::size_t a = 0; a < sub.size(); ++a)
                        wl.push_back(static_cast<std::int64_t>(a) * wb.L + wb.lengths[a] - 1);
                    guide = {&weak_->head, gather_rows(wh, std::span<const std::int64_t>(wl)), cfg_.guidance};
                }
                auto values = diffhead_sample(model_.head, cond, cfg_.steps, std::span(streams),
                                              weak_ ? &guide : nullptr, cfg_.strict);
                for (std::size_t k = 0; k < num_rows.size(); ++k) {
                    const std::size_t r = active[num_rows[k]];
                    rngs[r] = streams[k];
                    seqs[r].push_number(sp.num, values[k]);
                }
            }
        }
        for (std::size_t r = 0; r < rows.size(); ++r) out[rows[r]] = {std::move(seqs[r]), truncated[r], malformed[r]};
    }
}

}  // namespace mixgen
