#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "mixgen/conditioning.hpp"
#include "mixgen/error.hpp"
#include "mixgen/evalkit.hpp"
#include "mixgen/jsonio.hpp"
#include "mixgen/rng.hpp"
#include "mixgen/runconfig.hpp"
#include "mixgen/sampler.hpp"
#include "mixgen/trainer.hpp"
#include "mixgen/verify.hpp"

using namespace mixgen;
namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

constexpr int kOk = 0, kInvalid = 1, kRuntime = 2, kVerifyFailed = 3;

struct Line {
    std::size_t number;
    std::string text;
};

std::vector<Line> read_lines(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
    std::vector<Line> out;
    std::string s;
    for (std::size_t n = 1; std::getline(in, s); ++n) {
        if (s.find_first_not_of(" \t\r") != std::string::npos) out.push_back({n, s});
    }
    return out;
}

// Files of a directory in name order, or the path itself.
std::vector<fs::path> jsonl_inputs(const fs::path& p) {
    if (!fs::is_directory(p)) return {p};
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(p))
        if (e.path().extension() == ".jsonl") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

int exit_code_for(ErrorKind k) {
    switch (k) {
        case ErrorKind::InvalidConfig:
        case ErrorKind::BadSpec:
        case ErrorKind::UnknownSymbol:
        case ErrorKind::ArityMismatch:
        case ErrorKind::GrammarViolation:
        case ErrorKind::GatingDisabled:
        case ErrorKind::ScheduleMismatch:
        case ErrorKind::BadRange:
            return kInvalid;
        default:
            return kRuntime;
    }
}

// Config flags: one --section.key option per config key, applied on top of
// the file.
struct ConfigFlags {
    std::string file;
    std::map<std::string, std::string> values;

    void attach(CLI::App* app) {
        app->add_option("--config", file, "TOML run config")->check(CLI::ExistingFile);
        for (const auto& k : run_config_keys()) app->add_option("--" + k, values[k], "overrides " + k);
    }

    RunConfig resolve() {
        RunConfig cfg = file.empty() ? RunConfig{} : load_run_config(file);
        std::vector<std::pair<std::string, std::string>> set;
        for (const auto& [k, v] : values)
            if (!v.empty()) set.emplace_back(k, v);
        apply_overrides(cfg, set);
        return cfg;
    }
};

// ----------------------------------------------------------------------------

struct ParseArgs {
    std::string input, out, domain;
    bool check = false;
};

int cmd_parse(const ParseArgs& a) {
    const auto& vocab = Vocabulary::standard();
    std::optional<Domain> want;
    if (!a.domain.empty()) {
        want = parse_domain(a.domain);
        if (!want) throw Error(ErrorKind::InvalidConfig, "unknown domain '" + a.domain + "'");
    }
    std::string out;
    std::size_t ok = 0, total = 0;
    for (const auto& line : read_lines(a.input)) {
        ++total;
        const std::string tag = a.input + ":" + std::to_string(line.number) + ": ";
        DomainRecord rec;
        MixedSequence seq;
        try {
            rec = record_from_json(Json::parse(line.text));
            if (want && rec.domain() != *want) {
                throw Error(ErrorKind::BadSpec, "record domain " + std::string(domain_name(rec.domain())) + " is not " +
                                                    std::string(domain_name(*want)));
            }
            seq = encode(rec, vocab);
        } catch (const Json::exception& e) {
            std::cerr << tag << "BadSpec: " << e.what() << "\n";
            return kInvalid;
        } catch (const Error& e) {
            std::cerr << tag << std::string(e.what()) << "\n";
            return kInvalid;
        }
        if (a.check) {
            try {
                if (!(decode(seq, vocab) == rec)) {
                    std::cerr << "round-trip FAILED at line " << line.number << ": decoded record differs\n";
                    return kVerifyFailed;
                }
            } catch (const Error& e) {
                std::cerr << "round-trip FAILED at line " << line.number << ": " << std::string(e.what()) << "\n";
                return kVerifyFailed;
            }
            ++ok;
        }
        out += sequence_to_json(seq, vocab).dump() + "\n";
    }
    if (!a.out.empty()) {
        write_file_atomic(a.out, out);
    } else if (!a.check) {
        std::cout << out;
    }
    if (a.check) std::cout << "round-trip OK " << ok << "/" << total << "\n";
    return kOk;
}

// ----------------------------------------------------------------------------

struct ToyArgs {
    std::string family = "crystal", out, holdout_out;
    ToySpec spec;
    double holdout = 0.0;
};

int cmd_toy(ToyArgs a) {
    if (a.family == "crystal") {
        a.spec.family = ToyFamily::Crystal;
    } else if (a.family == "molecule") {
        a.spec.family = ToyFamily::Molecule;
    } else if (a.family == "conditional") {
        a.spec.family = ToyFamily::Conditional;
    } else {
        throw Error(ErrorKind::BadSpec, "unknown toy family '" + a.family + "'");
    }
    if (a.holdout < 0 || a.holdout >= 1) throw Error(ErrorKind::BadSpec, "holdout must be in [0, 1)");
    const auto records = make_toy_dataset(a.spec);
    auto key = [](const DomainRecord& r) {
        if (const auto* m = std::get_if<Material>(&r.body)) return composition_key(m->sites);
        return std::get<Molecule>(r.body).smiles;
    };
    // Hold out whole compositions so evaluation prompts are unseen.
    std::set<std::string> held;
    if (a.holdout > 0) {
        std::set<std::string> uniq;
        for (const auto& r : records) uniq.insert(key(r));
        std::vector<std::string> all(uniq.begin(), uniq.end());
        std::mt19937_64 rng(derive_seed(a.spec.seed, 7));
        std::shuffle(all.begin(), all.end(), rng);
        const auto n = static_cast<std::size_t>(std::lround(a.holdout * double(all.size())));
        held.insert(all.begin(), all.begin() + std::min(n, all.size()));
    }
    std::string train, test;
    for (const auto& r : records) (held.count(key(r)) ? test : train) += record_to_json(r).dump() + "\n";
    write_file_atomic(a.out, train);
    if (!a.holdout_out.empty()) write_file_atomic(a.holdout_out, test);
    return kOk;
}

// ----------------------------------------------------------------------------

struct TrainArgs {
    ConfigFlags cfg;
    std::string resume;
};

int cmd_train(TrainArgs& a) {
    const RunConfig rc = a.cfg.resolve();
    validate(rc, true);
    const std::string hash = config_hash(rc);
    std::vector<DataSource> sources;
    for (std::size_t i = 0; i < rc.data.size(); ++i) {
        DataSource src;
        src.multiplier = rc.multipliers.empty() ? 1 : rc.multipliers[i];
        for (const auto& line : read_lines(rc.data[i])) {
            try {
                src.records.push_back(record_from_json(Json::parse(line.text)));
            } catch (const Json::exception& e) {
                throw Error(ErrorKind::BadSpec, rc.data[i].string() + ":" + std::to_string(line.number) + ": " + e.what());
            } catch (const Error& e) {
                throw Error(e.kind(), rc.data[i].string() + ":" + std::to_string(line.number) + ": " + e.message(), e.position());
            }
        }
        sources.push_back(std::move(src));
    }
    fs::create_directories(rc.out_dir);
    Json cfg_json = to_json(rc);
    write_file_atomic(rc.out_dir / "config.json",
                      Json{{"config", cfg_json}, {"config_hash", hash}, {"seed", rc.seed}}.dump(2) + "\n");

    Trainer trainer(rc.model, rc.train, std::move(sources));
    const bool resuming = !a.resume.empty();
    if (resuming) trainer.load(a.resume);
    const Json provenance{{"config_hash", hash}, {"seed", rc.seed}};

    const fs::path csv = rc.out_dir / "loss.csv";
    const bool append = resuming && fs::exists(csv);
    std::ofstream log(csv, append ? std::ios::app : std::ios::trunc);
    if (!log) throw Error(ErrorKind::Io, "cannot write " + csv.string());
    if (!append) log << "# config_hash=" << hash << " seed=" << rc.seed << "\nstep,total,l_w,l_d,l_gate,grad_norm,lr\n";
    log.precision(9);
    while (trainer.step_count() < rc.train.steps) {
        const auto r = trainer.step();
        if (r.step % rc.log_every == 0 || trainer.step_count() == rc.train.steps) {
            log << r.step << ',' << r.total << ',' << r.l_w << ',' << r.l_d << ',' << r.l_gate << ',' << r.grad_norm << ','
                << r.lr << '\n';
        }
        if (rc.checkpoint_every > 0 && trainer.step_count() % rc.checkpoint_every == 0) {
            trainer.save(rc.out_dir / ("ckpt_" + std::to_string(trainer.step_count()) + ".ugx"), provenance);
        }
        if (trainer.step_count() % 100 == 0) {
            std::cerr << "step " << trainer.step_count() << "/" << rc.train.steps << " loss " << r.total << "\n";
        }
    }
    log.close();
    trainer.save(rc.out_dir / "final.ugx", provenance);
    save_model(rc.out_dir / "model.ugx", trainer.model(), {{"config_hash", hash}, {"seed", rc.seed}, {"step", trainer.step_count()}});
    std::cout << "trained " << trainer.step_count() << " steps; artifacts in " << rc.out_dir.string() << "\n";
    return kOk;
}

// ----------------------------------------------------------------------------

struct SampleArgs {
    ConfigFlags cfg;
    std::string ckpt, weak, prompt, out, domain = "material", composition;
    std::vector<std::string> conditions;
    std::int64_t n = -1;
    std::optional<int> jobs;
    std::optional<double> guidance;
};

std::vector<Condition> raw_conditions(const Json& j) {
    ConditionSpec spec;
    if (j.contains("conditions")) {
        for (const auto& c : j.at("conditions")) spec.entries.emplace_back(c.at("token"), c.at("value"));
    }
    return spec.conditions();
}

// A prompt line: a sequence prefix ({"ids": ...}) or a record whose
// composition and raw conditions are kept.
MixedSequence prompt_from_json(const Json& j) {
    if (j.contains("ids")) return sequence_from_json(j);
    const auto domain = parse_domain(j.value("domain", std::string("material")));
    if (!domain) throw Error(ErrorKind::BadSpec, "unknown domain in prompt");
    const auto conds = raw_conditions(j);
    if (*domain == Domain::Material && j.contains("sites")) {
        Material m;
        m.sites = j.at("sites").get<std::vector<std::string>>();
        m = canonicalize(m);
        return material_prompt(m.sites, conds);
    }
    return condition_prompt(*domain, conds);
}

int cmd_sample(SampleArgs& a) {
    RunConfig rc = a.cfg.resolve();
    if (a.jobs) rc.sample.jobs = *a.jobs;
    if (a.guidance) rc.sample.guidance = *a.guidance;
    validate(rc.sample);
    const std::string hash = config_hash(rc);

    std::vector<MixedSequence> base;
    std::vector<Json> base_json;
    if (!a.prompt.empty()) {
        for (const auto& line : read_lines(a.prompt)) {
            try {
                const auto j = Json::parse(line.text);
                base.push_back(prompt_from_json(j));
                base_json.push_back(j);
            } catch (const Json::exception& e) {
                throw Error(ErrorKind::BadSpec, a.prompt + ":" + std::to_string(line.number) + ": " + e.what());
            } catch (const Error& e) {
                throw Error(e.kind(), a.prompt + ":" + std::to_string(line.number) + ": " + e.message(), e.position());
            }
        }
        if (base.empty()) throw Error(ErrorKind::BadSpec, "prompt file has no prompts");
    } else {
        Json j{{"domain", a.domain}, {"conditions", Json::array()}};
        for (const auto& c : a.conditions) {
            const auto eq = c.find('=');
            if (eq == std::string::npos) throw Error(ErrorKind::InvalidConfig, "--condition expects token=value, got " + c);
            double v = 0;
            try {
                std::size_t used = 0;
                v = std::stod(c.substr(eq + 1), &used);
                if (used != c.size() - eq - 1) throw std::invalid_argument(c);
            } catch (const std::exception&) {
                throw Error(ErrorKind::InvalidConfig, "--condition value is not a number: " + c);
            }
            j["conditions"].push_back({{"token", c.substr(0, eq)}, {"value", v}});
        }
        if (!a.composition.empty()) {
            std::vector<std::string> sites;
            std::stringstream ss(a.composition);
            for (std::string s; std::getline(ss, s, ',');) sites.push_back(s);
            j["sites"] = sites;
        }
        base.push_back(prompt_from_json(j));
        base_json.push_back(j);
    }
    const std::size_t n = a.n < 0 ? base.size() : static_cast<std::size_t>(a.n);
    std::vector<MixedSequence> prompts;
    for (std::size_t i = 0; i < n; ++i) prompts.push_back(base[i % base.size()]);

    const Model<float> model = load_model(a.ckpt);
    std::optional<Model<float>> weak;
    if (!a.weak.empty()) weak.emplace(load_model(a.weak));
    Sampler sampler(model, rc.sample, weak ? &*weak : nullptr);
    const auto generated = sampler.generate(prompts);

    const auto& vocab = Vocabulary::standard();
    std::string out;
    std::size_t decoded = 0;
    for (std::size_t i = 0; i < generated.size(); ++i) {
        const auto& g = generated[i];
        Json line{{"index", i},
                  {"prompt", base_json[i % base.size()]},
                  {"config_hash", hash},
                  {"seed", rc.sample.seed},
                  {"truncated", g.truncated},
                  {"malformed", g.malformed}};
        try {
            line["record"] = record_to_json(decode(g.seq, vocab));
            ++decoded;
        } catch (const Error& e) {
            line["record"] = nullptr;
            line["error"] = std::string(e.what());
        }
        line["tokens"] = sequence_to_json(g.seq, vocab).at("tokens");
        out += line.dump() + "\n";
    }
    if (a.out.empty()) {
        std::cout << out;
    } else {
        write_file_atomic(a.out, out);
    }
    std::cerr << decoded << "/" << generated.size() << " samples decoded\n";
    return kOk;
}

// ----------------------------------------------------------------------------

struct EvalArgs {
    std::string gen, ref, out, metrics = "match", fes, fes_out;
    double delta = 0.5, kT = 0.593, stol = 0.5, angle_tol = 10.0, ltol = 0.3;
    int bins = 50;
};

// Records from sample output ({"record": ...}) or plain record lines; null
// entries mark samples that failed to decode.
std::vector<std::optional<DomainRecord>> read_records(const std::string& path, Json* provenance) {
    std::vector<std::optional<DomainRecord>> out;
    for (const auto& file : jsonl_inputs(path)) {
        for (const auto& line : read_lines(file)) {
            const std::string tag = file.string() + ":" + std::to_string(line.number) + ": ";
            try {
                auto j = Json::parse(line.text);
                if (provenance && provenance->is_null() && j.contains("config_hash")) {
                    *provenance = {{"config_hash", j.at("config_hash")}, {"seed", j.at("seed")}};
                }
                if (j.contains("record")) j = j.at("record");
                out.push_back(j.is_null() ? std::nullopt : std::optional(record_from_json(j)));
            } catch (const Json::exception& e) {
                throw Error(ErrorKind::BadSpec, tag + e.what());
            } catch (const Error& e) {
                throw Error(e.kind(), tag + e.message());
            }
        }
    }
    return out;
}

int cmd_eval(const EvalArgs& a) {
    std::set<std::string> metrics;
    {
        std::stringstream ss(a.metrics);
        for (std::string m; std::getline(ss, m, ',');) {
            if (m != "match" && m != "cov" && m != "wdist") throw Error(ErrorKind::InvalidConfig, "unknown metric '" + m + "'");
            metrics.insert(m);
        }
    }
    Json report = Json::object();
    Json provenance;
    if (!a.gen.empty() || !a.ref.empty()) {
        if (a.gen.empty() || a.ref.empty()) throw Error(ErrorKind::InvalidConfig, "eval needs both --gen and --ref");
        const auto gen = read_records(a.gen, &provenance);
        const auto ref = read_records(a.ref, nullptr);
        if (metrics.count("match")) {
            // Item i of the generated set is compared with item i of the references.
            const std::size_t n = std::min(gen.size(), ref.size());
            const MatchTolerance tol{a.stol, a.angle_tol, a.ltol};
            std::size_t matched = 0, invalid = 0, mismatched = 0;
            double rmsd = 0;
            Json failures = Json::array();
            for (std::size_t i = 0; i < n; ++i) {
                const Material* g = gen[i] ? std::get_if<Material>(&gen[i]->body) : nullptr;
                const Material* r = ref[i] ? std::get_if<Material>(&ref[i]->body) : nullptr;
                if (!g || !r) {
                    ++invalid;
                    continue;
                }
                try {
                    const auto m = match_structures(*g, *r, tol);
                    if (m.matched) {
                        ++matched;
                        rmsd += m.rmsd;
                    }
                } catch (const Error& e) {
                    if (e.kind() != ErrorKind::CompositionMismatch) throw;
                    ++mismatched;
                    std::cerr << "item " << i << ": " << std::string(e.what()) << "\n";
                    failures.push_back({{"item", i}, {"error", std::string(e.what())}});
                }
            }
            report["match"] = {{"items", n},
                               {"matched", matched},
                               {"match_rate", n ? double(matched) / double(n) : 0.0},
                               {"rmsd_mean", matched ? rmsd / double(matched) : 0.0},
                               {"invalid", invalid},
                               {"composition_mismatch", mismatched},
                               {"failures", failures}};
        }
        if (metrics.count("cov")) {
            // Conformer sets grouped by SMILES.
            std::map<std::string, std::vector<Coords>> gs, rs;
            for (const auto& g : gen)
                if (g)
                    if (const auto* m = std::get_if<Molecule>(&g->body)) gs[m->smiles].push_back(m->coords);
            for (const auto& r : ref)
                if (r)
                    if (const auto* m = std::get_if<Molecule>(&r->body)) rs[m->smiles].push_back(m->coords);
            CovMat sum;
            std::size_t groups = 0;
            for (const auto& [smiles, refs] : rs) {
                auto it = gs.find(smiles);
                if (it == gs.end()) continue;
                const auto cm = cov_mat(it->second, refs, a.delta);
                sum.cov += cm.cov;
                sum.mat += cm.mat;
                sum.cov_p += cm.cov_p;
                sum.mat_p += cm.mat_p;
                ++groups;
            }
            const double k = groups ? 1.0 / double(groups) : 0.0;
            report["cov"] = {{"molecules", groups}, {"delta", a.delta},         {"COV", sum.cov * k},
                             {"MAT", sum.mat * k},  {"COV-P", sum.cov_p * k}, {"MAT-P", sum.mat_p * k}};
        }
        if (metrics.count("wdist")) {
            auto stats = [](const std::vector<std::optional<DomainRecord>>& set, std::vector<double>& dens,
                            std::vector<double>& nel) {
                for (const auto& r : set) {
                    const Material* m = r ? std::get_if<Material>(&r->body) : nullptr;
                    if (!m) continue;
                    const double v = lattice_volume(m->lattice);
                    if (v > 0) dens.push_back(double(m->sites.size()) / v);
                    nel.push_back(double(std::set<std::string>(m->sites.begin(), m->sites.end()).size()));
                }
            };
            std::vector<double> gd, gn, rd, rn;
            stats(gen, gd, gn);
            stats(ref, rd, rn);
            if (gd.empty() || rd.empty()) {
                report["wdist"] = {{"error", "no decodable materials in one of the sets"}};
            } else {
                report["wdist"] = {{"number_density", wdist_1d(gd, rd)}, {"n_elements", wdist_1d(gn, rn)}};
            }
        }
    }
    if (!a.fes.empty()) {
        std::vector<std::array<double, 2>> pts;
        std::ifstream in(a.fes);
        if (!in) throw Error(ErrorKind::Io, "cannot read " + a.fes);
        std::string s;
        for (std::size_t n = 1; std::getline(in, s); ++n) {
            if (s.empty() || s[0] == '#' || !(std::isdigit(static_cast<unsigned char>(s[0])) || s[0] == '-' || s[0] == '.'))
                continue;
            double x = 0, y = 0;
            if (std::sscanf(s.c_str(), "%lf,%lf", &x, &y) != 2) {
                throw Error(ErrorKind::BadSpec, a.fes + ":" + std::to_string(n) + ": expected x,y");
            }
            pts.push_back({x, y});
        }
        const auto fes = free_energy_surface(pts, a.bins, a.kT);
        report["fes"] = {{"points", pts.size()}, {"bins", a.bins}, {"kT", a.kT},
                         {"F_max", *std::max_element(fes.F.begin(), fes.F.end())}};
        if (!a.fes_out.empty()) write_file_atomic(a.fes_out, to_csv(fes));
    }
    if (!provenance.is_null()) report["provenance"] = provenance;
    const std::string text = report.dump(2) + "\n";
    if (a.out.empty()) {
        std::cout << text;
    } else {
        write_file_atomic(a.out, text);
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mixed word/number sequence generator: parse, train, sample, eval, verify"};
    app.require_subcommand(1);

    ParseArgs pa;
    auto* parse = app.add_subcommand("parse", "encode domain records into token sequences");
    parse->add_option("input", pa.input, "records, one JSON per line")->required()->check(CLI::ExistingFile);
    parse->add_option("--domain", pa.domain, "require every record to be of this domain");
    parse->add_option("--out", pa.out, "output JSONL (stdout if omitted)");
    parse->add_flag("--check", pa.check, "verify encode/decode round trips");

    ToyArgs ta;
    auto* toy = app.add_subcommand("toy", "write a synthetic toy dataset");
    toy->add_option("--family", ta.family, "crystal, molecule or conditional");
    toy->add_option("--count", ta.spec.count);
    toy->add_option("--seed", ta.spec.seed);
    toy->add_option("--K", ta.spec.K);
    toy->add_option("--sigma", ta.spec.sigma);
    toy->add_option("--min-sites", ta.spec.min_sites);
    toy->add_option("--max-sites", ta.spec.max_sites);
    toy->add_option("--holdout", ta.holdout, "fraction of compositions held out");
    toy->add_option("--holdout-out", ta.holdout_out, "JSONL for held-out records");
    toy->add_option("--out", ta.out)->required();

    TrainArgs tra;
    auto* train = app.add_subcommand("train", "train from a run config; writes checkpoints and loss.csv");
    tra.cfg.attach(train);
    train->add_option("--resume", tra.resume, "training checkpoint to continue from")->check(CLI::ExistingFile);

    SampleArgs sa;
    auto* sample = app.add_subcommand("sample", "generate records from a checkpoint");
    sa.cfg.attach(sample);
    sample->add_option("--ckpt", sa.ckpt)->required()->check(CLI::ExistingFile);
    sample->add_option("--weak", sa.weak, "earlier checkpoint for guidance")->check(CLI::ExistingFile);
    sample->add_option("--guidance", sa.guidance, "guidance strength g");
    sample->add_option("--prompt", sa.prompt, "JSONL prompts: records or sequence prefixes")->check(CLI::ExistingFile);
    sample->add_option("--domain", sa.domain, "domain of the inline prompt");
    sample->add_option("--composition", sa.composition, "inline material prompt, e.g. Li,Li,O");
    sample->add_option("--condition", sa.conditions, "token=value, raw property value")->take_all();
    sample->add_option("--n", sa.n, "number of draws (default: one per prompt)");
    sample->add_option("--jobs", sa.jobs);
    sample->add_option("--out", sa.out, "output JSONL (stdout if omitted)");

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "score generated records against references");
    eval->add_option("--gen", ea.gen, "generated JSONL file or directory");
    eval->add_option("--ref", ea.ref, "reference JSONL file or directory");
    eval->add_option("--metrics", ea.metrics, "comma list of match, cov, wdist");
    eval->add_option("--delta", ea.delta, "COV threshold");
    eval->add_option("--stol", ea.stol);
    eval->add_option("--angle-tol", ea.angle_tol);
    eval->add_option("--ltol", ea.ltol);
    eval->add_option("--fes", ea.fes, "CSV of x,y points for a free-energy surface");
    eval->add_option("--bins", ea.bins);
    eval->add_option("--kT", ea.kT);
    eval->add_option("--fes-out", ea.fes_out, "CSV grid output");
    eval->add_option("--out", ea.out, "report JSON (stdout if omitted)");

    std::string suite = "all";
    auto* verify = app.add_subcommand("verify", "run the built-in oracle suites");
    verify->add_option("--suite", suite, "targets, grad, metrics or all");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kInvalid;
    }

    try {
        if (*parse) return cmd_parse(pa);
        if (*toy) return cmd_toy(ta);
        if (*train) return cmd_train(tra);
        if (*sample) return cmd_sample(sa);
        if (*eval) return cmd_eval(ea);
        if (*verify) {
            const auto s = parse_suite(suite);
            if (!s) throw Error(ErrorKind::InvalidConfig, "unknown suite '" + suite + "'");
            const auto results = run_suite(*s);
            std::cout << format_results(results);
            const bool ok = std::all_of(results.begin(), results.end(), [](const auto& r) { return r.pass; });
            return ok ? kOk : kVerifyFailed;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << std::string(e.what()) << "\n";
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntime;
    }
    return kOk;
}
