#include "mixgen/runconfig.hpp"

#include <zlib.h>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "mixgen/error.hpp"
#include "toml.hpp"

namespace mixgen {

namespace {

using Json = nlohmann::json;

struct Key {
    std::string name;
    // Both setters return an error message, empty on success.
    std::function<std::string(RunConfig&, const toml::node&)> from_toml;
    std::function<std::string(RunConfig&, const std::string&)> from_text;
    std::function<Json(const RunConfig&)> get;
};

template <class V>
using Ref = V& (*)(RunConfig&);

std::string parse_int(const std::string& s, std::int64_t& out) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && p == s.data() + s.size() ? "" : "expected an integer, got '" + s + "'";
}

std::string parse_double(const std::string& s, double& out) {
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return !s.empty() && end == s.c_str() + s.size() && std::isfinite(out) ? ""
                                                                           : "expected a number, got '" + s + "'";
}

template <class I>
Key int_key(std::string name, Ref<I> ref) {
    return {name,
            [ref](RunConfig& c, const toml::node& n) -> std::string {
                auto v = n.value_exact<std::int64_t>();
                if (!v) return "expected an integer";
                if constexpr (std::is_unsigned_v<I>) {
                    if (*v < 0) return "expected a non-negative integer";
                }
                ref(c) = static_cast<I>(*v);
                return "";
            },
            [ref](RunConfig& c, const std::string& s) {
                std::int64_t v = 0;
                auto err = parse_int(s, v);
                if (err.empty() && std::is_unsigned_v<I> && v < 0) err = "expected a non-negative integer";
                if (err.empty()) ref(c) = static_cast<I>(v);
                return err;
            },
            [ref](const RunConfig& c) { return Json(ref(const_cast<RunConfig&>(c))); }};
}

Key double_key(std::string name, Ref<double> ref) {
    return {name,
            [ref](RunConfig& c, const toml::node& n) -> std::string {
                if (!n.is_number()) return "expected a number";
                ref(c) = *n.value<double>();
                return "";
            },
            [ref](RunConfig& c, const std::string& s) {
                double v = 0;
                auto err = parse_double(s, v);
                if (err.empty()) ref(c) = v;
                return err;
            },
            [ref](const RunConfig& c) { return Json(ref(const_cast<RunConfig&>(c))); }};
}

Key bool_key(std::string name, Ref<bool> ref) {
    return {name,
            [ref](RunConfig& c, const toml::node& n) -> std::string {
                auto v = n.value_exact<bool>();
                if (!v) return "expected true or false";
                ref(c) = *v;
                return "";
            },
            [ref](RunConfig& c, const std::string& s) -> std::string {
                if (s == "true" || s == "1") {
                    ref(c) = true;
                } else if (s == "false" || s == "0") {
                    ref(c) = false;
                } else {
                    return "expected true or false, got '" + s + "'";
                }
                return "";
            },
            [ref](const RunConfig& c) { return Json(ref(const_cast<RunConfig&>(c))); }};
}

// Enumerations and paths travel as strings.
Key string_key(std::string name, std::function<std::string(RunConfig&, const std::string&)> set,
               std::function<std::string(const RunConfig&)> get) {
    return {name,
            [set](RunConfig& c, const toml::node& n) -> std::string {
                auto v = n.value_exact<std::string>();
                if (!v) return "expected a string";
                return set(c, *v);
            },
            set, [get](const RunConfig& c) { return Json(get(c)); }};
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(item);
    return out;
}

const std::vector<Key>& keys() {
    static const std::vector<Key> table = [] {
        std::vector<Key> k;
        k.push_back(int_key<std::uint64_t>("seed", [](RunConfig& c) -> auto& { return c.seed; }));
        k.push_back(string_key(
            "out_dir", [](RunConfig& c, const std::string& s) { return c.out_dir = s, std::string(); },
            [](const RunConfig& c) { return c.out_dir.string(); }));

        k.push_back(int_key<std::int64_t>("backbone.hidden_size", [](RunConfig& c) -> auto& { return c.model.backbone.hidden_size; }));
        k.push_back(int_key<std::int64_t>("backbone.intermediate_size", [](RunConfig& c) -> auto& { return c.model.backbone.intermediate_size; }));
        k.push_back(int_key<std::int64_t>("backbone.num_layers", [](RunConfig& c) -> auto& { return c.model.backbone.num_layers; }));
        k.push_back(int_key<std::int64_t>("backbone.num_heads", [](RunConfig& c) -> auto& { return c.model.backbone.num_heads; }));
        k.push_back(int_key<std::int64_t>("backbone.num_kv_heads", [](RunConfig& c) -> auto& { return c.model.backbone.num_kv_heads; }));
        k.push_back(int_key<std::int64_t>("backbone.max_position", [](RunConfig& c) -> auto& { return c.model.backbone.max_position; }));
        k.push_back(string_key(
            "backbone.positions",
            [](RunConfig& c, const std::string& s) -> std::string {
                if (s == "rope") {
                    c.model.backbone.positions = PositionScheme::Rope;
                } else if (s == "learned") {
                    c.model.backbone.positions = PositionScheme::Learned;
                } else {
                    return "expected rope or learned, got '" + s + "'";
                }
                return "";
            },
            [](const RunConfig& c) {
                return std::string(c.model.backbone.positions == PositionScheme::Rope ? "rope" : "learned");
            }));
        k.push_back(double_key("backbone.rope_theta", [](RunConfig& c) -> auto& { return c.model.backbone.rope_theta; }));
        k.push_back(double_key("backbone.norm_eps", [](RunConfig& c) -> auto& { return c.model.backbone.norm_eps; }));
        k.push_back(bool_key("backbone.gating", [](RunConfig& c) -> auto& { return c.model.backbone.gating; }));

        k.push_back(int_key<std::int64_t>("head.width", [](RunConfig& c) -> auto& { return c.model.head.width; }));
        k.push_back(int_key<std::int64_t>("head.resblocks", [](RunConfig& c) -> auto& { return c.model.head.resblocks; }));
        k.push_back(int_key<std::int64_t>("head.freq_dim", [](RunConfig& c) -> auto& { return c.model.head.freq_dim; }));
        k.push_back(int_key<int>("head.T_train", [](RunConfig& c) -> auto& { return c.model.head.T_train; }));
        k.push_back(double_key("head.beta_start", [](RunConfig& c) -> auto& { return c.model.head.beta_start; }));
        k.push_back(double_key("head.beta_end", [](RunConfig& c) -> auto& { return c.model.head.beta_end; }));

        k.push_back(int_key<int>("loss.M", [](RunConfig& c) -> auto& { return c.model.loss.M; }));
        k.push_back(double_key("loss.vlb_weight", [](RunConfig& c) -> auto& { return c.model.loss.vlb_weight; }));

        k.push_back(double_key("train.word_weight", [](RunConfig& c) -> auto& { return c.train.word_weight; }));
        k.push_back(int_key<std::int64_t>("train.batch_size", [](RunConfig& c) -> auto& { return c.train.batch_size; }));
        k.push_back(int_key<std::int64_t>("train.steps", [](RunConfig& c) -> auto& { return c.train.steps; }));
        k.push_back(double_key("train.lr", [](RunConfig& c) -> auto& { return c.train.lr; }));
        k.push_back(int_key<std::int64_t>("train.warmup", [](RunConfig& c) -> auto& { return c.train.warmup; }));
        k.push_back(double_key("train.min_lr_ratio", [](RunConfig& c) -> auto& { return c.train.min_lr_ratio; }));
        k.push_back(bool_key("train.augment", [](RunConfig& c) -> auto& { return c.train.augment; }));
        k.push_back(bool_key("train.mask_prefix", [](RunConfig& c) -> auto& { return c.train.mask_prefix; }));
        k.push_back(double_key("train.gate_weight", [](RunConfig& c) -> auto& { return c.train.gate_weight; }));
        k.push_back(double_key("train.clip", [](RunConfig& c) -> auto& { return c.train.clip; }));
        k.push_back(int_key<std::int64_t>("train.checkpoint_every", [](RunConfig& c) -> auto& { return c.checkpoint_every; }));
        k.push_back(int_key<std::int64_t>("train.log_every", [](RunConfig& c) -> auto& { return c.log_every; }));

        k.push_back(double_key("sample.temperature", [](RunConfig& c) -> auto& { return c.sample.temperature; }));
        k.push_back(double_key("sample.top_p", [](RunConfig& c) -> auto& { return c.sample.top_p; }));
        k.push_back(int_key<std::int64_t>("sample.max_length", [](RunConfig& c) -> auto& { return c.sample.max_length; }));
        k.push_back(int_key<int>("sample.steps", [](RunConfig& c) -> auto& { return c.sample.steps; }));
        k.push_back(string_key(
            "sample.routing",
            [](RunConfig& c, const std::string& s) -> std::string {
                if (s == "grammar") {
                    c.sample.routing = Routing::Grammar;
                } else if (s == "gate") {
                    c.sample.routing = Routing::Gate;
                } else {
                    return "expected grammar or gate, got '" + s + "'";
                }
                return "";
            },
            [](const RunConfig& c) { return std::string(c.sample.routing == Routing::Grammar ? "grammar" : "gate"); }));
        k.push_back(double_key("sample.guidance", [](RunConfig& c) -> auto& { return c.sample.guidance; }));
        k.push_back(int_key<int>("sample.jobs", [](RunConfig& c) -> auto& { return c.sample.jobs; }));
        k.push_back(int_key<std::int64_t>("sample.batch", [](RunConfig& c) -> auto& { return c.sample.batch; }));
        k.push_back(bool_key("sample.strict", [](RunConfig& c) -> auto& { return c.sample.strict; }));

        // Lists: TOML arrays, or comma-separated on the command line.
        k.push_back(Key{
            "data.train",
            [](RunConfig& c, const toml::node& n) -> std::string {
                const auto* arr = n.as_array();
                if (!arr) return "expected an array of paths";
                c.data.clear();
                for (const auto& e : *arr) {
                    auto s = e.value_exact<std::string>();
                    if (!s) return "expected an array of paths";
                    c.data.emplace_back(*s);
                }
                return "";
            },
            [](RunConfig& c, const std::string& s) {
                c.data.clear();
                for (const auto& p : split_list(s)) c.data.emplace_back(p);
                return std::string();
            },
            [](const RunConfig& c) {
                Json j = Json::array();
                for (const auto& p : c.data) j.push_back(p.string());
                return j;
            }});
        k.push_back(Key{
            "data.multipliers",
            [](RunConfig& c, const toml::node& n) -> std::string {
                const auto* arr = n.as_array();
                if (!arr) return "expected an array of integers";
                c.multipliers.clear();
                for (const auto& e : *arr) {
                    auto v = e.value_exact<std::int64_t>();
                    if (!v) return "expected an array of integers";
                    c.multipliers.push_back(static_cast<int>(*v));
                }
                return "";
            },
            [](RunConfig& c, const std::string& s) -> std::string {
                c.multipliers.clear();
                for (const auto& p : split_list(s)) {
                    std::int64_t v = 0;
                    auto err = parse_int(p, v);
                    if (!err.empty()) return err;
                    c.multipliers.push_back(static_cast<int>(v));
                }
                return "";
            },
            [](const RunConfig& c) { return Json(c.multipliers); }});
        return k;
    }();
    return table;
}

const Key* find_key(const std::string& name) {
    for (const auto& k : keys())
        if (k.name == name) return &k;
    return nullptr;
}

void collect(const toml::table& t, const std::string& prefix, RunConfig& cfg, std::vector<std::string>& errors) {
    for (const auto& [k, node] : t) {
        const std::string name = prefix.empty() ? std::string(k.str()) : prefix + "." + std::string(k.str());
        if (const auto* sub = node.as_table(); sub && !find_key(name)) {
            collect(*sub, name, cfg, errors);
            continue;
        }
        const Key* key = find_key(name);
        if (!key) {
            errors.push_back("unknown key '" + name + "'");
            continue;
        }
        auto err = key->from_toml(cfg, node);
        if (!err.empty()) errors.push_back(name + ": " + err);
    }
}

std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (const auto& s : v) out += (out.empty() ? "" : "; ") + s;
    return out;
}

}  // namespace

std::vector<std::string> run_config_keys() {
    std::vector<std::string> out;
    for (const auto& k : keys()) out.push_back(k.name);
    return out;
}

RunConfig parse_run_config(const std::string& text) {
    toml::table t;
    try {
        t = toml::parse(text);
    } catch (const toml::parse_error& e) {
        std::ostringstream os;
        os << "config line " << e.source().begin.line << ": " << e.description();
        throw Error(ErrorKind::InvalidConfig, os.str());
    }
    RunConfig cfg;
    std::vector<std::string> errors;
    collect(t, "", cfg, errors);
    if (!errors.empty()) throw Error(ErrorKind::InvalidConfig, join(errors));
    cfg.train.seed = cfg.sample.seed = cfg.seed;
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot read config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

void apply_overrides(RunConfig& cfg, const std::vector<std::pair<std::string, std::string>>& overrides) {
    std::vector<std::string> errors;
    for (const auto& [name, value] : overrides) {
        const Key* key = find_key(name);
        if (!key) {
            errors.push_back("unknown key '" + name + "'");
            continue;
        }
        auto err = key->from_text(cfg, value);
        if (!err.empty()) errors.push_back(name + ": " + err);
    }
    if (!errors.empty()) throw Error(ErrorKind::InvalidConfig, join(errors));
    cfg.train.seed = cfg.sample.seed = cfg.seed;
}

void validate(const RunConfig& cfg, bool need_data) {
    std::vector<std::string> errors;
    auto need = [&](bool ok, const std::string& what) {
        if (!ok) errors.push_back(what);
    };
    auto absorb = [&](auto check) {
        try {
            check();
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::InvalidConfig) throw;
            // Sub-validators already join their problems with "; ".
            errors.push_back(e.message());
        }
    };
    absorb([&] { validate(cfg.model.backbone); });
    absorb([&] { validate(cfg.sample); });
    const auto& h = cfg.model.head;
    need(h.width > 0, "head.width must be positive");
    need(h.resblocks >= 0, "head.resblocks must be non-negative");
    need(h.freq_dim > 0 && h.freq_dim % 2 == 0, "head.freq_dim must be positive and even");
    need(h.T_train >= 1, "head.T_train must be >= 1");
    need(h.beta_start >= 0 && h.beta_start <= h.beta_end && h.beta_end < 1,
         "head betas need 0 <= beta_start <= beta_end < 1");
    need(cfg.model.loss.M >= 1, "loss.M must be >= 1");
    need(cfg.model.loss.vlb_weight >= 0, "loss.vlb_weight must be >= 0");
    const auto& t = cfg.train;
    need(t.batch_size >= 1, "train.batch_size must be >= 1");
    need(t.steps >= 0, "train.steps must be >= 0");
    need(t.lr > 0, "train.lr must be > 0");
    need(t.warmup >= 0, "train.warmup must be >= 0");
    need(t.min_lr_ratio >= 0 && t.min_lr_ratio <= 1, "train.min_lr_ratio must be in [0, 1]");
    need(t.word_weight >= 0, "train.word_weight must be >= 0");
    need(t.gate_weight >= 0, "train.gate_weight must be >= 0");
    need(t.gate_weight == 0 || cfg.model.backbone.gating, "train.gate_weight needs backbone.gating = true");
    need(t.clip > 0, "train.clip must be > 0");
    need(cfg.checkpoint_every >= 0, "train.checkpoint_every must be >= 0");
    need(cfg.log_every >= 1, "train.log_every must be >= 1");
    need(cfg.multipliers.empty() || cfg.multipliers.size() == cfg.data.size(),
         "data.multipliers needs one entry per data.train file");
    for (int m : cfg.multipliers) need(m >= 1, "data.multipliers entries must be >= 1");
    if (need_data) {
        need(!cfg.data.empty(), "data.train lists no files");
        for (const auto& p : cfg.data) need(std::filesystem::exists(p), "data.train file not found: " + p.string());
    }
    if (!errors.empty()) throw Error(ErrorKind::InvalidConfig, join(errors));
}

nlohmann::json to_json(const RunConfig& cfg) {
    Json j = Json::object();
    for (const auto& k : keys()) {
        Json* at = &j;
        std::string rest = k.name;
        for (auto dot = rest.find('.'); dot != std::string::npos; dot = rest.find('.')) {
            at = &(*at)[rest.substr(0, dot)];
            rest = rest.substr(dot + 1);
        }
        (*at)[rest] = k.get(cfg);
    }
    return j;
}

std::string config_hash(const RunConfig& cfg) {
    // Thread count does not change any output, so it stays out of the hash.
    Json j = to_json(cfg);
    j["sample"].erase("jobs");
    const std::string text = j.dump();
    const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(text.data()), static_cast<uInt>(text.size()));
    char buf[9];
    std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
    return buf;
}

}  // namespace mixgen
