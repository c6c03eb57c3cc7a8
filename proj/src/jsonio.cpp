#include "mixgen/jsonio.hpp"

#include <fstream>
#include <sstream>

#include "mixgen/conditioning.hpp"
#include "mixgen/error.hpp"

namespace mixgen {

using nlohmann::json;

namespace {

const json& field(const json& j, const char* name) {
    if (!j.is_object() || !j.contains(name)) {
        throw Error(ErrorKind::BadSpec, std::string("missing field '") + name + "'");
    }
    return j.at(name);
}

Vec3 vec3(const json& j) {
    if (!j.is_array() || j.size() != 3) {
        throw Error(ErrorKind::BadSpec, "expected a 3-vector, got " + j.dump());
    }
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

std::vector<Vec3> vec3_list(const json& j, double scale = 1.0) {
    if (!j.is_array()) {
        throw Error(ErrorKind::BadSpec, "expected a list of 3-vectors");
    }
    std::vector<Vec3> out;
    out.reserve(j.size());
    for (const auto& e : j) {
        Vec3 v = vec3(e);
        for (double& x : v) {
            x *= scale;
        }
        out.push_back(v);
    }
    return out;
}

json vec3_list_json(const std::vector<Vec3>& vs, double scale = 1.0) {
    json out = json::array();
    for (const auto& v : vs) {
        out.push_back({v[0] * scale, v[1] * scale, v[2] * scale});
    }
    return out;
}

}  // namespace

DomainRecord record_from_json(const json& j, const RecordJsonOptions& opt) {
    try {
        auto domain = parse_domain(field(j, "domain").get<std::string>());
        if (!domain) {
            throw Error(ErrorKind::BadSpec, "unknown domain " + j.at("domain").dump());
        }
        DomainRecord r;
        switch (*domain) {
            case Domain::Material: {
                Material m;
                m.sites = field(j, "sites").get<std::vector<std::string>>();
                const auto& lat = field(j, "lattice");
                if (!lat.is_array() || lat.size() != 3) {
                    throw Error(ErrorKind::BadSpec, "lattice must be 3x3");
                }
                for (int i = 0; i < 3; ++i) {
                    m.lattice[i] = vec3(lat[i]);
                }
                m.frac_coords = vec3_list(field(j, "frac_coords"));
                r.body = std::move(m);
                break;
            }
            case Domain::Molecule: {
                Molecule m;
                m.smiles = field(j, "smiles").get<std::string>();
                m.coords = vec3_list(field(j, "coords"));
                r.body = std::move(m);
                break;
            }
            case Domain::Protein: {
                Protein p;
                p.residues = field(j, "residues").get<std::string>();
                p.ca_coords = vec3_list(field(j, "ca_coords"));
                if (j.contains("ec")) {
                    p.ec = vec3(j.at("ec"));
                }
                r.body = std::move(p);
                break;
            }
            case Domain::Docking: {
                const double s = opt.scale_docking ? kDockingScale : 1.0;
                Docking d;
                d.pocket_atoms = field(j, "pocket_atoms").get<std::vector<std::string>>();
                d.apo_coords = vec3_list(field(j, "apo_coords"), s);
                d.smiles = field(j, "smiles").get<std::string>();
                d.holo_coords = vec3_list(field(j, "holo_coords"), s);
                d.lig_coords = vec3_list(field(j, "lig_coords"), s);
                r.body = std::move(d);
                break;
            }
        }
        if (j.contains("conditions")) {
            for (const auto& c : j.at("conditions")) {
                double v = field(c, "value").get<double>();
                r.conditions.push_back({field(c, "token").get<std::string>(), opt.raw_conditions ? signed_log(v) : v});
            }
            sort_conditions(r.conditions);
        }
        return r;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::BadSpec, e.what());
    }
}

json record_to_json(const DomainRecord& record, const RecordJsonOptions& opt) {
    json j;
    j["domain"] = std::string(domain_name(record.domain()));
    std::visit(
        [&](const auto& body) {
            using B = std::decay_t<decltype(body)>;
            if constexpr (std::is_same_v<B, Material>) {
                j["sites"] = body.sites;
                j["lattice"] = vec3_list_json({body.lattice.begin(), body.lattice.end()});
                j["frac_coords"] = vec3_list_json(body.frac_coords);
            } else if constexpr (std::is_same_v<B, Molecule>) {
                j["smiles"] = body.smiles;
                j["coords"] = vec3_list_json(body.coords);
            } else if constexpr (std::is_same_v<B, Protein>) {
                j["residues"] = body.residues;
                j["ca_coords"] = vec3_list_json(body.ca_coords);
                if (body.ec) {
                    j["ec"] = {(*body.ec)[0], (*body.ec)[1], (*body.ec)[2]};
                }
            } else {
                const double s = opt.scale_docking ? 1.0 / kDockingScale : 1.0;
                j["pocket_atoms"] = body.pocket_atoms;
                j["apo_coords"] = vec3_list_json(body.apo_coords, s);
                j["smiles"] = body.smiles;
                j["holo_coords"] = vec3_list_json(body.holo_coords, s);
                j["lig_coords"] = vec3_list_json(body.lig_coords, s);
            }
        },
        record.body);
    if (!record.conditions.empty()) {
        json conds = json::array();
        for (const auto& c : record.conditions) {
            conds.push_back({{"token", c.token}, {"value", opt.raw_conditions ? signed_log_inverse(c.value) : c.value}});
        }
        j["conditions"] = std::move(conds);
    }
    return j;
}

json sequence_to_json(const MixedSequence& seq, const Vocabulary& vocab) {
    json tokens = json::array();
    json values = json::array();
    for (std::size_t i = 0; i < seq.length(); ++i) {
        tokens.push_back(vocab.token(seq.ids[i]));
        values.push_back({seq.values[i][0], seq.values[i][1], seq.values[i][2]});
    }
    return {{"domain", std::string(domain_name(seq.domain))},
            {"ids", seq.ids},
            {"tokens", std::move(tokens)},
            {"values", std::move(values)},
            {"m_val", seq.m_val},
            {"m_pad", seq.m_pad}};
}

MixedSequence sequence_from_json(const json& j) {
    try {
        MixedSequence seq;
        auto domain = parse_domain(field(j, "domain").get<std::string>());
        if (!domain) {
            throw Error(ErrorKind::BadSpec, "unknown domain");
        }
        seq.domain = *domain;
        seq.ids = field(j, "ids").get<std::vector<TokenId>>();
        for (const auto& v : field(j, "values")) {
            seq.values.push_back(vec3(v));
        }
        seq.m_val = field(j, "m_val").get<std::vector<std::uint8_t>>();
        seq.m_pad = field(j, "m_pad").get<std::vector<std::uint8_t>>();
        return seq;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::BadSpec, e.what());
    }
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::Io, "cannot open " + path.string());
    }
    std::vector<json> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            out.push_back(json::parse(line));
        } catch (const json::exception& e) {
            throw Error(ErrorKind::BadSpec, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& lines) {
    std::ostringstream out;
    for (const auto& j : lines) {
        out << j.dump() << '\n';
    }
    write_file_atomic(path, out.str());
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error(ErrorKind::Io, "cannot write " + tmp.string());
        }
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw Error(ErrorKind::Io, "short write to " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw Error(ErrorKind::Io, "cannot rename " + tmp.string() + ": " + ec.message());
    }
}

}  // namespace mixgen
