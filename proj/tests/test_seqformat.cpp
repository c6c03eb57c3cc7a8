#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "mixgen/conditioning.hpp"
#include "mixgen/error.hpp"
#include "mixgen/jsonio.hpp"
#include "mixgen/seqformat.hpp"
#include "records.hpp"

using namespace mixgen;

namespace {

const Vocabulary& V() { return Vocabulary::standard(); }

DomainRecord nacl() {
    Material m;
    m.sites = {"Na", "Cl"};
    m.lattice = {Vec3{4, 0, 0}, Vec3{0, 4, 0}, Vec3{0, 0, 4}};
    m.frac_coords = {Vec3{0, 0, 0}, Vec3{0.5, 0.5, 0.5}};
    return DomainRecord{m, {}};
}

std::vector<TokenId> ids_of(std::initializer_list<std::string_view> tokens) {
    std::vector<TokenId> out;
    for (auto t : tokens) out.push_back(V().id(t));
    return out;
}

// Payload positions the grammar dictates, recomputed from the record alone.
std::vector<std::uint8_t> oracle_mask(const DomainRecord& r) {
    std::vector<std::uint8_t> m;
    auto words = [&](std::size_t n) { m.insert(m.end(), n, 0); };
    auto nums = [&](std::size_t n) { m.insert(m.end(), n, 1); };
    auto conds = r.conditions;
    for (std::size_t i = 0; i < conds.size(); ++i) {
        words(1);
        nums(1);
    }
    words(1);  // <bos>
    if (auto* mat = std::get_if<Material>(&r.body)) {
        words(mat->sites.size() + 1);
        nums(3 + mat->sites.size());
    } else if (auto* mol = std::get_if<Molecule>(&r.body)) {
        words(tokenize_smiles(mol->smiles).size() + 1);
        nums(mol->coords.size());
    } else if (auto* p = std::get_if<Protein>(&r.body)) {
        if (p->ec) {
            for (int k = 0; k < 3; ++k) {
                words(1);
                nums(1);
            }
        }
        words(p->residues.size() + 1);
        nums(p->residues.size());
    } else {
        const auto& d = std::get<Docking>(r.body);
        words(1 + d.pocket_atoms.size() + 1 + 1);
        nums(d.apo_coords.size());
        words(2 + tokenize_smiles(d.smiles).size() + 1 + 1);
        nums(d.holo_coords.size());
        words(2);
        nums(d.lig_coords.size());
        words(1);
    }
    words(1);  // <eos>
    return m;
}

}  // namespace

TEST_CASE("vocabulary is a bijection covering the special-token table") {
    const auto& v = V();
    std::set<std::string> seen;
    for (TokenId i = 0; i < static_cast<TokenId>(v.size()); ++i) {
        CHECK(seen.insert(v.token(i)).second);
        CHECK(v.id(v.token(i)) == i);
    }
    for (auto t : {"<bos>", "<eom>", "<bof>", "<bol>", "<bop>", "<boc>", "<bulk>", "<band>", "<mag>",
                   "<heat_capacity>", "<E_hill>", "<density>", "<bopo>", "<eopo>", "<boapc>", "<eoapc>", "<bom>",
                   "<bohpc>", "<eohpc>", "<bomc>", "<eomc>", "<ec1>", "<ec2>", "<ec3>", "<eos>", "<coord>", "<mat>",
                   "<mol>"}) {
        CAPTURE(t);
        REQUIRE(v.find(t).has_value());
        CHECK(v.is_special(*v.find(t)));
    }
    for (auto e : element_symbols()) {
        auto id = v.find(e);
        REQUIRE(id.has_value());
        CHECK(v.is_element(*id));
        CHECK_FALSE(v.is_special(*id));
    }
    for (char c : kResidueLetters) CHECK_FALSE(v.is_special(v.id(std::string(1, c))));
    CHECK_THROWS_AS(v.token(static_cast<TokenId>(v.size())), Error);
}

TEST_CASE("encode NaCl") {
    auto seq = encode(nacl(), V());
    const auto num = V().specials().num;
    auto expect = ids_of({"<bos>", "Na", "Cl", "<coord>"});
    expect.insert(expect.end(), 5, num);
    expect.push_back(V().specials().eos);
    CHECK(seq.ids == expect);
    CHECK(seq.length() == 10);
    CHECK(std::count(seq.m_val.begin(), seq.m_val.end(), 1) == 5);
    CHECK(seq.values[4] == Payload{4, 0, 0});
    CHECK(seq.values[8] == Payload{0.5, 0.5, 0.5});
    for (std::size_t i = 0; i < seq.length(); ++i) {
        if (!seq.m_val[i]) CHECK(seq.values[i] == Payload{0, 0, 0});
        CHECK(seq.m_pad[i] == 0);
    }
    CHECK(decode(seq, V()) == nacl());
}

TEST_CASE("single-site material") {
    Material m;
    m.sites = {"C"};
    m.lattice = {Vec3{2, 0, 0}, Vec3{0, 2, 0}, Vec3{0, 0, 2}};
    m.frac_coords = {Vec3{0.1, 0.2, 0.3}};
    auto seq = encode(DomainRecord{m, {}}, V());
    // <bos> C <coord> 4 payloads <eos>
    CHECK(seq.length() == 8);
    CHECK(std::count(seq.m_val.begin(), seq.m_val.end(), 1) == 4);
}

TEST_CASE("encode errors") {
    Material m = std::get<Material>(nacl().body);
    m.sites[1] = "Xx";
    CHECK_THROWS_WITH_AS(encode(DomainRecord{m, {}}, V()), doctest::Contains("UnknownSymbol"), Error);
    m = std::get<Material>(nacl().body);
    m.frac_coords.pop_back();
    try {
        encode(DomainRecord{m, {}}, V());
        FAIL("expected ArityMismatch");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ArityMismatch);
    }
    Molecule mol{"CCO", {Vec3{}, Vec3{}}};
    try {
        encode(DomainRecord{mol, {}}, V());
        FAIL("expected ArityMismatch");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ArityMismatch);
    }
    Protein p{"AZ", {Vec3{}, Vec3{}}, std::nullopt};
    try {
        encode(DomainRecord{p, {}}, V());
        FAIL("expected UnknownSymbol");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::UnknownSymbol);
    }
    DomainRecord bad_cond = nacl();
    bad_cond.conditions = {{"<nope>", 1.0}};
    CHECK_THROWS_AS(encode(bad_cond, V()), Error);
}

TEST_CASE("decode arity violation points at the first mismatching position") {
    auto seq = encode(nacl(), V());
    // Replace the last payload with <eos>: 4 payloads for 2 sites.
    seq.ids.erase(seq.ids.begin() + 8);
    seq.values.erase(seq.values.begin() + 8);
    seq.m_val.erase(seq.m_val.begin() + 8);
    seq.m_pad.erase(seq.m_pad.begin() + 8);
    try {
        decode(seq, V());
        FAIL("expected GrammarViolation");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::GrammarViolation);
        CHECK(e.position() == std::optional<std::size_t>(8));
    }
}

TEST_CASE("decode without <eos> is Truncated") {
    auto seq = encode(nacl(), V());
    seq.ids.pop_back();
    seq.values.pop_back();
    seq.m_val.pop_back();
    seq.m_pad.pop_back();
    try {
        decode(seq, V());
        FAIL("expected Truncated");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Truncated);
    }
}

TEST_CASE("round trip over 1000 random records per domain") {
    std::mt19937_64 rng(2024);
    for (Domain d : {Domain::Material, Domain::Molecule, Domain::Protein, Domain::Docking}) {
        CAPTURE(domain_name(d));
        for (int i = 0; i < 1000; ++i) {
            auto r = testutil::random_record(d, rng);
            auto seq = encode(r, V());
            REQUIRE(decode(seq, V()) == r);
            CHECK(seq.m_val == oracle_mask(r));
            CHECK(encode(r, V()) == seq);
            for (std::size_t k = 0; k < seq.length(); ++k) {
                if (!seq.m_val[k]) REQUIRE(seq.values[k] == Payload{0, 0, 0});
            }
        }
    }
}

TEST_CASE("condition prefixes are sorted and replicated") {
    DomainRecord r = nacl();
    r.conditions = {{"<mag>", 0.25}, {"<band>", -1.5}, {"<bulk>", 3.0}};
    auto seq = encode(r, V());
    CHECK(seq.ids[0] == V().id("<band>"));
    CHECK(seq.ids[2] == V().id("<bulk>"));
    CHECK(seq.ids[4] == V().id("<mag>"));
    CHECK(seq.ids[6] == V().specials().bos);
    CHECK(seq.values[1] == Payload{-1.5, -1.5, -1.5});
    auto back = decode(seq, V());
    CHECK(back.conditions.size() == 3);
    CHECK(back.conditions[0] == Condition{"<band>", -1.5});
    CHECK(back.conditions[2] == Condition{"<mag>", 0.25});
    // Decoder reads channel 0 only.
    seq.values[1] = Payload{-1.5, 9, 9};
    CHECK(decode(seq, V()).conditions[0].value == -1.5);
}

TEST_CASE("padded sequences decode like unpadded ones") {
    auto seq = encode(nacl(), V());
    for (int i = 0; i < 4; ++i) {
        seq.ids.push_back(V().specials().pad);
        seq.values.push_back(Payload{});
        seq.m_val.push_back(0);
        seq.m_pad.push_back(1);
    }
    CHECK(decode(seq, V()) == nacl());
}

TEST_CASE("fuzzed token streams never crash") {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<TokenId> any(-2, static_cast<TokenId>(V().size()) + 2);
    std::uniform_int_distribution<int> len(0, 40);
    int valid = 0, errors = 0;
    for (int i = 0; i < 10000; ++i) {
        MixedSequence s;
        s.domain = static_cast<Domain>(i % 4);
        if (i % 3 == 0) {
            // Mutate a valid encoding.
            s = encode(testutil::random_record(s.domain, rng), V());
            std::size_t k = rng() % s.length();
            s.ids[k] = any(rng);
            s.m_val[k] = static_cast<std::uint8_t>(rng() % 2);
        } else {
            int n = len(rng);
            for (int j = 0; j < n; ++j) {
                if (rng() % 4 == 0) {
                    s.push_number(V().specials().num, Payload{1, 2, 3});
                } else {
                    s.push_word(any(rng));
                }
            }
        }
        try {
            decode(s, V());
            ++valid;
        } catch (const Error& e) {
            ++errors;
            bool structured = e.kind() == ErrorKind::GrammarViolation || e.kind() == ErrorKind::Truncated;
            CHECK(structured);
        }
        try {
            std::vector<TokenId> words;
            for (std::size_t j = 0; j < s.length(); ++j)
                if (!s.m_val[j]) words.push_back(s.ids[j]);
            expected_numeric_count(words, V(), s.domain);
            grammar_state(s, V());
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::GrammarViolation);
        }
    }
    CHECK(valid + errors == 10000);
}

TEST_CASE("expected_numeric_count") {
    CHECK(expected_numeric_count(ids_of({"<bos>", "Na", "Cl", "<coord>"}), V(), Domain::Material) ==
          NumericCount{true, 5});
    try {
        expected_numeric_count(ids_of({"<bos>", "<coord>"}), V(), Domain::Material);
        FAIL("expected GrammarViolation");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::GrammarViolation);
    }
    // Heavy-atom count oracle: scan symbols and count letters that are atoms.
    for (std::string smiles : {"CCO", "c1ccccc1O", "ClC(Br)=O", "[NH4+]CC", "C#N"}) {
        CAPTURE(smiles);
        std::size_t oracle = 0;
        bool in_bracket = false;
        for (std::size_t i = 0; i < smiles.size(); ++i) {
            char c = smiles[i];
            if (c == '[') {
                in_bracket = true;
                ++oracle;
            } else if (c == ']') {
                in_bracket = false;
            } else if (!in_bracket && std::isalpha(static_cast<unsigned char>(c)) && c != 'l' && c != 'r') {
                ++oracle;
            }
        }
        std::vector<TokenId> words{V().specials().bos};
        for (const auto& t : tokenize_smiles(smiles)) words.push_back(V().id(t));
        words.push_back(V().specials().coord);
        CHECK(expected_numeric_count(words, V(), Domain::Molecule) == NumericCount{true, oracle});
    }
    CHECK(expected_numeric_count(ids_of({"<bos>", "C", "C", "O", "<coord>"}), V(), Domain::Molecule).count == 3);
    CHECK(expected_numeric_count(ids_of({"<bos>", "A", "G", "<coord>"}), V(), Domain::Protein).count == 2);
    CHECK(expected_numeric_count(ids_of({"<band>"}), V()).count == 1);
    CHECK(expected_numeric_count(ids_of({"<bos>", "Na"}), V(), Domain::Material).count == 0);
    CHECK_FALSE(expected_numeric_count(ids_of({"<bos>", "Na", "<coord>"}), V()).bounded);
    CHECK(expected_numeric_count(ids_of({"<bos>", "<mat>", "Na", "<coord>"}), V()).count == 4);
    CHECK(expected_numeric_count(ids_of({"<bos>", "<bopo>", "C", "N", "<eopo>", "<boapc>"}), V()).count == 2);
}

TEST_CASE("grammar_state follows an encoded sequence") {
    auto full = encode(nacl(), V());
    MixedSequence partial;
    partial.domain = Domain::Material;
    for (std::size_t i = 0; i < full.length(); ++i) {
        auto st = grammar_state(partial, V());
        CHECK(st.expects_number == bool(full.m_val[i]));
        CHECK_FALSE(st.complete);
        if (full.m_val[i]) {
            partial.push_number(full.ids[i], full.values[i]);
        } else {
            partial.push_word(full.ids[i]);
        }
    }
    CHECK(grammar_state(partial, V()).complete);
}

TEST_CASE("signed log transform") {
    CHECK(signed_log(0.0) == 0.0);
    CHECK(signed_log(std::exp(1.0) - 1.0) == doctest::Approx(1.0));
    CHECK(signed_log(-(std::exp(2.0) - 1.0)) == doctest::Approx(-2.0));
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0, 50);
    for (int i = 0; i < 1000; ++i) {
        double x = n(rng);
        CHECK(signed_log_inverse(signed_log(x)) == doctest::Approx(x).epsilon(1e-12));
    }
}

TEST_CASE("json records round trip") {
    std::mt19937_64 rng(5);
    for (Domain d : {Domain::Material, Domain::Molecule, Domain::Protein, Domain::Docking}) {
        for (int i = 0; i < 50; ++i) {
            auto r = testutil::random_record(d, rng);
            auto j = record_to_json(r);
            auto back = record_from_json(j);
            CHECK(encode(back, V()).m_val == encode(r, V()).m_val);
            CHECK(back.domain() == r.domain());
            auto s1 = encode(back, V());
            auto s0 = encode(r, V());
            REQUIRE(s1.length() == s0.length());
            for (std::size_t k = 0; k < s0.length(); ++k) {
                for (int c = 0; c < 3; ++c) CHECK(s1.values[k][c] == doctest::Approx(s0.values[k][c]).epsilon(1e-12));
            }
        }
    }
    auto j = nlohmann::json::parse(R"({"domain":"material","sites":["Na"],"lattice":[[1,0,0],[0,1,0],[0,0,1]]})");
    CHECK_THROWS_AS(record_from_json(j), Error);
    auto seq = encode(nacl(), V());
    CHECK(sequence_from_json(sequence_to_json(seq, V())) == seq);
}
