#include "mixgen/seqformat.hpp"

#include <algorithm>
#include <numeric>

#include "mixgen/error.hpp"

namespace mixgen {

namespace {

constexpr std::array<std::string_view, 118> kElements = {
    "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si", "P",  "S",  "Cl", "Ar",
    "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr",
    "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe",
    "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf",
    "Ta", "W",  "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th",
    "Pa", "U",  "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs",
    "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};

constexpr std::array<std::string_view, 9> kAromatic = {"b", "c", "n", "o", "p", "s", "se", "as", "te"};
constexpr std::string_view kSmilesPunct = "()[]=#$:/\\.+-@%*~0123456789";

// Table S1 tokens plus the grammar delimiters of the record templates.
constexpr std::array<std::string_view, 22> kStructuralSpecials = {
    "<pad>", "<bos>", "<eos>", "<num>", "<coord>", "<mat>", "<mol>", "<bof>", "<bol>", "<bop>", "<boc>",
    "<bopo>", "<eopo>", "<boapc>", "<eoapc>", "<bom>", "<eom>", "<bohpc>", "<eohpc>", "<bomc>", "<eomc>",
    "<ec1>"};
constexpr std::array<std::string_view, 2> kMoreSpecials = {"<ec2>", "<ec3>"};

constexpr std::array<std::string_view, 13> kPropertyTokens = {
    "<E_hill>", "<Cv>", "<alpha>", "<band>", "<bulk>", "<density>", "<gap>", "<heat_capacity>",
    "<homo>",   "<lumo>", "<mag>", "<mu>", "<scale>"};

enum Klass : std::uint8_t {
    kSpecial = 1,
    kProperty = 2,
    kElement = 4,
    kSmiles = 8,
    kResidue = 16,
};

}  // namespace

std::string_view domain_name(Domain domain) {
    switch (domain) {
        case Domain::Material: return "material";
        case Domain::Molecule: return "molecule";
        case Domain::Protein: return "protein";
        case Domain::Docking: return "docking";
    }
    return "unknown";
}

std::optional<Domain> parse_domain(std::string_view name) {
    for (Domain d : {Domain::Material, Domain::Molecule, Domain::Protein, Domain::Docking}) {
        if (domain_name(d) == name) {
            return d;
        }
    }
    return std::nullopt;
}

std::span<const std::string_view> element_symbols() { return kElements; }

bool is_element_symbol(std::string_view symbol) {
    return std::find(kElements.begin(), kElements.end(), symbol) != kElements.end();
}

// ----------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
    for (auto t : kStructuralSpecials) {
        add(std::string(t));
    }
    for (auto t : kMoreSpecials) {
        add(std::string(t));
    }
    for (auto t : kPropertyTokens) {
        TokenId id = add(std::string(t));
        klass_[id] |= kProperty;
    }
    for (TokenId i = 0; i < static_cast<TokenId>(tokens_.size()); ++i) {
        klass_[i] |= kSpecial;
    }
    for (auto t : kElements) {
        TokenId id = add(std::string(t));
        klass_[id] |= kElement | kSmiles;
    }
    for (auto t : kAromatic) {
        TokenId id = add(std::string(t));
        klass_[id] |= kSmiles;
    }
    for (char c : kSmilesPunct) {
        TokenId id = add(std::string(1, c));
        klass_[id] |= kSmiles;
    }
    for (char c : kResidueLetters) {
        TokenId id = add(std::string(1, c));
        klass_[id] |= kResidue;
    }

    auto& s = specials_;
    s.pad = id("<pad>");
    s.bos = id("<bos>");
    s.eos = id("<eos>");
    s.num = id("<num>");
    s.coord = id("<coord>");
    s.mat = id("<mat>");
    s.mol = id("<mol>");
    s.bopo = id("<bopo>");
    s.eopo = id("<eopo>");
    s.boapc = id("<boapc>");
    s.eoapc = id("<eoapc>");
    s.bom = id("<bom>");
    s.eom = id("<eom>");
    s.bohpc = id("<bohpc>");
    s.eohpc = id("<eohpc>");
    s.bomc = id("<bomc>");
    s.eomc = id("<eomc>");
    s.ec1 = id("<ec1>");
    s.ec2 = id("<ec2>");
    s.ec3 = id("<ec3>");
}

TokenId Vocabulary::add(const std::string& token) {
    auto it = index_.find(token);
    if (it != index_.end()) {
        return it->second;
    }
    auto id = static_cast<TokenId>(tokens_.size());
    tokens_.push_back(token);
    klass_.push_back(0);
    index_.emplace(token, id);
    return id;
}

const Vocabulary& Vocabulary::standard() {
    static const Vocabulary vocab;
    return vocab;
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

TokenId Vocabulary::id(std::string_view token) const {
    if (auto found = find(token)) {
        return *found;
    }
    throw Error(ErrorKind::UnknownSymbol, "symbol '" + std::string(token) + "' is not in the vocabulary");
}

const std::string& Vocabulary::token(TokenId id) const {
    if (!contains(id)) {
        throw Error(ErrorKind::IdOutOfRange, "token id " + std::to_string(id) + " outside vocabulary of size " +
                                                 std::to_string(tokens_.size()));
    }
    return tokens_[static_cast<std::size_t>(id)];
}

bool Vocabulary::is_special(TokenId id) const { return contains(id) && (klass_[id] & kSpecial); }
bool Vocabulary::is_property(TokenId id) const { return contains(id) && (klass_[id] & kProperty); }
bool Vocabulary::is_element(TokenId id) const { return contains(id) && (klass_[id] & kElement); }
bool Vocabulary::is_smiles_symbol(TokenId id) const { return contains(id) && (klass_[id] & kSmiles); }
bool Vocabulary::is_residue(TokenId id) const { return contains(id) && (klass_[id] & kResidue); }

// ----------------------------------------------------------------------------
// SMILES

std::vector<std::string> tokenize_smiles(std::string_view smiles) {
    std::vector<std::string> out;
    bool in_bracket = false;
    std::size_t i = 0;
    while (i < smiles.size()) {
        char c = smiles[i];
        if (c == '[') {
            in_bracket = true;
        } else if (c == ']') {
            in_bracket = false;
        }
        if (i + 1 < smiles.size()) {
            std::string two(smiles.substr(i, 2));
            bool two_letter = false;
            if (in_bracket) {
                two_letter = (is_element_symbol(two) && std::islower(static_cast<unsigned char>(two[1]))) ||
                             two == "se" || two == "as" || two == "te";
            } else {
                two_letter = two == "Cl" || two == "Br";
            }
            if (two_letter) {
                out.push_back(std::move(two));
                i += 2;
                continue;
            }
        }
        out.emplace_back(1, c);
        ++i;
    }
    return out;
}

std::size_t smiles_atom_count(std::span<const std::string> tokens) {
    std::size_t count = 0;
    bool in_bracket = false;
    for (const auto& t : tokens) {
        if (t == "[") {
            in_bracket = true;
            ++count;
        } else if (t == "]") {
            in_bracket = false;
        } else if (!in_bracket) {
            bool aromatic = std::find(kAromatic.begin(), kAromatic.end(), t) != kAromatic.end();
            if (is_element_symbol(t) || aromatic) {
                ++count;
            }
        }
    }
    return count;
}

std::size_t smiles_atom_count(std::string_view smiles) {
    auto tokens = tokenize_smiles(smiles);
    return smiles_atom_count(tokens);
}

// ----------------------------------------------------------------------------
// Records

Material canonicalize(Material material) {
    std::vector<std::size_t> order(material.sites.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return material.sites[a] < material.sites[b]; });
    Material out;
    out.lattice = material.lattice;
    for (std::size_t i : order) {
        out.sites.push_back(material.sites[i]);
        if (i < material.frac_coords.size()) {
            out.frac_coords.push_back(material.frac_coords[i]);
        }
    }
    return out;
}

void sort_conditions(std::vector<Condition>& conditions) {
    std::stable_sort(conditions.begin(), conditions.end(),
                     [](const Condition& a, const Condition& b) { return a.token < b.token; });
}

void MixedSequence::push_word(TokenId id) {
    ids.push_back(id);
    values.push_back(Payload{});
    m_val.push_back(0);
    m_pad.push_back(0);
}

void MixedSequence::push_number(TokenId num_id, const Payload& value) {
    ids.push_back(num_id);
    values.push_back(value);
    m_val.push_back(1);
    m_pad.push_back(0);
}

// ----------------------------------------------------------------------------
// Encoding

namespace {

void check_arity(std::size_t coords, std::size_t entities, const char* what) {
    if (coords != entities) {
        throw Error(ErrorKind::ArityMismatch, std::string(what) + ": " + std::to_string(coords) +
                                                  " coordinates for " + std::to_string(entities) + " entities");
    }
}

class Encoder {
public:
    Encoder(const Vocabulary& vocab, Domain domain) : vocab_(vocab) { seq_.domain = domain; }

    void word(TokenId id) { seq_.push_word(id); }
    void word(std::string_view token) { seq_.push_word(vocab_.id(token)); }

    void symbol(std::string_view token, bool (Vocabulary::*accept)(TokenId) const, const char* what) {
        auto id = vocab_.find(token);
        if (!id || !(vocab_.*accept)(*id)) {
            throw Error(ErrorKind::UnknownSymbol, std::string(what) + " '" + std::string(token) + "'");
        }
        seq_.push_word(*id);
    }

    void number(const Payload& p) { seq_.push_number(vocab_.specials().num, p); }
    void scalar(double v) { number(Payload{v, v, v}); }
    void vectors(std::span<const Vec3> vs) {
        for (const auto& v : vs) {
            number(v);
        }
    }

    void smiles(std::string_view smiles) {
        for (const auto& t : tokenize_smiles(smiles)) {
            symbol(t, &Vocabulary::is_smiles_symbol, "SMILES symbol");
        }
    }

    MixedSequence take() { return std::move(seq_); }

private:
    const Vocabulary& vocab_;
    MixedSequence seq_;
};

}  // namespace

MixedSequence encode(const DomainRecord& record, const Vocabulary& vocab) {
    Encoder enc(vocab, record.domain());
    std::vector<Condition> conditions = record.conditions;
    sort_conditions(conditions);
    for (const auto& c : conditions) {
        auto id = vocab.find(c.token);
        if (!id || !vocab.is_property(*id)) {
            throw Error(ErrorKind::UnknownSymbol, "property token '" + c.token + "'");
        }
        enc.word(*id);
        enc.scalar(c.value);
    }
    const auto& sp = vocab.specials();
    enc.word(sp.bos);

    std::visit(
        [&](const auto& body) {
            using B = std::decay_t<decltype(body)>;
            if constexpr (std::is_same_v<B, Material>) {
                check_arity(body.frac_coords.size(), body.sites.size(), "material");
                if (body.sites.empty()) {
                    throw Error(ErrorKind::ArityMismatch, "material without sites");
                }
                for (const auto& s : body.sites) {
                    enc.symbol(s, &Vocabulary::is_element, "element");
                }
                enc.word(sp.coord);
                enc.vectors(body.lattice);
                enc.vectors(body.frac_coords);
            } else if constexpr (std::is_same_v<B, Molecule>) {
                check_arity(body.coords.size(), smiles_atom_count(body.smiles), "molecule");
                enc.smiles(body.smiles);
                enc.word(sp.coord);
                enc.vectors(body.coords);
            } else if constexpr (std::is_same_v<B, Protein>) {
                check_arity(body.ca_coords.size(), body.residues.size(), "protein");
                if (body.ec) {
                    TokenId ec_tokens[3] = {sp.ec1, sp.ec2, sp.ec3};
                    for (int k = 0; k < 3; ++k) {
                        enc.word(ec_tokens[k]);
                        enc.scalar((*body.ec)[k]);
                    }
                }
                for (char r : body.residues) {
                    enc.symbol(std::string_view(&r, 1), &Vocabulary::is_residue, "residue");
                }
                enc.word(sp.coord);
                enc.vectors(body.ca_coords);
            } else {
                check_arity(body.apo_coords.size(), body.pocket_atoms.size(), "docking apo pocket");
                check_arity(body.holo_coords.size(), body.pocket_atoms.size(), "docking holo pocket");
                check_arity(body.lig_coords.size(), smiles_atom_count(body.smiles), "docking ligand");
                enc.word(sp.bopo);
                for (const auto& a : body.pocket_atoms) {
                    enc.symbol(a, &Vocabulary::is_element, "pocket atom");
                }
                enc.word(sp.eopo);
                enc.word(sp.boapc);
                enc.vectors(body.apo_coords);
                enc.word(sp.eoapc);
                enc.word(sp.bom);
                enc.smiles(body.smiles);
                enc.word(sp.eom);
                enc.word(sp.bohpc);
                enc.vectors(body.holo_coords);
                enc.word(sp.eohpc);
                enc.word(sp.bomc);
                enc.vectors(body.lig_coords);
                enc.word(sp.eomc);
            }
        },
        record.body);

    enc.word(sp.eos);
    return enc.take();
}

// ----------------------------------------------------------------------------
// Decoding

namespace {

class Parser {
public:
    Parser(const MixedSequence& seq, const Vocabulary& vocab) : seq_(seq), vocab_(vocab) {
        if (seq.m_val.size() != seq.ids.size() || seq.values.size() != seq.ids.size()) {
            throw Error(ErrorKind::GrammarViolation, "ids, values and masks differ in length", 0);
        }
        // Padding is a suffix; parse only the real prefix.
        end_ = seq.ids.size();
        if (seq.m_pad.size() == seq.ids.size()) {
            while (end_ > 0 && seq.m_pad[end_ - 1]) {
                --end_;
            }
        }
    }

    std::size_t pos() const { return pos_; }
    bool at_end() const { return pos_ >= end_; }

    bool peek_number() const { return !at_end() && seq_.m_val[pos_]; }

    TokenId peek_word() const {
        need();
        if (seq_.m_val[pos_]) {
            return vocab_.specials().num;
        }
        return seq_.ids[pos_];
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw Error(ErrorKind::GrammarViolation, what, pos_);
    }

    void need() const {
        if (at_end()) {
            throw Error(ErrorKind::Truncated, "sequence ends before <eos>", pos_);
        }
    }

    TokenId word() {
        need();
        if (seq_.m_val[pos_]) {
            fail("unexpected numeric payload");
        }
        TokenId id = seq_.ids[pos_];
        if (!vocab_.contains(id)) {
            fail("token id " + std::to_string(id) + " out of vocabulary");
        }
        ++pos_;
        return id;
    }

    void expect(TokenId id) {
        need();
        if (seq_.m_val[pos_] || seq_.ids[pos_] != id) {
            fail("expected " + vocab_.token(id));
        }
        ++pos_;
    }

    Payload number() {
        need();
        if (!seq_.m_val[pos_]) {
            fail("expected numeric payload");
        }
        return seq_.values[pos_++];
    }

    std::vector<Vec3> numbers(std::size_t n) {
        std::vector<Vec3> out;
        out.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            out.push_back(number());
        }
        return out;
    }

    // Reads word tokens until `stop` (consumed). Every token must pass `accept`.
    std::vector<TokenId> words_until(TokenId stop, bool (Vocabulary::*accept)(TokenId) const, const char* what) {
        std::vector<TokenId> out;
        while (true) {
            TokenId id = word();
            if (id == stop) {
                return out;
            }
            if (!(vocab_.*accept)(id)) {
                --pos_;
                fail(std::string("expected ") + what + " or " + vocab_.token(stop));
            }
            out.push_back(id);
        }
    }

    std::string joined(std::span<const TokenId> ids) const {
        std::string out;
        for (TokenId id : ids) {
            out += vocab_.token(id);
        }
        return out;
    }

    void finish() {
        expect(vocab_.specials().eos);
        if (!at_end()) {
            fail("trailing tokens after <eos>");
        }
    }

    const Vocabulary& vocab() const { return vocab_; }

private:
    const MixedSequence& seq_;
    const Vocabulary& vocab_;
    std::size_t pos_ = 0;
    std::size_t end_ = 0;
};

std::vector<std::string> token_strings(const Vocabulary& vocab, std::span<const TokenId> ids) {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (TokenId id : ids) {
        out.push_back(vocab.token(id));
    }
    return out;
}

}  // namespace

DomainRecord decode(const MixedSequence& seq, const Vocabulary& vocab) {
    Parser p(seq, vocab);
    const auto& sp = vocab.specials();
    DomainRecord record;

    while (p.peek_word() != sp.bos) {
        std::size_t at = p.pos();
        TokenId id = p.word();
        if (!vocab.is_property(id)) {
            throw Error(ErrorKind::GrammarViolation, "expected property token or <bos>", at);
        }
        Payload v = p.number();
        record.conditions.push_back({vocab.token(id), v[0]});
    }
    p.expect(sp.bos);

    switch (seq.domain) {
        case Domain::Material: {
            Material m;
            std::size_t first = p.pos();
            auto sites = p.words_until(sp.coord, &Vocabulary::is_element, "element");
            if (sites.empty()) {
                throw Error(ErrorKind::GrammarViolation, "material without sites", first);
            }
            m.sites = token_strings(vocab, sites);
            auto lattice = p.numbers(3);
            std::copy(lattice.begin(), lattice.end(), m.lattice.begin());
            m.frac_coords = p.numbers(sites.size());
            record.body = std::move(m);
            break;
        }
        case Domain::Molecule: {
            Molecule m;
            auto symbols = p.words_until(sp.coord, &Vocabulary::is_smiles_symbol, "SMILES symbol");
            m.smiles = p.joined(symbols);
            m.coords = p.numbers(smiles_atom_count(m.smiles));
            record.body = std::move(m);
            break;
        }
        case Domain::Protein: {
            Protein pr;
            if (p.peek_word() == sp.ec1) {
                Vec3 ec{};
                TokenId ec_tokens[3] = {sp.ec1, sp.ec2, sp.ec3};
                for (int k = 0; k < 3; ++k) {
                    p.expect(ec_tokens[k]);
                    ec[k] = p.number()[0];
                }
                pr.ec = ec;
            }
            auto residues = p.words_until(sp.coord, &Vocabulary::is_residue, "residue");
            pr.residues = p.joined(residues);
            pr.ca_coords = p.numbers(residues.size());
            record.body = std::move(pr);
            break;
        }
        case Domain::Docking: {
            Docking d;
            p.expect(sp.bopo);
            auto atoms = p.words_until(sp.eopo, &Vocabulary::is_element, "pocket atom");
            d.pocket_atoms = token_strings(vocab, atoms);
            p.expect(sp.boapc);
            d.apo_coords = p.numbers(atoms.size());
            p.expect(sp.eoapc);
            p.expect(sp.bom);
            auto symbols = p.words_until(sp.eom, &Vocabulary::is_smiles_symbol, "SMILES symbol");
            d.smiles = p.joined(symbols);
            p.expect(sp.bohpc);
            d.holo_coords = p.numbers(atoms.size());
            p.expect(sp.eohpc);
            p.expect(sp.bomc);
            d.lig_coords = p.numbers(smiles_atom_count(d.smiles));
            p.expect(sp.eomc);
            record.body = std::move(d);
            break;
        }
    }
    p.finish();
    return record;
}

// ----------------------------------------------------------------------------
// Grammar routing

namespace {

std::optional<Domain> infer_domain(std::span<const TokenId> words, const Vocabulary& vocab) {
    const auto& sp = vocab.specials();
    for (TokenId id : words) {
        if (id == sp.bopo) return Domain::Docking;
        if (id == sp.mat) return Domain::Material;
        if (id == sp.mol) return Domain::Molecule;
    }
    return std::nullopt;
}

// Index of the last occurrence of `id`, or npos.
std::size_t last_index(std::span<const TokenId> words, TokenId id) {
    for (std::size_t i = words.size(); i > 0; --i) {
        if (words[i - 1] == id) {
            return i - 1;
        }
    }
    return std::string::npos;
}

std::size_t smiles_atoms_between(std::span<const TokenId> words, std::size_t from, std::size_t to,
                                 const Vocabulary& vocab) {
    std::vector<std::string> tokens;
    for (std::size_t i = from; i < to; ++i) {
        if (!vocab.is_smiles_symbol(words[i])) {
            throw Error(ErrorKind::GrammarViolation, "expected SMILES symbol", i);
        }
        tokens.push_back(vocab.token(words[i]));
    }
    return smiles_atom_count(tokens);
}

}  // namespace

NumericCount expected_numeric_count(std::span<const TokenId> all_words, const Vocabulary& vocab,
                                    std::optional<Domain> domain) {
    const auto& sp = vocab.specials();
    std::vector<TokenId> words;
    words.reserve(all_words.size());
    for (TokenId id : all_words) {
        if (id != sp.num) {
            words.push_back(id);
        }
    }
    if (words.empty()) {
        return {true, 0};
    }
    TokenId last = words.back();
    if (!vocab.contains(last)) {
        throw Error(ErrorKind::GrammarViolation, "token id out of vocabulary", words.size() - 1);
    }
    if (vocab.is_property(last) || last == sp.ec1 || last == sp.ec2 || last == sp.ec3) {
        return {true, 1};
    }
    if (!domain) {
        domain = infer_domain(words, vocab);
    }

    const std::size_t bos = last_index(words, sp.bos);
    const std::size_t n = words.size() - 1;  // index of the opener

    if (last == sp.coord) {
        if (!domain) {
            return NumericCount::unbounded();
        }
        if (bos == std::string::npos) {
            throw Error(ErrorKind::GrammarViolation, "<coord> without <bos>", n);
        }
        std::size_t begin = bos + 1;
        if (begin < n && (words[begin] == sp.mat || words[begin] == sp.mol)) {
            ++begin;
        }
        switch (*domain) {
            case Domain::Material: {
                if (begin == n) {
                    throw Error(ErrorKind::GrammarViolation, "material composition is empty", n);
                }
                for (std::size_t i = begin; i < n; ++i) {
                    if (!vocab.is_element(words[i])) {
                        throw Error(ErrorKind::GrammarViolation, "expected element symbol", i);
                    }
                }
                return {true, 3 + (n - begin)};
            }
            case Domain::Molecule: {
                std::size_t atoms = smiles_atoms_between(words, begin, n, vocab);
                if (atoms == 0) {
                    throw Error(ErrorKind::GrammarViolation, "SMILES without atoms", n);
                }
                return {true, atoms};
            }
            case Domain::Protein: {
                std::size_t residues = 0;
                for (std::size_t i = begin; i < n; ++i) {
                    if (vocab.is_residue(words[i])) {
                        ++residues;
                    } else if (!(words[i] == sp.ec1 || words[i] == sp.ec2 || words[i] == sp.ec3)) {
                        throw Error(ErrorKind::GrammarViolation, "expected residue letter", i);
                    }
                }
                if (residues == 0) {
                    throw Error(ErrorKind::GrammarViolation, "protein without residues", n);
                }
                return {true, residues};
            }
            case Domain::Docking:
                throw Error(ErrorKind::GrammarViolation, "<coord> is not part of the docking grammar", n);
        }
    }

    if (last == sp.boapc || last == sp.bohpc) {
        std::size_t open = last_index(words, sp.bopo);
        std::size_t close = last_index(words, sp.eopo);
        if (open == std::string::npos || close == std::string::npos || close < open) {
            throw Error(ErrorKind::GrammarViolation, "pocket coordinates without pocket atoms", n);
        }
        return {true, close - open - 1};
    }
    if (last == sp.bomc) {
        std::size_t open = last_index(words, sp.bom);
        std::size_t close = last_index(words, sp.eom);
        if (open == std::string::npos || close == std::string::npos || close < open) {
            throw Error(ErrorKind::GrammarViolation, "ligand coordinates without SMILES", n);
        }
        return {true, smiles_atoms_between(words, open + 1, close, vocab)};
    }
    return {true, 0};
}

GrammarState grammar_state(const MixedSequence& partial, const Vocabulary& vocab) {
    GrammarState state;
    const auto& sp = vocab.specials();
    std::size_t n = partial.ids.size();
    while (n > 0 && !partial.m_pad.empty() && partial.m_pad[n - 1]) {
        --n;
    }
    if (n == 0) {
        return state;
    }
    if (!partial.m_val[n - 1] && partial.ids[n - 1] == sp.eos) {
        state.complete = true;
        return state;
    }
    std::size_t trailing = 0;
    std::size_t i = n;
    while (i > 0 && partial.m_val[i - 1]) {
        --i;
        ++trailing;
    }
    std::vector<TokenId> words;
    for (std::size_t k = 0; k < i; ++k) {
        if (!partial.m_val[k]) {
            words.push_back(partial.ids[k]);
        }
    }
    NumericCount need = expected_numeric_count(words, vocab, partial.domain);
    if (!need.bounded) {
        return state;
    }
    state.bounded = true;
    if (trailing < need.count) {
        state.expects_number = true;
        state.numbers_remaining = need.count - trailing;
    }
    return state;
}

}  // namespace mixgen
