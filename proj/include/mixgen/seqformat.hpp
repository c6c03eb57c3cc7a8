#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace mixgen {

using TokenId = std::int32_t;
using Vec3 = std::array<double, 3>;
using Mat3 = std::array<Vec3, 3>;

// Every numeric position carries exactly this many channels.
inline constexpr std::size_t kPayloadWidth = 3;
using Payload = std::array<double, kPayloadWidth>;

enum class Domain : std::uint8_t { Material, Molecule, Protein, Docking };

std::string_view domain_name(Domain domain);
std::optional<Domain> parse_domain(std::string_view name);

// Token dictionary: special tokens first, then property tokens, then the
// symbol alphabet (element symbols, SMILES punctuation, residue letters).
// Immutable once built.
class Vocabulary {
public:
    struct Specials {
        TokenId pad, bos, eos, num, coord, mat, mol;
        TokenId bopo, eopo, boapc, eoapc, bom, eom, bohpc, eohpc, bomc, eomc;
        TokenId ec1, ec2, ec3;
    };

    static const Vocabulary& standard();

    std::size_t size() const { return tokens_.size(); }
    std::optional<TokenId> find(std::string_view token) const;
    // Throws UnknownSymbol.
    TokenId id(std::string_view token) const;
    // Throws IdOutOfRange.
    const std::string& token(TokenId id) const;
    std::span<const std::string> tokens() const { return tokens_; }

    const Specials& specials() const { return specials_; }

    bool contains(TokenId id) const { return id >= 0 && static_cast<std::size_t>(id) < tokens_.size(); }
    bool is_special(TokenId id) const;
    // Condition tokens such as <bulk> or <scale>; these precede <bos>.
    bool is_property(TokenId id) const;
    bool is_element(TokenId id) const;
    bool is_smiles_symbol(TokenId id) const;
    bool is_residue(TokenId id) const;

private:
    Vocabulary();
    TokenId add(const std::string& token);

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
    std::vector<std::uint8_t> klass_;
    Specials specials_{};
};

// Table of element symbols in atomic-number order (H first).
std::span<const std::string_view> element_symbols();
bool is_element_symbol(std::string_view symbol);

// Lexical SMILES tokenization: bracket contents are split per element/char,
// Cl and Br are the only two-letter organic-subset atoms.
std::vector<std::string> tokenize_smiles(std::string_view smiles);
// Atom count of a tokenized SMILES string (each bracket group is one atom).
std::size_t smiles_atom_count(std::span<const std::string> tokens);
std::size_t smiles_atom_count(std::string_view smiles);

inline constexpr std::string_view kResidueLetters = "ACDEFGHIKLMNPQRSTVWYX";

struct Material {
    std::vector<std::string> sites;
    Mat3 lattice{};
    std::vector<Vec3> frac_coords;
    bool operator==(const Material&) const = default;
};

struct Molecule {
    std::string smiles;
    std::vector<Vec3> coords;
    bool operator==(const Molecule&) const = default;
};

struct Protein {
    std::string residues;
    std::vector<Vec3> ca_coords;
    std::optional<Vec3> ec;  // leading three EC digits, e.g. 2.6.1.x -> {2, 6, 1}
    bool operator==(const Protein&) const = default;
};

// Coordinates are stored in model units: Angstrom scaled by kDockingScale.
struct Docking {
    std::vector<std::string> pocket_atoms;
    std::vector<Vec3> apo_coords;
    std::string smiles;
    std::vector<Vec3> holo_coords;
    std::vector<Vec3> lig_coords;
    bool operator==(const Docking&) const = default;
};

inline constexpr double kDockingScale = 0.2;

struct Condition {
    std::string token;
    double value = 0.0;  // already signed-log transformed
    bool operator==(const Condition&) const = default;
};

struct DomainRecord {
    std::variant<Material, Molecule, Protein, Docking> body;
    std::vector<Condition> conditions;

    Domain domain() const { return static_cast<Domain>(body.index()); }
    bool operator==(const DomainRecord&) const = default;
};

// Stable sort of sites by element symbol; frac coords follow their site.
Material canonicalize(Material material);
// Orders conditions by token string.
void sort_conditions(std::vector<Condition>& conditions);

struct MixedSequence {
    Domain domain = Domain::Material;
    std::vector<TokenId> ids;
    std::vector<Payload> values;
    std::vector<std::uint8_t> m_val;
    std::vector<std::uint8_t> m_pad;

    std::size_t length() const { return ids.size(); }
    void push_word(TokenId id);
    void push_number(TokenId num_id, const Payload& value);
    bool operator==(const MixedSequence&) const = default;
};

// Throws UnknownSymbol or ArityMismatch.
MixedSequence encode(const DomainRecord& record, const Vocabulary& vocab);
// Throws GrammarViolation (with position) or Truncated.
DomainRecord decode(const MixedSequence& seq, const Vocabulary& vocab);

struct NumericCount {
    bool bounded = true;
    std::size_t count = 0;
    static NumericCount unbounded() { return {false, 0}; }
    bool operator==(const NumericCount&) const = default;
};

// Number of numeric payloads the grammar demands right after `words`.
// `words` may contain <num> placeholders; they are skipped. Zero means the
// next emission is a word. Without a domain hint only self-identifying
// grammars (docking, <mat>/<mol> tagged) can be bounded.
NumericCount expected_numeric_count(std::span<const TokenId> words, const Vocabulary& vocab,
                                    std::optional<Domain> domain = std::nullopt);

// Routing state of a partially generated sequence.
struct GrammarState {
    bool expects_number = false;
    std::size_t numbers_remaining = 0;
    bool complete = false;  // ends in <eos>
    bool bounded = false;   // the grammar fixes the pending numeric count
};

GrammarState grammar_state(const MixedSequence& partial, const Vocabulary& vocab);

}  // namespace mixgen
