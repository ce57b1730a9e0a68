#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <set>

#include "chembfn/tokenizer.hpp"

namespace chembfn {

namespace {

constexpr std::array<const char*, 118> kElements = {
    "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si", "P",
    "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn",
    "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru", "Rh",
    "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd",
    "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W",  "Re",
    "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th",
    "Pa", "U",  "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db",
    "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};

constexpr std::array<const char*, 18> kStructure = {
    "(", ")", "[", "]", ".", "=", "#", "$", ":", "/", "\\", "-", "+", "@", "%", "*", ">", ">>"};

constexpr std::array<const char*, 10> kOrganic = {"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"};
constexpr std::array<const char*, 6> kAromatic = {"b", "c", "n", "o", "p", "s"};
constexpr std::array<const char*, 2> kBracketAromatic = {"se", "as"};

std::vector<std::string> make_token_list() {
    std::vector<std::string> tokens = {"<pad>", "<start>", "<end>"};
    std::set<std::string> present(tokens.begin(), tokens.end());
    auto push = [&](const std::string& t) {
        if (present.insert(t).second) tokens.push_back(t);
    };
    for (const char* t : kStructure) push(t);
    for (char d = '0'; d <= '9'; ++d) push(std::string(1, d));
    for (const char* t : kOrganic) push(t);
    for (const char* t : kAromatic) push(t);
    for (const char* t : kBracketAromatic) push(t);
    for (const char* t : kElements) push(t);
    // Single letters: any bracket-atom interior can be spelled one character
    // at a time.
    for (char c = 'A'; c <= 'Z'; ++c) push(std::string(1, c));
    for (char c = 'a'; c <= 'z'; ++c) push(std::string(1, c));
    // OpenSMILES chirality classes.
    for (int i = 1; i <= 2; ++i) push("@TH" + std::to_string(i));
    for (int i = 1; i <= 2; ++i) push("@AL" + std::to_string(i));
    for (int i = 1; i <= 3; ++i) push("@SP" + std::to_string(i));
    for (int i = 1; i <= 20; ++i) push("@TB" + std::to_string(i));
    for (int i = 1; i <= 30; ++i) push("@OH" + std::to_string(i));
    return tokens;
}

}  // namespace

Vocabulary::Vocabulary() : tokens_(make_token_list()) {
    if (tokens_.size() != static_cast<std::size_t>(kVocabularySize)) {
        throw std::logic_error("vocabulary has " + std::to_string(tokens_.size()) + " tokens");
    }
    std::set<std::string> organic_set;
    for (const char* t : kStructure) organic_set.insert(t);
    for (char d = '0'; d <= '9'; ++d) organic_set.insert(std::string(1, d));
    for (const char* t : kOrganic) organic_set.insert(t);
    for (const char* t : kAromatic) organic_set.insert(t);
    organic_.resize(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        ids_.emplace(tokens_[i], static_cast<int>(i));
        organic_[i] = !is_special(static_cast<int>(i)) && organic_set.count(tokens_[i]) > 0;
        if (!is_special(static_cast<int>(i))) max_len_ = std::max(max_len_, tokens_[i].size());
    }
}

std::optional<int> Vocabulary::id_of(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
}

bool Vocabulary::is_organic_context(int id) const {
    return id >= 0 && static_cast<std::size_t>(id) < organic_.size() && organic_[id];
}

std::string Vocabulary::hash() const {
    std::string joined;
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (i) joined += '\n';
        joined += tokens_[i];
    }
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(joined.data(), joined.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("SHA-256 failed");
    }
    std::string hex;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", digest[i]);
        hex += buf;
    }
    return hex;
}

const Vocabulary& build_vocabulary() {
    static const Vocabulary vocab;
    return vocab;
}

}  // namespace chembfn
