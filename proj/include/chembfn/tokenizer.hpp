#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace chembfn {

inline constexpr int kVocabularySize = 246;

class UnknownSymbol : public std::runtime_error {
public:
    UnknownSymbol(std::size_t position, char symbol);
    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

class MalformedSequence : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class LengthExceeded : public std::runtime_error {
public:
    LengthExceeded(std::size_t index, std::size_t length, std::size_t limit);
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

// Fixed SMILES vocabulary: three special tokens followed by 243 surface
// tokens. Immutable after construction.
class Vocabulary {
public:
    Vocabulary();

    std::size_t size() const noexcept { return tokens_.size(); }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }
    const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    std::optional<int> id_of(std::string_view token) const;

    int pad_id() const noexcept { return 0; }
    int start_id() const noexcept { return 1; }
    int end_id() const noexcept { return 2; }
    bool is_special(int id) const noexcept { return id >= 0 && id <= 2; }

    // True for tokens that may appear outside square brackets.
    bool is_organic_context(int id) const;
    std::size_t max_token_length() const noexcept { return max_len_; }

    // Hex SHA-256 of the newline-joined ordered token list.
    std::string hash() const;

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
    std::vector<bool> organic_;
    std::size_t max_len_ = 0;
};

const Vocabulary& build_vocabulary();

// <start>, body..., <end>, then zero or more <pad>.
struct TokenSequence {
    std::vector<int> ids;

    std::size_t size() const noexcept { return ids.size(); }
    friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

// Greedy longest-match segmentation. Outside brackets the organic-context
// subset is preferred (so "CSc1ccccc1" reads S,c rather than Sc); when no
// such token matches, and always inside brackets, every token competes.
TokenSequence tokenize(std::string_view smiles, const Vocabulary& vocab);

enum class DecodeMode { Strict, Lenient };

// Strict mode validates the sequence layout; lenient mode skips specials and
// stops at the first <end>.
std::string detokenize(const TokenSequence& seq, const Vocabulary& vocab,
                       DecodeMode mode = DecodeMode::Strict);

void validate_sequence(const TokenSequence& seq, const Vocabulary& vocab);

enum class PaddingStrategy { Dynamic, Global };

PaddingStrategy parse_padding(const std::string& text);
std::string to_string(PaddingStrategy strategy);

struct PaddedBatch {
    std::size_t batch = 0;
    std::size_t length = 0;
    std::vector<int> ids;         // batch x length, row-major
    std::vector<bool> pad_mask;   // true = real token
    PaddingStrategy strategy = PaddingStrategy::Dynamic;
    std::optional<std::size_t> global_len;

    int id(std::size_t b, std::size_t d) const { return ids[b * length + d]; }
    bool real(std::size_t b, std::size_t d) const { return pad_mask[b * length + d]; }
    TokenSequence row(std::size_t b) const;
};

PaddedBatch pad_batch(const std::vector<TokenSequence>& seqs, PaddingStrategy strategy,
                      std::optional<std::size_t> global_len, const Vocabulary& vocab);

}  // namespace chembfn
