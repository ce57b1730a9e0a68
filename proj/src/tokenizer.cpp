#include "chembfn/tokenizer.hpp"

#include <algorithm>

namespace chembfn {

UnknownSymbol::UnknownSymbol(std::size_t position, char symbol)
    : std::runtime_error("unknown symbol '" + std::string(1, symbol) + "' at position " +
                         std::to_string(position)),
      position_(position) {}

LengthExceeded::LengthExceeded(std::size_t index, std::size_t length, std::size_t limit)
    : std::runtime_error("sequence " + std::to_string(index) + " has " + std::to_string(length) +
                         " tokens, exceeding the global length " + std::to_string(limit)),
      index_(index) {}

namespace {

std::optional<int> longest_match(std::string_view rest, const Vocabulary& vocab, bool organic_only) {
    const std::size_t max_len = std::min(rest.size(), vocab.max_token_length());
    for (std::size_t len = max_len; len >= 1; --len) {
        if (auto id = vocab.id_of(rest.substr(0, len))) {
            if (vocab.is_special(*id)) continue;
            if (!organic_only || vocab.is_organic_context(*id)) return id;
        }
    }
    return std::nullopt;
}

}  // namespace

TokenSequence tokenize(std::string_view smiles, const Vocabulary& vocab) {
    if (smiles.empty()) throw std::invalid_argument("tokenize: empty input");
    TokenSequence seq;
    seq.ids.reserve(smiles.size() + 2);
    seq.ids.push_back(vocab.start_id());
    bool in_bracket = false;
    std::size_t pos = 0;
    while (pos < smiles.size()) {
        const std::string_view rest = smiles.substr(pos);
        std::optional<int> id;
        if (!in_bracket) id = longest_match(rest, vocab, true);
        if (!id) id = longest_match(rest, vocab, false);
        if (!id) throw UnknownSymbol(pos, smiles[pos]);
        const std::string& tok = vocab.token(*id);
        if (tok == "[") in_bracket = true;
        if (tok == "]") in_bracket = false;
        seq.ids.push_back(*id);
        pos += tok.size();
    }
    seq.ids.push_back(vocab.end_id());
    return seq;
}

void validate_sequence(const TokenSequence& seq, const Vocabulary& vocab) {
    if (seq.ids.empty() || seq.ids.front() != vocab.start_id())
        throw MalformedSequence("sequence does not begin with <start>");
    std::size_t ends = 0;
    for (std::size_t i = 0; i < seq.ids.size(); ++i) {
        const int id = seq.ids[i];
        if (id < 0 || static_cast<std::size_t>(id) >= vocab.size())
            throw MalformedSequence("token id " + std::to_string(id) + " out of range");
        if (i > 0 && id == vocab.start_id())
            throw MalformedSequence("<start> at position " + std::to_string(i));
        if (id == vocab.end_id()) ++ends;
        else if (ends > 0 && id != vocab.pad_id())
            throw MalformedSequence("non-pad token after <end> at position " + std::to_string(i));
    }
    if (ends != 1) throw MalformedSequence("expected exactly one <end>, found " + std::to_string(ends));
}

std::string detokenize(const TokenSequence& seq, const Vocabulary& vocab, DecodeMode mode) {
    if (mode == DecodeMode::Strict) validate_sequence(seq, vocab);
    std::string out;
    for (int id : seq.ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab.size()) {
            throw MalformedSequence("token id " + std::to_string(id) + " out of range");
        }
        if (id == vocab.end_id()) break;
        if (vocab.is_special(id)) continue;
        out += vocab.token(id);
    }
    return out;
}

PaddingStrategy parse_padding(const std::string& text) {
    if (text == "dynamic") return PaddingStrategy::Dynamic;
    if (text == "global") return PaddingStrategy::Global;
    throw std::invalid_argument("unknown padding strategy '" + text + "' (expected dynamic|global)");
}

std::string to_string(PaddingStrategy strategy) {
    return strategy == PaddingStrategy::Dynamic ? "dynamic" : "global";
}

TokenSequence PaddedBatch::row(std::size_t b) const {
    return TokenSequence{std::vector<int>(ids.begin() + static_cast<std::ptrdiff_t>(b * length),
                                          ids.begin() + static_cast<std::ptrdiff_t>((b + 1) * length))};
}

PaddedBatch pad_batch(const std::vector<TokenSequence>& seqs, PaddingStrategy strategy,
                      std::optional<std::size_t> global_len, const Vocabulary& vocab) {
    PaddedBatch batch;
    batch.batch = seqs.size();
    batch.strategy = strategy;
    if (strategy == PaddingStrategy::Global) {
        if (!global_len) throw std::invalid_argument("pad_batch: global padding needs a length");
        for (std::size_t i = 0; i < seqs.size(); ++i)
            if (seqs[i].size() > *global_len) throw LengthExceeded(i, seqs[i].size(), *global_len);
        batch.length = *global_len;
        batch.global_len = global_len;
    } else {
        for (const auto& s : seqs) batch.length = std::max(batch.length, s.size());
    }
    batch.ids.assign(batch.batch * batch.length, vocab.pad_id());
    batch.pad_mask.assign(batch.batch * batch.length, false);
    for (std::size_t b = 0; b < seqs.size(); ++b) {
        for (std::size_t d = 0; d < seqs[b].size(); ++d) {
            batch.ids[b * batch.length + d] = seqs[b].ids[d];
            batch.pad_mask[b * batch.length + d] = seqs[b].ids[d] != vocab.pad_id();
        }
    }
    return batch;
}

}  // namespace chembfn
