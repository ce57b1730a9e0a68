#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "chembfn/model.hpp"
#include "chembfn/tokenizer.hpp"

namespace chembfn {

// Input-file problem tied to a 1-based line number.
class DataError : public std::runtime_error {
public:
    DataError(std::string file, std::size_t line, const std::string& message);
    const std::string& file() const noexcept { return file_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string file_;
    std::size_t line_;
};

struct SmilesRecord {
    std::size_t line = 0;
    std::string smiles;
    Labels labels;
};

// One SMILES per line; blank lines and lines starting with '#' are skipped.
std::vector<SmilesRecord> read_smiles_file(const std::string& path);

struct LabeledTable {
    std::vector<std::string> label_names;
    std::vector<SmilesRecord> rows;
};

// CSV with a header containing `smiles`. `columns` selects label columns by
// name; empty means every other column. Non-numeric or NaN labels are errors.
LabeledTable read_labeled_csv(const std::string& path, const std::vector<std::string>& columns = {});

// Tokenizes every record; failures and sequences longer than `max_len`
// (when given) raise DataError with the record's line number.
std::vector<TokenSequence> tokenize_records(const std::vector<SmilesRecord>& records, const std::string& file,
                                            const Vocabulary& vocab, std::optional<std::size_t> max_len);

}  // namespace chembfn
