#include "chembfn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace chembfn {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::ifstream open_or_throw(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError(path, 0, "cannot open file");
    return in;
}

}  // namespace

DataError::DataError(std::string file, std::size_t line, const std::string& message)
    : std::runtime_error(file + ":" + std::to_string(line) + ": " + message), file_(std::move(file)), line_(line) {}

std::vector<SmilesRecord> read_smiles_file(const std::string& path) {
    std::ifstream in = open_or_throw(path);
    std::vector<SmilesRecord> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        const std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        // Allow "SMILES name" lines; only the first field is the molecule.
        const auto space = s.find_first_of(" \t");
        out.push_back({n, space == std::string::npos ? s : s.substr(0, space), {}});
    }
    if (out.empty()) throw DataError(path, n, "no molecules found");
    return out;
}

LabeledTable read_labeled_csv(const std::string& path, const std::vector<std::string>& columns) {
    std::ifstream in = open_or_throw(path);
    std::string line;
    std::size_t n = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++n;
        if (!trim(line).empty()) {
            header = split_csv(trim(line));
            break;
        }
    }
    if (header.empty()) throw DataError(path, n, "missing CSV header");
    const auto smiles_it = std::find(header.begin(), header.end(), "smiles");
    if (smiles_it == header.end()) throw DataError(path, n, "header has no 'smiles' column");
    const std::size_t smiles_col = static_cast<std::size_t>(smiles_it - header.begin());

    LabeledTable table;
    std::vector<std::size_t> label_cols;
    if (columns.empty()) {
        for (std::size_t c = 0; c < header.size(); ++c)
            if (c != smiles_col) label_cols.push_back(c);
    } else {
        for (const auto& name : columns) {
            const auto it = std::find(header.begin(), header.end(), name);
            if (it == header.end()) throw DataError(path, n, "missing label column '" + name + "'");
            label_cols.push_back(static_cast<std::size_t>(it - header.begin()));
        }
    }
    if (label_cols.empty()) throw DataError(path, n, "no label columns");
    for (std::size_t c : label_cols) table.label_names.push_back(header[c]);

    while (std::getline(in, line)) {
        ++n;
        const std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        const auto cells = split_csv(s);
        if (cells.size() != header.size())
            throw DataError(path, n, "expected " + std::to_string(header.size()) + " fields, found " +
                                         std::to_string(cells.size()));
        SmilesRecord rec{n, cells[smiles_col], {}};
        for (std::size_t c : label_cols) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(cells[c], &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != cells[c].size())
                throw DataError(path, n, "label '" + header[c] + "' is not a number: '" + cells[c] + "'");
            if (!std::isfinite(v)) throw DataError(path, n, "label '" + header[c] + "' is NaN or infinite");
            rec.labels.push_back(v);
        }
        table.rows.push_back(std::move(rec));
    }
    if (table.rows.empty()) throw DataError(path, n, "no data rows");
    return table;
}

std::vector<TokenSequence> tokenize_records(const std::vector<SmilesRecord>& records, const std::string& file,
                                            const Vocabulary& vocab, std::optional<std::size_t> max_len) {
    std::vector<TokenSequence> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        TokenSequence seq;
        try {
            seq = tokenize(r.smiles, vocab);
        } catch (const std::exception& e) {
            throw DataError(file, r.line, std::string("cannot tokenize '") + r.smiles + "': " + e.what());
        }
        if (max_len && seq.size() > *max_len)
            throw DataError(file, r.line, "sequence of " + std::to_string(seq.size()) + " tokens exceeds max length " +
                                              std::to_string(*max_len));
        out.push_back(std::move(seq));
    }
    return out;
}

}  // namespace chembfn
