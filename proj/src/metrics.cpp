#include "chembfn/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <unordered_set>

#include "chembfn/bfn.hpp"
#include "chembfn/tokenizer.hpp"

namespace chembfn {

namespace {

const std::unordered_set<std::string>& element_symbols() {
    static const std::unordered_set<std::string> symbols = {
        "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si", "P",  "S",
        "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge",
        "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd",
        "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd",
        "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W",  "Re", "Os", "Ir", "Pt", "Au", "Hg",
        "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U",  "Np", "Pu", "Am", "Cm",
        "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn",
        "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};
    return symbols;
}

bool is_bracket_aromatic(std::string_view s) {
    return s == "b" || s == "c" || s == "n" || s == "o" || s == "p" || s == "s" || s == "se" || s == "as" ||
           s == "te";
}

struct Atom {
    std::string symbol;  // as written; lowercase = aromatic
    bool bracket = false;
    int hydrogens = 0;  // explicit, bracket atoms only
    int charge = 0;
    int sigma = 0;      // bond-order sum with aromatic bonds counted as 1

    bool aromatic() const { return !symbol.empty() && std::islower(static_cast<unsigned char>(symbol[0])); }
};

struct Edge {
    std::size_t a, b;
    int order;  // 1..4
    bool aromatic;
};

// Largest normal valence of the organic subset; 0 when not in the subset.
int organic_max_valence(const std::string& symbol) {
    static const std::map<std::string, int> table = {{"B", 3}, {"C", 4}, {"N", 3}, {"O", 2}, {"P", 5},
                                                     {"S", 6}, {"F", 1}, {"Cl", 1}, {"Br", 1}, {"I", 1},
                                                     {"b", 3}, {"c", 4}, {"n", 3}, {"o", 2}, {"p", 5},
                                                     {"s", 6}};
    auto it = table.find(symbol);
    return it == table.end() ? 0 : it->second;
}

// Lowest valence used to decide whether an aromatic atom still owes a
// double bond to its ring system.
int aromatic_base_valence(const Atom& atom) {
    std::string sym = atom.symbol;
    int v = 0;
    if (sym == "c") v = 4 - std::abs(atom.charge);
    else if (sym == "n" || sym == "p" || sym == "as") v = 3 + atom.charge;
    else if (sym == "o" || sym == "s" || sym == "se" || sym == "te") v = 2 + atom.charge;
    else if (sym == "b") v = 3 - atom.charge;
    return v;
}

// Parses "[...]" at `i` (pointing at '['); returns the index after ']' or
// npos when malformed.
std::size_t parse_bracket_atom(std::string_view s, std::size_t i, Atom& atom) {
    constexpr auto npos = std::string_view::npos;
    const auto close = s.find(']', i + 1);
    if (close == npos) return npos;
    const std::string_view body = s.substr(i + 1, close - i - 1);
    auto digit = [&](std::size_t k) { return k < body.size() && std::isdigit(static_cast<unsigned char>(body[k])); };
    std::size_t k = 0;
    while (digit(k)) ++k;
    if (k > 3) return npos;
    if (k < body.size() && body[k] == '*') {
        atom.symbol = "*";
        ++k;
    } else if (k + 1 < body.size() && std::isupper(static_cast<unsigned char>(body[k])) &&
               element_symbols().count(std::string(body.substr(k, 2)))) {
        atom.symbol = std::string(body.substr(k, 2));
        k += 2;
    } else if (k + 1 < body.size() && is_bracket_aromatic(body.substr(k, 2))) {
        atom.symbol = std::string(body.substr(k, 2));
        k += 2;
    } else if (k < body.size() &&
               (element_symbols().count(std::string(1, body[k])) || is_bracket_aromatic(body.substr(k, 1)))) {
        atom.symbol = std::string(1, body[k]);
        ++k;
    } else {
        return npos;
    }
    atom.bracket = true;
    if (k < body.size() && body[k] == '@') {
        ++k;
        if (k < body.size() && body[k] == '@') {
            ++k;
        } else if (k + 1 < body.size() && std::isupper(static_cast<unsigned char>(body[k])) && body[k] != 'H') {
            const std::string_view cls = body.substr(k, 2);
            if (cls != "TH" && cls != "AL" && cls != "SP" && cls != "TB" && cls != "OH") return npos;
            k += 2;
            std::size_t digits = 0;
            while (digit(k)) ++k, ++digits;
            if (digits == 0 || digits > 2) return npos;
        }
    }
    if (k < body.size() && body[k] == 'H') {
        ++k;
        atom.hydrogens = 1;
        if (digit(k)) atom.hydrogens = body[k++] - '0';
    }
    if (k < body.size() && (body[k] == '+' || body[k] == '-')) {
        const int sign = body[k++] == '+' ? 1 : -1;
        int magnitude = 1;
        if (k < body.size() && body[k] == (sign > 0 ? '+' : '-')) {
            ++k;
            magnitude = 2;
        } else if (digit(k)) {
            magnitude = 0;
            std::size_t digits = 0;
            while (digit(k)) magnitude = magnitude * 10 + (body[k++] - '0'), ++digits;
            if (digits > 2) return npos;
        }
        atom.charge = sign * magnitude;
    }
    if (k < body.size() && body[k] == ':') {
        ++k;
        std::size_t digits = 0;
        while (digit(k)) ++k, ++digits;
        if (digits == 0) return npos;
    }
    return k == body.size() ? close + 1 : npos;
}

// Marks edges that lie on at least one cycle (non-bridges).
std::vector<bool> cycle_edges(std::size_t n_atoms, const std::vector<Edge>& edges) {
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj(n_atoms);
    for (std::size_t e = 0; e < edges.size(); ++e) {
        adj[edges[e].a].push_back({edges[e].b, e});
        adj[edges[e].b].push_back({edges[e].a, e});
    }
    std::vector<int> disc(n_atoms, -1), low(n_atoms, 0);
    std::vector<bool> on_cycle(edges.size(), true);
    int timer = 0;
    std::function<void(std::size_t, std::size_t)> dfs = [&](std::size_t u, std::size_t parent_edge) {
        disc[u] = low[u] = timer++;
        for (const auto& [v, e] : adj[u]) {
            if (e == parent_edge) continue;
            if (disc[v] >= 0) {
                low[u] = std::min(low[u], disc[v]);
            } else {
                dfs(v, e);
                low[u] = std::min(low[u], low[v]);
                if (low[v] > disc[u]) on_cycle[e] = false;
            }
        }
    };
    for (std::size_t u = 0; u < n_atoms; ++u)
        if (disc[u] < 0) dfs(u, static_cast<std::size_t>(-1));
    return on_cycle;
}

// Perfect matching of `needy` atoms over aromatic edges (a Kekule
// structure). Backtracking with a work budget; an exhausted budget counts
// as success so pathological inputs are not rejected on cost alone.
bool kekulize(const std::vector<bool>& needy, const std::vector<std::vector<std::size_t>>& adj) {
    std::vector<bool> matched(needy.size(), false);
    long budget = 200000;
    std::function<bool()> solve = [&]() -> bool {
        if (--budget < 0) return true;
        std::size_t pick = needy.size();
        std::size_t fewest = needy.size() + 1;
        for (std::size_t u = 0; u < needy.size(); ++u) {
            if (!needy[u] || matched[u]) continue;
            std::size_t options = 0;
            for (std::size_t v : adj[u]) options += needy[v] && !matched[v] ? 1 : 0;
            if (options < fewest) {
                fewest = options;
                pick = u;
            }
        }
        if (pick == needy.size()) return true;
        if (fewest == 0) return false;
        matched[pick] = true;
        for (std::size_t v : adj[pick]) {
            if (!needy[v] || matched[v]) continue;
            matched[v] = true;
            if (solve()) return true;
            matched[v] = false;
        }
        matched[pick] = false;
        return false;
    };
    return solve();
}

}  // namespace

bool is_valid_smiles(std::string_view s) {
    if (s.empty()) return false;
    try {
        tokenize(s, build_vocabulary());
    } catch (const std::exception&) {
        return false;
    }

    constexpr std::size_t none = static_cast<std::size_t>(-1);
    std::vector<Atom> atoms;
    std::vector<Edge> edges;
    std::size_t prev = none;
    int pending_order = 0;  // 0 = no explicit bond symbol
    bool pending_aromatic = false;
    struct Branch {
        std::size_t anchor;
        bool has_atom;
    };
    std::vector<Branch> branches;
    struct Open {
        std::size_t atom;
        int order;
        bool aromatic;
    };
    std::map<int, Open> rings;

    auto connect = [&](std::size_t a, std::size_t b, int order, bool explicit_aromatic) -> bool {
        if (a == b) return false;
        for (const Edge& e : edges)
            if ((e.a == a && e.b == b) || (e.a == b && e.b == a)) return false;
        const bool aromatic = order == 0 ? atoms[a].aromatic() && atoms[b].aromatic() : explicit_aromatic;
        const int sigma = order == 0 ? 1 : order;
        edges.push_back({a, b, sigma, aromatic});
        atoms[a].sigma += sigma;
        atoms[b].sigma += sigma;
        return true;
    };
    auto clear_pending = [&] {
        pending_order = 0;
        pending_aromatic = false;
    };
    auto add_atom = [&](Atom atom) -> bool {
        const std::size_t idx = atoms.size();
        atoms.push_back(std::move(atom));
        if (prev != none) {
            if (!connect(prev, idx, pending_order, pending_aromatic)) return false;
        } else if (pending_order != 0) {
            return false;
        }
        if (!branches.empty()) branches.back().has_atom = true;
        prev = idx;
        clear_pending();
        return true;
    };
    auto ring_closure = [&](int number) -> bool {
        if (prev == none) return false;
        auto it = rings.find(number);
        if (it == rings.end()) {
            rings[number] = {prev, pending_order, pending_aromatic};
        } else {
            const Open open = it->second;
            rings.erase(it);
            if (open.order != 0 && pending_order != 0 && open.order != pending_order) return false;
            const int order = pending_order != 0 ? pending_order : open.order;
            const bool aromatic = pending_order != 0 ? pending_aromatic : open.aromatic;
            if (!connect(open.atom, prev, order, aromatic)) return false;
        }
        clear_pending();
        return true;
    };

    std::size_t i = 0;
    while (i < s.size()) {
        const char c = s[i];
        if (c == '[') {
            Atom atom;
            const std::size_t next = parse_bracket_atom(s, i, atom);
            if (next == std::string_view::npos || !add_atom(std::move(atom))) return false;
            i = next;
        } else if (c == '(') {
            if (prev == none || pending_order != 0) return false;
            branches.push_back({prev, false});
            ++i;
        } else if (c == ')') {
            if (branches.empty() || !branches.back().has_atom || pending_order != 0) return false;
            prev = branches.back().anchor;
            branches.pop_back();
            ++i;
        } else if (c == '-' || c == '=' || c == '#' || c == '$' || c == ':' || c == '/' || c == '\\') {
            if (prev == none || pending_order != 0) return false;
            pending_order = c == '=' ? 2 : c == '#' ? 3 : c == '$' ? 4 : 1;
            pending_aromatic = c == ':';
            ++i;
        } else if (std::isdigit(static_cast<unsigned char>(c))) {
            if (!ring_closure(c - '0')) return false;
            ++i;
        } else if (c == '%') {
            if (i + 2 >= s.size() || !std::isdigit(static_cast<unsigned char>(s[i + 1])) ||
                !std::isdigit(static_cast<unsigned char>(s[i + 2])))
                return false;
            if (!ring_closure(100 + (s[i + 1] - '0') * 10 + (s[i + 2] - '0'))) return false;
            i += 3;
        } else if (c == '.' || c == '>') {
            if (pending_order != 0 || !branches.empty()) return false;
            if (c == '.' && prev == none) return false;
            prev = none;
            i += (c == '>' && i + 1 < s.size() && s[i + 1] == '>') ? 2 : 1;
        } else {
            Atom atom;
            if (i + 1 < s.size() && (s.substr(i, 2) == "Cl" || s.substr(i, 2) == "Br")) atom.symbol = std::string(s.substr(i, 2));
            else atom.symbol = std::string(1, c);
            if (atom.symbol != "*" && organic_max_valence(atom.symbol) == 0) return false;
            i += atom.symbol.size();
            if (!add_atom(std::move(atom))) return false;
        }
    }
    if (pending_order != 0 || !branches.empty() || !rings.empty() || atoms.empty() || prev == none) return false;

    // Aromatic atoms owe one double bond to the ring system when their
    // sigma bonds and hydrogens leave exactly one unit of valence.
    std::vector<bool> needy(atoms.size(), false);
    for (std::size_t a = 0; a < atoms.size(); ++a) {
        const Atom& atom = atoms[a];
        if (atom.aromatic()) {
            const int spare = aromatic_base_valence(atom) - atom.sigma - atom.hydrogens;
            needy[a] = spare >= 1;
            // A carbon with an unmatched spare unit is a radical; aromatic
            // heteroatoms may instead carry an implicit hydrogen.
            if (!atom.bracket && atom.sigma + (needy[a] ? 1 : 0) > organic_max_valence(atom.symbol)) return false;
        } else if (!atom.bracket && atom.symbol != "*") {
            if (atom.sigma > organic_max_valence(atom.symbol)) return false;
        }
    }

    const std::vector<bool> on_cycle = cycle_edges(atoms.size(), edges);
    std::vector<bool> in_aromatic_cycle(atoms.size(), false);
    std::vector<std::vector<std::size_t>> aromatic_adj(atoms.size());
    for (std::size_t e = 0; e < edges.size(); ++e) {
        if (!edges[e].aromatic) continue;
        aromatic_adj[edges[e].a].push_back(edges[e].b);
        aromatic_adj[edges[e].b].push_back(edges[e].a);
        if (on_cycle[e]) in_aromatic_cycle[edges[e].a] = in_aromatic_cycle[edges[e].b] = true;
    }
    for (std::size_t a = 0; a < atoms.size(); ++a)
        if (atoms[a].aromatic() && !in_aromatic_cycle[a]) return false;
    return kekulize(needy, aromatic_adj);
}

double validity(const std::vector<std::string>& smiles) {
    if (smiles.empty()) return 0.0;
    std::size_t ok = 0;
    for (const auto& s : smiles) ok += is_valid_smiles(s) ? 1 : 0;
    return static_cast<double>(ok) / static_cast<double>(smiles.size());
}

double uniqueness(const std::vector<std::string>& smiles) {
    if (smiles.empty()) throw std::invalid_argument("uniqueness: empty list");
    const std::set<std::string> distinct(smiles.begin(), smiles.end());
    return static_cast<double>(distinct.size()) / static_cast<double>(smiles.size());
}

double novelty(const std::vector<std::string>& smiles, const std::set<std::string>& reference) {
    if (smiles.empty()) throw std::invalid_argument("novelty: empty list");
    const std::set<std::string> distinct(smiles.begin(), smiles.end());
    std::size_t novel = 0;
    for (const auto& s : distinct) novel += reference.count(s) ? 0 : 1;
    return static_cast<double>(novel) / static_cast<double>(distinct.size());
}

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_line: need matching x, y with n >= 2");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw std::invalid_argument("fit_line: x has no spread");
    LinearFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    if (syy > 0.0) {
        double ss_res = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double r = y[i] - (fit.intercept + fit.slope * x[i]);
            ss_res += r * r;
        }
        fit.r_squared = 1.0 - ss_res / syy;
    }
    return fit;
}

double entropy(const std::vector<double>& probs) {
    double h = 0.0;
    for (double p : probs)
        if (p > 0.0) h -= p * std::log(p);
    return h;
}

EntropyCurve entropy_curve(const ScheduleParams& params, int n_points, int n_samples, const Rng& rng) {
    if (n_points < 3) throw std::invalid_argument("entropy_curve: n_points must be >= 3");
    if (n_samples < 100) throw std::invalid_argument("entropy_curve: n_samples must be >= 100");
    params.validate();
    const double ln_k = std::log(static_cast<double>(params.k_categories));
    const int ids[1] = {0};
    EntropyCurve curve;
    std::vector<double> ts, hs;
    for (int j = 0; j < n_points; ++j) {
        const double t = static_cast<double>(j) / (n_points - 1);
        EntropyPoint pt;
        pt.t = t;
        if (beta(params, t) == 0.0) {
            pt.entropy = ln_k;
        } else {
            Rng local = rng.derive(static_cast<std::uint64_t>(j));
            double sum = 0.0, sum_sq = 0.0;
            for (int n = 0; n < n_samples; ++n) {
                const DistributionParams theta = flow_sample(ids, t, params, local);
                const auto row = theta.probs.row(0);
                const double h = std::clamp(entropy({row.begin(), row.end()}), 0.0, ln_k);
                sum += h;
                sum_sq += h * h;
            }
            const double mean = sum / n_samples;
            const double var = std::max(0.0, (sum_sq - n_samples * mean * mean) / (n_samples - 1));
            pt.entropy = mean;
            pt.stderr_ = std::sqrt(var / n_samples);
        }
        ts.push_back(pt.t);
        hs.push_back(pt.entropy);
        curve.points.push_back(pt);
    }
    curve.fit = fit_line(ts, hs);
    return curve;
}

double cumulative_loss_linearity(const std::vector<std::pair<double, double>>& losses) {
    if (losses.size() < 3) throw std::invalid_argument("cumulative_loss_linearity: need at least 3 points");
    std::vector<double> ts, cum;
    double running = 0.0;
    for (const auto& [t, l] : losses) {
        running += l;
        ts.push_back(t);
        cum.push_back(running);
    }
    return fit_line(ts, cum).r_squared;
}

void write_entropy_csv(std::ostream& out, const EntropyCurve& curve) {
    out << "t,entropy,stderr\n";
    for (const auto& p : curve.points) out << p.t << ',' << p.entropy << ',' << p.stderr_ << '\n';
}

SampleSummary summarize_samples(const std::vector<std::string>& smiles, const std::set<std::string>* reference) {
    SampleSummary s;
    s.n = smiles.size();
    if (smiles.empty()) return s;
    s.validity = validity(smiles);
    s.uniqueness = uniqueness(smiles);
    s.novelty = reference ? novelty(smiles, *reference) : -1.0;
    return s;
}

void write_summary_csv(std::ostream& out, const SampleSummary& summary) {
    out << "n,validity,uniqueness,novelty\n";
    out << summary.n << ',' << summary.validity << ',' << summary.uniqueness << ',';
    if (summary.novelty >= 0.0) out << summary.novelty;
    out << '\n';
}

}  // namespace chembfn
