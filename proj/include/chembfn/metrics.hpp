#pragma once

#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "chembfn/rng.hpp"
#include "chembfn/schedule.hpp"

namespace chembfn {

// Syntactic screen: tokenizable, balanced branches and brackets, well-formed
// bracket atoms, ring closures paired, no dangling bonds, aromatic atoms on a
// cycle, and organic-subset atoms within their largest normal valence.
// An approximation of full cheminformatics sanitisation.
bool is_valid_smiles(std::string_view smiles);

double validity(const std::vector<std::string>& smiles);
// |distinct| / |list|. Throws std::invalid_argument on an empty list.
double uniqueness(const std::vector<std::string>& smiles);
// Fraction of distinct strings not in `reference`. Throws on an empty list.
double novelty(const std::vector<std::string>& smiles, const std::set<std::string>& reference);

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 1.0;  // 1 when y has no spread
};

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

struct EntropyPoint {
    double t = 0.0;
    double entropy = 0.0;  // nats
    double stderr_ = 0.0;
};

struct EntropyCurve {
    std::vector<EntropyPoint> points;
    LinearFit fit;
};

// Shannon entropy in nats; zero entries contribute nothing.
double entropy(const std::vector<double>& probs);

// Monte-Carlo E[H(theta)] on an even t grid for flow samples of a fixed
// token. Grid point j draws from `rng.derive(j)`.
EntropyCurve entropy_curve(const ScheduleParams& params, int n_points, int n_samples, const Rng& rng);

// R^2 of a straight-line fit to the running sum of loss estimates against t.
double cumulative_loss_linearity(const std::vector<std::pair<double, double>>& losses);

void write_entropy_csv(std::ostream& out, const EntropyCurve& curve);

struct SampleSummary {
    std::size_t n = 0;
    double validity = 0.0;
    double uniqueness = 0.0;
    double novelty = 0.0;  // negative when no reference was supplied
};

SampleSummary summarize_samples(const std::vector<std::string>& smiles, const std::set<std::string>* reference);
void write_summary_csv(std::ostream& out, const SampleSummary& summary);

}  // namespace chembfn
