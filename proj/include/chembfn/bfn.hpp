#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "chembfn/matrix.hpp"
#include "chembfn/model.hpp"
#include "chembfn/rng.hpp"
#include "chembfn/schedule.hpp"
#include "chembfn/tokenizer.hpp"

namespace chembfn {

// theta: D rows of K-category probabilities.
struct DistributionParams {
    Matrix probs;
};

// p_O: the network's per-position categorical prediction.
struct OutputDistribution {
    Matrix probs;
};

class DegenerateRow : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Positions marked fixed are overwritten with the one-hot row of the
// reference token.
struct ClampMask {
    std::vector<bool> fixed;
    TokenSequence reference;

    std::size_t size() const noexcept { return fixed.size(); }
    void validate(int k_categories) const;
};

struct GenerationConfig {
    int n_steps = 100;
    double guidance_w = 0.0;
    std::size_t seq_len = 0;
    std::uint64_t seed = 0;
    std::optional<ClampMask> clamp;
    std::optional<Labels> conditioning;

    void validate() const;
};

Matrix one_hot(std::span<const int> ids, int k_categories);
DistributionParams uniform_params(std::size_t length, int k_categories);

// theta_d = softmax(y_d), y_d ~ N(beta(t) (K e_{x_d} - 1), beta(t) K I).
DistributionParams flow_sample(std::span<const int> ids, double t, const ScheduleParams& params, Rng& rng);

// y ~ N(alpha (K e_k - 1), alpha K I).
std::vector<double> sender_sample(int k, double alpha, int k_categories, Rng& rng);

// theta'_k proportional to exp(y_k) theta_k; zero entries stay zero.
std::vector<double> bayesian_update(std::span<const double> theta, std::span<const double> y);

// (1 + w) cond - w uncond, row-wise softmax.
OutputDistribution combine_guidance(const Matrix& cond_logits, const Matrix& uncond_logits, double w);

OutputDistribution guided_output(const Model& net, const DistributionParams& theta, double t,
                                 const std::optional<Labels>& cond, double w, bool training);

DistributionParams clamp(const DistributionParams& theta, const ClampMask& mask);

// (K/2) alpha(t) ||e_x - e_hat||^2 summed over the grid, divided by D.
double continuous_loss(const Matrix& e_x, const Matrix& e_hat, double t, const ScheduleParams& params);

// -(1/D) sum_d ln p_O(x_d); +infinity when a true-token probability is zero.
double reconstruction_loss(std::span<const int> ids, const OutputDistribution& p_o);

struct LossStep {
    ag::Var loss;  // batch mean, differentiable w.r.t. the bound parameters
    double value = 0.0;
};

struct LossStepOptions {
    double p_uncond = 0.0;
    const std::vector<Labels>* labels = nullptr;            // one per sequence
    const std::vector<ClampMask>* context_masks = nullptr;  // one per sequence
    bool dropout = false;
};

// One stochastic estimate of the continuous-time loss over a padded batch.
// Sequence b draws all of its randomness from `rng.derive(b)`.
LossStep generative_loss_step(const PaddedBatch& batch, const Model& net, Binding& binding,
                              const ScheduleParams& params, const LossStepOptions& options, const Rng& rng);

// n-step generative sampler. Sample i uses the substream derived from
// (cfg.seed, i).
std::vector<TokenSequence> sample(const Model& net, const GenerationConfig& cfg, const ScheduleParams& params,
                                  const Vocabulary& vocab, std::size_t n_samples);

TokenSequence sample_one(const Model& net, const GenerationConfig& cfg, const ScheduleParams& params,
                         Rng& rng);

struct LossCurvePoint {
    double t = 0.0;
    double reconstruction = 0.0;  // mean L^r
    double continuous = 0.0;      // mean L-infinity integrand
};

// Evaluates both losses on an even grid t_j = j / (n_points - 1) with one
// flow sample per (sequence, t).
std::vector<LossCurvePoint> loss_curve(const Model& net, const std::vector<TokenSequence>& seqs,
                                       const ScheduleParams& params, std::size_t n_points, const Rng& rng);

}  // namespace chembfn
