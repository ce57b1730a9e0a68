#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "chembfn/bfn.hpp"
#include "chembfn/model.hpp"
#include "chembfn/network.hpp"
#include "chembfn/optimizer.hpp"
#include "chembfn/tokenizer.hpp"

namespace chembfn {

enum class TaskKind { Regression, Classification };

std::string to_string(TaskKind task);
TaskKind parse_task(const std::string& text);

struct HeadConfig {
    TaskKind task = TaskKind::Regression;
    int input_dim = 128;
    int hidden_dim = 256;
    int n_outputs = 1;  // class count for classification
    double dropout = 0.0;

    void validate() const;
};

// Two-layer MLP [input_dim, hidden_dim, n_outputs] with SELU and dropout
// between the layers. Regression heads predict standardized targets and
// carry the per-output mean/std used to map them back.
class PredictionHead {
public:
    PredictionHead(HeadConfig config, std::uint64_t seed);
    PredictionHead(HeadConfig config, ParamStore params);

    const HeadConfig& config() const noexcept { return config_; }
    const ParamStore& params() const noexcept { return params_; }
    ParamStore& mutable_params() noexcept { return params_; }

    // features: B x input_dim. Dropout is active only when an RNG is given.
    ag::Var forward(const ag::Var& features, Binding& binding, Rng* dropout_rng) const;

    const std::vector<double>& target_mean() const noexcept { return mean_; }
    const std::vector<double>& target_std() const noexcept { return std_; }
    void set_standardization(std::vector<double> mean, std::vector<double> std);
    // Fits mean/std on regression targets; zero spread maps to std 1.
    void fit_standardization(const std::vector<Labels>& targets);

private:
    void build_layout(Rng* rng);

    HeadConfig config_;
    ParamStore params_;
    std::vector<double> mean_;
    std::vector<double> std_;
};

// Attention mask that hides <pad> positions.
std::vector<bool> non_pad_mask(const TokenSequence& seq);

// Hidden state at the <start> position for a one-hot input at t = 1 with
// null conditioning and pads masked from attention. The output projection
// is never evaluated.
ag::Var fingerprint_var(const TokenSequence& seq, const Model& net, Binding& binding, Rng* dropout_rng);
std::vector<double> fingerprint(const TokenSequence& seq, const Model& net);

// Raw head output in target units (regression) or logits (classification).
std::vector<double> predict(const TokenSequence& seq, const Model& net, const PredictionHead& head);
std::vector<std::vector<double>> predict(const std::vector<TokenSequence>& seqs, const Model& net,
                                         const PredictionHead& head);
std::vector<double> class_probabilities(const TokenSequence& seq, const Model& net, const PredictionHead& head);

class InvalidLabel : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Throws InvalidLabel for NaN/inf values, wrong widths, or class indices
// outside [0, n_outputs).
void validate_targets(const std::vector<Labels>& targets, const HeadConfig& config);

struct FinetuneStepOptions {
    bool dropout = false;
};

// Mean squared error on standardized targets (averaged over rows and
// outputs) or mean cross-entropy. Sequence b uses `rng.derive(b)`.
LossStep finetune_step(const PaddedBatch& batch, const std::vector<Labels>& targets, const Model& net,
                       Binding& net_binding, const PredictionHead& head, Binding& head_binding,
                       const FinetuneStepOptions& options, const Rng& rng);

struct LabeledSet {
    std::vector<TokenSequence> seqs;
    std::vector<Labels> labels;
};

struct FinetuneConfig {
    int epochs = 100;
    std::size_t batch_size = 32;
    double lr = 1e-4;
    std::int64_t warmup_steps = 100;
    double warmup_start = 1e-7;
    double weight_decay = 0.01;
    bool dropout = false;
    bool freeze_backbone = false;
    double decay_factor = 0.2;
    int patience = 20;
    double lr_floor = 1e-6;
    PaddingStrategy padding = PaddingStrategy::Dynamic;
    std::size_t max_len = 0;
    std::uint64_t seed = 0;
};

struct FinetuneEpoch {
    int epoch = 0;
    double train_loss = 0.0;
    double metric = 0.0;  // validation MAE or accuracy
    double lr = 0.0;
};

// MAE in target units (regression) or accuracy (classification).
double evaluate(const Model& net, const PredictionHead& head, const LabeledSet& set);

// Full protocol: standardization from `train`, shuffled minibatches,
// warm-up then plateau decay on the validation metric (train metric when no
// validation set is given).
std::vector<FinetuneEpoch> run_finetune(Denoiser& net, PredictionHead& head, const LabeledSet& train,
                                        const LabeledSet* valid, const FinetuneConfig& config,
                                        const std::function<void(const FinetuneEpoch&)>& on_epoch = {});

}  // namespace chembfn
