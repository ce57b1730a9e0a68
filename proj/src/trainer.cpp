#include "chembfn/trainer.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace chembfn {

namespace {

constexpr std::uint64_t kShuffleStream = 0x7368756666ULL;

AdamWConfig optimizer_config(const TrainOptions& o) {
    AdamWConfig c;
    c.lr = o.lr;
    c.weight_decay = o.weight_decay;
    return c;
}

}  // namespace

GenerativeTrainer::GenerativeTrainer(Denoiser& net, const ScheduleParams& schedule, TrainOptions options)
    : net_(net), schedule_(schedule), options_(options), optimizer_(optimizer_config(options)) {
    schedule_.validate();
    if (options_.batch_size == 0) throw std::invalid_argument("trainer: batch_size must be >= 1");
    if (options_.clip_norm < 0.0) throw std::invalid_argument("trainer: clip_norm must be >= 0");
    if (net_.categories() != schedule_.k_categories) throw std::invalid_argument("trainer: network K differs from schedule K");
    progress_.seed = options_.seed;
}

void GenerativeTrainer::restore(const TrainProgress& progress, std::optional<AdamWState> optimizer) {
    progress_ = progress;
    progress_.seed = options_.seed;
    if (optimizer) optimizer_.state() = std::move(*optimizer);
}

void GenerativeTrainer::run(const std::vector<TokenSequence>& seqs, const std::vector<Labels>* labels,
                            const std::function<void(const StepRecord&)>& on_step,
                            const std::function<void(int)>& on_epoch) {
    if (seqs.empty()) throw std::invalid_argument("trainer: no training sequences");
    if (labels && labels->size() != seqs.size()) throw std::invalid_argument("trainer: label count mismatch");
    if (labels && net_.label_dim() == 0) throw std::invalid_argument("trainer: labels given to an unconditional network");
    const Vocabulary& vocab = build_vocabulary();
    const std::optional<std::size_t> global_len =
        options_.padding == PaddingStrategy::Global ? std::optional<std::size_t>(options_.max_len) : std::nullopt;
    for (const auto& s : seqs) progress_.seq_len = std::max(progress_.seq_len, s.size());
    if (global_len) progress_.seq_len = *global_len;

    const Rng root(options_.seed);
    std::vector<std::size_t> order(seqs.size());
    for (int epoch = progress_.epoch + 1; epoch <= options_.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle = root.derive(kShuffleStream + static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), shuffle.engine());
        for (std::size_t start = 0; start < order.size(); start += options_.batch_size) {
            if (options_.max_steps > 0 && progress_.step >= options_.max_steps) return;
            const std::size_t end = std::min(order.size(), start + options_.batch_size);
            std::vector<TokenSequence> batch_seqs;
            std::vector<Labels> batch_labels;
            for (std::size_t i = start; i < end; ++i) {
                batch_seqs.push_back(seqs[order[i]]);
                if (labels) batch_labels.push_back((*labels)[order[i]]);
            }
            const PaddedBatch batch = pad_batch(batch_seqs, options_.padding, global_len, vocab);
            Binding binding(net_.params(), true);
            LossStepOptions lo;
            lo.p_uncond = options_.p_uncond;
            lo.labels = labels ? &batch_labels : nullptr;
            lo.dropout = options_.dropout;
            LossStep ls = generative_loss_step(batch, net_, binding, schedule_, lo,
                                               root.derive(static_cast<std::uint64_t>(progress_.step)));
            ag::backward(ls.loss);
            const double lr = warmup_lr(progress_.step, options_.warmup_steps, options_.warmup_start, options_.lr);
            std::vector<Matrix> grads = binding.gradients();
            const double grad_norm = clip_global_norm(grads, options_.clip_norm);
            optimizer_.step(net_.mutable_params().values(), grads, lr);
            ++progress_.step;
            if (on_step) on_step({progress_.step, epoch, lr, ls.value, grad_norm});
        }
        progress_.epoch = epoch;
        if (on_epoch) on_epoch(epoch);
    }
}

}  // namespace chembfn
