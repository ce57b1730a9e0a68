#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "chembfn/bfn.hpp"
#include "chembfn/checkpoint.hpp"
#include "chembfn/network.hpp"
#include "chembfn/optimizer.hpp"
#include "chembfn/tokenizer.hpp"

namespace chembfn {

struct TrainOptions {
    int epochs = 200;
    std::int64_t max_steps = 0;  // 0 = no cap
    std::size_t batch_size = 16;
    double lr = 1e-3;
    std::int64_t warmup_steps = 100;
    double warmup_start = 1e-8;
    double weight_decay = 0.01;
    double clip_norm = 0.0;  // global gradient-norm cap; 0 = off
    double p_uncond = 0.2;
    bool dropout = true;
    std::uint64_t seed = 0;
    PaddingStrategy padding = PaddingStrategy::Dynamic;
    std::size_t max_len = 0;
};

struct StepRecord {
    std::int64_t step = 0;  // 1-based count of completed updates
    int epoch = 0;
    double lr = 0.0;
    double loss = 0.0;
    double grad_norm = 0.0;  // before clipping
};

// Generative training loop. Epoch e shuffles with a substream of (seed, e)
// and update s draws its noise from (seed, s), so a run resumed from an
// epoch-boundary checkpoint replays the same losses as an uninterrupted one.
// `progress` and `optimizer` are updated in place.
class GenerativeTrainer {
public:
    GenerativeTrainer(Denoiser& net, const ScheduleParams& schedule, TrainOptions options);

    void restore(const TrainProgress& progress, std::optional<AdamWState> optimizer);

    // Runs until `options.epochs` (or `max_steps`) is reached.
    void run(const std::vector<TokenSequence>& seqs, const std::vector<Labels>* labels,
             const std::function<void(const StepRecord&)>& on_step = {},
             const std::function<void(int epoch)>& on_epoch = {});

    const TrainProgress& progress() const noexcept { return progress_; }
    const AdamW& optimizer() const noexcept { return optimizer_; }

private:
    Denoiser& net_;
    ScheduleParams schedule_;
    TrainOptions options_;
    AdamW optimizer_;
    TrainProgress progress_;
};

}  // namespace chembfn
