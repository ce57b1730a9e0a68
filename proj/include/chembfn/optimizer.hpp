#pragma once

#include <cstdint>
#include <vector>

#include "chembfn/matrix.hpp"

namespace chembfn {

// Adam with decoupled weight decay (PyTorch AdamW defaults).
struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

struct AdamWState {
    std::int64_t step = 0;
    std::vector<Matrix> m;
    std::vector<Matrix> v;
};

class AdamW {
public:
    explicit AdamW(AdamWConfig config = {}) : config_(config) {}

    // Applies one update with learning rate `lr` to every tensor in `params`.
    void step(std::vector<Matrix>& params, const std::vector<Matrix>& grads, double lr);
    // Restricts the update to indices with `active[i] == true`.
    void step(std::vector<Matrix>& params, const std::vector<Matrix>& grads, double lr,
              const std::vector<bool>& active);

    const AdamWConfig& config() const noexcept { return config_; }
    AdamWState& state() noexcept { return state_; }
    const AdamWState& state() const noexcept { return state_; }

private:
    AdamWConfig config_;
    AdamWState state_;
};

// Global L2 norm over every gradient tensor.
double global_norm(const std::vector<Matrix>& grads);

// Rescales `grads` in place so their global norm is at most `max_norm`;
// returns the norm before clipping. `max_norm <= 0` disables clipping.
double clip_global_norm(std::vector<Matrix>& grads, double max_norm);

// Linear warm-up from `start` to `peak` over `warmup_steps`, constant after.
double warmup_lr(std::int64_t step, std::int64_t warmup_steps, double start, double peak);

// Multiplies the learning rate by `factor` once the monitored metric has not
// improved for `patience` consecutive epochs, never going below `floor`.
class PlateauDecay {
public:
    PlateauDecay(double factor, int patience, double floor, bool lower_is_better)
        : factor_(factor), patience_(patience), floor_(floor), lower_is_better_(lower_is_better) {}

    double update(double metric, double lr);
    int bad_epochs() const noexcept { return bad_epochs_; }

private:
    double factor_;
    int patience_;
    double floor_;
    bool lower_is_better_;
    bool has_best_ = false;
    double best_ = 0.0;
    int bad_epochs_ = 0;
};

}  // namespace chembfn
