#include "chembfn/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace chembfn {

void AdamW::step(std::vector<Matrix>& params, const std::vector<Matrix>& grads, double lr) {
    step(params, grads, lr, std::vector<bool>(params.size(), true));
}

void AdamW::step(std::vector<Matrix>& params, const std::vector<Matrix>& grads, double lr,
                 const std::vector<bool>& active) {
    if (params.size() != grads.size() || active.size() != params.size())
        throw std::invalid_argument("AdamW: parameter/gradient count mismatch");
    if (state_.m.size() != params.size()) {
        state_.m.clear();
        state_.v.clear();
        for (const auto& p : params) {
            state_.m.emplace_back(p.rows(), p.cols());
            state_.v.emplace_back(p.rows(), p.cols());
        }
    }
    ++state_.step;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(state_.step));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(state_.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!active[i]) continue;
        require_same_shape(params[i], grads[i], "AdamW");
        double* p = params[i].data();
        const double* g = grads[i].data();
        double* m = state_.m[i].data();
        double* v = state_.v[i].data();
        for (std::size_t j = 0; j < params[i].size(); ++j) {
            p[j] -= lr * config_.weight_decay * p[j];
            m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
            v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
            p[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + config_.eps);
        }
    }
}

double global_norm(const std::vector<Matrix>& grads) {
    double sq = 0.0;
    for (const auto& g : grads)
        for (double v : g.storage()) sq += v * v;
    return std::sqrt(sq);
}

double clip_global_norm(std::vector<Matrix>& grads, double max_norm) {
    const double norm = global_norm(grads);
    if (max_norm > 0.0 && norm > max_norm) {
        const double scale = max_norm / norm;
        for (auto& g : grads)
            for (double& v : g.storage()) v *= scale;
    }
    return norm;
}

double warmup_lr(std::int64_t step, std::int64_t warmup_steps, double start, double peak) {
    if (warmup_steps <= 0 || step >= warmup_steps) return peak;
    const double frac = static_cast<double>(step) / static_cast<double>(warmup_steps);
    return start + (peak - start) * frac;
}

double PlateauDecay::update(double metric, double lr) {
    const bool improved =
        !has_best_ || (lower_is_better_ ? metric < best_ : metric > best_);
    if (improved) {
        best_ = metric;
        has_best_ = true;
        bad_epochs_ = 0;
        return lr;
    }
    if (++bad_epochs_ >= patience_) {
        bad_epochs_ = 0;
        return std::max(floor_, lr * factor_);
    }
    return lr;
}

}  // namespace chembfn
