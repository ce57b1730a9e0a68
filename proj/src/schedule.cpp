#include "chembfn/schedule.hpp"

#include <cmath>

namespace chembfn {

std::string to_string(ScheduleKind kind) {
    return kind == ScheduleKind::LogForm ? "log" : "quadratic";
}

ScheduleKind parse_schedule_kind(const std::string& text) {
    if (text == "log" || text == "logform" || text == "LogForm") return ScheduleKind::LogForm;
    if (text == "quadratic" || text == "quad" || text == "Quadratic") return ScheduleKind::Quadratic;
    throw std::invalid_argument("unknown schedule kind '" + text + "' (expected log|quadratic)");
}

void ScheduleParams::validate() const {
    if (!(beta_one > 0.0) || !std::isfinite(beta_one))
        throw std::invalid_argument("schedule: beta1 must be positive and finite");
    if (k_categories < 2) throw std::invalid_argument("schedule: K must be >= 2");
    if (kind == ScheduleKind::LogForm && enforce_beta_cap) {
        const double cap = beta_one_max(k_categories);
        if (beta_one > cap * (1.0 + 1e-12)) {
            throw std::invalid_argument("schedule: beta1=" + std::to_string(beta_one) +
                                        " exceeds the cap " + std::to_string(cap) +
                                        " for K=" + std::to_string(k_categories));
        }
    }
}

ScheduleParams default_schedule(int k_categories) {
    return ScheduleParams{ScheduleKind::LogForm, beta_one_max(k_categories), k_categories, true};
}

namespace {

void check_t(double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw std::domain_error("schedule: t must lie in [0, 1]");
}

}  // namespace

double beta(const ScheduleParams& params, double t) {
    check_t(t);
    if (params.kind == ScheduleKind::Quadratic) return t * t * params.beta_one;
    if (t == 1.0) return params.beta_one;
    const double k = static_cast<double>(params.k_categories);
    // log1p form stays accurate near t = 0
    return -(4.0 / k) * std::log1p(t * std::expm1(-k * params.beta_one / 4.0));
}

double alpha(const ScheduleParams& params, double t) {
    check_t(t);
    if (params.kind == ScheduleKind::Quadratic) return 2.0 * t * params.beta_one;
    const double k = static_cast<double>(params.k_categories);
    const double one_minus_decay = -std::expm1(-k * params.beta_one / 4.0);
    return (4.0 / k) * one_minus_decay / (1.0 - t * one_minus_decay);
}

double beta_one_max(int k_categories) {
    if (k_categories < 2) throw std::invalid_argument("beta_one_max: K must be >= 2");
    // f(u) = e^u - 1 - 32u is negative just right of 0 and positive at 64.
    auto f = [](double u) { return std::expm1(u) - 32.0 * u; };
    double lo = 1e-6;
    double hi = 64.0;
    for (int i = 0; i < 200 && (hi - lo) > 1e-13 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) > 0.0 ? hi : lo) = mid;
    }
    double u = 0.5 * (lo + hi);
    for (int i = 0; i < 4; ++i) {
        const double step = f(u) / (std::exp(u) - 32.0);
        u -= step;
        if (std::abs(step) < 1e-15 * u) break;
    }
    return 4.0 * u / static_cast<double>(k_categories);
}

double step_alpha(const ScheduleParams& params, int i, int n) {
    if (n < 1 || i < 1 || i > n) {
        throw std::out_of_range("step_alpha: index " + std::to_string(i) + " outside [1, " +
                                std::to_string(n) + "]");
    }
    const double hi = (i == n) ? 1.0 : static_cast<double>(i) / n;
    const double lo = static_cast<double>(i - 1) / n;
    return beta(params, hi) - beta(params, lo);
}

}  // namespace chembfn
