#pragma once

#include <stdexcept>
#include <string>

namespace chembfn {

enum class ScheduleKind { LogForm, Quadratic };

std::string to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(const std::string& text);

// Accuracy schedule for K-category discrete data.
//
// LogForm:   beta(t) = -(4/K) ln(1 - t + t exp(-K beta1 / 4))
// Quadratic: beta(t) = t^2 beta1
struct ScheduleParams {
    ScheduleKind kind = ScheduleKind::LogForm;
    double beta_one = 0.0;
    int k_categories = 2;
    bool enforce_beta_cap = true;

    // Throws std::invalid_argument when the invariants do not hold.
    void validate() const;
};

// LogForm with beta1 = beta_one_max(K).
ScheduleParams default_schedule(int k_categories);

double beta(const ScheduleParams& params, double t);
double alpha(const ScheduleParams& params, double t);

// Largest beta1 for which the LogForm rate satisfies alpha(1) <= 32 beta1.
// Root of e^u = 1 + 32u (positive branch) mapped back through beta = 4u/K.
double beta_one_max(int k_categories);

// Accuracy injected by step i of an n-step discretisation:
// beta(i/n) - beta((i-1)/n).
double step_alpha(const ScheduleParams& params, int i, int n);

}  // namespace chembfn
