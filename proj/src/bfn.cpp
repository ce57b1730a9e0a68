#include "chembfn/bfn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace chembfn {

void ClampMask::validate(int k_categories) const {
    if (reference.size() != fixed.size())
        throw ShapeError("clamp mask: reference length " + std::to_string(reference.size()) +
                         " differs from mask length " + std::to_string(fixed.size()));
    for (std::size_t d = 0; d < fixed.size(); ++d) {
        if (fixed[d] && (reference.ids[d] < 0 || reference.ids[d] >= k_categories))
            throw std::invalid_argument("clamp mask: invalid reference id at position " + std::to_string(d));
    }
}

void GenerationConfig::validate() const {
    if (n_steps < 1) throw std::invalid_argument("generation: n_steps must be >= 1");
    if (seq_len < 1) throw std::invalid_argument("generation: sequence length must be >= 1");
    if (clamp && clamp->size() != seq_len)
        throw ShapeError("generation: clamp mask length does not match sequence length");
}

Matrix one_hot(std::span<const int> ids, int k_categories) {
    Matrix m(ids.size(), static_cast<std::size_t>(k_categories));
    for (std::size_t d = 0; d < ids.size(); ++d) {
        if (ids[d] < 0 || ids[d] >= k_categories)
            throw std::out_of_range("one_hot: id " + std::to_string(ids[d]) + " outside [0, K)");
        m(d, static_cast<std::size_t>(ids[d])) = 1.0;
    }
    return m;
}

DistributionParams uniform_params(std::size_t length, int k_categories) {
    return {Matrix(length, static_cast<std::size_t>(k_categories), 1.0 / k_categories)};
}

DistributionParams flow_sample(std::span<const int> ids, double t, const ScheduleParams& params, Rng& rng) {
    const int k = params.k_categories;
    const double b = beta(params, t);
    if (b == 0.0) return uniform_params(ids.size(), k);
    const double sd = std::sqrt(b * k);
    Matrix theta(ids.size(), static_cast<std::size_t>(k));
    for (std::size_t d = 0; d < ids.size(); ++d) {
        if (ids[d] < 0 || ids[d] >= k) throw std::out_of_range("flow_sample: token id outside [0, K)");
        auto row = theta.row(d);
        for (int j = 0; j < k; ++j) row[j] = -b + sd * rng.normal();
        row[ids[d]] += b * k;
        softmax_inplace(row);
    }
    return {std::move(theta)};
}

std::vector<double> sender_sample(int k, double alpha, int k_categories, Rng& rng) {
    if (k < 0 || k >= k_categories) throw std::out_of_range("sender_sample: token id outside [0, K)");
    if (alpha < 0.0) throw std::invalid_argument("sender_sample: alpha must be >= 0");
    std::vector<double> y(static_cast<std::size_t>(k_categories), 0.0);
    if (alpha == 0.0) return y;
    const double sd = std::sqrt(alpha * k_categories);
    for (double& v : y) v = -alpha + sd * rng.normal();
    y[static_cast<std::size_t>(k)] += alpha * k_categories;
    return y;
}

std::vector<double> bayesian_update(std::span<const double> theta, std::span<const double> y) {
    if (theta.size() != y.size()) throw ShapeError("bayesian_update: theta and y differ in length");
    std::vector<double> out(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i)
        out[i] = theta[i] > 0.0 ? std::log(theta[i]) + y[i] : -std::numeric_limits<double>::infinity();
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : out) mx = std::max(mx, v);
    if (!std::isfinite(mx)) throw DegenerateRow("bayesian_update: no mass survives the update");
    double sum = 0.0;
    for (double& v : out) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : out) v /= sum;
    return out;
}

OutputDistribution combine_guidance(const Matrix& cond_logits, const Matrix& uncond_logits, double w) {
    require_same_shape(cond_logits, uncond_logits, "combine_guidance");
    Matrix mixed(cond_logits.rows(), cond_logits.cols());
    for (std::size_t i = 0; i < mixed.size(); ++i)
        mixed.data()[i] = (1.0 + w) * cond_logits.data()[i] - w * uncond_logits.data()[i];
    return {softmax_rows(mixed)};
}

OutputDistribution guided_output(const Model& net, const DistributionParams& theta, double t,
                                 const std::optional<Labels>& cond, double w, bool training) {
    if (!(t >= 0.0 && t <= 1.0)) throw std::domain_error("guided_output: t must lie in [0, 1]");
    Matrix cond_logits = net.logits(theta.probs, t, cond);
    if (training || !cond) return {softmax_rows(cond_logits)};
    return combine_guidance(cond_logits, net.logits(theta.probs, t, std::nullopt), w);
}

DistributionParams clamp(const DistributionParams& theta, const ClampMask& mask) {
    if (mask.size() != theta.probs.rows())
        throw ShapeError("clamp: mask length " + std::to_string(mask.size()) + " vs " +
                         std::to_string(theta.probs.rows()) + " positions");
    const int k = static_cast<int>(theta.probs.cols());
    mask.validate(k);
    DistributionParams out = theta;
    for (std::size_t d = 0; d < mask.size(); ++d) {
        if (!mask.fixed[d]) continue;
        auto row = out.probs.row(d);
        std::fill(row.begin(), row.end(), 0.0);
        row[static_cast<std::size_t>(mask.reference.ids[d])] = 1.0;
    }
    return out;
}

double continuous_loss(const Matrix& e_x, const Matrix& e_hat, double t, const ScheduleParams& params) {
    require_same_shape(e_x, e_hat, "continuous_loss");
    if (e_x.rows() == 0) throw ShapeError("continuous_loss: empty grid");
    double sq = 0.0;
    for (std::size_t i = 0; i < e_x.size(); ++i) {
        const double r = e_x.data()[i] - e_hat.data()[i];
        sq += r * r;
    }
    return 0.5 * params.k_categories * alpha(params, t) * sq / static_cast<double>(e_x.rows());
}

double reconstruction_loss(std::span<const int> ids, const OutputDistribution& p_o) {
    if (ids.size() != p_o.probs.rows() || ids.empty())
        throw ShapeError("reconstruction_loss: sequence length does not match p_O");
    double total = 0.0;
    for (std::size_t d = 0; d < ids.size(); ++d) {
        const double p = p_o.probs(d, static_cast<std::size_t>(ids[d]));
        if (p <= 0.0) return std::numeric_limits<double>::infinity();
        total -= std::log(p);
    }
    return total / static_cast<double>(ids.size());
}

LossStep generative_loss_step(const PaddedBatch& batch, const Model& net, Binding& binding,
                              const ScheduleParams& params, const LossStepOptions& options, const Rng& rng) {
    if (batch.batch == 0 || batch.length == 0) throw std::invalid_argument("generative_loss_step: empty batch");
    if (options.labels && options.labels->size() != batch.batch)
        throw std::invalid_argument("generative_loss_step: one label vector per sequence required");
    if (options.context_masks && options.context_masks->size() != batch.batch)
        throw std::invalid_argument("generative_loss_step: one context mask per sequence required");
    const int k = params.k_categories;
    if (net.categories() != k) throw std::invalid_argument("generative_loss_step: model K differs from schedule K");

    std::vector<ag::Var> per_sequence;
    per_sequence.reserve(batch.batch);
    for (std::size_t b = 0; b < batch.batch; ++b) {
        Rng local = rng.derive(b);
        const TokenSequence x = batch.row(b);
        const double t = local.uniform();
        DistributionParams theta = flow_sample(x.ids, t, params, local);

        std::size_t in_scope = batch.length;
        Matrix row_weight(batch.length, static_cast<std::size_t>(k), 1.0);
        if (options.context_masks) {
            const ClampMask& mask = (*options.context_masks)[b];
            theta = clamp(theta, mask);
            for (std::size_t d = 0; d < batch.length; ++d) {
                if (!mask.fixed[d]) continue;
                --in_scope;
                for (double& v : row_weight.row(d)) v = 0.0;
            }
        }
        std::optional<Labels> cond;
        if (options.labels) {
            const bool drop = local.uniform() < options.p_uncond;
            if (!drop) cond = (*options.labels)[b];
        }
        if (in_scope == 0) continue;

        ForwardOptions fo;
        if (options.dropout) fo.dropout_rng = &local;
        auto out = net.forward(theta.probs, t, cond, binding, fo);
        auto probs = ag::softmax_rows(out.logits);
        Matrix neg_onehot = one_hot(x.ids, k);
        for (double& v : neg_onehot.storage()) v = -v;
        auto residual = ag::add_const(probs, neg_onehot);
        if (options.context_masks) residual = ag::mul_const(residual, row_weight);
        const double coef = 0.5 * k * alpha(params, t) / static_cast<double>(in_scope);
        per_sequence.push_back(ag::scale(ag::sum_squares(residual), coef));
    }
    LossStep step;
    if (per_sequence.empty()) {
        step.loss = ag::constant(Matrix(1, 1, 0.0));
        return step;
    }
    step.loss = ag::scale(ag::add_scalars(per_sequence), 1.0 / static_cast<double>(batch.batch));
    step.value = step.loss.scalar();
    return step;
}

TokenSequence sample_one(const Model& net, const GenerationConfig& cfg, const ScheduleParams& params, Rng& rng) {
    cfg.validate();
    const int k = params.k_categories;
    if (net.categories() != k) throw std::invalid_argument("sample: model K differs from schedule K");
    DistributionParams theta = uniform_params(cfg.seq_len, k);
    for (int i = 1; i <= cfg.n_steps; ++i) {
        const double t = static_cast<double>(i - 1) / cfg.n_steps;
        if (cfg.clamp) theta = clamp(theta, *cfg.clamp);
        const OutputDistribution p = guided_output(net, theta, t, cfg.conditioning, cfg.guidance_w, false);
        const double a = step_alpha(params, i, cfg.n_steps);
        for (std::size_t d = 0; d < cfg.seq_len; ++d) {
            const int drawn = static_cast<int>(rng.categorical(p.probs.row(d)));
            const std::vector<double> y = sender_sample(drawn, a, k, rng);
            const std::vector<double> updated = bayesian_update(theta.probs.row(d), y);
            std::copy(updated.begin(), updated.end(), theta.probs.row(d).begin());
        }
    }
    if (cfg.clamp) theta = clamp(theta, *cfg.clamp);
    const OutputDistribution p = guided_output(net, theta, 1.0, cfg.conditioning, cfg.guidance_w, false);
    TokenSequence out;
    out.ids.resize(cfg.seq_len);
    for (std::size_t d = 0; d < cfg.seq_len; ++d) {
        auto row = p.probs.row(d);
        out.ids[d] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    // Clamped rows are one-hot, so their emitted token is the reference.
    if (cfg.clamp)
        for (std::size_t d = 0; d < cfg.seq_len; ++d)
            if (cfg.clamp->fixed[d]) out.ids[d] = cfg.clamp->reference.ids[d];
    return out;
}

std::vector<TokenSequence> sample(const Model& net, const GenerationConfig& cfg, const ScheduleParams& params,
                                  const Vocabulary& vocab, std::size_t n_samples) {
    if (static_cast<std::size_t>(net.categories()) != vocab.size())
        throw std::invalid_argument("sample: model K does not match the vocabulary size");
    const Rng root(cfg.seed);
    std::vector<TokenSequence> out;
    out.reserve(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        Rng local = root.derive(i);
        out.push_back(sample_one(net, cfg, params, local));
    }
    return out;
}

std::vector<LossCurvePoint> loss_curve(const Model& net, const std::vector<TokenSequence>& seqs,
                                       const ScheduleParams& params, std::size_t n_points, const Rng& rng) {
    if (n_points < 2) throw std::invalid_argument("loss_curve: need at least two grid points");
    if (seqs.empty()) throw std::invalid_argument("loss_curve: no sequences");
    std::vector<LossCurvePoint> curve;
    curve.reserve(n_points);
    for (std::size_t j = 0; j < n_points; ++j) {
        const double t = static_cast<double>(j) / static_cast<double>(n_points - 1);
        LossCurvePoint pt{t, 0.0, 0.0};
        for (std::size_t s = 0; s < seqs.size(); ++s) {
            Rng local = rng.derive(j * seqs.size() + s);
            const auto& ids = seqs[s].ids;
            const DistributionParams theta = flow_sample(ids, t, params, local);
            const OutputDistribution p = guided_output(net, theta, t, std::nullopt, 0.0, true);
            pt.reconstruction += reconstruction_loss(ids, p);
            pt.continuous += continuous_loss(one_hot(ids, params.k_categories), p.probs, t, params);
        }
        pt.reconstruction /= static_cast<double>(seqs.size());
        pt.continuous /= static_cast<double>(seqs.size());
        curve.push_back(pt);
    }
    return curve;
}

}  // namespace chembfn
