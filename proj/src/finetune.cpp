#include "chembfn/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace chembfn {

std::string to_string(TaskKind task) {
    return task == TaskKind::Regression ? "regression" : "classification";
}

TaskKind parse_task(const std::string& text) {
    if (text == "regression") return TaskKind::Regression;
    if (text == "classification") return TaskKind::Classification;
    throw std::invalid_argument("unknown task '" + text + "' (expected regression or classification)");
}

void HeadConfig::validate() const {
    if (input_dim < 1 || hidden_dim < 1) throw std::invalid_argument("head: dimensions must be positive");
    if (n_outputs < 1) throw std::invalid_argument("head: n_outputs must be >= 1");
    if (task == TaskKind::Classification && n_outputs < 2)
        throw std::invalid_argument("head: classification needs at least 2 classes");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("head: dropout must lie in [0, 1)");
}

PredictionHead::PredictionHead(HeadConfig config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(seed);
    build_layout(&rng);
}

PredictionHead::PredictionHead(HeadConfig config, ParamStore params) : config_(config) {
    config_.validate();
    build_layout(nullptr);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const std::size_t j = params.index_of(params_.name(i));
        if (!params.value(j).same_shape(params_.value(i)))
            throw ShapeError("head parameter '" + params_.name(i) + "' has shape " +
                             params.value(j).shape_string() + ", expected " + params_.value(i).shape_string());
        params_.value(i) = params.value(j);
    }
}

void PredictionHead::build_layout(Rng* rng) {
    auto linear = [&](const std::string& name, int fan_in, int fan_out) {
        Matrix w(static_cast<std::size_t>(fan_in), static_cast<std::size_t>(fan_out));
        if (rng) {
            const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (double& x : w.storage()) x = s * rng->normal();
        }
        params_.add(name + ".weight", std::move(w));
        params_.add(name + ".bias", Matrix(1, static_cast<std::size_t>(fan_out)));
    };
    linear("head.fc1", config_.input_dim, config_.hidden_dim);
    linear("head.fc2", config_.hidden_dim, config_.n_outputs);
    const auto n = static_cast<std::size_t>(config_.n_outputs);
    mean_.assign(n, 0.0);
    std_.assign(n, 1.0);
}

ag::Var PredictionHead::forward(const ag::Var& features, Binding& binding, Rng* dropout_rng) const {
    if (features.cols() != static_cast<std::size_t>(config_.input_dim))
        throw ShapeError("head: feature width " + std::to_string(features.cols()) + " does not match input_dim " +
                         std::to_string(config_.input_dim));
    auto h = ag::selu(ag::affine(features, binding.get(0), binding.get(1)));
    if (dropout_rng && config_.dropout > 0.0) {
        Matrix keep(h.rows(), h.cols());
        const double inv = 1.0 / (1.0 - config_.dropout);
        for (double& m : keep.storage()) m = dropout_rng->bernoulli(config_.dropout) ? 0.0 : inv;
        h = ag::mul_const(h, keep);
    }
    return ag::affine(h, binding.get(2), binding.get(3));
}

void PredictionHead::set_standardization(std::vector<double> mean, std::vector<double> std) {
    const auto n = static_cast<std::size_t>(config_.n_outputs);
    if (mean.size() != n || std.size() != n) throw std::invalid_argument("standardization width mismatch");
    for (double s : std)
        if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("standardization std must be positive");
    mean_ = std::move(mean);
    std_ = std::move(std);
}

void PredictionHead::fit_standardization(const std::vector<Labels>& targets) {
    if (config_.task != TaskKind::Regression) return;
    validate_targets(targets, config_);
    const auto n = static_cast<std::size_t>(config_.n_outputs);
    std::vector<double> mean(n, 0.0), sd(n, 0.0);
    for (const auto& y : targets)
        for (std::size_t j = 0; j < n; ++j) mean[j] += y[j];
    for (double& m : mean) m /= static_cast<double>(targets.size());
    for (const auto& y : targets)
        for (std::size_t j = 0; j < n; ++j) sd[j] += (y[j] - mean[j]) * (y[j] - mean[j]);
    for (double& s : sd) {
        s = std::sqrt(s / static_cast<double>(targets.size()));
        if (!(s > 1e-12)) s = 1.0;
    }
    set_standardization(std::move(mean), std::move(sd));
}

std::vector<bool> non_pad_mask(const TokenSequence& seq) {
    std::vector<bool> mask(seq.size());
    for (std::size_t d = 0; d < seq.size(); ++d) mask[d] = seq.ids[d] != 0;
    return mask;
}

ag::Var fingerprint_var(const TokenSequence& seq, const Model& net, Binding& binding, Rng* dropout_rng) {
    if (seq.size() == 0 || seq.ids[0] != 1) throw MalformedSequence("fingerprint: sequence must begin with <start>");
    for (int id : seq.ids)
        if (id < 0 || id >= net.categories()) throw MalformedSequence("fingerprint: token id out of range");
    const std::vector<bool> mask = non_pad_mask(seq);
    ForwardOptions fo;
    fo.attention_mask = &mask;
    fo.dropout_rng = dropout_rng;
    fo.hidden_only = true;
    auto out = net.forward(one_hot(seq.ids, net.categories()), 1.0, std::nullopt, binding, fo);
    return ag::slice_rows(out.hidden, 0, 1);
}

std::vector<double> fingerprint(const TokenSequence& seq, const Model& net) {
    Binding binding(net.params(), false);
    const ag::Var fp = fingerprint_var(seq, net, binding, nullptr);
    const Matrix& row = fp.value();
    return {row.data(), row.data() + row.size()};
}

namespace {

std::vector<double> head_output(const TokenSequence& seq, const Model& net, const PredictionHead& head) {
    Binding net_binding(net.params(), false);
    Binding head_binding(head.params(), false);
    auto fp = fingerprint_var(seq, net, net_binding, nullptr);
    const ag::Var out = head.forward(fp, head_binding, nullptr);
    const Matrix& y = out.value();
    return {y.data(), y.data() + y.size()};
}

}  // namespace

std::vector<double> predict(const TokenSequence& seq, const Model& net, const PredictionHead& head) {
    std::vector<double> y = head_output(seq, net, head);
    if (head.config().task == TaskKind::Regression)
        for (std::size_t j = 0; j < y.size(); ++j) y[j] = y[j] * head.target_std()[j] + head.target_mean()[j];
    return y;
}

std::vector<std::vector<double>> predict(const std::vector<TokenSequence>& seqs, const Model& net,
                                         const PredictionHead& head) {
    std::vector<std::vector<double>> out;
    out.reserve(seqs.size());
    for (const auto& s : seqs) out.push_back(predict(s, net, head));
    return out;
}

std::vector<double> class_probabilities(const TokenSequence& seq, const Model& net, const PredictionHead& head) {
    if (head.config().task != TaskKind::Classification)
        throw std::invalid_argument("class_probabilities: head is not a classifier");
    std::vector<double> probs = head_output(seq, net, head);
    softmax_inplace(probs);
    return probs;
}

void validate_targets(const std::vector<Labels>& targets, const HeadConfig& config) {
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const Labels& y = targets[i];
        const std::string where = "label row " + std::to_string(i);
        for (double v : y)
            if (!std::isfinite(v)) throw InvalidLabel(where + ": label is NaN or infinite");
        if (config.task == TaskKind::Regression) {
            if (y.size() != static_cast<std::size_t>(config.n_outputs))
                throw InvalidLabel(where + ": expected " + std::to_string(config.n_outputs) + " values");
        } else {
            if (y.size() != 1) throw InvalidLabel(where + ": classification expects one class index");
            const double c = y[0];
            if (c != std::floor(c) || c < 0 || c >= config.n_outputs)
                throw InvalidLabel(where + ": class index out of range");
        }
    }
}

LossStep finetune_step(const PaddedBatch& batch, const std::vector<Labels>& targets, const Model& net,
                       Binding& net_binding, const PredictionHead& head, Binding& head_binding,
                       const FinetuneStepOptions& options, const Rng& rng) {
    if (batch.batch == 0) throw std::invalid_argument("finetune_step: empty batch");
    if (targets.size() != batch.batch) throw std::invalid_argument("finetune_step: one label row per sequence required");
    const HeadConfig& cfg = head.config();
    validate_targets(targets, cfg);
    const auto n = static_cast<std::size_t>(cfg.n_outputs);

    std::vector<ag::Var> terms;
    terms.reserve(batch.batch);
    for (std::size_t b = 0; b < batch.batch; ++b) {
        Rng local = rng.derive(b);
        Rng* drop = options.dropout ? &local : nullptr;
        auto fp = fingerprint_var(batch.row(b), net, net_binding, drop);
        auto out = head.forward(fp, head_binding, drop);
        if (cfg.task == TaskKind::Regression) {
            Matrix neg_target(1, n);
            for (std::size_t j = 0; j < n; ++j)
                neg_target(0, j) = -(targets[b][j] - head.target_mean()[j]) / head.target_std()[j];
            terms.push_back(ag::scale(ag::sum_squares(ag::add_const(out, neg_target)), 1.0 / static_cast<double>(n)));
        } else {
            Matrix pick(1, n);
            pick(0, static_cast<std::size_t>(targets[b][0])) = -1.0;
            terms.push_back(ag::weighted_sum(ag::log_softmax_rows(out), pick));
        }
    }
    LossStep step;
    step.loss = ag::scale(ag::add_scalars(terms), 1.0 / static_cast<double>(batch.batch));
    step.value = step.loss.scalar();
    return step;
}

double evaluate(const Model& net, const PredictionHead& head, const LabeledSet& set) {
    if (set.seqs.empty()) throw std::invalid_argument("evaluate: empty set");
    if (set.labels.size() != set.seqs.size()) throw std::invalid_argument("evaluate: label count mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < set.seqs.size(); ++i) {
        const std::vector<double> y = predict(set.seqs[i], net, head);
        if (head.config().task == TaskKind::Regression) {
            double err = 0.0;
            for (std::size_t j = 0; j < y.size(); ++j) err += std::abs(y[j] - set.labels[i][j]);
            total += err / static_cast<double>(y.size());
        } else {
            const auto best = static_cast<double>(std::max_element(y.begin(), y.end()) - y.begin());
            total += best == set.labels[i][0] ? 1.0 : 0.0;
        }
    }
    return total / static_cast<double>(set.seqs.size());
}

std::vector<FinetuneEpoch> run_finetune(Denoiser& net, PredictionHead& head, const LabeledSet& train,
                                        const LabeledSet* valid, const FinetuneConfig& config,
                                        const std::function<void(const FinetuneEpoch&)>& on_epoch) {
    if (train.seqs.empty() || train.labels.size() != train.seqs.size())
        throw std::invalid_argument("run_finetune: training set is empty or mislabelled");
    if (config.batch_size == 0 || config.epochs < 1) throw std::invalid_argument("run_finetune: bad batch size or epochs");
    validate_targets(train.labels, head.config());
    if (valid) validate_targets(valid->labels, head.config());
    head.fit_standardization(train.labels);

    const Vocabulary& vocab = build_vocabulary();
    const bool regression = head.config().task == TaskKind::Regression;
    AdamWConfig opt_cfg;
    opt_cfg.weight_decay = config.weight_decay;
    AdamW net_opt(opt_cfg), head_opt(opt_cfg);
    PlateauDecay plateau(config.decay_factor, config.patience, config.lr_floor, regression);
    const std::optional<std::size_t> global_len =
        config.padding == PaddingStrategy::Global ? std::optional<std::size_t>(config.max_len) : std::nullopt;

    std::vector<std::size_t> order(train.seqs.size());
    std::vector<FinetuneEpoch> history;
    double lr = config.lr;
    std::int64_t step = 0;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle = Rng(config.seed).derive(0x5eed0000ULL + static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), shuffle.engine());
        double loss_sum = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            std::vector<TokenSequence> seqs;
            std::vector<Labels> labels;
            for (std::size_t i = start; i < end; ++i) {
                seqs.push_back(train.seqs[order[i]]);
                labels.push_back(train.labels[order[i]]);
            }
            const PaddedBatch batch = pad_batch(seqs, config.padding, global_len, vocab);
            Binding net_binding(net.params(), !config.freeze_backbone);
            Binding head_binding(head.params(), true);
            FinetuneStepOptions so;
            so.dropout = config.dropout;
            LossStep ls = finetune_step(batch, labels, net, net_binding, head, head_binding, so,
                                        Rng(config.seed).derive(static_cast<std::uint64_t>(step)));
            ag::backward(ls.loss);
            const double step_lr =
                step < config.warmup_steps ? warmup_lr(step, config.warmup_steps, config.warmup_start, lr) : lr;
            if (!config.freeze_backbone) net_opt.step(net.mutable_params().values(), net_binding.gradients(), step_lr);
            head_opt.step(head.mutable_params().values(), head_binding.gradients(), step_lr);
            loss_sum += ls.value;
            ++n_batches;
            ++step;
        }
        FinetuneEpoch rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(n_batches);
        rec.metric = evaluate(net, head, valid ? *valid : train);
        rec.lr = lr;
        if (step >= config.warmup_steps) lr = plateau.update(rec.metric, lr);
        history.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return history;
}

}  // namespace chembfn
