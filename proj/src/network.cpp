#include "chembfn/network.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace chembfn {

double NetworkConfig::temperature() const {
    if (attention_temperature > 0.0) return attention_temperature;
    return std::sqrt(2.0 * static_cast<double>(head_dim()));
}

void NetworkConfig::validate() const {
    if (n_layers < 1 || n_heads < 1 || hidden_dim < 1)
        throw std::invalid_argument("network: layers, heads and hidden_dim must be positive");
    if (hidden_dim % n_heads != 0)
        throw std::invalid_argument("network: hidden_dim must be divisible by n_heads");
    if (head_dim() % 2 != 0) throw std::invalid_argument("network: head_dim must be even for rotary encoding");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("network: dropout must lie in [0, 1)");
    if (k_categories < 2) throw std::invalid_argument("network: K must be >= 2");
    if (label_dim < 0) throw std::invalid_argument("network: label_dim must be >= 0");
    if (!(temperature() > 0.0)) throw std::invalid_argument("network: attention temperature must be positive");
}

NetworkConfig NetworkConfig::paper_scale(int k_categories) {
    NetworkConfig c;
    c.n_layers = 12;
    c.n_heads = 8;
    c.hidden_dim = 512;
    c.dropout = 0.01;
    c.k_categories = k_categories;
    return c;
}

RotaryTables make_xpos_tables(std::size_t length, std::size_t head_dim, const NetworkConfig& config,
                              std::size_t position_offset) {
    const std::size_t half = head_dim / 2;
    RotaryTables t{Matrix(length, half), Matrix(length, half), Matrix(length, half), Matrix(length, half)};
    const double d = static_cast<double>(head_dim);
    for (std::size_t i = 0; i < half; ++i) {
        const double omega = std::pow(config.rope_base, -static_cast<double>(i) / static_cast<double>(half));
        const double zeta = (2.0 * static_cast<double>(i) + config.xpos_gamma * d) / ((1.0 + config.xpos_gamma) * d);
        for (std::size_t n = 0; n < length; ++n) {
            const double pos = static_cast<double>(n + position_offset);
            const double angle = pos * omega;
            const double up = std::pow(zeta, pos / config.xpos_scale_base);
            const double down = 1.0 / up;
            t.q_cos(n, i) = std::cos(angle) * up;
            t.q_sin(n, i) = std::sin(angle) * up;
            t.k_cos(n, i) = std::cos(angle) * down;
            t.k_sin(n, i) = std::sin(angle) * down;
        }
    }
    return t;
}

ag::Var multi_head_attention(const ag::Var& q, const ag::Var& k, const ag::Var& v, std::size_t heads,
                             double temperature, const RotaryTables& tables,
                             const std::vector<bool>* key_mask, AttentionTrace* trace) {
    const std::size_t len = q.rows();
    const std::size_t hidden = q.cols();
    const std::size_t dh = hidden / heads;
    std::optional<Matrix> mask_bias;
    if (key_mask) {
        if (key_mask->size() != len) throw ShapeError("attention mask length does not match sequence");
        mask_bias.emplace(len, len, 0.0);
        for (std::size_t r = 0; r < len; ++r)
            for (std::size_t c = 0; c < len; ++c)
                if (!(*key_mask)[c]) (*mask_bias)(r, c) = -std::numeric_limits<double>::infinity();
    }
    std::vector<ag::Var> outputs;
    outputs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        auto qh = ag::rotate_pairs(ag::slice_cols(q, h * dh, dh), tables.q_cos, tables.q_sin);
        auto kh = ag::rotate_pairs(ag::slice_cols(k, h * dh, dh), tables.k_cos, tables.k_sin);
        auto vh = ag::slice_cols(v, h * dh, dh);
        auto scores = ag::scale(ag::matmul_nt(qh, kh), 1.0 / temperature);
        if (mask_bias) scores = ag::add_const(scores, *mask_bias);
        auto probs = ag::softmax_rows(scores);
        if (trace) {
            trace->scores.push_back(scores.value());
            trace->probs.push_back(probs.value());
        }
        outputs.push_back(ag::matmul(probs, vh));
    }
    return ag::concat_cols(outputs);
}

Denoiser::Denoiser(NetworkConfig config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(seed);
    build_layout(&rng);
}

Denoiser::Denoiser(NetworkConfig config, ParamStore params) : config_(config) {
    config_.validate();
    build_layout(nullptr);
    if (params.size() != params_.size())
        throw std::invalid_argument("parameter count does not match the network layout");
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const std::size_t j = params.index_of(params_.name(i));
        if (!params.value(j).same_shape(params_.value(i)))
            throw ShapeError("parameter '" + params_.name(i) + "' has shape " +
                             params.value(j).shape_string() + ", expected " + params_.value(i).shape_string());
        params_.value(i) = params.value(j);
    }
}

std::size_t Denoiser::add_linear(const std::string& name, int fan_in, int fan_out, Rng* rng,
                                 bool zero_weight, double weight_std) {
    Matrix w(static_cast<std::size_t>(fan_in), static_cast<std::size_t>(fan_out));
    if (rng && !zero_weight) {
        const double std = weight_std > 0.0 ? weight_std : 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double& x : w.storage()) x = std * rng->normal();
    }
    const std::size_t wi = params_.add(name + ".weight", std::move(w));
    params_.add(name + ".bias", Matrix(1, static_cast<std::size_t>(fan_out)));
    return wi;
}

void Denoiser::build_layout(Rng* rng) {
    const int h = config_.hidden_dim;
    // Rows of the input projection act as token embeddings (a one-hot row
    // selects one), so they get unit-variance init instead of fan-in scaling;
    // otherwise near-uniform rows project to ~K^-1 magnitudes that the input
    // bias swamps after a few updates.
    in_w_ = add_linear("input", config_.k_categories, h, rng, false, 1.0);
    in_b_ = in_w_ + 1;
    time1_w_ = add_linear("time.fc1", 1, config_.time_hidden, rng, false);
    time1_b_ = time1_w_ + 1;
    time2_w_ = add_linear("time.fc2", config_.time_hidden, h, rng, false);
    time2_b_ = time2_w_ + 1;
    for (int l = 0; l < config_.n_layers; ++l) {
        const std::string p = "blocks." + std::to_string(l) + ".";
        BlockIds b{};
        b.mod_w = add_linear(p + "modulation", h, 6 * h, rng, true);
        b.mod_b = b.mod_w + 1;
        b.qkv_w = add_linear(p + "attn.qkv", h, 3 * h, rng, false);
        b.qkv_b = b.qkv_w + 1;
        b.out_w = add_linear(p + "attn.out", h, h, rng, false);
        b.out_b = b.out_w + 1;
        b.fc1_w = add_linear(p + "ffn.fc1", h, config_.ffn_width(), rng, false);
        b.fc1_b = b.fc1_w + 1;
        b.fc2_w = add_linear(p + "ffn.fc2", config_.ffn_width(), h, rng, false);
        b.fc2_b = b.fc2_w + 1;
        blocks_.push_back(b);
    }
    final_mod_w_ = add_linear("final.modulation", h, 2 * h, rng, true);
    final_mod_b_ = final_mod_w_ + 1;
    out_w_ = add_linear("output", h, config_.k_categories, rng, false);
    out_b_ = out_w_ + 1;
    if (config_.label_dim > 0) {
        label1_w_ = add_linear("label.fc1", config_.label_dim, config_.label_hidden, rng, false);
        label1_b_ = label1_w_ + 1;
        label2_w_ = add_linear("label.fc2", config_.label_hidden, h, rng, false);
        label2_b_ = label2_w_ + 1;
    }
}

void Denoiser::randomize(std::uint64_t seed, double scale) {
    Rng rng(seed);
    for (auto& m : params_.values())
        for (double& x : m.storage()) x = scale * rng.normal();
}

ag::Var Denoiser::time_embed(double t, Binding& binding) const {
    if (!(t >= 0.0 && t <= 1.0)) throw std::domain_error("time_embed: t must lie in [0, 1]");
    auto x = ag::constant(Matrix(1, 1, t));
    auto hdn = ag::selu(ag::affine(x, binding.get(time1_w_), binding.get(time1_b_)));
    return ag::affine(hdn, binding.get(time2_w_), binding.get(time2_b_));
}

std::optional<ag::Var> Denoiser::condition_embed(const std::optional<Labels>& labels,
                                                 Binding& binding) const {
    if (!labels) return std::nullopt;
    if (config_.label_dim == 0 || labels->size() != static_cast<std::size_t>(config_.label_dim)) {
        throw ShapeError("condition_embed: got " + std::to_string(labels->size()) +
                         " labels, model expects " + std::to_string(config_.label_dim));
    }
    auto x = ag::constant(Matrix::row_vector(*labels));
    auto hdn = ag::selu(ag::affine(x, binding.get(label1_w_), binding.get(label1_b_)));
    return ag::affine(hdn, binding.get(label2_w_), binding.get(label2_b_));
}

std::vector<double> Denoiser::time_embedding(double t) const {
    Binding binding(params_, false);
    return time_embed(t, binding).value().storage();
}

std::vector<double> Denoiser::condition_embedding(const std::optional<Labels>& labels) const {
    Binding binding(params_, false);
    auto c = condition_embed(labels, binding);
    if (!c) return std::vector<double>(static_cast<std::size_t>(config_.hidden_dim), 0.0);
    return c->value().storage();
}

namespace {

ag::Var modulate(const ag::Var& x, const ag::Var& shift, const ag::Var& scale_minus_one) {
    auto scale = ag::add_const(scale_minus_one, Matrix(1, scale_minus_one.cols(), 1.0));
    return ag::add_row(ag::mul_row(x, scale), shift);
}

}  // namespace

ForwardResult Denoiser::forward(const Matrix& input, double t, const std::optional<Labels>& labels,
                                Binding& binding, const ForwardOptions& options) const {
    if (input.cols() != static_cast<std::size_t>(config_.k_categories) || input.rows() == 0) {
        throw ShapeError("Denoiser::forward: input " + input.shape_string() + " expects K=" +
                         std::to_string(config_.k_categories));
    }
    const std::size_t len = input.rows();
    const std::size_t h = static_cast<std::size_t>(config_.hidden_dim);
    const RotaryTables tables = make_xpos_tables(len, static_cast<std::size_t>(config_.head_dim()), config_);

    auto x = ag::affine(ag::constant(input), binding.get(in_w_), binding.get(in_b_));
    auto c = time_embed(t, binding);
    if (auto cond = condition_embed(labels, binding)) c = ag::add(c, *cond);
    auto c_act = ag::selu(c);

    for (const auto& b : blocks_) {
        auto mod = ag::affine(c_act, binding.get(b.mod_w), binding.get(b.mod_b));
        auto shift_attn = ag::slice_cols(mod, 0, h);
        auto scale_attn = ag::slice_cols(mod, h, h);
        auto gate_attn = ag::slice_cols(mod, 2 * h, h);
        auto shift_ffn = ag::slice_cols(mod, 3 * h, h);
        auto scale_ffn = ag::slice_cols(mod, 4 * h, h);
        auto gate_ffn = ag::slice_cols(mod, 5 * h, h);

        auto hn = modulate(ag::layer_norm_rows(x, config_.norm_eps), shift_attn, scale_attn);
        auto qkv = ag::affine(hn, binding.get(b.qkv_w), binding.get(b.qkv_b));
        auto attn = multi_head_attention(ag::slice_cols(qkv, 0, h), ag::slice_cols(qkv, h, h),
                                         ag::slice_cols(qkv, 2 * h, h),
                                         static_cast<std::size_t>(config_.n_heads), config_.temperature(),
                                         tables, options.attention_mask);
        attn = ag::affine(attn, binding.get(b.out_w), binding.get(b.out_b));
        x = ag::add(x, ag::mul_row(attn, gate_attn));

        hn = modulate(ag::layer_norm_rows(x, config_.norm_eps), shift_ffn, scale_ffn);
        auto f = ag::selu(ag::affine(hn, binding.get(b.fc1_w), binding.get(b.fc1_b)));
        if (options.dropout_rng && config_.dropout > 0.0) {
            Matrix keep(f.rows(), f.cols());
            const double inv = 1.0 / (1.0 - config_.dropout);
            for (double& m : keep.storage()) m = options.dropout_rng->bernoulli(config_.dropout) ? 0.0 : inv;
            f = ag::mul_const(f, keep);
        }
        f = ag::affine(f, binding.get(b.fc2_w), binding.get(b.fc2_b));
        x = ag::add(x, ag::mul_row(f, gate_ffn));
    }

    auto fmod = ag::affine(c_act, binding.get(final_mod_w_), binding.get(final_mod_b_));
    auto hidden = modulate(ag::layer_norm_rows(x, config_.norm_eps), ag::slice_cols(fmod, 0, h),
                           ag::slice_cols(fmod, h, h));
    if (options.hidden_only) return {ag::Var(), hidden};
    auto logits = ag::affine(hidden, binding.get(out_w_), binding.get(out_b_));
    return {logits, hidden};
}

}  // namespace chembfn
