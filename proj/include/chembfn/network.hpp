#pragma once

#include <optional>
#include <vector>

#include "chembfn/model.hpp"

namespace chembfn {

struct NetworkConfig {
    int n_layers = 4;
    int n_heads = 4;
    int hidden_dim = 128;
    int ffn_dim = 0;  // 0 selects 4 * hidden_dim
    double dropout = 0.01;
    int k_categories = 246;
    int time_hidden = 256;
    int label_dim = 0;  // 0 = unconditional model
    int label_hidden = 256;
    double attention_temperature = 0.0;  // 0 selects sqrt(2 * head_dim)
    double xpos_scale_base = 512.0;
    double xpos_gamma = 0.4;
    double rope_base = 10000.0;
    double norm_eps = 1e-6;

    int head_dim() const { return hidden_dim / n_heads; }
    int ffn_width() const { return ffn_dim > 0 ? ffn_dim : 4 * hidden_dim; }
    double temperature() const;
    void validate() const;

    // 12 layers, 8 heads, hidden 512, dropout 0.01.
    static NetworkConfig paper_scale(int k_categories);
};

// Rotary tables with the length-extrapolation decay folded in: queries at
// position n are rotated by n*omega_i and scaled by zeta_i^(n/scale_base),
// keys by zeta_i^(-m/scale_base), so q.k picks up zeta_i^((n-m)/scale_base).
struct RotaryTables {
    Matrix q_cos, q_sin, k_cos, k_sin;  // length x head_dim/2
};

RotaryTables make_xpos_tables(std::size_t length, std::size_t head_dim, const NetworkConfig& config,
                              std::size_t position_offset = 0);

struct AttentionTrace {
    std::vector<Matrix> scores;  // per head, after the 1/temperature scaling
    std::vector<Matrix> probs;
};

// Bidirectional multi-head attention on projected q, k, v (D x hidden).
ag::Var multi_head_attention(const ag::Var& q, const ag::Var& k, const ag::Var& v, std::size_t heads,
                             double temperature, const RotaryTables& tables,
                             const std::vector<bool>* key_mask, AttentionTrace* trace = nullptr);

// Transformer denoiser with adaLN-style conditioning. Each block computes
// shift/scale/gate pairs from c = time_embed(t) + condition_embed(labels).
class Denoiser final : public Model {
public:
    Denoiser(NetworkConfig config, std::uint64_t seed);
    // Rebuilds the parameter layout for `config` and adopts stored values.
    Denoiser(NetworkConfig config, ParamStore params);

    const NetworkConfig& config() const noexcept { return config_; }
    int categories() const override { return config_.k_categories; }
    std::size_t label_dim() const override { return static_cast<std::size_t>(config_.label_dim); }
    const ParamStore& params() const override { return params_; }
    ParamStore& mutable_params() noexcept { return params_; }

    ForwardResult forward(const Matrix& input, double t, const std::optional<Labels>& labels,
                          Binding& binding, const ForwardOptions& options) const override;

    ag::Var time_embed(double t, Binding& binding) const;
    // Null labels yield no variable; the caller treats that as the zero vector.
    std::optional<ag::Var> condition_embed(const std::optional<Labels>& labels, Binding& binding) const;

    std::vector<double> time_embedding(double t) const;
    std::vector<double> condition_embedding(const std::optional<Labels>& labels) const;

    // Overwrite every tensor (gates and output bias included) with N(0, s^2).
    void randomize(std::uint64_t seed, double scale);

private:
    struct BlockIds {
        std::size_t mod_w, mod_b, qkv_w, qkv_b, out_w, out_b, fc1_w, fc1_b, fc2_w, fc2_b;
    };

    void build_layout(Rng* init_rng);
    // weight_std <= 0 selects 1/sqrt(fan_in).
    std::size_t add_linear(const std::string& name, int fan_in, int fan_out, Rng* rng, bool zero_weight,
                           double weight_std = 0.0);

    NetworkConfig config_;
    ParamStore params_;
    std::size_t in_w_ = 0, in_b_ = 0;
    std::size_t time1_w_ = 0, time1_b_ = 0, time2_w_ = 0, time2_b_ = 0;
    std::size_t label1_w_ = 0, label1_b_ = 0, label2_w_ = 0, label2_b_ = 0;
    std::vector<BlockIds> blocks_;
    std::size_t final_mod_w_ = 0, final_mod_b_ = 0, out_w_ = 0, out_b_ = 0;
};

}  // namespace chembfn
