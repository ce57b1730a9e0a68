#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "chembfn/finetune.hpp"
#include "chembfn/network.hpp"
#include "chembfn/schedule.hpp"
#include "chembfn/tokenizer.hpp"

namespace chembfn {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct ScheduleSection {
    ScheduleKind kind = ScheduleKind::LogForm;
    double beta1 = 0.0;  // ignored while use_beta_max is set
    bool use_beta_max = true;
    bool enforce_cap = true;
};

struct TrainingSection {
    int epochs = 200;
    std::int64_t max_steps = 0;  // 0 = run all epochs
    std::size_t batch_size = 16;
    double lr = 1e-3;
    std::int64_t warmup_steps = 100;
    double warmup_start = 1e-8;
    double weight_decay = 0.01;
    double clip_norm = 0.0;  // 0 = no clipping
    double p_uncond = 0.2;
    std::uint64_t seed = 0;
    int checkpoint_every = 50;  // epochs
};

struct SamplingSection {
    int steps = 100;
    std::size_t n = 100;
    double guidance_w = 0.0;
    std::size_t seq_len = 0;  // 0 = longest training sequence
    std::uint64_t seed = 0;
};

struct DataSection {
    PaddingStrategy padding = PaddingStrategy::Dynamic;
    std::size_t max_len = 0;  // required for global padding
    std::string label_columns;  // comma-separated; empty = all non-smiles columns
};

struct FinetuneSection {
    TaskKind task = TaskKind::Regression;
    int epochs = 100;
    std::size_t batch_size = 32;
    double lr = 1e-4;
    std::int64_t warmup_steps = 100;
    double warmup_start = 1e-7;
    int head_hidden = 256;
    double head_dropout = 0.0;
    bool dropout = false;
    bool freeze_backbone = false;
    int patience = 20;
    double decay = 0.2;
    double lr_floor = 1e-6;
};

// Resolved run configuration. Files use INI syntax with sections
// [schedule] [network] [training] [sampling] [data] [finetune]; every key
// has a default and unknown keys are rejected.
struct RunConfig {
    ScheduleSection schedule;
    NetworkConfig network;
    TrainingSection training;
    SamplingSection sampling;
    DataSection data;
    FinetuneSection finetune;

    // Sets "section.key" from text; throws ConfigError on unknown keys or
    // unparsable values.
    void set(const std::string& dotted_key, const std::string& value);
    std::string get(const std::string& dotted_key) const;
    static const std::vector<std::string>& keys();

    void load_file(const std::string& path);
    // INI text with every key, suitable for load_file.
    std::string to_ini() const;

    ScheduleParams schedule_params() const;
    void validate() const;

    // "desk" (defaults) or "paper_scale".
    static RunConfig profile(const std::string& name);
};

}  // namespace chembfn
