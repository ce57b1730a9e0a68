#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "chembfn/finetune.hpp"
#include "chembfn/matrix.hpp"
#include "chembfn/model.hpp"
#include "chembfn/network.hpp"
#include "chembfn/optimizer.hpp"
#include "chembfn/schedule.hpp"

namespace chembfn {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// In-memory image of a checkpoint file. `meta` is a JSON document; tensors
// keep their store order so optimizer moments line up by index.
struct CheckpointData {
    std::string kind;  // "denoiser" or "head"
    std::string meta;
    std::vector<std::pair<std::string, Matrix>> tensors;
    std::optional<AdamWState> optimizer;
};

void write_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData read_checkpoint(const std::string& path);

// Training progress stored alongside the weights so a resumed run picks up
// the same RNG substreams and learning-rate position.
struct TrainProgress {
    std::int64_t step = 0;
    int epoch = 0;
    std::uint64_t seed = 0;
    std::size_t seq_len = 0;  // longest padded training length seen
};

struct DenoiserCheckpoint {
    NetworkConfig network;
    ScheduleParams schedule;
    std::string vocab_hash;
    TrainProgress progress;
    ParamStore params;
    std::optional<AdamWState> optimizer;
};

void save_denoiser(const std::string& path, const Denoiser& net, const ScheduleParams& schedule,
                   const TrainProgress& progress, const AdamWState* optimizer);
// Throws CheckpointError when the stored vocabulary hash differs from the
// built-in vocabulary.
DenoiserCheckpoint load_denoiser(const std::string& path);

struct HeadCheckpoint {
    HeadConfig config;
    std::vector<double> target_mean;
    std::vector<double> target_std;
    std::string vocab_hash;
    ParamStore head_params;
    ParamStore backbone_params;
    NetworkConfig network;
};

// Stores the head together with the (possibly fine-tuned) backbone.
void save_head(const std::string& path, const PredictionHead& head, const Denoiser& backbone);
HeadCheckpoint load_head(const std::string& path);

}  // namespace chembfn
