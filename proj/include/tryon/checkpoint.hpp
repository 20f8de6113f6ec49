#pragma once

// Binary checkpoint container: named float32 tensors plus optional Adam
// state, global step and RNG seed. Little-endian, byte-stable round trips.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tryon/nn.hpp"

namespace tryon {

inline constexpr char kCheckpointMagic[8] = {'T', 'R', 'Y', 'O', 'N', 'C', 'K', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
    std::string name;
    std::vector<int> shape;
    std::vector<float> data;
};

struct OptimizerRecord {
    std::uint64_t step_count = 0;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double learning_rate = 0.0002;
    // first/second moments keyed by parameter name, in parameter order
    std::vector<NamedArray> first_moment;
    std::vector<NamedArray> second_moment;
};

struct Checkpoint {
    std::uint64_t global_step = 0;
    std::uint64_t rng_seed = 0;
    std::vector<NamedArray> tensors;
    std::optional<OptimizerRecord> optimizer;

    const NamedArray* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

// Binding helpers between models and checkpoints.
Checkpoint snapshot_model(const std::vector<NamedParam<float>>& params,
                          const std::vector<NamedBuffer<float>>& buffers,
                          std::uint64_t global_step, std::uint64_t rng_seed,
                          const AdamState<float>* opt,
                          const std::vector<std::string>* opt_param_names);

// Restores values into existing tensors/buffers; every checkpoint tensor
// must match a known name and shape.
void restore_model(const Checkpoint& ck, std::vector<NamedParam<float>>& params,
                   std::vector<NamedBuffer<float>>& buffers);

}  // namespace tryon
