#pragma once

// End-to-end orchestration: dataset loading, representation caching, the
// two training stages, inference, and evaluation metrics.

#include <optional>
#include <string>
#include <vector>

#include "tryon/checkpoint.hpp"
#include "tryon/coarse.hpp"
#include "tryon/config.hpp"
#include "tryon/fixtures.hpp"
#include "tryon/refine.hpp"
#include "tryon/tps.hpp"

namespace tryon {

struct TryOnSample {
    Tensor<float> image;          // reference I [3,h,w]
    Tensor<float> product;        // clothing c [3,h,w]
    PoseKeypoints keypoints;
    ParseMap parse;
    Tensor<float> clothing_mask;  // M0 [1,h,w], upper-clothes label of parse
};

int count_samples(const std::string& data_dir);
TryOnSample load_sample(const std::string& data_dir, int index);

struct PreparedSample {
    Tensor<float> rep;  // p [22,m,n]
    Tensor<float> m0;   // [1,m,n]
};

// Builds p and M0 at the working resolution (resampling inputs as needed).
PreparedSample prepare_sample(const TryOnSample& s, int m, int n);

// Caches prepared samples under data_dir/prep/ in the checkpoint container.
void prepare_dataset(const PipelineConfig& cfg);

// Stage 1: trains the coarse generator, writes out_dir/coarse.ckpt and a
// line-delimited loss log.
void train_coarse(const PipelineConfig& cfg);

// Stage 2: freezes the loaded coarse generator, precomputes warped clothing
// per sample, trains the refinement net, writes out_dir/refine.ckpt.
void train_refine(const PipelineConfig& cfg);

// Both stages in sequence.
void train_full(const PipelineConfig& cfg);

struct InferenceResult {
    Tensor<float> rep;           // p [22,m,n]
    Tensor<float> coarse_image;  // I' [3,m,n]
    Tensor<float> coarse_mask;   // M [1,m,n]
    Tensor<float> warped;        // c' [3,m,n]
    Tensor<float> alpha;         // [1,m,n]
    Tensor<float> final_image;   // I_hat [3,m,n]
    std::string warning;         // set when the warp stage fell back to I'
};

// Full coarse -> warp -> refine -> composite pass for one sample. An empty
// predicted mask degrades to I_hat = I' with a warning. force_alpha, when
// set, overrides the predicted composition mask with a constant (test hook).
InferenceResult run_inference(const TryOnSample& sample, const Tensor<float>& target_product,
                              CoarseGenerator<float>& gen, const RefinementNet<float>& net,
                              const PipelineConfig& cfg,
                              std::optional<float> force_alpha = std::nullopt);

struct EvalSample {
    Tensor<float> final_image;    // I_hat
    Tensor<float> reference;      // I
    Tensor<float> predicted_mask; // M
    Tensor<float> truth_mask;     // M0
};

struct Metrics {
    double mae = 0.0;
    double mae_clothing = 0.0;
    double psnr = 0.0;  // capped at 99 dB for exact matches
    double mask_iou = 0.0;
};

Metrics evaluate(const std::vector<EvalSample>& results);

// Checkpoint glue for the two networks.
void save_coarse_checkpoint(const std::string& path, CoarseGenerator<float>& gen,
                            const AdamState<float>* opt, std::uint64_t step, std::uint64_t seed);
void load_coarse_checkpoint(const std::string& path, CoarseGenerator<float>& gen);
void save_refine_checkpoint(const std::string& path, RefinementNet<float>& net,
                            const AdamState<float>* opt, std::uint64_t step, std::uint64_t seed);
void load_refine_checkpoint(const std::string& path, RefinementNet<float>& net);

// Utility: resize a [C,H,W] tensor bilinearly / stack samples into a batch.
Tensor<float> resize_chw(const Tensor<float>& t, int out_h, int out_w);
Tensor<float> stack_batch(const std::vector<Tensor<float>>& samples, const std::vector<int>& idx);

}  // namespace tryon
