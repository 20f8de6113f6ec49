#pragma once

// Pipeline configuration: a flat key=value UTF-8 file, overridable from the
// command line. Defaults follow the full-scale training setup; the shipped
// desk.cfg scales everything down for CPU runs.

#include <cstdint>
#include <string>
#include <vector>

#include "tryon/common.hpp"

namespace tryon {

struct PipelineConfig {
    int height = 256;  // m
    int width = 192;   // n
    double width_mult = 1.0;
    double perception_width_mult = 1.0;
    int contour_points = 96;
    double tps_lambda = 1.0;
    double lambda_warp = 0.1;
    double lambda_tv = 5e-6;
    int coarse_steps = 15000;
    int refine_steps = 6000;
    int batch_size = 16;
    double learning_rate = 0.0002;
    double beta1 = 0.5;
    double beta2 = 0.999;
    std::uint64_t seed = 1;
    int fixture_count = 16;
    bool eval_shuffled = false;  // matched pairs are the synthetic headline metric
    std::string data_dir = "data";
    std::string out_dir = "out";

    void validate() const;
    void set(const std::string& key, const std::string& value);
    std::string dump() const;
};

PipelineConfig load_config(const std::string& path);
// Applies key=value override strings on top of a config.
void apply_overrides(PipelineConfig& cfg, const std::vector<std::string>& overrides);

}  // namespace tryon
