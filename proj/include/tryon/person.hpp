#pragma once

// Clothing-agnostic person representation: 18 binary pose-keypoint heatmap
// channels, one coarse body-shape channel, three face/hair RGB channels,
// stacked channel-first at the working resolution.

#include <array>
#include <string>

#include "tryon/image.hpp"
#include "tryon/tensor.hpp"

namespace tryon {

inline constexpr int kPoseKeypointCount = 18;
inline constexpr int kHeatmapRadius = 5;  // 11x11 block
inline constexpr int kBodyMaskRows = 16;
inline constexpr int kBodyMaskCols = 12;

struct PoseKeypoints {
    struct Point {
        double x = 0.0;  // column, pixels
        double y = 0.0;  // row, pixels
        double confidence = 0.0;  // 0 marks a missing joint
    };
    std::array<Point, kPoseKeypointCount> points{};
};

// JSON array of 18 [x, y, confidence] triples.
PoseKeypoints load_keypoints_json(const std::string& path);
void save_keypoints_json(const std::string& path, const PoseKeypoints& kp);

// Channel i holds ones on the 11x11 block centered on keypoint i (rounded
// half-up, clipped at borders); zero channel for missing keypoints.
Tensor<float> build_pose_heatmap(const PoseKeypoints& kp, int m, int n);

// Body mask (everything except face/hair/background), pooled to 16x12 by
// block majority vote and brought back to m x n by nearest neighbor.
Tensor<float> build_body_mask(const ParseMap& parse, int m, int n);

// RGB copied where the parse says face or hair, zero elsewhere.
Tensor<float> extract_face_hair(const ParseMap& parse, const Tensor<float>& image);

// Stacks pose (0-17), body (18), face/hair (19-21) into [22,m,n].
Tensor<float> assemble_representation(const Tensor<float>& pose, const Tensor<float>& body,
                                      const Tensor<float>& face_hair);

// Pseudo ground-truth clothing mask: the upper-clothes parse label.
Tensor<float> clothing_mask_from_parse(const ParseMap& parse);

}  // namespace tryon
