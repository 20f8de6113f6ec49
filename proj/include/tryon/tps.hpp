#pragma once

// Shape-context-matched thin-plate-spline warping: foreground extraction,
// contour sampling, log-polar descriptors, chi-squared matching costs,
// optimal assignment, TPS fitting (target -> source, so the warp is applied
// as a backward map) and the composed clothing warp.

#include <array>
#include <vector>

#include "tryon/tensor.hpp"

namespace tryon {

inline constexpr int kShapeContextRadialBins = 5;
inline constexpr int kShapeContextAngularBins = 12;
inline constexpr int kContourPointsDefault = 96;
inline constexpr double kTpsLambdaDefault = 1.0;
inline constexpr double kForegroundThreshold = 0.92;

struct BinaryMask {
    int h = 0, w = 0;
    std::vector<std::uint8_t> v;  // row-major, 0/1

    std::uint8_t at(int r, int c) const {
        return v[static_cast<std::size_t>(r) * static_cast<std::size_t>(w) +
                 static_cast<std::size_t>(c)];
    }
};

struct ContourPoints {
    std::vector<std::array<double, 2>> pts;  // (x, y) pixel coordinates, contour order
    int size() const { return static_cast<int>(pts.size()); }
};

struct ShapeContextDescriptor {
    std::array<int, kShapeContextRadialBins * kShapeContextAngularBins> bins{};
};

struct TpsTransform {
    std::vector<std::array<double, 2>> control_points;  // on the target mask contour
    std::array<double, 6> affine{1, 0, 0, 0, 1, 0};     // row-major 2x3 [a00 a01 tx; a10 a11 ty]
    std::vector<std::array<double, 2>> warp_weights;    // kernel weights per control point
    double regularization = 0.0;

    // Evaluates the map at output-space (x, y), yielding source coordinates.
    std::array<double, 2> map(double x, double y) const;
};

// Foreground = pixels whose min channel is below the near-white threshold,
// restricted to the largest 4-connected component. Throws if empty.
BinaryMask extract_foreground_mask(const Tensor<float>& product);

// Thresholds a [1,H,W] mask tensor at 0.5.
BinaryMask threshold_mask(const Tensor<float>& mask);

// K points at equal arc-length spacing along the traced outer boundary of
// the largest component.
ContourPoints sample_contour_points(const BinaryMask& mask, int k);

ShapeContextDescriptor shape_context(const ContourPoints& points, int index);
std::vector<ShapeContextDescriptor> shape_context_all(const ContourPoints& points);

// chi-squared cost between normalized histograms, K x K row-major.
std::vector<double> matching_cost_matrix(const std::vector<ShapeContextDescriptor>& src,
                                         const std::vector<ShapeContextDescriptor>& dst);

// Kuhn-Munkres optimal assignment; perm[i] is the column matched to row i.
std::vector<int> hungarian_assign(const std::vector<double>& cost, int rows, int cols);

// Fits f(src[i]) ~ dst[correspondence[i]] with regularization lambda applied
// in bbox-normalized coordinates, returning pixel-space coefficients.
TpsTransform fit_tps(const ContourPoints& src, const ContourPoints& dst,
                     const std::vector<int>& correspondence, double lambda);

struct WarpResult {
    Tensor<float> image;  // [3,out_h,out_w], zero fill outside the source
    BinaryMask mask;      // warped foreground, nearest-neighbor
};

WarpResult apply_tps_warp(const Tensor<float>& product, const BinaryMask& foreground,
                          const TpsTransform& transform, int out_h, int out_w);

// The composed stage: threshold M, extract both contours, match shape
// contexts, fit target->source TPS, and resample the product image.
Tensor<float> warp_clothing(const Tensor<float>& product, const Tensor<float>& predicted_mask,
                            int k, double lambda, int out_h, int out_w);

}  // namespace tryon
