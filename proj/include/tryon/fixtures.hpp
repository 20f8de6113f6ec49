#pragma once

// Procedural paired fixtures: a stylized person wearing a patterned garment
// plus the matching flat product image on white, with consistent keypoints
// and parse labels. Stands in for a crawled dataset so the pipeline can be
// trained and verified end to end.

#include <cstdint>
#include <string>

#include "tryon/image.hpp"
#include "tryon/person.hpp"

namespace tryon {

struct FixtureSample {
    Tensor<float> image;    // person I [3,m,n]
    Tensor<float> product;  // clothing c [3,m,n]
    PoseKeypoints keypoints;
    ParseMap parse;
};

// Renders one deterministic sample: rng state depends only on (seed, index).
FixtureSample render_fixture(std::uint64_t seed, int index, int m, int n);

// Writes `count` samples into out_dir as %04d_{image,product,parse}.png and
// %04d_keypoints.json.
void generate_fixtures(int count, std::uint64_t seed, int m, int n, const std::string& out_dir);

}  // namespace tryon
