#include "tryon/person.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace tryon {

PoseKeypoints load_keypoints_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open keypoints file: ", path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        fail("invalid keypoints JSON in ", path, ": ", e.what());
    }
    if (!j.is_array() || j.size() != kPoseKeypointCount)
        fail("keypoints file ", path, ": expected array of ", kPoseKeypointCount,
             " entries, got ", j.is_array() ? j.size() : 0);
    PoseKeypoints kp;
    for (std::size_t i = 0; i < kPoseKeypointCount; ++i) {
        const auto& e = j[i];
        if (!e.is_array() || e.size() != 3)
            fail("keypoints file ", path, ": entry ", i, " is not an [x, y, confidence] triple");
        kp.points[i] = {e[0].get<double>(), e[1].get<double>(), e[2].get<double>()};
    }
    return kp;
}

void save_keypoints_json(const std::string& path, const PoseKeypoints& kp) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& p : kp.points) j.push_back({p.x, p.y, p.confidence});
    std::ofstream out(path);
    if (!out) fail("cannot write keypoints file: ", path);
    out << j.dump() << "\n";
}

Tensor<float> build_pose_heatmap(const PoseKeypoints& kp, int m, int n) {
    if (m <= 0 || n <= 0) fail("build_pose_heatmap: size must be positive");
    Tensor<float> out = Tensor<float>::zeros({kPoseKeypointCount, m, n});
    const std::size_t plane = static_cast<std::size_t>(m) * n;
    for (int i = 0; i < kPoseKeypointCount; ++i) {
        const auto& p = kp.points[static_cast<std::size_t>(i)];
        if (p.confidence <= 0.0) continue;
        const int cx = static_cast<int>(std::floor(p.x + 0.5));  // round half up
        const int cy = static_cast<int>(std::floor(p.y + 0.5));
        const int r0 = std::max(0, cy - kHeatmapRadius), r1 = std::min(m - 1, cy + kHeatmapRadius);
        const int c0 = std::max(0, cx - kHeatmapRadius), c1 = std::min(n - 1, cx + kHeatmapRadius);
        float* ch = out.data().data() + static_cast<std::size_t>(i) * plane;
        for (int r = r0; r <= r1; ++r)
            for (int c = c0; c <= c1; ++c)
                ch[static_cast<std::size_t>(r) * n + c] = 1.0f;
    }
    return out;
}

namespace {

bool is_body_label(std::uint8_t v) {
    return v == kParseUpperClothes || v == kParseArms || v == kParseLegs || v == kParseOtherBody;
}

}  // namespace

Tensor<float> build_body_mask(const ParseMap& parse, int m, int n) {
    if (parse.h <= 0 || parse.w <= 0) fail("build_body_mask: empty parse map");
    if (m <= 0 || n <= 0) fail("build_body_mask: size must be positive");
    // Majority vote into the 16x12 grid. Cell membership uses the same floor
    // mapping as the nearest-neighbor upsample, which makes the operation
    // idempotent on its own output.
    std::array<std::array<int, kBodyMaskCols>, kBodyMaskRows> ones{}, total{};
    for (int r = 0; r < parse.h; ++r) {
        const int br = static_cast<int>(static_cast<long long>(r) * kBodyMaskRows / parse.h);
        for (int c = 0; c < parse.w; ++c) {
            const int bc = static_cast<int>(static_cast<long long>(c) * kBodyMaskCols / parse.w);
            total[br][bc] += 1;
            if (is_body_label(parse.at(r, c))) ones[br][bc] += 1;
        }
    }
    std::array<std::array<float, kBodyMaskCols>, kBodyMaskRows> small{};
    for (int br = 0; br < kBodyMaskRows; ++br)
        for (int bc = 0; bc < kBodyMaskCols; ++bc)
            small[br][bc] = (total[br][bc] > 0 && 2 * ones[br][bc] >= total[br][bc]) ? 1.0f : 0.0f;

    Tensor<float> out = Tensor<float>::zeros({1, m, n});
    for (int r = 0; r < m; ++r) {
        const int br = static_cast<int>(static_cast<long long>(r) * kBodyMaskRows / m);
        for (int c = 0; c < n; ++c) {
            const int bc = static_cast<int>(static_cast<long long>(c) * kBodyMaskCols / n);
            out.data()[static_cast<std::size_t>(r) * n + c] = small[br][bc];
        }
    }
    return out;
}

Tensor<float> extract_face_hair(const ParseMap& parse, const Tensor<float>& image) {
    const auto& s = image.shape();
    if (s.size() != 3 || s[0] != 3) fail("extract_face_hair: image must be [3,H,W]");
    if (s[1] != parse.h || s[2] != parse.w)
        fail("extract_face_hair: parse ", parse.h, "x", parse.w, " does not match image ", s[1],
             "x", s[2]);
    Tensor<float> out = Tensor<float>::zeros({3, parse.h, parse.w});
    const std::size_t plane = static_cast<std::size_t>(parse.h) * parse.w;
    for (std::size_t px = 0; px < plane; ++px) {
        const std::uint8_t v = parse.labels[px];
        if (v == kParseHair || v == kParseFace)
            for (int ch = 0; ch < 3; ++ch)
                out.data()[static_cast<std::size_t>(ch) * plane + px] =
                    image.data()[static_cast<std::size_t>(ch) * plane + px];
    }
    return out;
}

Tensor<float> assemble_representation(const Tensor<float>& pose, const Tensor<float>& body,
                                      const Tensor<float>& face_hair) {
    const auto& ps = pose.shape();
    const auto& bs = body.shape();
    const auto& fs = face_hair.shape();
    if (ps.size() != 3 || ps[0] != kPoseKeypointCount)
        fail("assemble_representation: pose must be [18,m,n]");
    if (bs.size() != 3 || bs[0] != 1) fail("assemble_representation: body must be [1,m,n]");
    if (fs.size() != 3 || fs[0] != 3) fail("assemble_representation: face/hair must be [3,m,n]");
    if (ps[1] != bs[1] || ps[2] != bs[2] || ps[1] != fs[1] || ps[2] != fs[2])
        fail("assemble_representation: resolution mismatch (", ps[1], "x", ps[2], " vs ", bs[1],
             "x", bs[2], " vs ", fs[1], "x", fs[2], ")");
    const int m = ps[1], n = ps[2];
    const std::size_t plane = static_cast<std::size_t>(m) * n;
    Tensor<float> out = Tensor<float>::zeros({22, m, n});
    std::copy(pose.data().begin(), pose.data().end(), out.data().begin());
    std::copy(body.data().begin(), body.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(18 * plane));
    std::copy(face_hair.data().begin(), face_hair.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(19 * plane));
    return out;
}

Tensor<float> clothing_mask_from_parse(const ParseMap& parse) {
    Tensor<float> out = Tensor<float>::zeros({1, parse.h, parse.w});
    const std::size_t plane = static_cast<std::size_t>(parse.h) * parse.w;
    for (std::size_t px = 0; px < plane; ++px)
        out.data()[px] = parse.labels[px] == kParseUpperClothes ? 1.0f : 0.0f;
    return out;
}

}  // namespace tryon
