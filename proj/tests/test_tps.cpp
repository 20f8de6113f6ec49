#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "tryon/tps.hpp"

using namespace tryon;

namespace {

BinaryMask disk_mask(int h, int w, double cx, double cy, double r) {
    BinaryMask m{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w, 0)};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r)
                m.v[static_cast<std::size_t>(y) * w + x] = 1;
    return m;
}

BinaryMask rect_mask(int h, int w, int x0, int y0, int x1, int y1) {
    BinaryMask m{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w, 0)};
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) m.v[static_cast<std::size_t>(y) * w + x] = 1;
    return m;
}

ContourPoints random_points(std::mt19937& rng, int k, double lo = 5.0, double hi = 90.0) {
    std::uniform_real_distribution<double> uni(lo, hi);
    ContourPoints p;
    for (int i = 0; i < k; ++i) p.pts.push_back({uni(rng), uni(rng)});
    return p;
}

std::vector<int> identity_perm(int k) {
    std::vector<int> v(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) v[static_cast<std::size_t>(i)] = i;
    return v;
}

double weight_norm2(const TpsTransform& t) {
    double acc = 0.0;
    for (const auto& w : t.warp_weights) acc += w[0] * w[0] + w[1] * w[1];
    return std::sqrt(acc);
}

}  // namespace

TEST_CASE("foreground extraction examples") {
    SUBCASE("all-white product is an error") {
        auto img = Tensor<float>::filled({3, 16, 16}, 1.0f);
        CHECK_THROWS_AS(extract_foreground_mask(img), Error);
    }
    SUBCASE("a mid-gray rectangle on white is recovered exactly") {
        auto img = Tensor<float>::filled({3, 20, 20}, 1.0f);
        const std::size_t plane = 400;
        for (int y = 5; y <= 12; ++y)
            for (int x = 4; x <= 15; ++x)
                for (int ch = 0; ch < 3; ++ch)
                    img.data()[static_cast<std::size_t>(ch) * plane + static_cast<std::size_t>(y) * 20 + x] = 0.5f;
        auto mask = extract_foreground_mask(img);
        for (int y = 0; y < 20; ++y)
            for (int x = 0; x < 20; ++x)
                CHECK(static_cast<int>(mask.at(y, x)) == ((y >= 5 && y <= 12 && x >= 4 && x <= 15) ? 1 : 0));
    }
    SUBCASE("only the larger of two disjoint blobs survives") {
        auto img = Tensor<float>::filled({3, 30, 30}, 1.0f);
        const std::size_t plane = 900;
        auto paint = [&](int x0, int y0, int x1, int y1) {
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x)
                    for (int ch = 0; ch < 3; ++ch)
                        img.data()[static_cast<std::size_t>(ch) * plane + static_cast<std::size_t>(y) * 30 + x] = 0.2f;
        };
        paint(2, 2, 10, 10);   // 81 px
        paint(20, 20, 24, 24); // 25 px
        auto mask = extract_foreground_mask(img);
        CHECK(mask.at(5, 5) == 1);
        CHECK(mask.at(22, 22) == 0);
    }
}

TEST_CASE("contour sampling examples") {
    SUBCASE("disk contour points lie within 1.5 px of the circle") {
        const double cx = 48, cy = 50, r = 30;
        auto pts = sample_contour_points(disk_mask(100, 100, cx, cy, r), 64);
        REQUIRE(pts.size() == 64);
        for (const auto& p : pts.pts) {
            const double d = std::sqrt((p[0] - cx) * (p[0] - cx) + (p[1] - cy) * (p[1] - cy));
            CHECK(std::abs(d - r) < 1.5);
        }
    }
    SUBCASE("square edges receive K/4 +- 1 points each") {
        auto pts = sample_contour_points(rect_mask(64, 64, 10, 10, 49, 49), 40);
        int per_edge[4] = {0, 0, 0, 0};
        for (const auto& p : pts.pts) {
            if (std::abs(p[1] - 10.0) < 0.75) ++per_edge[0];       // top
            else if (std::abs(p[0] - 49.0) < 0.75) ++per_edge[1];  // right
            else if (std::abs(p[1] - 49.0) < 0.75) ++per_edge[2];  // bottom
            else if (std::abs(p[0] - 10.0) < 0.75) ++per_edge[3];  // left
        }
        for (int e = 0; e < 4; ++e) {
            CHECK(per_edge[e] >= 9);
            CHECK(per_edge[e] <= 11);
        }
    }
    SUBCASE("sampling is deterministic") {
        auto m = disk_mask(64, 64, 31, 33, 20);
        auto a = sample_contour_points(m, 48);
        auto b = sample_contour_points(m, 48);
        CHECK(a.pts == b.pts);
    }
    SUBCASE("a too-short boundary is rejected") {
        CHECK_THROWS_AS(sample_contour_points(rect_mask(16, 16, 7, 7, 8, 8), 40), Error);
    }
    SUBCASE("K below 4 is rejected") {
        CHECK_THROWS_AS(sample_contour_points(disk_mask(32, 32, 16, 16, 10), 3), Error);
    }
}

TEST_CASE("shape context descriptor properties") {
    std::mt19937 rng(81);
    auto pts = random_points(rng, 40);
    auto descs = shape_context_all(pts);

    SUBCASE("counts always sum to K-1") {
        for (const auto& d : descs) {
            int total = 0;
            for (int b : d.bins) total += b;
            CHECK(total == 39);
        }
    }
    SUBCASE("translation leaves descriptors unchanged") {
        ContourPoints moved = pts;
        for (auto& p : moved.pts) {
            p[0] += 10.0;
            p[1] += 7.0;
        }
        auto moved_descs = shape_context_all(moved);
        for (std::size_t i = 0; i < descs.size(); ++i) CHECK(descs[i].bins == moved_descs[i].bins);
    }
    SUBCASE("uniform scaling leaves descriptors unchanged") {
        ContourPoints scaled = pts;
        for (auto& p : scaled.pts) {
            p[0] *= 3.25;
            p[1] *= 3.25;
        }
        auto scaled_descs = shape_context_all(scaled);
        for (std::size_t i = 0; i < descs.size(); ++i) CHECK(descs[i].bins == scaled_descs[i].bins);
    }
    SUBCASE("single-point query matches the batch path") {
        auto one = shape_context(pts, 7);
        CHECK(one.bins == descs[7].bins);
    }
}

TEST_CASE("matching cost matrix properties") {
    std::mt19937 rng(82);
    auto a = shape_context_all(random_points(rng, 24));
    auto b = shape_context_all(random_points(rng, 24));

    SUBCASE("identical descriptor sets have a zero diagonal") {
        auto cost = matching_cost_matrix(a, a);
        for (int i = 0; i < 24; ++i) CHECK(cost[static_cast<std::size_t>(i) * 24 + i] == 0.0);
    }
    SUBCASE("swapping arguments transposes the matrix") {
        auto ab = matching_cost_matrix(a, b);
        auto ba = matching_cost_matrix(b, a);
        for (int i = 0; i < 24; ++i)
            for (int j = 0; j < 24; ++j)
                CHECK(ab[static_cast<std::size_t>(i) * 24 + j] ==
                      doctest::Approx(ba[static_cast<std::size_t>(j) * 24 + i]));
    }
    SUBCASE("chi-squared costs of normalized histograms stay in [0,1]") {
        auto cost = matching_cost_matrix(a, b);
        for (double v : cost) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0 + 1e-12);
        }
    }
}

TEST_CASE("hungarian assignment examples") {
    SUBCASE("zero diagonal with expensive off-diagonal gives the identity") {
        const int k = 5;
        std::vector<double> cost(k * k, 10.0);
        for (int i = 0; i < k; ++i) cost[static_cast<std::size_t>(i) * k + i] = 0.0;
        CHECK(hungarian_assign(cost, k, k) == identity_perm(k));
    }
    SUBCASE("the 2x2 example picks total cost 1") {
        const std::vector<double> cost = {1.0, 2.0, 3.0, 0.0};
        auto perm = hungarian_assign(cost, 2, 2);
        CHECK(perm == std::vector<int>({0, 1}));
    }
    SUBCASE("matches the brute-force minimum for K <= 8") {
        std::mt19937 rng(83);
        std::uniform_int_distribution<int> val(0, 4095);
        for (int k = 2; k <= 8; ++k)
            for (int trial = 0; trial < 20; ++trial) {
                std::vector<double> cost(static_cast<std::size_t>(k) * k);
                for (auto& v : cost) v = val(rng) / 64.0;  // dyadic, exact sums
                auto perm = hungarian_assign(cost, k, k);
                double total = 0.0;
                for (int i = 0; i < k; ++i) total += cost[static_cast<std::size_t>(i) * k + perm[static_cast<std::size_t>(i)]];
                CHECK(total == testutil::brute_force_assignment(cost, k));
            }
    }
    SUBCASE("non-square matrices are rejected") {
        CHECK_THROWS_AS(hungarian_assign(std::vector<double>(6, 0.0), 2, 3), Error);
    }
}

TEST_CASE("TPS fitting examples") {
    std::mt19937 rng(84);
    SUBCASE("src == dst with lambda 0 recovers the identity") {
        auto src = random_points(rng, 16);
        auto t = fit_tps(src, src, identity_perm(16), 0.0);
        CHECK(std::abs(t.affine[0] - 1.0) < 1e-8);
        CHECK(std::abs(t.affine[1]) < 1e-8);
        CHECK(std::abs(t.affine[2]) < 1e-8);
        CHECK(std::abs(t.affine[3]) < 1e-8);
        CHECK(std::abs(t.affine[4] - 1.0) < 1e-8);
        CHECK(std::abs(t.affine[5]) < 1e-8);
        for (const auto& w : t.warp_weights) {
            CHECK(std::abs(w[0]) < 1e-8);
            CHECK(std::abs(w[1]) < 1e-8);
        }
    }
    SUBCASE("a pure translation lands in the affine part") {
        auto src = random_points(rng, 12);
        ContourPoints dst = src;
        for (auto& p : dst.pts) {
            p[0] += 5.0;
            p[1] -= 3.0;
        }
        auto t = fit_tps(src, dst, identity_perm(12), 0.0);
        CHECK(t.affine[0] == doctest::Approx(1.0).epsilon(1e-7));
        CHECK(t.affine[2] == doctest::Approx(5.0).epsilon(1e-6));
        CHECK(t.affine[4] == doctest::Approx(1.0).epsilon(1e-7));
        CHECK(t.affine[5] == doctest::Approx(-3.0).epsilon(1e-6));
        for (const auto& w : t.warp_weights) {
            CHECK(std::abs(w[0]) < 1e-8);
            CHECK(std::abs(w[1]) < 1e-8);
        }
    }
    SUBCASE("lambda 0 interpolates every control point") {
        auto src = random_points(rng, 20);
        auto dst = random_points(rng, 20);
        auto t = fit_tps(src, dst, identity_perm(20), 0.0);
        for (int i = 0; i < 20; ++i) {
            const auto mapped = t.map(src.pts[static_cast<std::size_t>(i)][0], src.pts[static_cast<std::size_t>(i)][1]);
            CHECK(std::abs(mapped[0] - dst.pts[static_cast<std::size_t>(i)][0]) < 1e-6);
            CHECK(std::abs(mapped[1] - dst.pts[static_cast<std::size_t>(i)][1]) < 1e-6);
        }
    }
    SUBCASE("orthogonality side conditions hold") {
        auto src = random_points(rng, 24);
        auto dst = random_points(rng, 24);
        for (double lambda : {0.0, 0.5, 2.0}) {
            auto t = fit_tps(src, dst, identity_perm(24), lambda);
            double sw[2] = {0, 0}, swx[2] = {0, 0}, swy[2] = {0, 0};
            for (std::size_t i = 0; i < t.warp_weights.size(); ++i) {
                for (int c = 0; c < 2; ++c) {
                    sw[c] += t.warp_weights[i][c];
                    swx[c] += t.warp_weights[i][c] * t.control_points[i][0];
                    swy[c] += t.warp_weights[i][c] * t.control_points[i][1];
                }
            }
            for (int c = 0; c < 2; ++c) {
                CHECK(std::abs(sw[c]) < 1e-8);
                CHECK(std::abs(swx[c]) < 1e-8);
                CHECK(std::abs(swy[c]) < 1e-8);
            }
        }
    }
    SUBCASE("increasing lambda never increases the warp-weight norm") {
        auto src = random_points(rng, 18);
        auto dst = random_points(rng, 18);
        double prev = std::numeric_limits<double>::infinity();
        for (double lambda : {0.0, 0.1, 1.0, 10.0, 100.0}) {
            const double norm = weight_norm2(fit_tps(src, dst, identity_perm(18), lambda));
            CHECK(norm <= prev + 1e-12);
            prev = norm;
        }
    }
    SUBCASE("collinear control points are singular") {
        ContourPoints src;
        for (int i = 0; i < 8; ++i) src.pts.push_back({static_cast<double>(i), 2.0 * i + 1.0});
        auto dst = random_points(rng, 8);
        CHECK_THROWS_AS(fit_tps(src, dst, identity_perm(8), 0.0), Error);
    }
    SUBCASE("negative lambda is rejected") {
        auto src = random_points(rng, 8);
        CHECK_THROWS_AS(fit_tps(src, src, identity_perm(8), -1.0), Error);
    }
}

TEST_CASE("apply_tps_warp examples") {
    std::mt19937 rng(85);
    auto product = testutil::random_tensor<float>({3, 40, 40}, rng, false, 0.0f, 1.0f);
    BinaryMask fg = rect_mask(40, 40, 8, 8, 31, 31);

    SUBCASE("the identity transform reproduces the input bit-exactly") {
        TpsTransform t;  // defaults to identity affine, no kernels
        auto res = apply_tps_warp(product, fg, t, 40, 40);
        CHECK(res.image.data() == product.data());
        CHECK(res.mask.v == fg.v);
    }
    SUBCASE("a pure source translation shifts content the other way") {
        TpsTransform t;
        t.affine = {1, 0, 5, 0, 1, -3};  // output (x,y) samples source (x+5, y-3)
        auto res = apply_tps_warp(product, fg, t, 40, 40);
        const std::size_t plane = 1600;
        for (int y = 0; y < 40; ++y)
            for (int x = 0; x < 40; ++x) {
                const int sx = x + 5, sy = y - 3;
                for (int ch = 0; ch < 3; ++ch) {
                    const float got = res.image.data()[static_cast<std::size_t>(ch) * plane + static_cast<std::size_t>(y) * 40 + x];
                    const float want = (sx >= 0 && sx < 40 && sy >= 0 && sy < 40)
                                           ? product.data()[static_cast<std::size_t>(ch) * plane + static_cast<std::size_t>(sy) * 40 + sx]
                                           : 0.0f;
                    CHECK(got == want);
                }
            }
    }
    SUBCASE("a smoothly warped disk stays a single connected component") {
        auto disk = disk_mask(64, 64, 32, 32, 18);
        auto img = Tensor<float>::filled({3, 64, 64}, 1.0f);
        for (std::size_t i = 0; i < disk.v.size(); ++i)
            if (disk.v[i])
                for (int ch = 0; ch < 3; ++ch) img.data()[static_cast<std::size_t>(ch) * 64 * 64 + i] = 0.3f;
        auto src = sample_contour_points(disk, 32);
        ContourPoints dst = src;
        for (auto& p : dst.pts) {
            p[0] += 2.0 * std::sin(p[1] * 0.1);
            p[1] += 1.5 * std::cos(p[0] * 0.1);
        }
        auto t = fit_tps(dst, src, identity_perm(32), 1.0);
        auto res = apply_tps_warp(img, disk, t, 64, 64);
        // count 4-connected components of the warped mask
        std::vector<int> seen(res.mask.v.size(), 0);
        int comps = 0;
        for (std::size_t s = 0; s < res.mask.v.size(); ++s) {
            if (!res.mask.v[s] || seen[s]) continue;
            ++comps;
            std::vector<std::size_t> stack = {s};
            seen[s] = 1;
            while (!stack.empty()) {
                const std::size_t cur = stack.back();
                stack.pop_back();
                const int y = static_cast<int>(cur) / 64, x = static_cast<int>(cur) % 64;
                const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
                for (int d = 0; d < 4; ++d) {
                    const int ny = y + dy[d], nx = x + dx[d];
                    if (ny < 0 || ny >= 64 || nx < 0 || nx >= 64) continue;
                    const std::size_t ni = static_cast<std::size_t>(ny) * 64 + nx;
                    if (res.mask.v[ni] && !seen[ni]) {
                        seen[ni] = 1;
                        stack.push_back(ni);
                    }
                }
            }
        }
        CHECK(comps == 1);
    }
}

TEST_CASE("warp_clothing end-to-end identity fixture") {
    // product on white whose foreground equals the predicted mask exactly
    const int h = 64, w = 64;
    auto mask_t = Tensor<float>::zeros({1, h, w});
    auto product = Tensor<float>::filled({3, h, w}, 1.0f);
    std::mt19937 rng(86);
    std::uniform_real_distribution<float> uni(0.1f, 0.8f);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int y = 14; y <= 49; ++y)
        for (int x = 18; x <= 45; ++x) {
            mask_t.data()[static_cast<std::size_t>(y) * w + x] = 1.0f;
            for (int ch = 0; ch < 3; ++ch)
                product.data()[static_cast<std::size_t>(ch) * plane + static_cast<std::size_t>(y) * w + x] = uni(rng);
        }
    auto warped = warp_clothing(product, mask_t, 48, 1.0, h, w);
    float max_dev = 0.0f;
    for (std::size_t i = 0; i < warped.numel(); ++i)
        max_dev = std::max(max_dev, std::abs(warped.data()[i] - product.data()[i]));
    CHECK(max_dev < 1.0f / 255.0f);

    auto again = warp_clothing(product, mask_t, 48, 1.0, h, w);
    CHECK(again.data() == warped.data());

    CHECK_THROWS_AS(warp_clothing(product, Tensor<float>::zeros({1, h, w}), 48, 1.0, h, w), Error);
}

TEST_CASE("warp_clothing stretches a rectangle to the target footprint") {
    const int h = 64, w = 64;
    auto mask_t = Tensor<float>::zeros({1, h, w});
    for (int y = 16; y <= 47; ++y)
        for (int x = 10; x <= 53; ++x) mask_t.data()[static_cast<std::size_t>(y) * w + x] = 1.0f;  // wide
    auto product = Tensor<float>::filled({3, h, w}, 1.0f);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int y = 16; y <= 47; ++y)
        for (int x = 18; x <= 45; ++x)  // narrower
            for (int ch = 0; ch < 3; ++ch)
                product.data()[static_cast<std::size_t>(ch) * plane + static_cast<std::size_t>(y) * w + x] = 0.25f;
    // same stages as warp_clothing, keeping the warped foreground mask
    const BinaryMask target = threshold_mask(mask_t);
    const BinaryMask fg = extract_foreground_mask(product);
    const auto src = sample_contour_points(target, 48);
    const auto dst = sample_contour_points(fg, 48);
    const auto perm = hungarian_assign(matching_cost_matrix(shape_context_all(src), shape_context_all(dst)), 48, 48);
    const auto res = apply_tps_warp(product, fg, fit_tps(src, dst, perm, 1.0), h, w);
    std::size_t fg_area = 0, target_area = 0;
    for (std::size_t i = 0; i < plane; ++i) {
        fg_area += res.mask.v[i] != 0;
        target_area += mask_t.data()[i] == 1.0f;
    }
    const double ratio = static_cast<double>(fg_area) / static_cast<double>(target_area);
    CHECK(ratio > 0.9);
    CHECK(ratio < 1.1);
    // and warp_clothing itself produces the same picture
    auto warped = warp_clothing(product, mask_t, 48, 1.0, h, w);
    CHECK(warped.data() == res.image.data());
}
