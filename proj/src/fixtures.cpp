#include "tryon/fixtures.hpp"

#include <array>
#include <cmath>
#include <filesystem>

namespace tryon {

namespace {

struct Color {
    float r, g, b;
};

constexpr std::array<Color, 8> kGarmentPalette = {{
    {0.82f, 0.16f, 0.20f},  // red
    {0.12f, 0.58f, 0.32f},  // green
    {0.16f, 0.32f, 0.78f},  // blue
    {0.92f, 0.55f, 0.12f},  // orange
    {0.55f, 0.20f, 0.70f},  // purple
    {0.10f, 0.62f, 0.64f},  // teal
    {0.93f, 0.82f, 0.14f},  // yellow
    {0.85f, 0.30f, 0.55f},  // pink
}};

struct Vec2 {
    double x, y;
};

double dist_to_segment(Vec2 p, Vec2 a, Vec2 b) {
    const double vx = b.x - a.x, vy = b.y - a.y;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = p.x - (a.x + t * vx), dy = p.y - (a.y + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

bool in_quad(Vec2 p, const std::array<Vec2, 4>& q) {
    // convex, counterclockwise or clockwise consistent winding
    double sign = 0.0;
    for (int i = 0; i < 4; ++i) {
        const Vec2& a = q[static_cast<std::size_t>(i)];
        const Vec2& b = q[static_cast<std::size_t>((i + 1) % 4)];
        const double cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
        if (cross != 0.0) {
            if (sign == 0.0) sign = cross;
            else if ((cross > 0) != (sign > 0)) return false;
        }
    }
    return true;
}

bool in_ellipse(Vec2 p, Vec2 c, double rx, double ry) {
    const double dx = (p.x - c.x) / rx, dy = (p.y - c.y) / ry;
    return dx * dx + dy * dy <= 1.0;
}

struct Pattern {
    int kind = 0;  // 0 solid, 1 horizontal stripes, 2 vertical stripes, 3 checker
    int cells = 6;
    Color a, b;

    // local coordinates in [0,1]^2 anchored to the garment bounding box
    Color at(double u, double v) const {
        switch (kind) {
            case 1: return static_cast<int>(std::floor(v * cells)) % 2 == 0 ? a : b;
            case 2: return static_cast<int>(std::floor(u * cells)) % 2 == 0 ? a : b;
            case 3: {
                const int iu = static_cast<int>(std::floor(u * cells));
                const int iv = static_cast<int>(std::floor(v * cells));
                return (iu + iv) % 2 == 0 ? a : b;
            }
            default: return a;
        }
    }
};

struct PersonLayout {
    Vec2 head;
    double head_rx, head_ry;
    Vec2 neck_top, neck_bottom;
    std::array<Vec2, 4> garment;  // shoulderL, shoulderR, hipR, hipL
    double garment_x0, garment_y0, garment_w, garment_h;  // bbox for pattern coords
    Vec2 elbow_l, elbow_r, wrist_l, wrist_r;
    double arm_radius;
    Vec2 hip_l, hip_r, knee_l, knee_r, ankle_l, ankle_r;
    double leg_radius;
};

PersonLayout make_layout(std::mt19937& rng, int m, int n) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    auto jitter = [&](double scale) { return (uni(rng) - 0.5) * 2.0 * scale; };
    PersonLayout L;
    const double cx = n * (0.5 + jitter(0.03));
    L.head = {cx, m * (0.14 + jitter(0.01))};
    L.head_rx = n * (0.085 + jitter(0.01));
    L.head_ry = m * (0.075 + jitter(0.006));
    const double shoulder_y = m * (0.27 + jitter(0.015));
    const double hip_y = m * (0.60 + jitter(0.02));
    const double shoulder_hw = n * (0.165 + jitter(0.02));
    const double hip_hw = n * (0.125 + jitter(0.015));
    const double tilt = n * jitter(0.02);
    L.neck_top = {cx, L.head.y + L.head_ry * 0.8};
    L.neck_bottom = {cx, shoulder_y};
    L.garment = {Vec2{cx - shoulder_hw + tilt, shoulder_y}, Vec2{cx + shoulder_hw + tilt, shoulder_y},
                 Vec2{cx + hip_hw, hip_y}, Vec2{cx - hip_hw, hip_y}};
    double x0 = L.garment[0].x, x1 = L.garment[0].x, y0 = L.garment[0].y, y1 = L.garment[0].y;
    for (const auto& p : L.garment) {
        x0 = std::min(x0, p.x);
        x1 = std::max(x1, p.x);
        y0 = std::min(y0, p.y);
        y1 = std::max(y1, p.y);
    }
    L.garment_x0 = x0;
    L.garment_y0 = y0;
    L.garment_w = x1 - x0;
    L.garment_h = y1 - y0;
    const double arm_angle_l = 0.15 + uni(rng) * 0.35;  // radians from vertical, outward
    const double arm_angle_r = 0.15 + uni(rng) * 0.35;
    const double upper_len = m * 0.17, lower_len = m * 0.16;
    const Vec2 sl = L.garment[0], sr = L.garment[1];
    L.elbow_l = {sl.x - std::sin(arm_angle_l) * upper_len, sl.y + std::cos(arm_angle_l) * upper_len};
    L.elbow_r = {sr.x + std::sin(arm_angle_r) * upper_len, sr.y + std::cos(arm_angle_r) * upper_len};
    L.wrist_l = {L.elbow_l.x - std::sin(arm_angle_l * 0.6) * lower_len,
                 L.elbow_l.y + std::cos(arm_angle_l * 0.6) * lower_len};
    L.wrist_r = {L.elbow_r.x + std::sin(arm_angle_r * 0.6) * lower_len,
                 L.elbow_r.y + std::cos(arm_angle_r * 0.6) * lower_len};
    L.arm_radius = n * 0.028;
    L.hip_l = {cx - hip_hw * 0.55, hip_y};
    L.hip_r = {cx + hip_hw * 0.55, hip_y};
    const double knee_y = m * 0.78, ankle_y = m * 0.955;
    L.knee_l = {L.hip_l.x + n * jitter(0.01), knee_y};
    L.knee_r = {L.hip_r.x + n * jitter(0.01), knee_y};
    L.ankle_l = {L.knee_l.x + n * jitter(0.008), ankle_y};
    L.ankle_r = {L.knee_r.x + n * jitter(0.008), ankle_y};
    L.leg_radius = n * 0.042;
    return L;
}

}  // namespace

FixtureSample render_fixture(std::uint64_t seed, int index, int m, int n) {
    if (m < 32 || n < 32) fail("render_fixture: resolution too small (", m, "x", n, ")");
    // per-sample stream so any sample renders identically in isolation
    std::mt19937 rng = make_rng(seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(index) + 1);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::uniform_int_distribution<int> palette(0, static_cast<int>(kGarmentPalette.size()) - 1);

    Pattern pat;
    pat.kind = static_cast<int>(uni(rng) * 4.0) % 4;
    pat.cells = 4 + static_cast<int>(uni(rng) * 4.0);
    const int ci = palette(rng);
    int cj = palette(rng);
    if (cj == ci) cj = (cj + 3) % static_cast<int>(kGarmentPalette.size());
    pat.a = kGarmentPalette[static_cast<std::size_t>(ci)];
    pat.b = kGarmentPalette[static_cast<std::size_t>(cj)];

    const Color skin = {0.86f + static_cast<float>(uni(rng)) * 0.05f,
                        0.70f + static_cast<float>(uni(rng)) * 0.06f,
                        0.58f + static_cast<float>(uni(rng)) * 0.06f};
    const Color hair = {0.15f + static_cast<float>(uni(rng)) * 0.25f,
                        0.10f + static_cast<float>(uni(rng)) * 0.15f,
                        0.05f + static_cast<float>(uni(rng)) * 0.10f};
    const Color pants = {0.20f + static_cast<float>(uni(rng)) * 0.15f,
                         0.22f + static_cast<float>(uni(rng)) * 0.15f,
                         0.35f + static_cast<float>(uni(rng)) * 0.25f};
    const Color bg = {0.80f + static_cast<float>(uni(rng)) * 0.06f,
                      0.83f + static_cast<float>(uni(rng)) * 0.06f,
                      0.86f + static_cast<float>(uni(rng)) * 0.06f};

    const PersonLayout L = make_layout(rng, m, n);

    FixtureSample s;
    s.image = Tensor<float>::zeros({3, m, n});
    s.product = Tensor<float>::filled({3, m, n}, 1.0f);
    s.parse = ParseMap{m, n, std::vector<std::uint8_t>(static_cast<std::size_t>(m) * n,
                                                       kParseBackground)};
    const std::size_t plane = static_cast<std::size_t>(m) * n;
    auto put = [&](Tensor<float>& img, std::size_t px, Color c) {
        img.data()[px] = c.r;
        img.data()[plane + px] = c.g;
        img.data()[2 * plane + px] = c.b;
    };

    // person image + parse, one classification pass per pixel
    for (int r = 0; r < m; ++r) {
        for (int c = 0; c < n; ++c) {
            const Vec2 p{static_cast<double>(c), static_cast<double>(r)};
            const std::size_t px = static_cast<std::size_t>(r) * n + c;
            const bool in_head = in_ellipse(p, L.head, L.head_rx, L.head_ry);
            const bool in_hair =
                in_ellipse(p, {L.head.x, L.head.y - L.head_ry * 0.35}, L.head_rx * 1.12,
                           L.head_ry * 0.95) &&
                p.y < L.head.y - L.head_ry * 0.1;
            const bool in_arm = dist_to_segment(p, L.garment[0], L.elbow_l) < L.arm_radius ||
                                dist_to_segment(p, L.elbow_l, L.wrist_l) < L.arm_radius ||
                                dist_to_segment(p, L.garment[1], L.elbow_r) < L.arm_radius ||
                                dist_to_segment(p, L.elbow_r, L.wrist_r) < L.arm_radius;
            const bool in_garment = in_quad(p, L.garment);
            const bool in_neck = p.x > L.neck_top.x - L.head_rx * 0.35 &&
                                 p.x < L.neck_top.x + L.head_rx * 0.35 && p.y >= L.neck_top.y &&
                                 p.y <= L.neck_bottom.y;
            const bool in_leg = dist_to_segment(p, L.hip_l, L.knee_l) < L.leg_radius ||
                                dist_to_segment(p, L.knee_l, L.ankle_l) < L.leg_radius ||
                                dist_to_segment(p, L.hip_r, L.knee_r) < L.leg_radius ||
                                dist_to_segment(p, L.knee_r, L.ankle_r) < L.leg_radius;
            if (in_hair) {
                put(s.image, px, hair);
                s.parse.labels[px] = kParseHair;
            } else if (in_head) {
                put(s.image, px, skin);
                s.parse.labels[px] = kParseFace;
            } else if (in_arm) {
                put(s.image, px, skin);
                s.parse.labels[px] = kParseArms;
            } else if (in_garment) {
                const double u = (p.x - L.garment_x0) / L.garment_w;
                const double v = (p.y - L.garment_y0) / L.garment_h;
                put(s.image, px, pat.at(u, v));
                s.parse.labels[px] = kParseUpperClothes;
            } else if (in_neck) {
                put(s.image, px, skin);
                s.parse.labels[px] = kParseOtherBody;
            } else if (in_leg) {
                put(s.image, px, pants);
                s.parse.labels[px] = kParseLegs;
            } else {
                put(s.image, px, bg);
            }
        }
    }

    // flat product: the same quad scaled about its center, on pure white
    const double scale = 1.18;
    const Vec2 gc{L.garment_x0 + L.garment_w / 2, L.garment_y0 + L.garment_h / 2};
    const Vec2 pc{n * 0.5, m * 0.5};
    std::array<Vec2, 4> prod_quad;
    for (std::size_t i = 0; i < 4; ++i)
        prod_quad[i] = {pc.x + (L.garment[i].x - gc.x) * scale,
                        pc.y + (L.garment[i].y - gc.y) * scale};
    double qx0 = prod_quad[0].x, qx1 = prod_quad[0].x, qy0 = prod_quad[0].y, qy1 = prod_quad[0].y;
    for (const auto& p : prod_quad) {
        qx0 = std::min(qx0, p.x);
        qx1 = std::max(qx1, p.x);
        qy0 = std::min(qy0, p.y);
        qy1 = std::max(qy1, p.y);
    }
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < n; ++c) {
            const Vec2 p{static_cast<double>(c), static_cast<double>(r)};
            if (!in_quad(p, prod_quad)) continue;
            const double u = (p.x - qx0) / (qx1 - qx0);
            const double v = (p.y - qy0) / (qy1 - qy0);
            put(s.product, static_cast<std::size_t>(r) * n + c, pat.at(u, v));
        }

    // keypoints in the standard 18-joint order
    auto set_kp = [&](int i, Vec2 p) {
        s.keypoints.points[static_cast<std::size_t>(i)] = {p.x, p.y, 1.0};
    };
    set_kp(0, {L.head.x, L.head.y});                                     // nose
    set_kp(1, {L.neck_bottom.x, L.neck_bottom.y});                       // neck
    set_kp(2, L.garment[1]);                                             // right shoulder
    set_kp(3, L.elbow_r);
    set_kp(4, L.wrist_r);
    set_kp(5, L.garment[0]);                                             // left shoulder
    set_kp(6, L.elbow_l);
    set_kp(7, L.wrist_l);
    set_kp(8, L.hip_r);
    set_kp(9, L.knee_r);
    set_kp(10, L.ankle_r);
    set_kp(11, L.hip_l);
    set_kp(12, L.knee_l);
    set_kp(13, L.ankle_l);
    set_kp(14, {L.head.x + L.head_rx * 0.35, L.head.y - L.head_ry * 0.2});  // right eye
    set_kp(15, {L.head.x - L.head_rx * 0.35, L.head.y - L.head_ry * 0.2});  // left eye
    set_kp(16, {L.head.x + L.head_rx * 0.85, L.head.y});                    // right ear
    set_kp(17, {L.head.x - L.head_rx * 0.85, L.head.y});                    // left ear
    return s;
}

void generate_fixtures(int count, std::uint64_t seed, int m, int n, const std::string& out_dir) {
    if (count < 1) fail("generate_fixtures: count must be >= 1, got ", count);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) fail("generate_fixtures: cannot create output directory ", out_dir, ": ", ec.message());
    for (int i = 0; i < count; ++i) {
        const FixtureSample s = render_fixture(seed, i, m, n);
        char stem[16];
        std::snprintf(stem, sizeof(stem), "%04d", i);
        const std::string base = out_dir + "/" + stem;
        save_image_png(base + "_image.png", s.image);
        save_image_png(base + "_product.png", s.product);
        save_parse_png(base + "_parse.png", s.parse);
        save_keypoints_json(base + "_keypoints.json", s.keypoints);
    }
    log::info(cat("generated ", count, " fixture samples in ", out_dir));
}

}  // namespace tryon
