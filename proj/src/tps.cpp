#include "tryon/tps.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

namespace tryon {

namespace {

// r^2 log(r^2), continuous at 0.
double tps_kernel_r2(double r2) {
    if (r2 < 1e-300) return 0.0;
    return r2 * std::log(r2);
}

// Largest 4-connected component of a 0/1 grid; returns empty mask if input
// has no foreground.
BinaryMask largest_component(const BinaryMask& in) {
    BinaryMask out{in.h, in.w, std::vector<std::uint8_t>(in.v.size(), 0)};
    std::vector<int> label(in.v.size(), -1);
    int best_label = -1;
    long long best_count = 0;
    int next = 0;
    std::vector<std::size_t> queue;
    for (std::size_t start = 0; start < in.v.size(); ++start) {
        if (!in.v[start] || label[start] >= 0) continue;
        queue.clear();
        queue.push_back(start);
        label[start] = next;
        long long count = 0;
        while (!queue.empty()) {
            const std::size_t cur = queue.back();
            queue.pop_back();
            ++count;
            const int r = static_cast<int>(cur) / in.w;
            const int c = static_cast<int>(cur) % in.w;
            const int dr[4] = {-1, 1, 0, 0}, dc[4] = {0, 0, -1, 1};
            for (int k = 0; k < 4; ++k) {
                const int nr = r + dr[k], nc = c + dc[k];
                if (nr < 0 || nr >= in.h || nc < 0 || nc >= in.w) continue;
                const std::size_t ni = static_cast<std::size_t>(nr) * in.w + nc;
                if (in.v[ni] && label[ni] < 0) {
                    label[ni] = next;
                    queue.push_back(ni);
                }
            }
        }
        if (count > best_count) {
            best_count = count;
            best_label = next;
        }
        ++next;
    }
    if (best_label >= 0)
        for (std::size_t i = 0; i < in.v.size(); ++i)
            out.v[i] = label[i] == best_label ? 1 : 0;
    return out;
}

// Moore-neighbor boundary trace of the largest component, starting at the
// topmost-leftmost foreground pixel. Returns the closed boundary as an
// ordered pixel chain.
std::vector<std::array<int, 2>> trace_boundary(const BinaryMask& mask) {
    int sr = -1, sc = -1;
    for (int r = 0; r < mask.h && sr < 0; ++r)
        for (int c = 0; c < mask.w; ++c)
            if (mask.at(r, c)) {
                sr = r;
                sc = c;
                break;
            }
    if (sr < 0) fail("contour: mask is empty");
    auto fg = [&](int r, int c) {
        return r >= 0 && r < mask.h && c >= 0 && c < mask.w && mask.at(r, c) != 0;
    };
    // clockwise Moore neighborhood starting from west
    static const int dr[8] = {0, -1, -1, -1, 0, 1, 1, 1};
    static const int dc[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
    std::vector<std::array<int, 2>> chain;
    int r = sr, c = sc;
    int backtrack = 0;  // enter from the west (came from background left of start)
    chain.push_back({r, c});
    for (;;) {
        int k = 0;
        int found = -1;
        for (; k < 8; ++k) {
            const int dir = (backtrack + 1 + k) % 8;
            if (fg(r + dr[dir], c + dc[dir])) {
                found = dir;
                break;
            }
        }
        if (found < 0) break;  // isolated pixel
        r += dr[found];
        c += dc[found];
        backtrack = (found + 4) % 8;  // direction pointing back where we came from
        if (r == sr && c == sc) break;
        chain.push_back({r, c});
        if (chain.size() > 4 * mask.v.size()) fail("contour: boundary trace did not close");
    }
    return chain;
}

struct Frame {
    double ox = 0.0, oy = 0.0;  // bbox origin
    double scale = 1.0;          // uniform: 1 / max extent
};

Frame normalize_frame(const std::vector<std::array<double, 2>>& pts) {
    double minx = pts[0][0], maxx = pts[0][0], miny = pts[0][1], maxy = pts[0][1];
    for (const auto& p : pts) {
        minx = std::min(minx, p[0]);
        maxx = std::max(maxx, p[0]);
        miny = std::min(miny, p[1]);
        maxy = std::max(maxy, p[1]);
    }
    const double ext = std::max(maxx - minx, maxy - miny);
    return {minx, miny, ext > 1e-12 ? 1.0 / ext : 1.0};
}

// Gaussian elimination with partial pivoting; a is n x n row-major, b holds
// nrhs columns of length n. Solution overwrites b.
void solve_linear(std::vector<double>& a, std::vector<double>& b, int n, int nrhs) {
    for (int col = 0; col < n; ++col) {
        int piv = col;
        double best = std::abs(a[static_cast<std::size_t>(col) * n + col]);
        for (int r = col + 1; r < n; ++r) {
            const double v = std::abs(a[static_cast<std::size_t>(r) * n + col]);
            if (v > best) {
                best = v;
                piv = r;
            }
        }
        if (best < 1e-12) fail("TPS fit: singular system (collinear or duplicate points)");
        if (piv != col) {
            for (int j = 0; j < n; ++j)
                std::swap(a[static_cast<std::size_t>(piv) * n + j],
                          a[static_cast<std::size_t>(col) * n + j]);
            for (int j = 0; j < nrhs; ++j)
                std::swap(b[static_cast<std::size_t>(piv) * nrhs + j],
                          b[static_cast<std::size_t>(col) * nrhs + j]);
        }
        const double inv = 1.0 / a[static_cast<std::size_t>(col) * n + col];
        for (int r = col + 1; r < n; ++r) {
            const double f = a[static_cast<std::size_t>(r) * n + col] * inv;
            if (f == 0.0) continue;
            for (int j = col; j < n; ++j)
                a[static_cast<std::size_t>(r) * n + j] -= f * a[static_cast<std::size_t>(col) * n + j];
            for (int j = 0; j < nrhs; ++j)
                b[static_cast<std::size_t>(r) * nrhs + j] -= f * b[static_cast<std::size_t>(col) * nrhs + j];
        }
    }
    for (int col = n - 1; col >= 0; --col) {
        const double inv = 1.0 / a[static_cast<std::size_t>(col) * n + col];
        for (int j = 0; j < nrhs; ++j) {
            double acc = b[static_cast<std::size_t>(col) * nrhs + j];
            for (int k = col + 1; k < n; ++k)
                acc -= a[static_cast<std::size_t>(col) * n + k] * b[static_cast<std::size_t>(k) * nrhs + j];
            b[static_cast<std::size_t>(col) * nrhs + j] = acc * inv;
        }
    }
}

float sample_bilinear(const float* plane, int h, int w, double x, double y) {
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0, fy = y - y0;
    float acc = 0.0f;
    const double wts[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
    const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
    const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
    for (int k = 0; k < 4; ++k) {
        if (xs[k] < 0 || xs[k] >= w || ys[k] < 0 || ys[k] >= h) continue;  // zero fill
        acc += static_cast<float>(wts[k]) * plane[static_cast<std::size_t>(ys[k]) * w + xs[k]];
    }
    return acc;
}

}  // namespace

std::array<double, 2> TpsTransform::map(double x, double y) const {
    double ox = affine[0] * x + affine[1] * y + affine[2];
    double oy = affine[3] * x + affine[4] * y + affine[5];
    for (std::size_t i = 0; i < control_points.size(); ++i) {
        const double dx = x - control_points[i][0];
        const double dy = y - control_points[i][1];
        const double u = tps_kernel_r2(dx * dx + dy * dy);
        ox += warp_weights[i][0] * u;
        oy += warp_weights[i][1] * u;
    }
    return {ox, oy};
}

BinaryMask extract_foreground_mask(const Tensor<float>& product) {
    const auto& s = product.shape();
    if (s.size() != 3 || s[0] != 3) fail("extract_foreground_mask: image must be [3,H,W]");
    const int h = s[1], w = s[2];
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    BinaryMask raw{h, w, std::vector<std::uint8_t>(plane, 0)};
    const float* d = product.data().data();
    bool any = false;
    for (std::size_t px = 0; px < plane; ++px) {
        const float mn = std::min(d[px], std::min(d[plane + px], d[2 * plane + px]));
        if (mn < static_cast<float>(kForegroundThreshold)) {
            raw.v[px] = 1;
            any = true;
        }
    }
    if (!any) fail("extract_foreground_mask: empty foreground (nothing to warp)");
    return largest_component(raw);
}

BinaryMask threshold_mask(const Tensor<float>& mask) {
    const auto& s = mask.shape();
    int h = 0, w = 0;
    if (s.size() == 3 && s[0] == 1) {
        h = s[1];
        w = s[2];
    } else if (s.size() == 2) {
        h = s[0];
        w = s[1];
    } else {
        fail("threshold_mask: mask must be [1,H,W] or [H,W]");
    }
    BinaryMask out{h, w, std::vector<std::uint8_t>(mask.numel(), 0)};
    for (std::size_t i = 0; i < mask.numel(); ++i) out.v[i] = mask.data()[i] >= 0.5f ? 1 : 0;
    return out;
}

ContourPoints sample_contour_points(const BinaryMask& mask, int k) {
    if (k < 4) fail("sample_contour_points: need K >= 4, got ", k);
    BinaryMask comp = largest_component(mask);
    bool any = false;
    for (auto v : comp.v) any = any || v;
    if (!any) fail("sample_contour_points: mask has no foreground");
    std::vector<std::array<int, 2>> chain = trace_boundary(comp);
    if (static_cast<int>(chain.size()) < k)
        fail("sample_contour_points: boundary has ", chain.size(), " pixels, need at least ", k);
    // cumulative arc length over the closed polyline
    const std::size_t n = chain.size();
    std::vector<double> cum(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& a = chain[i];
        const auto& b = chain[(i + 1) % n];
        const double dr = a[0] - b[0], dc = a[1] - b[1];
        cum[i + 1] = cum[i] + std::sqrt(dr * dr + dc * dc);
    }
    const double total = cum[n];
    ContourPoints out;
    out.pts.reserve(static_cast<std::size_t>(k));
    std::size_t seg = 0;
    for (int i = 0; i < k; ++i) {
        const double target = total * i / k;
        while (seg + 1 < n && cum[seg + 1] <= target) ++seg;
        const double seg_len = cum[seg + 1] - cum[seg];
        const double t = seg_len > 0 ? (target - cum[seg]) / seg_len : 0.0;
        const auto& a = chain[seg];
        const auto& b = chain[(seg + 1) % n];
        out.pts.push_back({a[1] + t * (b[1] - a[1]), a[0] + t * (b[0] - a[0])});  // (x, y)
    }
    return out;
}

namespace {

ShapeContextDescriptor descriptor_for(const std::vector<std::array<double, 2>>& pts,
                                      std::size_t index, double mean_dist) {
    ShapeContextDescriptor d;
    // radial boundaries: 5 log-spaced values on [1/8, 2] x mean distance; the
    // first bin absorbs anything closer, the last is unbounded above
    std::array<double, kShapeContextRadialBins> edges{};
    const double lo = std::log(0.125), hi = std::log(2.0);
    for (int i = 0; i < kShapeContextRadialBins; ++i)
        edges[static_cast<std::size_t>(i)] =
            std::exp(lo + (hi - lo) * i / (kShapeContextRadialBins - 1)) * mean_dist;
    const auto& p = pts[index];
    for (std::size_t j = 0; j < pts.size(); ++j) {
        if (j == index) continue;
        const double dx = pts[j][0] - p[0];
        const double dy = pts[j][1] - p[1];
        const double r = std::sqrt(dx * dx + dy * dy);
        int rbin = 0;
        for (int b = 1; b < kShapeContextRadialBins; ++b)
            if (r >= edges[static_cast<std::size_t>(b)]) rbin = b;
        double ang = std::atan2(dy, dx);
        if (ang < 0) ang += 2.0 * M_PI;
        int abin = static_cast<int>(ang / (2.0 * M_PI / kShapeContextAngularBins));
        if (abin >= kShapeContextAngularBins) abin = kShapeContextAngularBins - 1;
        d.bins[static_cast<std::size_t>(rbin * kShapeContextAngularBins + abin)] += 1;
    }
    return d;
}

double mean_pairwise_distance(const std::vector<std::array<double, 2>>& pts) {
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j) {
            const double dx = pts[i][0] - pts[j][0];
            const double dy = pts[i][1] - pts[j][1];
            acc += std::sqrt(dx * dx + dy * dy);
            ++count;
        }
    return count ? acc / count : 1.0;
}

}  // namespace

ShapeContextDescriptor shape_context(const ContourPoints& points, int index) {
    if (index < 0 || index >= points.size())
        fail("shape_context: index ", index, " out of range for ", points.size(), " points");
    return descriptor_for(points.pts, static_cast<std::size_t>(index),
                          mean_pairwise_distance(points.pts));
}

std::vector<ShapeContextDescriptor> shape_context_all(const ContourPoints& points) {
    const double md = mean_pairwise_distance(points.pts);
    std::vector<ShapeContextDescriptor> out;
    out.reserve(points.pts.size());
    for (std::size_t i = 0; i < points.pts.size(); ++i)
        out.push_back(descriptor_for(points.pts, i, md));
    return out;
}

std::vector<double> matching_cost_matrix(const std::vector<ShapeContextDescriptor>& src,
                                         const std::vector<ShapeContextDescriptor>& dst) {
    if (src.size() != dst.size())
        fail("matching_cost_matrix: descriptor counts differ (", src.size(), " vs ", dst.size(), ")");
    const std::size_t k = src.size();
    const std::size_t nbins = src.empty() ? 0 : src[0].bins.size();
    auto normalized = [nbins](const ShapeContextDescriptor& d) {
        std::vector<double> h(nbins, 0.0);
        double total = 0.0;
        for (int v : d.bins) total += v;
        if (total > 0)
            for (std::size_t b = 0; b < nbins; ++b) h[b] = d.bins[b] / total;
        return h;
    };
    std::vector<std::vector<double>> hs, hd;
    hs.reserve(k);
    hd.reserve(k);
    for (const auto& d : src) hs.push_back(normalized(d));
    for (const auto& d : dst) hd.push_back(normalized(d));
    std::vector<double> cost(k * k, 0.0);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            double acc = 0.0;
            for (std::size_t b = 0; b < nbins; ++b) {
                const double s = hs[i][b] + hd[j][b];
                if (s <= 0.0) continue;
                const double d = hs[i][b] - hd[j][b];
                acc += d * d / s;
            }
            cost[i * k + j] = 0.5 * acc;
        }
    return cost;
}

std::vector<int> hungarian_assign(const std::vector<double>& cost, int rows, int cols) {
    if (rows != cols) fail("hungarian_assign: matrix must be square, got ", rows, "x", cols);
    const int n = rows;
    if (n <= 0) fail("hungarian_assign: empty matrix");
    if (cost.size() != static_cast<std::size_t>(n) * n)
        fail("hungarian_assign: cost size does not match dimensions");
    for (double v : cost)
        if (!std::isfinite(v)) fail("hungarian_assign: cost matrix has non-finite entries");
    // potentials + shortest augmenting paths, O(n^3)
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<int> p(static_cast<std::size_t>(n) + 1, 0), way(static_cast<std::size_t>(n) + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
        std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
        do {
            used[static_cast<std::size_t>(j0)] = 1;
            const int i0 = p[static_cast<std::size_t>(j0)];
            double delta = inf;
            int j1 = -1;
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                const double cur =
                    cost[static_cast<std::size_t>(i0 - 1) * n + (j - 1)] - u[static_cast<std::size_t>(i0)] -
                    v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> perm(static_cast<std::size_t>(n), -1);
    for (int j = 1; j <= n; ++j) perm[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
    return perm;
}

TpsTransform fit_tps(const ContourPoints& src, const ContourPoints& dst,
                     const std::vector<int>& correspondence, double lambda) {
    const int k = src.size();
    if (k < 4) fail("fit_tps: need at least 4 control points, got ", k);
    if (dst.size() != k) fail("fit_tps: source and target point counts differ");
    if (static_cast<int>(correspondence.size()) != k)
        fail("fit_tps: correspondence size ", correspondence.size(), " != K ", k);
    if (lambda < 0.0) fail("fit_tps: regularization must be nonnegative, got ", lambda);

    std::vector<std::array<double, 2>> matched(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        const int j = correspondence[static_cast<std::size_t>(i)];
        if (j < 0 || j >= k) fail("fit_tps: correspondence entry ", j, " out of range");
        matched[static_cast<std::size_t>(i)] = dst.pts[static_cast<std::size_t>(j)];
    }

    // Solve in bbox-normalized coordinates (uniform per-set scale, so the
    // solution maps back to pixel space exactly), then denormalize.
    const Frame fs = normalize_frame(src.pts);
    const Frame fd = normalize_frame(matched);
    std::vector<std::array<double, 2>> sp(static_cast<std::size_t>(k)), dp(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        sp[static_cast<std::size_t>(i)] = {(src.pts[static_cast<std::size_t>(i)][0] - fs.ox) * fs.scale,
                                           (src.pts[static_cast<std::size_t>(i)][1] - fs.oy) * fs.scale};
        dp[static_cast<std::size_t>(i)] = {(matched[static_cast<std::size_t>(i)][0] - fd.ox) * fd.scale,
                                           (matched[static_cast<std::size_t>(i)][1] - fd.oy) * fd.scale};
    }

    const int n = k + 3;
    std::vector<double> a(static_cast<std::size_t>(n) * n, 0.0);
    std::vector<double> b(static_cast<std::size_t>(n) * 2, 0.0);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            const double dx = sp[static_cast<std::size_t>(i)][0] - sp[static_cast<std::size_t>(j)][0];
            const double dy = sp[static_cast<std::size_t>(i)][1] - sp[static_cast<std::size_t>(j)][1];
            a[static_cast<std::size_t>(i) * n + j] = tps_kernel_r2(dx * dx + dy * dy);
        }
        a[static_cast<std::size_t>(i) * n + i] += lambda;
        a[static_cast<std::size_t>(i) * n + k] = 1.0;
        a[static_cast<std::size_t>(i) * n + k + 1] = sp[static_cast<std::size_t>(i)][0];
        a[static_cast<std::size_t>(i) * n + k + 2] = sp[static_cast<std::size_t>(i)][1];
        a[(static_cast<std::size_t>(k)) * n + i] = 1.0;
        a[(static_cast<std::size_t>(k) + 1) * n + i] = sp[static_cast<std::size_t>(i)][0];
        a[(static_cast<std::size_t>(k) + 2) * n + i] = sp[static_cast<std::size_t>(i)][1];
        b[static_cast<std::size_t>(i) * 2 + 0] = dp[static_cast<std::size_t>(i)][0];
        b[static_cast<std::size_t>(i) * 2 + 1] = dp[static_cast<std::size_t>(i)][1];
    }
    solve_linear(a, b, n, 2);

    TpsTransform t;
    t.regularization = lambda;
    t.control_points = src.pts;
    t.warp_weights.resize(static_cast<std::size_t>(k));
    // pixel-space kernel weights: w = (scale_src^2 / scale_dst) * w_norm.
    // Valid because the side conditions make the residual r^2 terms of the
    // rescaled kernel collapse into a constant absorbed by the translation.
    const double wscale = fs.scale * fs.scale / fd.scale;
    for (int i = 0; i < k; ++i) {
        t.warp_weights[static_cast<std::size_t>(i)][0] = b[static_cast<std::size_t>(i) * 2 + 0] * wscale;
        t.warp_weights[static_cast<std::size_t>(i)][1] = b[static_cast<std::size_t>(i) * 2 + 1] * wscale;
    }
    const double a0x = b[static_cast<std::size_t>(k) * 2 + 0], a0y = b[static_cast<std::size_t>(k) * 2 + 1];
    const double axx = b[(static_cast<std::size_t>(k) + 1) * 2 + 0],
                 axy = b[(static_cast<std::size_t>(k) + 1) * 2 + 1];
    const double ayx = b[(static_cast<std::size_t>(k) + 2) * 2 + 0],
                 ayy = b[(static_cast<std::size_t>(k) + 2) * 2 + 1];
    const double amul = fs.scale / fd.scale;
    t.affine = {axx * amul, ayx * amul, 0.0, axy * amul, ayy * amul, 0.0};
    // Fix translation by matching the normalized-path evaluation at the
    // source-frame origin.
    auto eval_norm = [&](double x, double y) {
        const double nx = (x - fs.ox) * fs.scale;
        const double ny = (y - fs.oy) * fs.scale;
        double ox = a0x + axx * nx + ayx * ny;
        double oy = a0y + axy * nx + ayy * ny;
        for (int i = 0; i < k; ++i) {
            const double dx = nx - sp[static_cast<std::size_t>(i)][0];
            const double dy = ny - sp[static_cast<std::size_t>(i)][1];
            const double u = tps_kernel_r2(dx * dx + dy * dy);
            ox += b[static_cast<std::size_t>(i) * 2 + 0] * u;
            oy += b[static_cast<std::size_t>(i) * 2 + 1] * u;
        }
        return std::array<double, 2>{ox / fd.scale + fd.ox, oy / fd.scale + fd.oy};
    };
    const std::array<double, 2> want = eval_norm(0.0, 0.0);
    const std::array<double, 2> have = t.map(0.0, 0.0);
    t.affine[2] = want[0] - have[0];
    t.affine[5] = want[1] - have[1];
    return t;
}

WarpResult apply_tps_warp(const Tensor<float>& product, const BinaryMask& foreground,
                          const TpsTransform& transform, int out_h, int out_w) {
    const auto& s = product.shape();
    if (s.size() != 3 || s[0] != 3) fail("apply_tps_warp: product must be [3,H,W]");
    if (foreground.h != s[1] || foreground.w != s[2])
        fail("apply_tps_warp: foreground mask does not match product size");
    if (out_h <= 0 || out_w <= 0) fail("apply_tps_warp: output size must be positive");
    const int h = s[1], w = s[2];
    const std::size_t in_plane = static_cast<std::size_t>(h) * w;
    const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;
    WarpResult res;
    res.image = Tensor<float>::zeros({3, out_h, out_w});
    res.mask = {out_h, out_w, std::vector<std::uint8_t>(out_plane, 0)};
#pragma omp parallel for schedule(static)
    for (int r = 0; r < out_h; ++r) {
        for (int c = 0; c < out_w; ++c) {
            const std::array<double, 2> srcp = transform.map(c, r);
            const std::size_t o = static_cast<std::size_t>(r) * out_w + c;
            for (int ch = 0; ch < 3; ++ch)
                res.image.data()[static_cast<std::size_t>(ch) * out_plane + o] = sample_bilinear(
                    product.data().data() + static_cast<std::size_t>(ch) * in_plane, h, w, srcp[0],
                    srcp[1]);
            const int nx = static_cast<int>(std::floor(srcp[0] + 0.5));
            const int ny = static_cast<int>(std::floor(srcp[1] + 0.5));
            if (nx >= 0 && nx < w && ny >= 0 && ny < h) res.mask.v[o] = foreground.at(ny, nx);
        }
    }
    return res;
}

Tensor<float> warp_clothing(const Tensor<float>& product, const Tensor<float>& predicted_mask,
                            int k, double lambda, int out_h, int out_w) {
    BinaryMask target = threshold_mask(predicted_mask);
    bool any = false;
    for (auto v : target.v) any = any || v;
    if (!any) fail("warp_clothing: clothing mask is empty after thresholding");
    const BinaryMask fg = extract_foreground_mask(product);
    const ContourPoints src = sample_contour_points(target, k);
    const ContourPoints dst = sample_contour_points(fg, k);
    const std::vector<double> cost = matching_cost_matrix(shape_context_all(src), shape_context_all(dst));
    const std::vector<int> perm = hungarian_assign(cost, k, k);
    const TpsTransform t = fit_tps(src, dst, perm, lambda);
    return apply_tps_warp(product, fg, t, out_h, out_w).image;
}

}  // namespace tryon
