// Acceptance suite: one check per release criterion, each printed as a
// single PASS/FAIL line. Exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "support.hpp"
#include "tryon/gradcheck.hpp"
#include "tryon/pipeline.hpp"

using namespace tryon;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;
std::vector<std::string> only;  // optional criterion-name filter from argv

bool selected(const std::string& name) {
    if (only.empty()) return true;
    for (const auto& o : only)
        if (name == o) return true;
    return false;
}

void criterion(const std::string& name, const std::function<std::string()>& body) {
    if (!selected(name)) return;
    const auto t0 = Clock::now();
    std::string detail;
    bool ok = true;
    try {
        detail = body();
    } catch (const std::exception& e) {
        ok = false;
        detail = e.what();
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    std::printf("%s %-26s (%6.1fs) %s\n", ok ? "PASS" : "FAIL", name.c_str(), secs,
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

template <class T>
void expect(bool cond, const T& message) {
    if (!cond) throw Error(cat(message));
}

PipelineConfig desk_recipe() {
    PipelineConfig cfg;
    cfg.height = 64;
    cfg.width = 64;
    cfg.width_mult = 1.0 / 8.0;
    cfg.perception_width_mult = 1.0 / 8.0;
    cfg.contour_points = 32;
    cfg.coarse_steps = 500;
    cfg.refine_steps = 300;
    cfg.batch_size = 4;
    cfg.fixture_count = 16;
    cfg.seed = 33;
    return cfg;
}

// The overfit diagnostics pin steps, resolution and width; they run Adam at
// an overfitting rate rather than the full-training default (which moves
// each weight at most steps*lr ~ 0.06 and cannot saturate the output heads
// in 300 steps). The training default stays 0.0002 and is asserted above.
inline constexpr float kOverfitLearningRate = 1e-3f;

double clothing_mae(const Tensor<float>& a, const Tensor<float>& b, const Tensor<float>& mask) {
    const std::size_t plane = mask.numel();
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t px = 0; px < plane; ++px) {
        if (mask.data()[px] < 0.5f) continue;
        for (int ch = 0; ch < 3; ++ch)
            acc += std::abs(static_cast<double>(a.data()[static_cast<std::size_t>(ch) * plane + px]) -
                            b.data()[static_cast<std::size_t>(ch) * plane + px]);
        count += 3;
    }
    return count ? acc / static_cast<double>(count) : 0.0;
}

std::string check_gradient_oracle() {
    const auto t0 = Clock::now();
    const auto results = run_gradient_suite(10);
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    double worst = 0.0;
    std::string worst_name;
    for (const auto& r : results) {
        if (r.max_rel_err > worst) {
            worst = r.max_rel_err;
            worst_name = r.name;
        }
        expect(r.max_rel_err < 1e-5,
               cat(r.name, " max relative error ", r.max_rel_err, " >= 1e-5"));
    }
    expect(secs < 120.0, cat("suite took ", secs, "s, budget is 120s"));
    return cat("worst ", worst_name, " rel err ", worst, ", ", results.size(), " op groups");
}

std::string check_paper_constants() {
    AdamState<float> adam;
    expect(adam.beta1 == 0.5f, "beta1 != 0.5");
    expect(adam.beta2 == 0.999f, "beta2 != 0.999");
    expect(adam.learning_rate == 0.0002f, "learning rate != 0.0002");
    PipelineConfig cfg;
    expect(cfg.beta1 == 0.5 && cfg.beta2 == 0.999 && cfg.learning_rate == 0.0002,
           "config optimizer defaults");
    expect(cfg.lambda_warp == 0.1, "lambda_warp != 0.1");
    expect(cfg.lambda_tv == 5e-6, "lambda_tv != 5e-6");
    RefinementLossConfig<float> rcfg;
    expect(rcfg.lambda_warp == 0.1f, "refine lambda_warp != 0.1");
    expect(rcfg.lambda_tv == 5e-6f, "refine lambda_tv != 5e-6");
    expect(rcfg.perceptual_levels == std::set<int>({3, 4, 5}), "Eq.3 levels != {3,4,5}");
    expect(kLeakySlope == 0.2, "leaky slope != 0.2");
    expect(kDropoutProb == 0.5, "dropout != 0.5");
    CoarseGenerator<float> gen({1.0, true, 0});
    expect(gen.encoder_filters() == std::array<int, 6>{64, 128, 256, 512, 512, 512},
           "encoder filters");
    expect(gen.decoder_channels() == std::array<int, 6>{512, 512, 256, 128, 64, 4},
           "decoder channels");
    expect(kRepresentationChannels == 22, "representation channels != 22");
    expect(cfg.height == 256 && cfg.width == 192, "default resolution != 256x192");
    expect(cfg.batch_size == 16 && cfg.coarse_steps == 15000 && cfg.refine_steps == 6000,
           "training schedule defaults");
    return "all published constants match exactly";
}

std::string check_hungarian_oracle() {
    std::mt19937 rng(404);
    std::uniform_int_distribution<int> val(0, 4095);
    int checked = 0;
    for (int k = 2; k <= 8; ++k) {
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<double> cost(static_cast<std::size_t>(k) * k);
            for (auto& v : cost) v = val(rng) / 64.0;  // dyadic values: sums are exact
            const auto perm = hungarian_assign(cost, k, k);
            double total = 0.0;
            std::vector<char> used(static_cast<std::size_t>(k), 0);
            for (int i = 0; i < k; ++i) {
                expect(!used[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])],
                       "assignment is not a permutation");
                used[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = 1;
                total += cost[static_cast<std::size_t>(i) * k + perm[static_cast<std::size_t>(i)]];
            }
            const double best = testutil::brute_force_assignment(cost, k);
            expect(total == best, cat("K=", k, ": got ", total, ", brute force ", best));
            ++checked;
        }
    }
    return cat(checked, " matrices, all optimal with zero tolerance");
}

std::string check_tps_exactness() {
    std::mt19937 rng(405);
    std::uniform_real_distribution<double> uni(5.0, 120.0);
    auto random_pts = [&](int k) {
        ContourPoints p;
        for (int i = 0; i < k; ++i) p.pts.push_back({uni(rng), uni(rng)});
        return p;
    };
    std::vector<int> ident(32);
    for (int i = 0; i < 32; ++i) ident[static_cast<std::size_t>(i)] = i;

    double worst_interp = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        auto src = random_pts(32);
        auto dst = random_pts(32);
        auto t = fit_tps(src, dst, ident, 0.0);
        for (int i = 0; i < 32; ++i) {
            const auto mp = t.map(src.pts[static_cast<std::size_t>(i)][0], src.pts[static_cast<std::size_t>(i)][1]);
            worst_interp = std::max({worst_interp,
                                     std::abs(mp[0] - dst.pts[static_cast<std::size_t>(i)][0]),
                                     std::abs(mp[1] - dst.pts[static_cast<std::size_t>(i)][1])});
        }
    }
    expect(worst_interp < 1e-6, cat("interpolation residual ", worst_interp));

    double worst_w = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        auto src = random_pts(24);
        // pure translation
        ContourPoints dst = src;
        for (auto& p : dst.pts) {
            p[0] += 17.5;
            p[1] -= 4.25;
        }
        std::vector<int> id24(24);
        for (int i = 0; i < 24; ++i) id24[static_cast<std::size_t>(i)] = i;
        auto t = fit_tps(src, dst, id24, 0.0);
        for (const auto& w : t.warp_weights)
            worst_w = std::max({worst_w, std::abs(w[0]), std::abs(w[1])});
        // general affine
        ContourPoints aff = src;
        for (auto& p : aff.pts) {
            const double x = p[0], y = p[1];
            p[0] = 0.85 * x - 0.21 * y + 14.0;
            p[1] = 0.33 * x + 1.14 * y - 6.0;
        }
        auto t2 = fit_tps(src, aff, id24, 0.0);
        for (const auto& w : t2.warp_weights)
            worst_w = std::max({worst_w, std::abs(w[0]), std::abs(w[1])});
    }
    expect(worst_w < 1e-6, cat("affine-span warp weights reach ", worst_w));
    return cat("interp residual ", worst_interp, ", max |w| on affine maps ", worst_w);
}

std::string check_shape_context_invariance() {
    std::mt19937 rng(406);
    std::uniform_real_distribution<double> uni(0.0, 200.0);
    for (int trial = 0; trial < 25; ++trial) {
        ContourPoints pts;
        for (int i = 0; i < 48; ++i) pts.pts.push_back({uni(rng), uni(rng)});
        const auto base = shape_context_all(pts);
        ContourPoints moved = pts, scaled = pts;
        for (auto& p : moved.pts) {
            p[0] += 31.0;
            p[1] -= 12.5;
        }
        for (auto& p : scaled.pts) {
            p[0] *= 2.75;
            p[1] *= 2.75;
        }
        const auto m = shape_context_all(moved);
        const auto s = shape_context_all(scaled);
        for (std::size_t i = 0; i < base.size(); ++i) {
            expect(base[i].bins == m[i].bins, "translation changed a descriptor");
            expect(base[i].bins == s[i].bins, "uniform scaling changed a descriptor");
        }
    }

    // identical shapes through the full matching pipeline
    BinaryMask mask{64, 64, std::vector<std::uint8_t>(64 * 64, 0)};
    for (int y = 12; y < 52; ++y) {
        const double t = (y - 12) / 39.0;
        const int half = static_cast<int>(20.0 - 6.0 * t);
        for (int x = 32 - half; x <= 32 + half; ++x)
            mask.v[static_cast<std::size_t>(y) * 64 + x] = 1;
    }
    const auto src = sample_contour_points(mask, 48);
    const auto dst = sample_contour_points(mask, 48);
    const auto cost = matching_cost_matrix(shape_context_all(src), shape_context_all(dst));
    const auto perm = hungarian_assign(cost, 48, 48);
    const auto t = fit_tps(src, dst, perm, kTpsLambdaDefault);
    double worst = 0.0;
    for (const auto& p : src.pts) {
        const auto mp = t.map(p[0], p[1]);
        worst = std::max(worst, std::hypot(mp[0] - p[0], mp[1] - p[1]));
    }
    expect(worst < 1.0, cat("identical-shape displacement ", worst, " px"));
    return cat("descriptors invariant; identical-shape displacement ", worst, " px");
}

std::string check_overfit_coarse(std::vector<float>& out_losses, CoarseGenerator<float>& gen,
                                 FixtureSample& fixture, PreparedSample& prep) {
    const auto t0 = Clock::now();
    fixture = render_fixture(77, 0, 64, 64);
    TryOnSample sample{fixture.image, fixture.product, fixture.keypoints, fixture.parse,
                       clothing_mask_from_parse(fixture.parse)};
    prep = prepare_sample(sample, 64, 64);

    PerceptionNet<float> phi(78, 1.0 / 8.0);
    std::vector<Tensor<float>> params = gen.trainable_params();
    AdamState<float> opt;
    opt.learning_rate = kOverfitLearningRate;
    LossWeights<float> weights;
    std::mt19937 rng = make_rng(79);
    CoarseBatch<float> batch;
    batch.clothing = Tensor<float>::from_data({1, 3, 64, 64}, fixture.product.data());
    batch.person = Tensor<float>::from_data({1, 22, 64, 64}, prep.rep.data());
    batch.target_image = Tensor<float>::from_data({1, 3, 64, 64}, fixture.image.data());
    batch.target_mask = Tensor<float>::from_data({1, 1, 64, 64}, prep.m0.data());
    // dropout-free objective value of the current model
    auto eval_loss = [&] {
        std::mt19937 r = make_rng(0);
        CoarseOutput<float> out = gen.forward(batch.clothing, batch.person, false, r);
        return coarse_loss(out, batch.target_image, batch.target_mask, weights, phi).item();
    };
    const float initial = eval_loss();
    for (int step = 0; step < 300; ++step)
        out_losses.push_back(train_coarse_step(batch, gen, params, opt, weights, phi, rng));
    const float final_loss = eval_loss();
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();

    expect(final_loss <= 0.1f * initial,
           cat("loss only fell from ", initial, " to ", final_loss, " (need >= 90%)"));
    expect(secs < 300.0, cat("run took ", secs, "s, budget 300s"));

    // smoothed training loss decreases across 50-step windows
    auto window_mean = [&](int start) {
        float acc = 0.0f;
        for (int i = start; i < start + 50; ++i) acc += out_losses[static_cast<std::size_t>(i)];
        return acc / 50.0f;
    };
    for (int start = 50; start + 50 <= 300; start += 50)
        expect(window_mean(start) < window_mean(start - 50),
               cat("smoothed loss not decreasing at step ", start));
    return cat("loss ", initial, " -> ", final_loss, " (", (1.0f - final_loss / initial) * 100.0f,
               "% drop)");
}

std::string check_overfit_refine(CoarseGenerator<float>& gen, const FixtureSample& fixture,
                                 const PreparedSample& prep) {
    const auto t0 = Clock::now();
    // coarse output for the same fixture, then c' = ground-truth clothing region
    std::mt19937 eval_rng = make_rng(80);
    Tensor<float> c = Tensor<float>::from_data({1, 3, 64, 64}, fixture.product.data());
    Tensor<float> p = Tensor<float>::from_data({1, 22, 64, 64}, prep.rep.data());
    gen.set_frozen(true);
    const CoarseOutput<float> coarse = gen.forward(c, p, false, eval_rng);
    const std::size_t plane = 64 * 64;
    Tensor<float> cprime = Tensor<float>::zeros({1, 3, 64, 64});
    for (std::size_t px = 0; px < plane; ++px)
        if (prep.m0.data()[px] >= 0.5f)
            for (int ch = 0; ch < 3; ++ch)
                cprime.data()[static_cast<std::size_t>(ch) * plane + px] =
                    fixture.image.data()[static_cast<std::size_t>(ch) * plane + px];
    Tensor<float> reference = Tensor<float>::from_data({1, 3, 64, 64}, fixture.image.data());
    Tensor<float> coarse_img =
        Tensor<float>::from_data({1, 3, 64, 64}, std::vector<float>(coarse.image.data()));

    PerceptionNet<float> phi(81, 1.0 / 8.0);
    RefinementNet<float> net(82);
    std::vector<Tensor<float>> params = net.trainable_params();
    AdamState<float> opt;
    opt.learning_rate = kOverfitLearningRate;
    RefinementLossConfig<float> cfg;
    LossWeights<float> lw;
    auto eq3_term = [&] {
        Tensor<float> alpha = net.forward(cprime, coarse_img);
        Tensor<float> composed = composite(alpha, cprime, coarse_img);
        return perceptual_loss(composed, reference, cfg.perceptual_levels, lw, phi).item();
    };
    const float initial = eq3_term();
    RefineBatch<float> batch{cprime, coarse_img, reference};
    for (int step = 0; step < 300; ++step) train_refine_step(batch, net, params, opt, cfg, phi);
    const float final_term = eq3_term();
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    expect(final_term <= 0.2f * initial,
           cat("Eq.3 term fell from ", initial, " to ", final_term, " (need >= 80%)"));
    expect(secs < 300.0, cat("run took ", secs, "s, budget 300s"));
    expect(gen.trainable_params()[0].requires_grad() == false, "coarse generator unfroze");
    return cat("perceptual term ", initial, " -> ", final_term, " (",
               (1.0f - final_term / initial) * 100.0f, "% drop)");
}

std::string check_end_to_end_improvement() {
    testutil::TempDir dir("tryon_accept_e2e");
    PipelineConfig cfg = desk_recipe();
    cfg.data_dir = dir.str() + "/train";
    cfg.out_dir = dir.str() + "/out";
    generate_fixtures(16, cfg.seed, cfg.height, cfg.width, cfg.data_dir);
    train_full(cfg);

    CoarseGenerator<float> gen({cfg.width_mult, true, cfg.seed});
    load_coarse_checkpoint(cfg.out_dir + "/coarse.ckpt", gen);
    gen.set_frozen(true);
    RefinementNet<float> net(cfg.seed + 3);
    load_refine_checkpoint(cfg.out_dir + "/refine.ckpt", net);

    const std::string holdout = dir.str() + "/holdout";
    generate_fixtures(20, cfg.seed + 1000, cfg.height, cfg.width, holdout);
    int wins = 0, total = 0;
    for (int i = 0; i < 20; ++i) {
        const TryOnSample s = load_sample(holdout, i);
        const PreparedSample prep = prepare_sample(s, cfg.height, cfg.width);
        const InferenceResult r = run_inference(s, s.product, gen, net, cfg);
        ++total;
        if (!r.warning.empty()) continue;  // warp fallback counts as a loss
        const Tensor<float> reference = resize_chw(s.image, cfg.height, cfg.width);
        const double refined = clothing_mae(r.final_image, reference, prep.m0);
        const double coarse = clothing_mae(r.coarse_image, reference, prep.m0);
        if (refined <= coarse) ++wins;
    }
    expect(wins * 5 >= total * 4, cat("refined beat coarse on only ", wins, "/", total));
    return cat("refined beat coarse on ", wins, "/", total, " held-out fixtures");
}

std::string check_compositing_identities() {
    std::mt19937 rng(407);
    auto a = testutil::random_tensor<float>({1, 3, 16, 16}, rng, false, 0.0f, 1.0f);
    auto b = testutil::random_tensor<float>({1, 3, 16, 16}, rng, false, 0.0f, 1.0f);
    const auto ones = composite(Tensor<float>::filled({1, 1, 16, 16}, 1.0f), a, b);
    expect(ones.data() == a.data(), "alpha=1 is not exactly c'");
    const auto zeros = composite(Tensor<float>::zeros({1, 1, 16, 16}), a, b);
    expect(zeros.data() == b.data(), "alpha=0 is not exactly I'");
    const auto mid = composite(Tensor<float>::filled({1, 1, 16, 16}, 0.5f), a, b);
    for (std::size_t i = 0; i < mid.numel(); ++i)
        expect(mid.data()[i] == (a.data()[i] + b.data()[i]) / 2.0f, "alpha=0.5 is not the midpoint");

    const int h = 12, w = 31;
    auto alpha = Tensor<double>::zeros({1, 1, h, w});
    for (int r = h / 2; r < h; ++r)
        for (int c = 0; c < w; ++c) alpha.data()[static_cast<std::size_t>(r) * w + c] = 1.0;
    expect(tv_norm(alpha).item() == static_cast<double>(w),
           cat("half-plane tv = ", tv_norm(alpha).item(), ", expected ", w));
    return "endpoint, midpoint and tv identities are exact";
}

std::string check_determinism() {
    testutil::TempDir dir("tryon_accept_det");
    auto run = [&](const std::string& tag) {
        PipelineConfig cfg = desk_recipe();
        cfg.coarse_steps = 40;
        cfg.refine_steps = 25;
        cfg.batch_size = 2;
        cfg.fixture_count = 6;
        cfg.data_dir = dir.str() + "/data_" + tag;
        cfg.out_dir = dir.str() + "/out_" + tag;
        generate_fixtures(cfg.fixture_count, cfg.seed, cfg.height, cfg.width, cfg.data_dir);
        prepare_dataset(cfg);
        train_full(cfg);
        CoarseGenerator<float> gen({cfg.width_mult, true, cfg.seed});
        load_coarse_checkpoint(cfg.out_dir + "/coarse.ckpt", gen);
        gen.set_frozen(true);
        RefinementNet<float> net(cfg.seed + 3);
        load_refine_checkpoint(cfg.out_dir + "/refine.ckpt", net);
        const TryOnSample s = load_sample(cfg.data_dir, 0);
        const InferenceResult r = run_inference(s, s.product, gen, net, cfg);
        save_image_png(cfg.out_dir + "/final.png", r.final_image);
        return cfg.out_dir;
    };
    const std::string a = run("a");
    const std::string b = run("b");
    for (const char* f : {"/coarse.ckpt", "/refine.ckpt", "/final.png", "/warped/0000_cprime.png"})
        expect(testutil::files_identical(a + f, b + f), cat(f, " differs between runs"));
    return "checkpoints and rendered outputs are byte-identical across runs";
}

}  // namespace

int main(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) only.emplace_back(argv[i]);
    std::printf("acceptance suite\n");

    criterion("gradient-oracle", check_gradient_oracle);
    criterion("paper-constants", check_paper_constants);
    criterion("hungarian-oracle", check_hungarian_oracle);
    criterion("tps-exactness", check_tps_exactness);
    criterion("shape-context-invariance", check_shape_context_invariance);

    // the two overfit runs share a fixture and the trained coarse net
    std::vector<float> coarse_losses;
    CoarseGenerator<float> overfit_gen({1.0 / 8.0, true, 76});
    FixtureSample overfit_fixture;
    PreparedSample overfit_prep;
    criterion("overfit-coarse", [&] {
        return check_overfit_coarse(coarse_losses, overfit_gen, overfit_fixture, overfit_prep);
    });
    criterion("overfit-refine",
              [&] { return check_overfit_refine(overfit_gen, overfit_fixture, overfit_prep); });

    criterion("end-to-end-improvement", check_end_to_end_improvement);
    criterion("compositing-identities", check_compositing_identities);
    criterion("determinism", check_determinism);

    std::printf("%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
