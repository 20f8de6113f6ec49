// Command-line surface for the try-on pipeline: fixture generation, caching,
// two-stage training, inference, warping, evaluation, and the gradient
// oracle.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "tryon/gradcheck.hpp"
#include "tryon/pipeline.hpp"

namespace fs = std::filesystem;
using namespace tryon;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("-c,--config", args.config_path, "key=value config file");
    cmd->add_option("-s,--set", args.overrides, "override a config key (key=value, repeatable)");
}

PipelineConfig resolve_config(const CommonArgs& args) {
    PipelineConfig cfg;
    if (!args.config_path.empty()) cfg = load_config(args.config_path);
    apply_overrides(cfg, args.overrides);
    cfg.validate();
    return cfg;
}

int run_eval(const PipelineConfig& cfg, const std::string& metrics_path) {
    CoarseGenerator<float> gen({cfg.width_mult, true, cfg.seed});
    load_coarse_checkpoint(cfg.out_dir + "/coarse.ckpt", gen);
    gen.set_frozen(true);
    RefinementNet<float> net(cfg.seed + 3);
    load_refine_checkpoint(cfg.out_dir + "/refine.ckpt", net);

    const int count = count_samples(cfg.data_dir);
    if (count == 0) fail("eval: no samples in ", cfg.data_dir);
    std::vector<int> product_of(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) product_of[static_cast<std::size_t>(i)] = i;
    if (cfg.eval_shuffled) {
        std::mt19937 rng = make_rng(cfg.seed + 17);
        std::shuffle(product_of.begin(), product_of.end(), rng);
    }

    std::vector<EvalSample> results;
    for (int i = 0; i < count; ++i) {
        const TryOnSample s = load_sample(cfg.data_dir, i);
        const TryOnSample partner = load_sample(cfg.data_dir, product_of[static_cast<std::size_t>(i)]);
        const InferenceResult r = run_inference(s, partner.product, gen, net, cfg);
        const PreparedSample p = prepare_sample(s, cfg.height, cfg.width);
        results.push_back({r.final_image, resize_chw(s.image, cfg.height, cfg.width),
                           r.coarse_mask, p.m0});
    }
    const Metrics m = evaluate(results);
    std::ostringstream line;
    line << "samples=" << count << " shuffled=" << (cfg.eval_shuffled ? 1 : 0)
         << " mae=" << m.mae << " mae_clothing=" << m.mae_clothing << " psnr=" << m.psnr
         << " mask_iou=" << m.mask_iou;
    std::cout << line.str() << "\n";
    if (!metrics_path.empty()) {
        std::ofstream out(metrics_path, std::ios::app);
        if (!out) fail("eval: cannot write metrics log ", metrics_path);
        out << line.str() << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"coarse-to-fine virtual try-on pipeline"};
    app.require_subcommand(1);

    CommonArgs gen_args, prep_args, coarse_args, refine_args, infer_args, eval_args;

    auto* gen_cmd = app.add_subcommand("gen-fixtures", "render the synthetic paired dataset");
    add_common(gen_cmd, gen_args);
    int gen_count = -1;
    std::uint64_t gen_seed = 0;
    bool gen_seed_set = false;
    std::string gen_out;
    gen_cmd->add_option("--count", gen_count, "number of samples (default: fixture_count)");
    gen_cmd->add_option("--seed", gen_seed, "generation seed (default: config seed)")
        ->each([&](const std::string&) { gen_seed_set = true; });
    gen_cmd->add_option("--out", gen_out, "output directory (default: data_dir)");

    auto* prep_cmd = app.add_subcommand("prepare", "build and cache p and M0 per sample");
    add_common(prep_cmd, prep_args);

    auto* coarse_cmd = app.add_subcommand("train-coarse", "stage 1: train the coarse generator");
    add_common(coarse_cmd, coarse_args);

    auto* refine_cmd = app.add_subcommand("train-refine", "stage 2: train the refinement net");
    add_common(refine_cmd, refine_args);

    auto* infer_cmd = app.add_subcommand("infer", "run the full try-on pass for one sample");
    add_common(infer_cmd, infer_args);
    int infer_index = 0, infer_product = -1;
    std::string infer_out = "infer_out";
    double force_alpha = -1.0;
    infer_cmd->add_option("--sample", infer_index, "reference sample index");
    infer_cmd->add_option("--product", infer_product,
                          "sample index supplying the target product (default: same)");
    infer_cmd->add_option("--out", infer_out, "output directory");
    infer_cmd->add_option("--force-alpha", force_alpha,
                          "override the composition mask with a constant (test hook)");

    auto* warp_cmd = app.add_subcommand("warp", "warp a product PNG onto a clothing mask PNG");
    std::string warp_product, warp_mask, warp_out = "warped.png";
    int warp_k = kContourPointsDefault;
    double warp_lambda = kTpsLambdaDefault;
    int warp_h = 0, warp_w = 0;
    warp_cmd->add_option("--product", warp_product, "product image PNG")->required();
    warp_cmd->add_option("--mask", warp_mask, "target clothing mask PNG (gray)")->required();
    warp_cmd->add_option("--out", warp_out, "output PNG");
    warp_cmd->add_option("--points", warp_k, "contour sample count K");
    warp_cmd->add_option("--lambda", warp_lambda, "TPS regularization");
    warp_cmd->add_option("--height", warp_h, "output height (default: mask height)");
    warp_cmd->add_option("--width", warp_w, "output width (default: mask width)");

    auto* eval_cmd = app.add_subcommand("eval", "run inference over the dataset and report metrics");
    add_common(eval_cmd, eval_args);
    std::string metrics_path;
    eval_cmd->add_option("--metrics", metrics_path, "append the metrics record to this file");

    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient oracle");
    int grad_seeds = 10;
    grad_cmd->add_option("--seeds", grad_seeds, "random draws per op");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen_cmd->parsed()) {
            const PipelineConfig cfg = resolve_config(gen_args);
            generate_fixtures(gen_count > 0 ? gen_count : cfg.fixture_count,
                              gen_seed_set ? gen_seed : cfg.seed, cfg.height, cfg.width,
                              gen_out.empty() ? cfg.data_dir : gen_out);
        } else if (prep_cmd->parsed()) {
            prepare_dataset(resolve_config(prep_args));
        } else if (coarse_cmd->parsed()) {
            train_coarse(resolve_config(coarse_args));
        } else if (refine_cmd->parsed()) {
            train_refine(resolve_config(refine_args));
        } else if (infer_cmd->parsed()) {
            const PipelineConfig cfg = resolve_config(infer_args);
            CoarseGenerator<float> gen({cfg.width_mult, true, cfg.seed});
            load_coarse_checkpoint(cfg.out_dir + "/coarse.ckpt", gen);
            gen.set_frozen(true);
            RefinementNet<float> net(cfg.seed + 3);
            load_refine_checkpoint(cfg.out_dir + "/refine.ckpt", net);
            const TryOnSample s = load_sample(cfg.data_dir, infer_index);
            const TryOnSample partner =
                infer_product >= 0 ? load_sample(cfg.data_dir, infer_product) : s;
            std::optional<float> fa;
            if (force_alpha >= 0.0) fa = static_cast<float>(force_alpha);
            const InferenceResult r = run_inference(s, partner.product, gen, net, cfg, fa);
            fs::create_directories(infer_out);
            save_image_png(infer_out + "/final.png", r.final_image);
            save_image_png(infer_out + "/coarse.png", r.coarse_image);
            save_gray_png(infer_out + "/mask.png", r.coarse_mask);
            save_image_png(infer_out + "/cprime.png", r.warped);
            save_gray_png(infer_out + "/alpha.png", r.alpha);
            // person representation channels for inspection
            const int m = cfg.height, n = cfg.width;
            const std::size_t plane = static_cast<std::size_t>(m) * n;
            Tensor<float> pose_sum = Tensor<float>::zeros({1, m, n});
            for (int ch = 0; ch < 18; ++ch)
                for (std::size_t i = 0; i < plane; ++i)
                    pose_sum.data()[i] = std::min(
                        1.0f, pose_sum.data()[i] + r.rep.data()[static_cast<std::size_t>(ch) * plane + i]);
            save_gray_png(infer_out + "/rep_pose.png", pose_sum);
            save_gray_png(infer_out + "/rep_body.png",
                          Tensor<float>::from_data({1, m, n},
                                                   std::vector<float>(r.rep.data().begin() + static_cast<std::ptrdiff_t>(18 * plane),
                                                                      r.rep.data().begin() + static_cast<std::ptrdiff_t>(19 * plane))));
            save_image_png(infer_out + "/rep_facehair.png",
                           Tensor<float>::from_data({3, m, n},
                                                    std::vector<float>(r.rep.data().begin() + static_cast<std::ptrdiff_t>(19 * plane),
                                                                       r.rep.data().end())));
            if (!r.warning.empty()) std::cerr << "warning: " << r.warning << "\n";
            std::cout << "wrote " << infer_out << "/final.png\n";
        } else if (warp_cmd->parsed()) {
            const Tensor<float> product = load_image_png(warp_product);
            Tensor<float> mask_rgb = load_image_png(warp_mask);
            const int mh = mask_rgb.dim(1), mw = mask_rgb.dim(2);
            // gray mask arrives as replicated RGB; take the first channel
            Tensor<float> mask = Tensor<float>::from_data(
                {1, mh, mw},
                std::vector<float>(mask_rgb.data().begin(),
                                   mask_rgb.data().begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(mh) * mw)));
            const Tensor<float> warped =
                warp_clothing(product, mask, warp_k, warp_lambda, warp_h > 0 ? warp_h : mh,
                              warp_w > 0 ? warp_w : mw);
            save_image_png(warp_out, warped);
            std::cout << "wrote " << warp_out << "\n";
        } else if (eval_cmd->parsed()) {
            return run_eval(resolve_config(eval_args), metrics_path);
        } else if (grad_cmd->parsed()) {
            const auto results = run_gradient_suite(grad_seeds);
            bool ok = true;
            for (const auto& r : results) {
                const bool pass = r.max_rel_err < 1e-5;
                ok = ok && pass;
                std::cout << (pass ? "PASS" : "FAIL") << " " << r.name
                          << " max_rel_err=" << r.max_rel_err << "\n";
            }
            return ok ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
