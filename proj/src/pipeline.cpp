#include "tryon/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

namespace tryon {

namespace fs = std::filesystem;

namespace {

std::string sample_stem(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d", index);
    return buf;
}

ParseMap resize_parse_nearest(const ParseMap& parse, int m, int n) {
    if (parse.h == m && parse.w == n) return parse;
    ParseMap out{m, n, std::vector<std::uint8_t>(static_cast<std::size_t>(m) * n)};
    for (int r = 0; r < m; ++r) {
        const int sr = std::min(parse.h - 1, static_cast<int>(static_cast<long long>(r) * parse.h / m));
        for (int c = 0; c < n; ++c) {
            const int sc = std::min(parse.w - 1, static_cast<int>(static_cast<long long>(c) * parse.w / n));
            out.labels[static_cast<std::size_t>(r) * n + c] = parse.at(sr, sc);
        }
    }
    return out;
}

PoseKeypoints rescale_keypoints(const PoseKeypoints& kp, int from_h, int from_w, int m, int n) {
    if (from_h == m && from_w == n) return kp;
    PoseKeypoints out = kp;
    const double sy = static_cast<double>(m) / from_h;
    const double sx = static_cast<double>(n) / from_w;
    for (auto& p : out.points) {
        p.x *= sx;
        p.y *= sy;
    }
    return out;
}

std::string prep_path(const std::string& data_dir, int index) {
    return data_dir + "/prep/" + sample_stem(index) + "_prep.ckpt";
}

void append_log_line(std::ofstream& log, int step, float loss) {
    log << "step=" << step << " loss=" << loss << "\n";
}

std::vector<std::string> param_names(const std::vector<NamedParam<float>>& params) {
    std::vector<std::string> names;
    names.reserve(params.size());
    for (const auto& p : params) names.push_back(p.name);
    return names;
}

}  // namespace

Tensor<float> resize_chw(const Tensor<float>& t, int out_h, int out_w) {
    const auto& s = t.shape();
    if (s.size() != 3) fail("resize_chw: expected [C,H,W]");
    if (s[1] == out_h && s[2] == out_w) return t;
    Tensor<float> batched = Tensor<float>::from_data({1, s[0], s[1], s[2]}, t.data());
    Tensor<float> resized = bilinear_resize(batched, out_h, out_w);
    return Tensor<float>::from_data({s[0], out_h, out_w}, resized.data());
}

Tensor<float> stack_batch(const std::vector<Tensor<float>>& samples, const std::vector<int>& idx) {
    if (idx.empty()) fail("stack_batch: empty index list");
    const auto& s0 = samples[static_cast<std::size_t>(idx[0])].shape();
    if (s0.size() != 3) fail("stack_batch: samples must be [C,H,W]");
    const int bn = static_cast<int>(idx.size());
    Tensor<float> out = Tensor<float>::zeros({bn, s0[0], s0[1], s0[2]});
    const std::size_t stride = samples[static_cast<std::size_t>(idx[0])].numel();
    for (int i = 0; i < bn; ++i) {
        const auto& t = samples[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
        if (t.shape() != s0) fail("stack_batch: inconsistent sample shapes");
        std::copy(t.data().begin(), t.data().end(),
                  out.data().begin() + static_cast<std::ptrdiff_t>(stride * static_cast<std::size_t>(i)));
    }
    return out;
}

int count_samples(const std::string& data_dir) {
    int count = 0;
    while (fs::exists(data_dir + "/" + sample_stem(count) + "_image.png")) ++count;
    return count;
}

TryOnSample load_sample(const std::string& data_dir, int index) {
    const std::string base = data_dir + "/" + sample_stem(index);
    TryOnSample s;
    s.image = load_image_png(base + "_image.png");
    s.product = load_image_png(base + "_product.png");
    s.keypoints = load_keypoints_json(base + "_keypoints.json");
    s.parse = load_parse_png(base + "_parse.png");
    if (s.parse.h != s.image.dim(1) || s.parse.w != s.image.dim(2))
        fail("sample ", index, ": parse map ", s.parse.h, "x", s.parse.w,
             " does not match image ", s.image.dim(1), "x", s.image.dim(2));
    s.clothing_mask = clothing_mask_from_parse(s.parse);
    return s;
}

PreparedSample prepare_sample(const TryOnSample& s, int m, int n) {
    const int fh = s.image.dim(1), fw = s.image.dim(2);
    const Tensor<float> image = resize_chw(s.image, m, n);
    const ParseMap parse = resize_parse_nearest(s.parse, m, n);
    const PoseKeypoints kp = rescale_keypoints(s.keypoints, fh, fw, m, n);
    PreparedSample out;
    const Tensor<float> pose = build_pose_heatmap(kp, m, n);
    const Tensor<float> body = build_body_mask(parse, m, n);
    const Tensor<float> face_hair = extract_face_hair(parse, image);
    out.rep = assemble_representation(pose, body, face_hair);
    out.m0 = clothing_mask_from_parse(parse);
    return out;
}

void prepare_dataset(const PipelineConfig& cfg) {
    cfg.validate();
    const int count = count_samples(cfg.data_dir);
    if (count == 0) fail("prepare: no samples found in ", cfg.data_dir);
    std::error_code ec;
    fs::create_directories(cfg.data_dir + "/prep", ec);
    if (ec) fail("prepare: cannot create ", cfg.data_dir, "/prep: ", ec.message());
    for (int i = 0; i < count; ++i) {
        const TryOnSample s = load_sample(cfg.data_dir, i);
        const PreparedSample p = prepare_sample(s, cfg.height, cfg.width);
        Checkpoint ck;
        ck.rng_seed = cfg.seed;
        ck.tensors.push_back({"rep", p.rep.shape(), p.rep.data()});
        ck.tensors.push_back({"m0", p.m0.shape(), p.m0.data()});
        save_checkpoint(prep_path(cfg.data_dir, i), ck);
    }
    log::info(cat("prepared ", count, " samples at ", cfg.height, "x", cfg.width));
}

namespace {

PreparedSample load_or_prepare(const PipelineConfig& cfg, const TryOnSample& s, int index) {
    const std::string path = prep_path(cfg.data_dir, index);
    if (fs::exists(path)) {
        const Checkpoint ck = load_checkpoint(path);
        const NamedArray* rep = ck.find("rep");
        const NamedArray* m0 = ck.find("m0");
        if (rep && m0 && rep->shape == std::vector<int>{22, cfg.height, cfg.width}) {
            PreparedSample p;
            p.rep = Tensor<float>::from_data(rep->shape, rep->data);
            p.m0 = Tensor<float>::from_data(m0->shape, m0->data);
            return p;
        }
        log::warn(cat("prep cache ", path, " does not match config resolution; rebuilding"));
    }
    return prepare_sample(s, cfg.height, cfg.width);
}

struct Dataset {
    std::vector<Tensor<float>> clothing;  // c at (m,n)
    std::vector<Tensor<float>> reference; // I at (m,n)
    std::vector<Tensor<float>> rep;       // p
    std::vector<Tensor<float>> m0;        // M0
    std::vector<TryOnSample> raw;
};

Dataset load_dataset(const PipelineConfig& cfg) {
    const int count = count_samples(cfg.data_dir);
    if (count == 0) fail("no samples found in ", cfg.data_dir);
    Dataset ds;
    for (int i = 0; i < count; ++i) {
        TryOnSample s = load_sample(cfg.data_dir, i);
        PreparedSample p = load_or_prepare(cfg, s, i);
        ds.clothing.push_back(resize_chw(s.product, cfg.height, cfg.width));
        ds.reference.push_back(resize_chw(s.image, cfg.height, cfg.width));
        ds.rep.push_back(p.rep);
        ds.m0.push_back(p.m0);
        ds.raw.push_back(std::move(s));
    }
    return ds;
}

std::vector<int> draw_batch(std::mt19937& rng, int dataset_size, int batch) {
    std::uniform_int_distribution<int> pick(0, dataset_size - 1);
    std::vector<int> idx(static_cast<std::size_t>(batch));
    for (auto& v : idx) v = pick(rng);
    return idx;
}

}  // namespace

void train_coarse(const PipelineConfig& cfg) {
    cfg.validate();
    const Dataset ds = load_dataset(cfg);
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (ec) fail("train-coarse: cannot create ", cfg.out_dir, ": ", ec.message());

    CoarseGenerator<float> gen({cfg.width_mult, true, cfg.seed});
    PerceptionNet<float> phi(cfg.seed + 1, cfg.perception_width_mult);
    std::vector<Tensor<float>> params = gen.trainable_params();
    AdamState<float> opt;
    opt.beta1 = static_cast<float>(cfg.beta1);
    opt.beta2 = static_cast<float>(cfg.beta2);
    opt.learning_rate = static_cast<float>(cfg.learning_rate);
    LossWeights<float> weights;
    std::mt19937 rng = make_rng(cfg.seed + 2);

    std::ofstream log_file(cfg.out_dir + "/coarse_train.log");
    if (!log_file) fail("train-coarse: cannot write loss log in ", cfg.out_dir);
    for (int step = 1; step <= cfg.coarse_steps; ++step) {
        const std::vector<int> idx = draw_batch(rng, static_cast<int>(ds.clothing.size()), cfg.batch_size);
        CoarseBatch<float> batch;
        batch.clothing = stack_batch(ds.clothing, idx);
        batch.person = stack_batch(ds.rep, idx);
        batch.target_image = stack_batch(ds.reference, idx);
        batch.target_mask = stack_batch(ds.m0, idx);
        float loss = 0.0f;
        try {
            loss = train_coarse_step(batch, gen, params, opt, weights, phi, rng);
        } catch (const Error& e) {
            fail("train-coarse aborted at step ", step, ": ", e.what());
        }
        append_log_line(log_file, step, loss);
        if (step % 50 == 0 || step == 1)
            log::info(cat("coarse step ", step, "/", cfg.coarse_steps, " loss=", loss));
    }
    save_coarse_checkpoint(cfg.out_dir + "/coarse.ckpt", gen, &opt,
                           static_cast<std::uint64_t>(cfg.coarse_steps), cfg.seed);
    log::info(cat("saved ", cfg.out_dir, "/coarse.ckpt"));
}

void train_refine(const PipelineConfig& cfg) {
    cfg.validate();
    const Dataset ds = load_dataset(cfg);
    std::error_code ec;
    fs::create_directories(cfg.out_dir + "/warped", ec);
    if (ec) fail("train-refine: cannot create ", cfg.out_dir, "/warped: ", ec.message());

    CoarseGenerator<float> gen({cfg.width_mult, true, cfg.seed});
    load_coarse_checkpoint(cfg.out_dir + "/coarse.ckpt", gen);
    gen.set_frozen(true);

    // The coarse net is fixed, so M (and therefore c') is fixed per sample:
    // compute both once up front instead of per step.
    const int count = static_cast<int>(ds.clothing.size());
    std::vector<Tensor<float>> coarse_img(static_cast<std::size_t>(count));
    std::vector<Tensor<float>> coarse_mask(static_cast<std::size_t>(count));
    std::mt19937 eval_rng = make_rng(cfg.seed);  // unused by eval-mode forward
    for (int i = 0; i < count; ++i) {
        Tensor<float> c = stack_batch(ds.clothing, {i});
        Tensor<float> p = stack_batch(ds.rep, {i});
        CoarseOutput<float> out = gen.forward(c, p, false, eval_rng);
        coarse_img[static_cast<std::size_t>(i)] =
            Tensor<float>::from_data({3, cfg.height, cfg.width}, out.image.data());
        coarse_mask[static_cast<std::size_t>(i)] =
            Tensor<float>::from_data({1, cfg.height, cfg.width}, out.mask.data());
    }
    std::vector<Tensor<float>> warped(static_cast<std::size_t>(count));
    std::vector<std::string> warp_warnings(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < count; ++i) {
        try {
            warped[static_cast<std::size_t>(i)] =
                warp_clothing(ds.raw[static_cast<std::size_t>(i)].product,
                              coarse_mask[static_cast<std::size_t>(i)], cfg.contour_points,
                              cfg.tps_lambda, cfg.height, cfg.width);
        } catch (const Error& e) {
            warped[static_cast<std::size_t>(i)] = Tensor<float>::zeros({3, cfg.height, cfg.width});
            warp_warnings[static_cast<std::size_t>(i)] = e.what();
        }
    }
    for (int i = 0; i < count; ++i) {
        if (!warp_warnings[static_cast<std::size_t>(i)].empty())
            log::warn(cat("sample ", i, ": warp failed (", warp_warnings[static_cast<std::size_t>(i)],
                          "), using black background"));
        save_image_png(cfg.out_dir + "/warped/" + sample_stem(i) + "_cprime.png",
                       warped[static_cast<std::size_t>(i)]);
    }

    RefinementNet<float> net(cfg.seed + 3);
    std::vector<Tensor<float>> params = net.trainable_params();
    AdamState<float> opt;
    opt.beta1 = static_cast<float>(cfg.beta1);
    opt.beta2 = static_cast<float>(cfg.beta2);
    opt.learning_rate = static_cast<float>(cfg.learning_rate);
    RefinementLossConfig<float> loss_cfg;
    loss_cfg.lambda_warp = static_cast<float>(cfg.lambda_warp);
    loss_cfg.lambda_tv = static_cast<float>(cfg.lambda_tv);
    PerceptionNet<float> phi(cfg.seed + 1, cfg.perception_width_mult);
    std::mt19937 rng = make_rng(cfg.seed + 4);

    std::ofstream log_file(cfg.out_dir + "/refine_train.log");
    if (!log_file) fail("train-refine: cannot write loss log in ", cfg.out_dir);
    for (int step = 1; step <= cfg.refine_steps; ++step) {
        const std::vector<int> idx = draw_batch(rng, count, cfg.batch_size);
        RefineBatch<float> batch;
        batch.warped = stack_batch(warped, idx);
        batch.coarse = stack_batch(coarse_img, idx);
        batch.reference = stack_batch(ds.reference, idx);
        float loss = 0.0f;
        try {
            loss = train_refine_step(batch, net, params, opt, loss_cfg, phi);
        } catch (const Error& e) {
            fail("train-refine aborted at step ", step, ": ", e.what());
        }
        append_log_line(log_file, step, loss);
        if (step % 50 == 0 || step == 1)
            log::info(cat("refine step ", step, "/", cfg.refine_steps, " loss=", loss));
    }
    save_refine_checkpoint(cfg.out_dir + "/refine.ckpt", net, &opt,
                           static_cast<std::uint64_t>(cfg.refine_steps), cfg.seed);
    log::info(cat("saved ", cfg.out_dir, "/refine.ckpt"));
}

void train_full(const PipelineConfig& cfg) {
    train_coarse(cfg);
    train_refine(cfg);
}

InferenceResult run_inference(const TryOnSample& sample, const Tensor<float>& target_product,
                              CoarseGenerator<float>& gen, const RefinementNet<float>& net,
                              const PipelineConfig& cfg, std::optional<float> force_alpha) {
    const int m = cfg.height, n = cfg.width;
    InferenceResult res;
    const PreparedSample prep = prepare_sample(sample, m, n);
    res.rep = prep.rep;
    std::mt19937 rng = make_rng(cfg.seed);  // eval mode consumes no randomness
    Tensor<float> c = Tensor<float>::from_data({1, 3, m, n}, resize_chw(target_product, m, n).data());
    Tensor<float> p = Tensor<float>::from_data({1, 22, m, n}, prep.rep.data());
    CoarseOutput<float> out = gen.forward(c, p, false, rng);
    res.coarse_image = Tensor<float>::from_data({3, m, n}, out.image.data());
    res.coarse_mask = Tensor<float>::from_data({1, m, n}, out.mask.data());
    try {
        res.warped = warp_clothing(target_product, res.coarse_mask, cfg.contour_points,
                                   cfg.tps_lambda, m, n);
    } catch (const Error& e) {
        // degrade to the coarse output alone
        res.warning = cat("warp failed, falling back to coarse output: ", e.what());
        log::warn(res.warning);
        res.warped = Tensor<float>::zeros({3, m, n});
        res.alpha = Tensor<float>::zeros({1, m, n});
        res.final_image = res.coarse_image;
        return res;
    }
    Tensor<float> warped_b = Tensor<float>::from_data({1, 3, m, n}, res.warped.data());
    Tensor<float> coarse_b = Tensor<float>::from_data({1, 3, m, n}, res.coarse_image.data());
    Tensor<float> alpha = net.forward(warped_b, coarse_b);
    if (force_alpha) alpha = Tensor<float>::filled({1, 1, m, n}, *force_alpha);
    Tensor<float> composed = composite(alpha, warped_b, coarse_b);
    res.alpha = Tensor<float>::from_data({1, m, n}, alpha.data());
    res.final_image = Tensor<float>::from_data({3, m, n}, composed.data());
    return res;
}

Metrics evaluate(const std::vector<EvalSample>& results) {
    if (results.empty()) fail("evaluate: no results");
    Metrics m;
    for (const auto& r : results) {
        detail::check_same_shape(r.final_image, r.reference, "evaluate");
        const auto& a = r.final_image.data();
        const auto& b = r.reference.data();
        double abs_sum = 0.0, sq_sum = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = static_cast<double>(a[i]) - b[i];
            abs_sum += std::abs(d);
            sq_sum += d * d;
        }
        m.mae += abs_sum / static_cast<double>(a.size());
        const double mse = sq_sum / static_cast<double>(a.size());
        m.psnr += mse <= 0.0 ? 99.0 : std::min(99.0, 10.0 * std::log10(1.0 / mse));

        const auto& tm = r.truth_mask.data();
        const std::size_t plane = tm.size();
        double region_abs = 0.0;
        std::size_t region_count = 0;
        for (std::size_t px = 0; px < plane; ++px) {
            if (tm[px] < 0.5f) continue;
            for (int ch = 0; ch < 3; ++ch)
                region_abs += std::abs(static_cast<double>(a[static_cast<std::size_t>(ch) * plane + px]) -
                                       b[static_cast<std::size_t>(ch) * plane + px]);
            region_count += 3;
        }
        m.mae_clothing += region_count ? region_abs / static_cast<double>(region_count) : 0.0;

        const auto& pm = r.predicted_mask.data();
        std::size_t inter = 0, uni = 0;
        for (std::size_t px = 0; px < plane; ++px) {
            const bool pp = pm[px] >= 0.5f, tp = tm[px] >= 0.5f;
            inter += pp && tp;
            uni += pp || tp;
        }
        m.mask_iou += uni ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;
    }
    const double inv = 1.0 / static_cast<double>(results.size());
    m.mae *= inv;
    m.mae_clothing *= inv;
    m.psnr *= inv;
    m.mask_iou *= inv;
    return m;
}

void save_coarse_checkpoint(const std::string& path, CoarseGenerator<float>& gen,
                            const AdamState<float>* opt, std::uint64_t step, std::uint64_t seed) {
    auto params = gen.named_params();
    auto buffers = gen.named_buffers();
    const auto names = param_names(params);
    save_checkpoint(path, snapshot_model(params, buffers, step, seed, opt, opt ? &names : nullptr));
}

void load_coarse_checkpoint(const std::string& path, CoarseGenerator<float>& gen) {
    const Checkpoint ck = load_checkpoint(path);
    auto params = gen.named_params();
    auto buffers = gen.named_buffers();
    restore_model(ck, params, buffers);
}

void save_refine_checkpoint(const std::string& path, RefinementNet<float>& net,
                            const AdamState<float>* opt, std::uint64_t step, std::uint64_t seed) {
    auto params = net.named_params();
    std::vector<NamedBuffer<float>> buffers;
    const auto names = param_names(params);
    save_checkpoint(path, snapshot_model(params, buffers, step, seed, opt, opt ? &names : nullptr));
}

void load_refine_checkpoint(const std::string& path, RefinementNet<float>& net) {
    const Checkpoint ck = load_checkpoint(path);
    auto params = net.named_params();
    std::vector<NamedBuffer<float>> buffers;
    restore_model(ck, params, buffers);
}

}  // namespace tryon
