#include "tryon/config.hpp"

#include <fstream>
#include <sstream>

namespace tryon {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

int to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const int x = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        fail("config: ", key, " expects an integer, got '", v, "'");
    }
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        fail("config: ", key, " expects a number, got '", v, "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail("config: ", key, " expects true/false, got '", v, "'");
}

}  // namespace

void PipelineConfig::set(const std::string& key, const std::string& value) {
    if (key == "height") height = to_int(key, value);
    else if (key == "width") width = to_int(key, value);
    else if (key == "width_mult") width_mult = to_double(key, value);
    else if (key == "perception_width_mult") perception_width_mult = to_double(key, value);
    else if (key == "contour_points") contour_points = to_int(key, value);
    else if (key == "tps_lambda") tps_lambda = to_double(key, value);
    else if (key == "lambda_warp") lambda_warp = to_double(key, value);
    else if (key == "lambda_tv") lambda_tv = to_double(key, value);
    else if (key == "coarse_steps") coarse_steps = to_int(key, value);
    else if (key == "refine_steps") refine_steps = to_int(key, value);
    else if (key == "batch_size") batch_size = to_int(key, value);
    else if (key == "learning_rate") learning_rate = to_double(key, value);
    else if (key == "beta1") beta1 = to_double(key, value);
    else if (key == "beta2") beta2 = to_double(key, value);
    else if (key == "seed") seed = static_cast<std::uint64_t>(std::stoull(value));
    else if (key == "fixture_count") fixture_count = to_int(key, value);
    else if (key == "eval_shuffled") eval_shuffled = to_bool(key, value);
    else if (key == "data_dir") data_dir = value;
    else if (key == "out_dir") out_dir = value;
    else fail("config: unknown key '", key, "'");
}

void PipelineConfig::validate() const {
    if (height % 64 != 0 || width % 64 != 0)
        fail("config: resolution ", height, "x", width, " must be divisible by 64");
    if (width_mult <= 0 || perception_width_mult <= 0)
        fail("config: width multipliers must be positive");
    if (contour_points < 4) fail("config: contour_points must be >= 4");
    if (tps_lambda < 0) fail("config: tps_lambda must be nonnegative");
    if (lambda_warp < 0 || lambda_tv < 0) fail("config: loss weights must be nonnegative");
    if (coarse_steps <= 0 || refine_steps <= 0 || batch_size <= 0 || fixture_count <= 0)
        fail("config: step/batch/fixture counts must be positive");
    if (learning_rate <= 0) fail("config: learning_rate must be positive");
}

std::string PipelineConfig::dump() const {
    std::ostringstream os;
    os << "height=" << height << "\nwidth=" << width << "\nwidth_mult=" << width_mult
       << "\nperception_width_mult=" << perception_width_mult
       << "\ncontour_points=" << contour_points << "\ntps_lambda=" << tps_lambda
       << "\nlambda_warp=" << lambda_warp << "\nlambda_tv=" << lambda_tv
       << "\ncoarse_steps=" << coarse_steps << "\nrefine_steps=" << refine_steps
       << "\nbatch_size=" << batch_size << "\nlearning_rate=" << learning_rate
       << "\nbeta1=" << beta1 << "\nbeta2=" << beta2 << "\nseed=" << seed
       << "\nfixture_count=" << fixture_count
       << "\neval_shuffled=" << (eval_shuffled ? "true" : "false") << "\ndata_dir=" << data_dir
       << "\nout_dir=" << out_dir << "\n";
    return os.str();
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open config file: ", path);
    PipelineConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            fail("config ", path, ":", lineno, ": expected key=value, got '", t, "'");
        cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return cfg;
}

void apply_overrides(PipelineConfig& cfg, const std::vector<std::string>& overrides) {
    for (const auto& ov : overrides) {
        const std::size_t eq = ov.find('=');
        if (eq == std::string::npos) fail("override must be key=value, got '", ov, "'");
        cfg.set(trim(ov.substr(0, eq)), trim(ov.substr(eq + 1)));
    }
}

}  // namespace tryon
