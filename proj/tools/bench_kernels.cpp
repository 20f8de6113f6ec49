// Timing comparison between the serial reference kernels and the OpenMP
// variants on the convolution shapes the two networks actually run.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "tryon/kernels.hpp"

using namespace tryon;
using Clock = std::chrono::steady_clock;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    const auto t0 = Clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = Clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void bench_case(const char* name, const ConvDims& d, int reps) {
    std::mt19937 rng(7);
    std::uniform_real_distribution<float> uni(-1.0f, 1.0f);
    const std::size_t xn = static_cast<std::size_t>(d.n) * d.c_in * d.h * d.w;
    const std::size_t wn = static_cast<std::size_t>(d.c_out) * d.c_in * d.kh * d.kw;
    const std::size_t yn = static_cast<std::size_t>(d.n) * d.c_out * d.out_h() * d.out_w();
    std::vector<float> x(xn), w(wn), b(static_cast<std::size_t>(d.c_out)), y(yn), gx(xn), gw(wn),
        gb(static_cast<std::size_t>(d.c_out));
    for (auto& v : x) v = uni(rng);
    for (auto& v : w) v = uni(rng);
    for (auto& v : b) v = uni(rng);

    const double fwd_serial = time_ms([&] { conv_fwd_serial(x.data(), w.data(), b.data(), y.data(), d); }, reps);
    const double fwd_omp = time_ms([&] { conv_fwd_omp(x.data(), w.data(), b.data(), y.data(), d); }, reps);
    const double bwd_in_serial = time_ms([&] { conv_bwd_input_serial(y.data(), w.data(), gx.data(), d); }, reps);
    const double bwd_in_omp = time_ms([&] { conv_bwd_input_omp(y.data(), w.data(), gx.data(), d); }, reps);
    const double bwd_w_serial =
        time_ms([&] { conv_bwd_weight_serial(x.data(), y.data(), gw.data(), gb.data(), d); }, reps);
    const double bwd_w_omp =
        time_ms([&] { conv_bwd_weight_omp(x.data(), y.data(), gw.data(), gb.data(), d); }, reps);

    std::printf("%-28s fwd %8.3f / %8.3f ms (x%.2f)  bwd_in %8.3f / %8.3f ms (x%.2f)  bwd_w %8.3f / %8.3f ms (x%.2f)\n",
                name, fwd_serial, fwd_omp, fwd_serial / fwd_omp, bwd_in_serial, bwd_in_omp,
                bwd_in_serial / bwd_in_omp, bwd_w_serial, bwd_w_omp, bwd_w_serial / bwd_w_omp);
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP threads: %d (serial / parallel, speedup)\n", omp_get_max_threads());
#else
    std::printf("built without OpenMP; both variants run serially\n");
#endif
    bench_case("encoder 4x4 s2 25->64", ConvDims{4, 25, 64, 64, 64, 4, 4, 2, 1}, 5);
    bench_case("encoder 4x4 s2 64->128", ConvDims{4, 64, 32, 32, 128, 4, 4, 2, 1}, 5);
    bench_case("refine 3x3 s1 64->64", ConvDims{4, 64, 64, 64, 64, 3, 3, 1, 1}, 3);
    bench_case("perception 3x3 s1 64->64", ConvDims{1, 64, 128, 96, 64, 3, 3, 1, 1}, 3);
    return 0;
}
