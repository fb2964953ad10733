// Times the serial reference batch gradient against the OpenMP version on
// a realistic batch and verifies the two stay bit-identical.

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <random>

#include "longema/data.hpp"
#include "longema/train.hpp"

using namespace longema;
using Clock = std::chrono::steady_clock;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    const auto t0 = Clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = Clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

} // namespace

int main(int argc, char** argv) {
    const std::size_t batch_size = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 64;
    const std::size_t hidden = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 128;
    const int reps = argc > 3 ? std::atoi(argv[3]) : 5;

    SyntheticConfig scfg;
    scfg.n_students = 12;
    scfg.study_days = 50;
    scfg.seed = 1;
    const EmaDataset ds = generate_synthetic(scfg);
    auto samples = build_samples(ds, 4);
    assign_labels(samples, ds, student_medians(ds));

    ModelShape shape;
    shape.variant = Variant::Ema2Vec;
    shape.channels = scfg.channels;
    shape.hidden_dim = hidden;
    shape.covariate_dim = 10;
    shape.mlp_dims = {64, 32, 3};
    shape.embed_K = 8;
    std::mt19937_64 rng(2);
    const ModelParams params = init_params(shape, rng);
    const Normalizer norm = fit_normalizer(samples);
    for (auto& s : samples) s = norm.apply(s);

    std::vector<std::size_t> batch;
    std::vector<std::uint64_t> seeds(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) seeds[i] = 100 + i;
    for (std::size_t i = 0; i < batch_size && i < samples.size(); ++i) batch.push_back(i);

    double loss_s = 0, loss_p = 0;
    const Vec gs = batch_gradient_serial(samples, batch, params, seeds, {}, &loss_s);
    const Vec gp = batch_gradient_parallel(samples, batch, params, seeds, {}, &loss_p);
    if (gs != gp || loss_s != loss_p) {
        std::cerr << "FAIL: serial and parallel gradients differ\n";
        return 1;
    }

    const double ms_serial = time_ms([&] {
        double l;
        batch_gradient_serial(samples, batch, params, seeds, {}, &l);
    }, reps);
    const double ms_parallel = time_ms([&] {
        double l;
        batch_gradient_parallel(samples, batch, params, seeds, {}, &l);
    }, reps);

    std::cout << "batch=" << batch.size() << " hidden=" << hidden
              << " params=" << params.flat.size() << " reps=" << reps << "\n"
              << "serial:   " << ms_serial << " ms/batch\n"
              << "parallel: " << ms_parallel << " ms/batch\n"
              << "speedup:  " << ms_serial / ms_parallel << "x"
#ifdef LONGEMA_OPENMP
              << " (OpenMP enabled)\n";
#else
              << " (OpenMP not available; both paths serial)\n";
#endif
    std::cout << "bit-identical: yes\n";
    return 0;
}
