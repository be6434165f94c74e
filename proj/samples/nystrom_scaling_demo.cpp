// Times the Nystrom factorization and MAP solve for growing N at fixed K.
// The kernel scales (a brute-force k-NN search) are built outside the timer.

#include "mfgl/mfgl.hpp"

#include <chrono>
#include <iostream>

int main(int argc, char** argv) {
  const mfgl::Index k = 200;
  const mfgl::Index m = 20;
  const mfgl::Index max_n = argc > 1 ? std::stol(argv[1]) : 40000;
  for (mfgl::Index n = 5000; n <= max_n; n *= 2) {
    mfgl::GeneratorSpec spec;
    spec.n = n;
    spec.d = 8;
    const mfgl::SyntheticProblem problem = mfgl::generate(spec);
    const mfgl::KernelWeightSource source(problem.lf_data);
    const auto x = mfgl::select_landmarks(n, m, k, 1);
    mfgl::NystromOptions opt;
    opt.rank_r = 20;

    auto t0 = std::chrono::steady_clock::now();
    const mfgl::LowRankLaplacian lr = mfgl::nystrom_factor(source, x, opt);
    auto t1 = std::chrono::steady_clock::now();
    const mfgl::HyperParameters hp(problem.hf_noise_sigma, 10.0, 0.01);
    const mfgl::SaddleOperators ops = mfgl::build_saddle(lr, hp, m);
    const mfgl::Matrix phi = mfgl::solve_map_saddle(
        ops, problem.hf_rows(std::vector<mfgl::Index>(x.begin(), x.begin() + m)) - problem.lf_data.topRows(m),
        mfgl::SaddleMethod::Woodbury);
    auto t2 = std::chrono::steady_clock::now();
    std::cout << "N=" << n << " factor " << std::chrono::duration<double>(t1 - t0).count()
              << " s, solve " << std::chrono::duration<double>(t2 - t1).count() << " s, |phi| "
              << phi.norm() << '\n';
  }
}
