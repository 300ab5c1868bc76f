// Times the serial reference kernels against the OpenMP kernels and checks
// that both produce identical buffers.

#include <omp.h>

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <vector>

#include "satinfra/kernels.hpp"

namespace k = satinfra::nn::kernels;

namespace {

std::vector<double> random_buffer(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

double time_ms(int reps, const std::function<void()>& f) {
  f();  // warm-up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) f();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

struct Case {
  const char* name;
  std::function<void()> serial;
  std::function<void()> parallel;
  std::function<bool()> same;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kernel benchmark: serial reference vs OpenMP"};
  int size = 64, channels = 16, batch = 4, reps = 5, threads = 0;
  app.add_option("--size", size, "spatial size (even)")->check(CLI::PositiveNumber);
  app.add_option("--channels", channels, "input and output channels")->check(CLI::PositiveNumber);
  app.add_option("--batch", batch, "batch size")->check(CLI::PositiveNumber);
  app.add_option("--reps", reps, "timed repetitions")->check(CLI::PositiveNumber);
  app.add_option("--threads", threads, "OpenMP threads (default: all)");
  CLI11_PARSE(app, argc, argv);
  if (size % 2) size += 1;
  if (threads > 0) omp_set_num_threads(threads);

  std::mt19937_64 rng(1);
  const std::size_t n = batch, c = channels, s = size;
  const k::ConvDims cd{n, c, c, s, s, 3};
  const auto in = random_buffer(n * c * s * s, rng);
  const auto w = random_buffer(c * c * 9, rng);
  const auto b = random_buffer(c, rng);
  const auto gout = random_buffer(n * c * s * s, rng);
  std::vector<double> o1(n * c * s * s), o2(o1.size());
  std::vector<double> gw1(w.size()), gw2(w.size()), gb1(c), gb2(c);

  const k::UpDims ud{n, c, c, s / 2, s / 2};
  const auto uin = random_buffer(n * c * (s / 2) * (s / 2), rng);
  const auto uw = random_buffer(c * c * 4, rng);
  std::vector<double> u1(n * c * s * s), u2(u1.size());

  std::vector<double> p1(n * c * (s / 2) * (s / 2)), p2(p1.size());
  std::vector<std::uint32_t> a1(p1.size()), a2(p1.size());

  const std::vector<Case> cases{
      {"conv3x3_forward", [&] { k::reference::conv2d_forward(cd, in, w, b, o1); },
       [&] { k::conv2d_forward(cd, in, w, b, o2); }, [&] { return o1 == o2; }},
      {"conv3x3_backward_input", [&] { k::reference::conv2d_backward_input(cd, gout, w, o1); },
       [&] { k::conv2d_backward_input(cd, gout, w, o2); }, [&] { return o1 == o2; }},
      {"conv3x3_backward_params", [&] { k::reference::conv2d_backward_params(cd, in, gout, gw1, gb1); },
       [&] { k::conv2d_backward_params(cd, in, gout, gw2, gb2); },
       [&] { return gw1 == gw2 && gb1 == gb2; }},
      {"upconv2x2_forward", [&] { k::reference::conv_transpose2x2_forward(ud, uin, uw, b, u1); },
       [&] { k::conv_transpose2x2_forward(ud, uin, uw, b, u2); }, [&] { return u1 == u2; }},
      {"maxpool2x2_forward", [&] { k::reference::maxpool2x2_forward(n * c, s, s, in, p1, a1); },
       [&] { k::maxpool2x2_forward(n * c, s, s, in, p2, a2); }, [&] { return p1 == p2 && a1 == a2; }},
  };

  std::printf("threads=%d batch=%zu channels=%zu size=%zu reps=%d\n", omp_get_max_threads(), n, c, s, reps);
  std::printf("%-26s %12s %12s %8s %s\n", "kernel", "serial_ms", "openmp_ms", "speedup", "identical");
  bool all_same = true;
  for (const auto& cs : cases) {
    const double ts = time_ms(reps, cs.serial);
    const double tp = time_ms(reps, cs.parallel);
    const bool same = cs.same();
    all_same &= same;
    std::printf("%-26s %12.3f %12.3f %8.2f %s\n", cs.name, ts, tp, ts / tp, same ? "yes" : "NO");
  }
  return all_same ? 0 : 1;
}
