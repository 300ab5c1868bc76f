#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>

#include "gradcheck.hpp"
#include "satinfra/kernels.hpp"
#include "satinfra/layers.hpp"
#include "satinfra/losses.hpp"
#include "satinfra/train.hpp"
#include "satinfra/unet.hpp"

using namespace satinfra;
using namespace satinfra::nn;
using satinfra::testing::central_difference;
using satinfra::testing::dot;
using satinfra::testing::fill_uniform;
using satinfra::testing::relative_error;

namespace {

bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// Checks input and parameter gradients of a single layer against central
// differences of the projection loss sum(r * layer(x)).
double max_layer_grad_error(Layer& layer, Tensor x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const PassContext ctx{true, 7};
  Tensor out = layer.forward(x, ctx);
  Tensor r(out.shape());
  fill_uniform(r, rng);
  auto loss = [&] { return dot(layer.forward(x, ctx), r); };

  layer.forward(x, ctx);
  const Tensor grad_in = layer.backward(r);
  std::vector<Tensor> grads;
  for (Param* p : layer.params()) grads.push_back(p->grad);

  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    worst = std::max(worst, relative_error(grad_in[i], central_difference(x.data(), i, loss)));
  auto params = layer.params();
  for (std::size_t k = 0; k < params.size(); ++k)
    for (std::size_t i = 0; i < params[k]->value.size(); ++i)
      worst = std::max(worst, relative_error(grads[k][i],
                                             central_difference(params[k]->value.data(), i, loss)));
  return worst;
}

void randomize_params(Layer& layer, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (Param* p : layer.params()) fill_uniform(p->value, rng, -0.5, 0.5);
}

UnetConfig tiny_config() {
  UnetConfig c;
  c.input_size = 8;
  c.base_filters = 2;
  c.depth = 1;
  c.dropout_rate = 0.2;
  c.seed = 11;
  return c;
}

}  // namespace

TEST_CASE("optimized kernels match the serial reference bitwise") {
  std::mt19937_64 rng(5);
  for (std::size_t kernel : {1u, 3u}) {
    const kernels::ConvDims d{2, 3, 4, 7, 6, kernel};
    Tensor in({2, 3, 7, 6}), w({4, 3, kernel, kernel}), b({4}), gout({2, 4, 7, 6});
    fill_uniform(in, rng);
    fill_uniform(w, rng);
    fill_uniform(b, rng);
    fill_uniform(gout, rng);
    Tensor o1(gout.shape()), o2(gout.shape());
    kernels::conv2d_forward(d, in.data(), w.data(), b.data(), o1.data());
    kernels::reference::conv2d_forward(d, in.data(), w.data(), b.data(), o2.data());
    CHECK(bitwise_equal(o1.data(), o2.data()));

    Tensor gi1(in.shape()), gi2(in.shape());
    kernels::conv2d_backward_input(d, gout.data(), w.data(), gi1.data());
    kernels::reference::conv2d_backward_input(d, gout.data(), w.data(), gi2.data());
    CHECK(bitwise_equal(gi1.data(), gi2.data()));

    Tensor gw1(w.shape()), gw2(w.shape()), gb1({4}), gb2({4});
    kernels::conv2d_backward_params(d, in.data(), gout.data(), gw1.data(), gb1.data());
    kernels::reference::conv2d_backward_params(d, in.data(), gout.data(), gw2.data(), gb2.data());
    CHECK(bitwise_equal(gw1.data(), gw2.data()));
    CHECK(bitwise_equal(gb1.data(), gb2.data()));
  }

  const kernels::UpDims u{2, 3, 2, 4, 5};
  Tensor in({2, 3, 4, 5}), w({3, 2, 2, 2}), b({2}), gout({2, 2, 8, 10});
  fill_uniform(in, rng);
  fill_uniform(w, rng);
  fill_uniform(b, rng);
  fill_uniform(gout, rng);
  Tensor o1(gout.shape()), o2(gout.shape());
  kernels::conv_transpose2x2_forward(u, in.data(), w.data(), b.data(), o1.data());
  kernels::reference::conv_transpose2x2_forward(u, in.data(), w.data(), b.data(), o2.data());
  CHECK(bitwise_equal(o1.data(), o2.data()));
  Tensor gi1(in.shape()), gi2(in.shape());
  kernels::conv_transpose2x2_backward_input(u, gout.data(), w.data(), gi1.data());
  kernels::reference::conv_transpose2x2_backward_input(u, gout.data(), w.data(), gi2.data());
  CHECK(bitwise_equal(gi1.data(), gi2.data()));
  Tensor gw1(w.shape()), gw2(w.shape()), gb1({2}), gb2({2});
  kernels::conv_transpose2x2_backward_params(u, in.data(), gout.data(), gw1.data(), gb1.data());
  kernels::reference::conv_transpose2x2_backward_params(u, in.data(), gout.data(), gw2.data(),
                                                        gb2.data());
  CHECK(bitwise_equal(gw1.data(), gw2.data()));
  CHECK(bitwise_equal(gb1.data(), gb2.data()));

  Tensor pin({2, 3, 6, 4});
  fill_uniform(pin, rng);
  Tensor p1({2, 3, 3, 2}), p2({2, 3, 3, 2});
  std::vector<std::uint32_t> a1(p1.size()), a2(p2.size());
  kernels::maxpool2x2_forward(6, 6, 4, pin.data(), p1.data(), a1);
  kernels::reference::maxpool2x2_forward(6, 6, 4, pin.data(), p2.data(), a2);
  CHECK(bitwise_equal(p1.data(), p2.data()));
  CHECK(a1 == a2);
}

TEST_CASE("every layer type passes a finite-difference gradient check") {
  std::mt19937_64 rng(21);
  Tensor x({2, 3, 6, 6});
  fill_uniform(x, rng);

  SUBCASE("conv3x3 relu") {
    Conv2d conv(3, 2, 3, Activation::relu, "c");
    randomize_params(conv, 1);
    CHECK(max_layer_grad_error(conv, x, 2) <= 1e-4);
  }
  SUBCASE("conv1x1 linear") {
    Conv2d conv(3, 1, 1, Activation::none, "c");
    randomize_params(conv, 3);
    CHECK(max_layer_grad_error(conv, x, 4) <= 1e-4);
  }
  SUBCASE("transposed conv") {
    ConvTranspose2x2 up(3, 2, "u");
    randomize_params(up, 5);
    CHECK(max_layer_grad_error(up, x, 6) <= 1e-4);
  }
  SUBCASE("batch norm") {
    BatchNorm2d bn(3, "bn");
    randomize_params(bn, 7);
    CHECK(max_layer_grad_error(bn, x, 8) <= 1e-4);
  }
  SUBCASE("dropout") {
    Dropout drop(0.3, 99);
    CHECK(max_layer_grad_error(drop, x, 9) <= 1e-4);
  }
  SUBCASE("max pool") {
    MaxPool2x2 pool;
    CHECK(max_layer_grad_error(pool, x, 10) <= 1e-4);
  }
  SUBCASE("sigmoid") {
    Sigmoid sig;
    CHECK(max_layer_grad_error(sig, x, 11) <= 1e-4);
  }
}

TEST_CASE("concat and split are inverse") {
  std::mt19937_64 rng(2);
  Tensor a({2, 3, 4, 4}), b({2, 1, 4, 4});
  fill_uniform(a, rng);
  fill_uniform(b, rng);
  auto [a2, b2] = split_channels(concat_channels(a, b), 3);
  CHECK(bitwise_equal(a.data(), a2.data()));
  CHECK(bitwise_equal(b.data(), b2.data()));
}

TEST_CASE("build_sat_unet follows the block recipe") {
  SUBCASE("paper-scale plan: 11 blocks, 61 layers, bottleneck 1024") {
    UnetConfig c;  // 416 input, 32 base filters, depth 5
    const ArchitecturePlan plan = plan_sat_unet(c);
    CHECK(plan.block_count == 11);
    CHECK(plan.layer_count() == 61);
    CHECK(c.bottleneck_width() == 1024);
    std::size_t encoder0_dropouts = 0;
    for (const auto& l : plan.layers)
      if (l.block == "encoder0" && l.kind == "dropout") ++encoder0_dropouts;
    CHECK(encoder0_dropouts == 0);
  }
  SUBCASE("paper-scale network reports the same counts") {
    const Network net = build_sat_unet(UnetConfig{});
    CHECK(net.block_count() == 11);
    CHECK(net.layer_count() == 61);
  }
  SUBCASE("tiny network preserves spatial shape") {
    UnetConfig c;
    c.depth = 1;
    c.base_filters = 2;
    c.input_size = 32;
    Network net = build_sat_unet(c);
    const Tensor out = net.forward(Tensor::nchw(1, 3, 32, 32), false);
    CHECK(out.shape() == std::vector<std::size_t>{1, 1, 32, 32});
  }
  SUBCASE("input size must be divisible by 2^depth") {
    UnetConfig c;
    c.depth = 3;
    c.input_size = 100;
    CHECK_THROWS_AS(build_sat_unet(c), std::invalid_argument);
  }
}

TEST_CASE("forward contracts") {
  UnetConfig c;
  c.input_size = 64;
  c.base_filters = 2;
  c.depth = 2;
  c.seed = 3;
  Network net = build_sat_unet(c);

  const Tensor zeros = net.forward(Tensor::nchw(1, 3, 64, 64), false);
  CHECK(zeros.all_finite());
  for (double v : zeros.data()) CHECK((v >= 0.0 && v <= 1.0));

  std::mt19937_64 rng(1);
  Tensor batch = Tensor::nchw(2, 3, 64, 64);
  fill_uniform(batch, rng, 0.0, 1.0);
  const Tensor a = net.forward(batch, false);
  const Tensor b = net.forward(batch, false);
  CHECK(a.shape() == std::vector<std::size_t>{2, 1, 64, 64});
  CHECK(bitwise_equal(a.data(), b.data()));

  CHECK_THROWS_AS(net.forward(Tensor::nchw(1, 3, 32, 32), false), ShapeError);
  CHECK_THROWS_AS(net.forward(Tensor::nchw(1, 1, 64, 64), true), ShapeError);
}

TEST_CASE("output spatial size equals input size for any valid config") {
  for (std::uint32_t depth = 1; depth <= 3; ++depth)
    for (std::uint32_t mult : {1u, 2u, 3u}) {
      UnetConfig c;
      c.depth = depth;
      c.base_filters = 1;
      c.input_size = mult << depth;
      c.seed = depth * 10 + mult;
      Network net(c);
      const Tensor out = net.forward(Tensor::nchw(1, 3, c.input_size, c.input_size), true);
      CHECK(out.shape() == std::vector<std::size_t>{1, 1, c.input_size, c.input_size});
    }
}

TEST_CASE("full tiny network gradients match finite differences") {
  Network net = build_sat_unet(tiny_config());
  REQUIRE(net.parameter_count() <= 500);
  // Central differences at h = 1e-4 are only valid away from ReLU and
  // max-pool kinks; this seed puts no pre-activation within h of one.
  std::mt19937_64 rng(2);
  Tensor x = Tensor::nchw(2, 3, 8, 8);
  fill_uniform(x, rng);
  Tensor y = Tensor::nchw(2, 1, 8, 8);
  for (double& v : y.data()) v = static_cast<double>(rng() % 2);
  net.set_step(5);

  auto loss = [&] { return metrics::hybrid_loss(net.forward(x, true), y); };
  const Tensor pred = net.forward(x, true);
  net.backward(metrics::hybrid_loss_with_grad(pred, y).grad);
  std::vector<Tensor> grads;
  for (Param* p : net.parameters()) grads.push_back(p->grad);

  double worst = 0.0;
  auto params = net.parameters();
  for (std::size_t k = 0; k < params.size(); ++k)
    for (std::size_t i = 0; i < params[k]->value.size(); ++i)
      worst = std::max(worst, relative_error(grads[k][i],
                                             central_difference(params[k]->value.data(), i, loss)));
  CHECK(worst <= 1e-4);
}

TEST_CASE("backward edge cases") {
  Network net = build_sat_unet(tiny_config());
  CHECK_THROWS_AS(net.backward(Tensor::nchw(1, 1, 8, 8)), std::logic_error);

  Tensor x = Tensor::nchw(1, 3, 8, 8, 0.25);
  net.forward(x, false);
  CHECK_THROWS_AS(net.backward(Tensor::nchw(1, 1, 8, 8)), std::logic_error);

  net.forward(x, true);
  net.backward(Tensor::nchw(1, 1, 8, 8));
  for (const Param* p : net.parameters())
    for (double g : p->grad.data()) CHECK(g == 0.0);

  std::mt19937_64 rng(8);
  Tensor up = Tensor::nchw(1, 1, 8, 8);
  fill_uniform(up, rng);
  fill_uniform(x, rng);
  net.forward(x, true);
  net.backward(up);
  std::vector<Tensor> first;
  for (const Param* p : net.parameters()) first.push_back(p->grad);
  net.forward(x, true);
  net.backward(up);
  auto params = net.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    CHECK(bitwise_equal(first[k].data(), params[k]->grad.data()));
    CHECK(params[k]->grad.all_finite());
  }
}

TEST_CASE("transposed convolution doubles spatial size") {
  ConvTranspose2x2 up(4, 2, "u");
  const Tensor out = up.infer(Tensor::nchw(1, 4, 5, 7));
  CHECK(out.shape() == std::vector<std::size_t>{1, 2, 10, 14});
}

namespace {

std::vector<Sample> square_dataset(std::size_t count, std::size_t size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < count; ++i) {
    Sample s{Tensor::nchw(1, 3, size, size), Tensor::nchw(1, 1, size, size)};
    const std::size_t w = size / 4 + rng() % (size / 4);
    const std::size_t x0 = rng() % (size - w), y0 = rng() % (size - w);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const bool in = x >= x0 && x < x0 + w && y >= y0 && y < y0 + w;
        for (std::size_t c = 0; c < 3; ++c) s.image.at(0, c, y, x) = in ? 0.8 : 0.2 + 0.05 * c;
        s.target.at(0, 0, y, x) = in ? 1.0 : 0.0;
      }
    out.push_back(std::move(s));
  }
  return out;
}

UnetConfig small_config(std::size_t size) {
  UnetConfig c;
  c.input_size = static_cast<std::uint32_t>(size);
  c.base_filters = 2;
  c.depth = 2;
  c.dropout_rate = 0.0;
  c.seed = 17;
  return c;
}

}  // namespace

TEST_CASE("training overfits a single image") {
  auto data = square_dataset(1, 64, 1);
  UnetConfig c = small_config(64);
  c.base_filters = 4;
  Network net = build_sat_unet(c);
  TrainOptions opt;
  opt.epochs = 200;
  opt.learning_rate = 0.1;
  opt.batch_size = 1;
  const TrainingLog log = train(net, data, opt);
  REQUIRE(log.size() == 200);
  CHECK(log.back().loss < 0.2 * log.front().loss);
}

TEST_CASE("zero learning rate keeps the loss constant") {
  auto data = square_dataset(3, 16, 2);
  Network net = build_sat_unet(small_config(16));
  TrainOptions opt;
  opt.epochs = 4;
  opt.learning_rate = 0.0;
  opt.batch_size = 1;
  const TrainingLog log = train(net, data, opt);
  for (const auto& r : log) CHECK(r.loss == doctest::Approx(log.front().loss).epsilon(1e-12));
}

TEST_CASE("training is deterministic per seed") {
  auto data = square_dataset(6, 16, 3);
  auto run = [&](std::uint64_t seed) {
    UnetConfig c = small_config(16);
    c.dropout_rate = 0.2;
    Network net = build_sat_unet(c);
    TrainOptions opt;
    opt.epochs = 3;
    opt.batch_size = 2;
    opt.momentum = 0.9;
    opt.seed = seed;
    return train(net, data, opt);
  };
  const auto a = run(1), b = run(1), c = run(2);
  REQUIRE(a.size() == b.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].loss == b[i].loss);
    CHECK(a[i].jaccard == b[i].jaccard);
    differs |= a[i].loss != c[i].loss;
  }
  CHECK(differs);
}

TEST_CASE("training rejects bad input") {
  Network net = build_sat_unet(small_config(16));
  CHECK_THROWS_AS(train(net, {}, TrainOptions{}), std::invalid_argument);
  auto data = square_dataset(1, 32, 1);
  CHECK_THROWS_AS(train(net, data, TrainOptions{}), ShapeError);

  auto good = square_dataset(2, 16, 1);
  good[0].image[0] = std::numeric_limits<double>::quiet_NaN();
  TrainOptions opt;
  opt.epochs = 1;
  CHECK_THROWS_AS(train(net, good, opt), TrainingError);
}

TEST_CASE("checkpoint round trip") {
  UnetConfig c = small_config(16);
  c.dropout_rate = 0.25;
  Network net = build_sat_unet(c);
  auto data = square_dataset(2, 16, 4);
  TrainOptions opt;
  opt.epochs = 2;
  train(net, data, opt);

  const auto path = std::filesystem::temp_directory_path() / "satinfra_test.sunet";
  save_checkpoint(net, path);
  {
    std::ifstream in(path, std::ios::binary);
    char magic[6];
    in.read(magic, 6);
    CHECK(std::string(magic, 6) == "SUNET1");
  }
  Network loaded = load_checkpoint(path);
  CHECK(loaded.config().input_size == c.input_size);
  CHECK(loaded.config().seed == c.seed);
  auto p1 = net.parameters();
  auto p2 = loaded.parameters();
  REQUIRE(p1.size() == p2.size());
  for (std::size_t k = 0; k < p1.size(); ++k)
    for (std::size_t i = 0; i < p1[k]->value.size(); ++i)
      CHECK(p2[k]->value[i] == static_cast<double>(static_cast<float>(p1[k]->value[i])));
  auto b1 = net.buffers();
  auto b2 = loaded.buffers();
  for (std::size_t k = 0; k < b1.size(); ++k)
    for (std::size_t i = 0; i < b1[k]->size(); ++i)
      CHECK((*b2[k])[i] == static_cast<double>(static_cast<float>((*b1[k])[i])));

  // Saving the loaded network reproduces the file byte for byte.
  const auto path2 = std::filesystem::temp_directory_path() / "satinfra_test2.sunet";
  save_checkpoint(loaded, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  const std::string s1((std::istreambuf_iterator<char>(f1)), {});
  const std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);

  std::ofstream(path, std::ios::binary) << "NOTNET";
  CHECK_THROWS(load_checkpoint(path));
}
