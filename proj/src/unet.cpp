#include "satinfra/unet.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

namespace satinfra::nn {

void UnetConfig::validate() const {
  if (depth < 1 || depth > 10) throw std::invalid_argument("UnetConfig: depth must be in [1,10]");
  if (base_filters < 1) throw std::invalid_argument("UnetConfig: base_filters must be positive");
  if (input_size == 0 || input_size % (1u << depth) != 0) {
    throw std::invalid_argument("UnetConfig: input_size " + std::to_string(input_size) +
                                " is not divisible by 2^depth = " + std::to_string(1u << depth));
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw std::invalid_argument("UnetConfig: dropout_rate must be in [0,1)");
}

ArchitecturePlan plan_sat_unet(const UnetConfig& config) {
  config.validate();
  ArchitecturePlan plan;
  auto add = [&](const char* kind, const std::string& block, std::size_t ch) {
    plan.layers.push_back({kind, block, ch});
  };
  const std::size_t F = config.base_filters, D = config.depth;
  add("input", "input", 3);
  for (std::size_t i = 0; i < D; ++i) {
    const std::string b = "encoder" + std::to_string(i);
    const std::size_t ch = F << i;
    add("batch_norm", b, i == 0 ? 3 : ch / 2);
    add("conv", b, ch);
    add("conv", b, ch);
    if (i > 0) add("dropout", b, ch);
    add("max_pool", b, ch);
  }
  const std::size_t bottom = F << D;
  add("batch_norm", "bottleneck", bottom / 2);
  add("conv", "bottleneck", bottom);
  add("conv", "bottleneck", bottom);
  add("dropout", "bottleneck", bottom);
  for (std::size_t j = 0; j < D; ++j) {
    const std::string b = "decoder" + std::to_string(j);
    const std::size_t ch = F << (D - 1 - j);
    add("transposed_conv", b, ch);
    add("concat", b, 2 * ch);
    add("batch_norm", b, 2 * ch);
    add("conv", b, ch);
    add("conv", b, ch);
    add("dropout", b, ch);
  }
  add("conv", "head", 1);
  add("sigmoid", "head", 1);
  plan.block_count = 2 * D + 1;
  return plan;
}

namespace {

struct ConvBlock {
  ConvBlock(std::size_t in, std::size_t out, double dropout, std::uint64_t seed,
            const std::string& name)
      : bn(in, name + ".bn"),
        c1(in, out, 3, Activation::relu, name + ".conv1"),
        c2(out, out, 3, Activation::relu, name + ".conv2") {
    if (dropout >= 0.0 && seed != 0) drop = std::make_unique<Dropout>(dropout, seed);
  }

  Tensor forward(const Tensor& x, const PassContext& ctx) {
    Tensor h = c2.forward(c1.forward(bn.forward(x, ctx), ctx), ctx);
    return drop ? drop->forward(h, ctx) : h;
  }
  Tensor infer(const Tensor& x) const {
    Tensor h = c2.infer(c1.infer(bn.infer(x)));
    return drop ? drop->infer(h) : h;
  }
  Tensor backward(const Tensor& g) {
    Tensor h = drop ? drop->backward(g) : g;
    return bn.backward(c1.backward(c2.backward(h)));
  }
  void collect(std::vector<Param*>& out) {
    for (Layer* l : std::array<Layer*, 3>{&bn, &c1, &c2})
      for (Param* p : l->params()) out.push_back(p);
  }
  void collect(std::vector<const Param*>& out) const {
    for (const Layer* l : std::array<const Layer*, 3>{&bn, &c1, &c2})
      for (const Param* p : l->params()) out.push_back(p);
  }

  BatchNorm2d bn;
  Conv2d c1, c2;
  std::unique_ptr<Dropout> drop;
};

}  // namespace

struct Network::Impl {
  std::vector<ConvBlock> encoders;
  std::vector<MaxPool2x2> pools;
  std::unique_ptr<ConvBlock> bottleneck;
  std::vector<ConvTranspose2x2> ups;
  std::vector<ConvBlock> decoders;
  std::unique_ptr<Conv2d> head;
  Sigmoid sigmoid;

  std::vector<std::size_t> skip_channels;

  std::vector<Param*> params() {
    std::vector<Param*> out;
    for (auto& b : encoders) b.collect(out);
    bottleneck->collect(out);
    for (std::size_t j = 0; j < ups.size(); ++j) {
      for (Param* p : ups[j].params()) out.push_back(p);
      decoders[j].collect(out);
    }
    for (Param* p : head->params()) out.push_back(p);
    return out;
  }
  std::vector<const Param*> params() const {
    std::vector<const Param*> out;
    for (const auto& b : encoders) b.collect(out);
    bottleneck->collect(out);
    for (std::size_t j = 0; j < ups.size(); ++j) {
      for (const Param* p : static_cast<const Layer&>(ups[j]).params()) out.push_back(p);
      decoders[j].collect(out);
    }
    for (const Param* p : static_cast<const Layer&>(*head).params()) out.push_back(p);
    return out;
  }
  std::vector<BatchNorm2d*> norms() {
    std::vector<BatchNorm2d*> out;
    for (auto& b : encoders) out.push_back(&b.bn);
    out.push_back(&bottleneck->bn);
    for (auto& b : decoders) out.push_back(&b.bn);
    return out;
  }
};

Network::Network(const UnetConfig& config)
    : config_(config), plan_(plan_sat_unet(config)), impl_(std::make_unique<Impl>()) {
  const std::size_t F = config.base_filters, D = config.depth;
  std::uint64_t dropout_index = 0;
  auto dropout_seed = [&] { return mix64(config.seed ^ mix64(++dropout_index)) | 1u; };

  impl_->encoders.reserve(D);
  impl_->decoders.reserve(D);
  std::size_t in = 3;
  for (std::size_t i = 0; i < D; ++i) {
    const std::size_t ch = F << i;
    // The first encoder block has no dropout layer.
    const double rate = i == 0 ? -1.0 : config.dropout_rate;
    impl_->encoders.emplace_back(in, ch, rate, i == 0 ? 0 : dropout_seed(),
                                 "encoder" + std::to_string(i));
    impl_->pools.emplace_back();
    impl_->skip_channels.push_back(ch);
    in = ch;
  }
  impl_->bottleneck = std::make_unique<ConvBlock>(in, F << D, config.dropout_rate, dropout_seed(),
                                                  "bottleneck");
  in = F << D;
  for (std::size_t j = 0; j < D; ++j) {
    const std::size_t ch = F << (D - 1 - j);
    impl_->ups.emplace_back(in, ch, "decoder" + std::to_string(j) + ".up");
    impl_->decoders.emplace_back(2 * ch, ch, config.dropout_rate, dropout_seed(),
                                 "decoder" + std::to_string(j));
    in = ch;
  }
  impl_->head = std::make_unique<Conv2d>(in, 1, 1, Activation::none, "head");

  // He-normal kernels, zero biases, unit batch-norm scale.
  std::mt19937_64 rng(config.seed);
  for (Param* p : impl_->params()) {
    const auto& shape = p->value.shape();
    if (shape.size() != 4) continue;
    const bool transposed = p->name.find(".up.") != std::string::npos;
    const bool head = p->name.rfind("head.", 0) == 0;
    const double fan_in =
        transposed ? static_cast<double>(shape[0])
                   : static_cast<double>(shape[1] * shape[2] * shape[3]);
    std::normal_distribution<double> dist(0.0, std::sqrt((head ? 1.0 : 2.0) / fan_in));
    for (double& v : p->value.data()) v = dist(rng);
  }
}

Network::Network(Network&&) noexcept = default;
Network& Network::operator=(Network&&) noexcept = default;
Network::~Network() = default;

namespace {

void check_input(const Tensor& batch, const UnetConfig& config) {
  if (batch.rank() != 4 || batch.dim(1) != 3 || batch.dim(2) != config.input_size ||
      batch.dim(3) != config.input_size || batch.dim(0) == 0) {
    throw ShapeError("Network: expected input (N,3," + std::to_string(config.input_size) + "," +
                     std::to_string(config.input_size) + "), got " + batch.shape_string());
  }
}

}  // namespace

Tensor Network::forward(const Tensor& batch, bool training) {
  if (!training) {
    has_forward_ = false;
    return infer(batch);
  }
  check_input(batch, config_);
  const PassContext ctx{true, step_};
  Impl& m = *impl_;
  std::vector<Tensor> skips;
  Tensor x = batch;
  for (std::size_t i = 0; i < m.encoders.size(); ++i) {
    skips.push_back(m.encoders[i].forward(x, ctx));
    x = m.pools[i].forward(skips.back(), ctx);
  }
  x = m.bottleneck->forward(x, ctx);
  for (std::size_t j = 0; j < m.ups.size(); ++j) {
    Tensor up = m.ups[j].forward(x, ctx);
    x = m.decoders[j].forward(concat_channels(up, skips[skips.size() - 1 - j]), ctx);
  }
  has_forward_ = true;
  return m.sigmoid.forward(m.head->forward(x, ctx), ctx);
}

Tensor Network::infer(const Tensor& batch) const {
  check_input(batch, config_);
  const Impl& m = *impl_;
  std::vector<Tensor> skips;
  Tensor x = batch;
  for (std::size_t i = 0; i < m.encoders.size(); ++i) {
    skips.push_back(m.encoders[i].infer(x));
    x = m.pools[i].infer(skips.back());
  }
  x = m.bottleneck->infer(x);
  for (std::size_t j = 0; j < m.ups.size(); ++j) {
    Tensor up = m.ups[j].infer(x);
    x = m.decoders[j].infer(concat_channels(up, skips[skips.size() - 1 - j]));
  }
  return m.sigmoid.infer(m.head->infer(x));
}

void Network::backward(const Tensor& loss_grad) {
  if (!has_forward_) throw std::logic_error("Network::backward called without a training forward");
  Impl& m = *impl_;
  const std::size_t S = config_.input_size;
  if (loss_grad.rank() != 4 || loss_grad.dim(1) != 1 || loss_grad.dim(2) != S ||
      loss_grad.dim(3) != S) {
    throw ShapeError("Network::backward: bad gradient shape " + loss_grad.shape_string());
  }
  Tensor g = m.head->backward(m.sigmoid.backward(loss_grad));
  std::vector<Tensor> skip_grads(m.encoders.size());
  for (std::size_t j = m.ups.size(); j-- > 0;) {
    Tensor gc = m.decoders[j].backward(g);
    const std::size_t up_channels = gc.dim(1) / 2;
    auto [g_up, g_skip] = split_channels(gc, up_channels);
    skip_grads[m.encoders.size() - 1 - j] = std::move(g_skip);
    g = m.ups[j].backward(g_up);
  }
  g = m.bottleneck->backward(g);
  for (std::size_t i = m.encoders.size(); i-- > 0;) {
    Tensor gp = m.pools[i].backward(g);
    for (std::size_t k = 0; k < gp.size(); ++k) gp[k] += skip_grads[i][k];
    g = m.encoders[i].backward(gp);
  }
}

std::vector<Param*> Network::parameters() { return impl_->params(); }
std::vector<const Param*> Network::parameters() const {
  return static_cast<const Impl&>(*impl_).params();
}

std::vector<Tensor*> Network::buffers() {
  std::vector<Tensor*> out;
  for (BatchNorm2d* bn : impl_->norms())
    for (Tensor* t : bn->buffers()) out.push_back(t);
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const Param* p : parameters()) n += p->value.size();
  return n;
}

Network build_sat_unet(const UnetConfig& config) { return Network(config); }

// ---------------------------------------------------------------- checkpoint

namespace {

constexpr std::array<char, 6> kMagic{'S', 'U', 'N', 'E', 'T', '1'};

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T)))
    throw std::runtime_error("checkpoint: unexpected end of file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

}  // namespace

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path.string());
  const UnetConfig& c = net.config();
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, c.input_size);
  put_le<std::uint32_t>(out, c.base_filters);
  put_le<std::uint32_t>(out, c.depth);
  put_le<float>(out, static_cast<float>(c.dropout_rate));
  put_le<std::uint64_t>(out, c.seed);

  // buffers() is non-const only because it hands out mutable pointers.
  auto& mutable_net = const_cast<Network&>(net);
  std::vector<const Tensor*> tensors;
  for (const Param* p : net.parameters()) tensors.push_back(&p->value);
  for (const Tensor* t : mutable_net.buffers()) tensors.push_back(t);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const Tensor* t : tensors) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t->size()));
    for (double v : t->data()) put_le<float>(out, static_cast<float>(v));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

Network load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  std::array<char, 6> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic)
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  UnetConfig c;
  c.input_size = get_le<std::uint32_t>(in);
  c.base_filters = get_le<std::uint32_t>(in);
  c.depth = get_le<std::uint32_t>(in);
  c.dropout_rate = static_cast<double>(get_le<float>(in));
  c.seed = get_le<std::uint64_t>(in);
  Network net(c);

  std::vector<Tensor*> tensors;
  for (Param* p : net.parameters()) tensors.push_back(&p->value);
  for (Tensor* t : net.buffers()) tensors.push_back(t);
  const auto count = get_le<std::uint32_t>(in);
  if (count != tensors.size()) throw std::runtime_error("checkpoint: tensor count mismatch");
  for (Tensor* t : tensors) {
    if (get_le<std::uint32_t>(in) != t->size())
      throw std::runtime_error("checkpoint: tensor size mismatch");
    for (double& v : t->data()) v = static_cast<double>(get_le<float>(in));
  }
  return net;
}

}  // namespace satinfra::nn
