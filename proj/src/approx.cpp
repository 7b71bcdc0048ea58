#include "approx.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace gvfl {

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Linear: return "linear";
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "?";
}

Activation activation_from_name(const std::string& name) {
  if (name == "linear") return Activation::Linear;
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  if (name == "sigmoid") return Activation::Sigmoid;
  throw std::invalid_argument("unknown activation: " + name);
}

static double apply_act(Activation a, double x) {
  switch (a) {
    case Activation::Linear: return x;
    case Activation::Relu: return x > 0.0 ? x : 0.0;
    case Activation::Tanh: return std::tanh(x);
    case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
  }
  return x;
}

// Derivative expressed with both pre- and post-activation at hand.
static double act_deriv(Activation a, double pre, double post) {
  switch (a) {
    case Activation::Linear: return 1.0;
    case Activation::Relu: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: return 1.0 - post * post;
    case Activation::Sigmoid: return post * (1.0 - post);
  }
  return 1.0;
}

Net::Net(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
  for (size_t l = 0; l < layers_.size(); ++l) {
    const auto& s = layers_[l];
    if (s.in <= 0 || s.out <= 0)
      throw std::invalid_argument("layer dimensions must be positive");
    if (l > 0 && s.in != layers_[l - 1].out)
      throw std::invalid_argument("layer " + std::to_string(l) +
                                  " input width does not match previous output");
  }
  build_offsets();
  params_.assign(offsets_.back(), 0.0);
  adam_m_.assign(params_.size(), 0.0);
  adam_v_.assign(params_.size(), 0.0);
}

void Net::build_offsets() {
  offsets_.clear();
  size_t off = 0;
  for (const auto& s : layers_) {
    offsets_.push_back(off);
    off += static_cast<size_t>(s.out) * s.in + s.out;
  }
  offsets_.push_back(off);
}

size_t Net::layer_offset(size_t l) const { return offsets_.at(l); }

Net Net::init_uniform(std::vector<LayerSpec> layers, Rng& rng) {
  Net net(std::move(layers));
  for (size_t l = 0; l < net.layers_.size(); ++l) {
    const auto& s = net.layers_[l];
    double bound = 1.0 / std::sqrt(static_cast<double>(s.in));
    size_t w0 = net.offsets_[l];
    size_t nw = static_cast<size_t>(s.out) * s.in;
    for (size_t i = 0; i < nw; ++i)
      net.params_[w0 + i] = rng.uniform(-bound, bound);
    // biases stay zero
  }
  return net;
}

std::vector<double> Net::forward(std::span<const double> input) const {
  Tape tape;
  forward(input, tape);
  return tape.post.back();
}

void Net::forward(std::span<const double> input, Tape& tape) const {
  if (layers_.empty()) throw std::logic_error("forward on empty net");
  if (static_cast<int>(input.size()) != layers_.front().in)
    throw std::invalid_argument(
        "forward: input width " + std::to_string(input.size()) + " != " +
        std::to_string(layers_.front().in));
  tape.input.assign(input.begin(), input.end());
  tape.pre.resize(layers_.size());
  tape.post.resize(layers_.size());
  const double* x = tape.input.data();
  size_t xn = tape.input.size();
  for (size_t l = 0; l < layers_.size(); ++l) {
    const auto& s = layers_[l];
    auto& pre = tape.pre[l];
    auto& post = tape.post[l];
    pre.resize(s.out);
    post.resize(s.out);
    const double* W = params_.data() + offsets_[l];
    const double* b = W + static_cast<size_t>(s.out) * s.in;
    for (int o = 0; o < s.out; ++o) {
      const double* row = W + static_cast<size_t>(o) * s.in;
      double acc = b[o];
      for (size_t i = 0; i < xn; ++i) acc += row[i] * x[i];
      pre[o] = acc;
      post[o] = apply_act(s.act, acc);
    }
    x = post.data();
    xn = post.size();
  }
}

void Net::backward(const Tape& tape, std::span<const double> out_grad,
                   std::vector<double>& param_grad,
                   std::vector<double>* input_grad) const {
  if (tape.post.size() != layers_.size())
    throw std::invalid_argument("backward: tape does not match net");
  if (static_cast<int>(out_grad.size()) != layers_.back().out)
    throw std::invalid_argument("backward: out_grad width mismatch");
  if (param_grad.size() != params_.size())
    throw std::invalid_argument("backward: param_grad size mismatch");

  std::vector<double> delta(out_grad.begin(), out_grad.end());
  std::vector<double> prev;
  for (size_t li = layers_.size(); li-- > 0;) {
    const auto& s = layers_[li];
    const auto& pre = tape.pre[li];
    const auto& post = tape.post[li];
    for (int o = 0; o < s.out; ++o)
      delta[o] *= act_deriv(s.act, pre[o], post[o]);

    const double* x =
        li == 0 ? tape.input.data() : tape.post[li - 1].data();
    size_t xn = li == 0 ? tape.input.size() : tape.post[li - 1].size();
    double* gW = param_grad.data() + offsets_[li];
    double* gb = gW + static_cast<size_t>(s.out) * s.in;
    for (int o = 0; o < s.out; ++o) {
      double d = delta[o];
      double* grow = gW + static_cast<size_t>(o) * s.in;
      for (size_t i = 0; i < xn; ++i) grow[i] += d * x[i];
      gb[o] += d;
    }
    bool need_input = li > 0 || input_grad != nullptr;
    if (need_input) {
      prev.assign(xn, 0.0);
      const double* W = params_.data() + offsets_[li];
      for (int o = 0; o < s.out; ++o) {
        double d = delta[o];
        const double* row = W + static_cast<size_t>(o) * s.in;
        for (size_t i = 0; i < xn; ++i) prev[i] += d * row[i];
      }
      delta = prev;
    }
  }
  if (input_grad) *input_grad = delta;
}

void Net::adam_step(std::span<const double> grad, const AdamHyper& hyper) {
  if (grad.size() != params_.size())
    throw std::invalid_argument("adam_step: gradient size mismatch");
  for (size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i]))
      throw std::domain_error("adam_step: non-finite gradient at index " +
                              std::to_string(i));
  }
  adam_t_ += 1;
  double b1t = 1.0 - std::pow(hyper.beta1, static_cast<double>(adam_t_));
  double b2t = 1.0 - std::pow(hyper.beta2, static_cast<double>(adam_t_));
  for (size_t i = 0; i < grad.size(); ++i) {
    adam_m_[i] = hyper.beta1 * adam_m_[i] + (1.0 - hyper.beta1) * grad[i];
    adam_v_[i] = hyper.beta2 * adam_v_[i] + (1.0 - hyper.beta2) * grad[i] * grad[i];
    double mhat = adam_m_[i] / b1t;
    double vhat = adam_v_[i] / b2t;
    params_[i] -= hyper.lr * mhat / (std::sqrt(vhat) + hyper.eps);
  }
}

void Net::polyak_from(const Net& source, double rate) {
  if (!same_shape(source))
    throw std::invalid_argument("polyak_from: shape mismatch");
  for (size_t i = 0; i < params_.size(); ++i)
    params_[i] = (1.0 - rate) * params_[i] + rate * source.params_[i];
}

bool Net::same_shape(const Net& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].in != other.layers_[l].in ||
        layers_[l].out != other.layers_[l].out ||
        layers_[l].act != other.layers_[l].act)
      return false;
  }
  return true;
}

namespace {

constexpr char kMagic[4] = {'G', 'V', 'F', 'N'};
constexpr uint32_t kVersion = 1;

template <class T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint truncated");
  return v;
}

}  // namespace

void Net::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path.string());
  os.write(kMagic, 4);
  write_pod<uint32_t>(os, kVersion);
  write_pod<uint32_t>(os, static_cast<uint32_t>(layers_.size()));
  for (const auto& s : layers_) {
    write_pod<uint32_t>(os, static_cast<uint32_t>(s.in));
    write_pod<uint32_t>(os, static_cast<uint32_t>(s.out));
    write_pod<uint8_t>(os, static_cast<uint8_t>(s.act));
  }
  auto write_vec = [&](const std::vector<double>& v) {
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(double)));
  };
  write_vec(params_);
  write_vec(adam_m_);
  write_vec(adam_v_);
  write_pod<uint64_t>(os, adam_t_);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

Net Net::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for read: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("bad checkpoint magic: " + path.string());
  uint32_t version = read_pod<uint32_t>(is);
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version));
  uint32_t n_layers = read_pod<uint32_t>(is);
  if (n_layers == 0 || n_layers > 64)
    throw std::runtime_error("implausible layer count in checkpoint");
  std::vector<LayerSpec> specs(n_layers);
  for (auto& s : specs) {
    s.in = static_cast<int>(read_pod<uint32_t>(is));
    s.out = static_cast<int>(read_pod<uint32_t>(is));
    uint8_t a = read_pod<uint8_t>(is);
    if (a > 3) throw std::runtime_error("bad activation code in checkpoint");
    s.act = static_cast<Activation>(a);
  }
  Net net(std::move(specs));
  auto read_vec = [&](std::vector<double>& v) {
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint truncated: " + path.string());
  };
  read_vec(net.params_);
  read_vec(net.adam_m_);
  read_vec(net.adam_v_);
  net.adam_t_ = read_pod<uint64_t>(is);
  return net;
}

}  // namespace gvfl
