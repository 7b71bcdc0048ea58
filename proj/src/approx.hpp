#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rng.hpp"

namespace gvfl {

enum class Activation : uint8_t { Linear = 0, Relu = 1, Tanh = 2, Sigmoid = 3 };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct LayerSpec {
  int in = 0;
  int out = 0;
  Activation act = Activation::Linear;
};

struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Per-layer activations recorded during a forward pass, consumed by backward.
struct Tape {
  std::vector<double> input;
  std::vector<std::vector<double>> pre;   // pre-activation per layer
  std::vector<std::vector<double>> post;  // post-activation per layer
};

// Fully-connected network over a single flat parameter vector.  Layout per
// layer: weights row-major (out x in) followed by biases (out).  Adam moment
// vectors live alongside the parameters so checkpoints capture the full
// optimizer state.
class Net {
 public:
  Net() = default;
  explicit Net(std::vector<LayerSpec> layers);

  // Weights ~ U[-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
  static Net init_uniform(std::vector<LayerSpec> layers, Rng& rng);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  int input_width() const { return layers_.empty() ? 0 : layers_.front().in; }
  int output_width() const { return layers_.empty() ? 0 : layers_.back().out; }
  size_t param_count() const { return params_.size(); }

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  uint64_t adam_t() const { return adam_t_; }

  // Offset of layer l's weight block inside the flat vector; biases follow
  // the weights of the same layer.
  size_t layer_offset(size_t l) const;

  std::vector<double> forward(std::span<const double> input) const;
  void forward(std::span<const double> input, Tape& tape) const;

  // Accumulates dL/dparams into param_grad (must be param_count() long,
  // caller zeroes it when starting a fresh batch).  If input_grad is non-null
  // it is overwritten with dL/dinput.
  void backward(const Tape& tape, std::span<const double> out_grad,
                std::vector<double>& param_grad,
                std::vector<double>* input_grad = nullptr) const;

  void adam_step(std::span<const double> grad, const AdamHyper& hyper);

  // this <- (1 - rate) * this + rate * source
  void polyak_from(const Net& source, double rate);

  void save(const std::filesystem::path& path) const;
  static Net load(const std::filesystem::path& path);

  bool same_shape(const Net& other) const;

 private:
  std::vector<LayerSpec> layers_;
  std::vector<double> params_;
  std::vector<double> adam_m_;
  std::vector<double> adam_v_;
  uint64_t adam_t_ = 0;
  std::vector<size_t> offsets_;

  void build_offsets();
};

}  // namespace gvfl
