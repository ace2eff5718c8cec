#pragma once

#include <string>
#include <vector>

#include "bvs/nn.hpp"

namespace bvs {

/// Leaky-ReLU multilayer perceptron with a scalar output.
template <typename S>
class Mlp {
 public:
  Mlp() = default;
  Mlp(int input, int hidden, int hidden_layers, double slope = 0.1) : slope_(static_cast<S>(slope)) {
    int in = input;
    for (int i = 0; i < hidden_layers; ++i) {
      layers_.emplace_back(in, hidden);
      in = hidden;
    }
    layers_.emplace_back(in, 1);
  }

  void init(Rng& rng) {
    for (auto& l : layers_) l.init(rng);
  }

  struct Cache {
    std::vector<nn::Mat<S>> inputs;  // input of every layer
    std::vector<nn::Mat<S>> pre;     // pre-activation of hidden layers
  };

  /// x: input x B. Returns 1 x B.
  nn::Mat<S> forward(const nn::Mat<S>& x, Cache* cache = nullptr) const {
    if (cache) *cache = {};
    nn::Mat<S> h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (cache) cache->inputs.push_back(h);
      nn::Mat<S> y = layers_[i].forward(h);
      if (i + 1 == layers_.size()) return y;
      if (cache) cache->pre.push_back(y);
      h = nn::leaky_relu(y, slope_);
    }
    return h;
  }

  /// Accumulates parameter gradients; returns dL/dx.
  nn::Mat<S> backward(const Cache& cache, const nn::Mat<S>& grad_out) {
    nn::Mat<S> g = grad_out;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      if (i + 1 < layers_.size()) g = nn::leaky_relu_backward(cache.pre[i], g, slope_);
      g = layers_[i].backward(cache.inputs[i], g);
    }
    return g;
  }

  /// dOutput/dx without touching parameter gradients.
  nn::Mat<S> input_grad(const Cache& cache, const nn::Mat<S>& grad_out) const {
    nn::Mat<S> g = grad_out;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      if (i + 1 < layers_.size()) g = nn::leaky_relu_backward(cache.pre[i], g, slope_);
      g = layers_[i].weight.value.transpose() * g;
    }
    return g;
  }

  void append_params(nn::ParamList<S>& list, const std::string& prefix) {
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].append_params(list, prefix + ".l" + std::to_string(i));
  }

  int depth() const { return static_cast<int>(layers_.size()) - 1; }

 private:
  std::vector<nn::Linear<S>> layers_;
  S slope_ = S(0.1);
};

/// Non-spiking critic with one head per action branch. The search head
/// sees [time-averaged RNN output, action] through three hidden layers;
/// the detection head sees [predicted absolute target, action] through two.
template <typename S>
struct Critic {
  Mlp<S> search;
  Mlp<S> detection;

  Critic() = default;
  Critic(int memory_size, int hidden = 64, double slope = 0.1)
      : search(memory_size + 2, hidden, 3, slope), detection(4, hidden, 2, slope) {}

  void init(Rng& rng) {
    search.init(rng);
    detection.init(rng);
  }

  void append_params(nn::ParamList<S>& list, const std::string& prefix) {
    search.append_params(list, prefix + ".search");
    detection.append_params(list, prefix + ".detection");
  }
};

}  // namespace bvs
