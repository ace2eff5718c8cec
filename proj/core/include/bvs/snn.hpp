#pragma once

#include <cstdint>
#include <vector>

#include "bvs/nn.hpp"

namespace bvs::snn {

using nn::Mat;
using nn::Vec;

/// lambda * clip(floor(x T / lambda + 0.5) / T, 0, 1)
double qcfs(double x, double lambda, int time_steps);

/// Spike-function surrogate: the forward smooth stand-in
/// (1/pi) atan(pi u) + 1/2 and its derivative 1 / (1 + (pi u)^2).
double atan_surrogate(double u);
double atan_surrogate_grad(double u);

struct IfParams {
  double lambda = 1.0;
  double threshold = 1.0;
  double v_init = 0.5;
  int time_steps = 4;
};

/// Heaviside is the real spiking forward. Smooth replaces the step by
/// atan_surrogate so the surrogate backward becomes the exact gradient;
/// it exists for finite-difference gradient checks.
enum class SpikeMode { Heaviside, Smooth };

/// Per-layer spike accounting. Disabled counters are never touched.
struct SpikeCounter {
  bool enabled = false;
  std::uint64_t spikes = 0;
  std::uint64_t neuron_steps = 0;

  void reset() { spikes = neuron_steps = 0; }
  double rate() const {
    return neuron_steps == 0 ? 0.0 : static_cast<double>(spikes) / static_cast<double>(neuron_steps);
  }
};

/// Pre-reset membrane potentials of one IF population, one entry per step.
template <typename S>
struct IfTrace {
  std::vector<Mat<S>> potential;
};

/// Runs scaled IF dynamics with reset by subtraction over a sequence of
/// synaptic currents y_t (already W s + b):
///   u_t = v_{t-1} + y_t / lambda,  s_t = lambda H(u_t - theta),
///   v_t = u_t - theta H(u_t - theta),  v_0 = v_init.
template <typename S>
std::vector<Mat<S>> if_forward(const std::vector<Mat<S>>& currents, const IfParams& p,
                               SpikeMode mode, IfTrace<S>* trace, SpikeCounter* counter) {
  std::vector<Mat<S>> out;
  out.reserve(currents.size());
  if (currents.empty()) return out;
  const S inv_lambda = static_cast<S>(1.0 / p.lambda);
  const S theta = static_cast<S>(p.threshold);
  const S lambda = static_cast<S>(p.lambda);
  Mat<S> v = Mat<S>::Constant(currents[0].rows(), currents[0].cols(), static_cast<S>(p.v_init));
  if (trace) trace->potential.clear();
  for (const auto& y : currents) {
    Mat<S> u = v + y * inv_lambda;
    Mat<S> spike;
    if (mode == SpikeMode::Heaviside) {
      spike = (u.array() >= theta).template cast<S>().matrix();
    } else {
      spike = u.unaryExpr([theta](S x) { return static_cast<S>(atan_surrogate(static_cast<double>(x - theta))); });
    }
    v = u - theta * spike;
    if (counter && counter->enabled) {
      counter->spikes += static_cast<std::uint64_t>((spike.array() > S(0.5)).count());
      counter->neuron_steps += static_cast<std::uint64_t>(spike.size());
    }
    if (trace) trace->potential.push_back(std::move(u));
    out.push_back(lambda * spike);
  }
  return out;
}

/// Surrogate-gradient backward of if_forward (gradient also flows through
/// the reset). Returns dL/dy_t for every step.
template <typename S>
std::vector<Mat<S>> if_backward(const IfTrace<S>& trace, const std::vector<Mat<S>>& grad_spikes,
                                const IfParams& p) {
  const std::size_t steps = trace.potential.size();
  std::vector<Mat<S>> grad_currents(steps);
  if (steps == 0) return grad_currents;
  const S theta = static_cast<S>(p.threshold);
  const S lambda = static_cast<S>(p.lambda);
  const S inv_lambda = static_cast<S>(1.0 / p.lambda);
  Mat<S> grad_v = Mat<S>::Zero(trace.potential[0].rows(), trace.potential[0].cols());
  for (std::size_t t = steps; t-- > 0;) {
    const Mat<S> sg = trace.potential[t].unaryExpr(
        [theta](S x) { return static_cast<S>(atan_surrogate_grad(static_cast<double>(x - theta))); });
    Mat<S> grad_u = grad_v.cwiseProduct((S(1) - theta * sg.array()).matrix()) +
                    lambda * grad_spikes[t].cwiseProduct(sg);
    grad_currents[t] = grad_u * inv_lambda;
    grad_v = std::move(grad_u);
  }
  return grad_currents;
}

/// Fully connected IF population (Linear + IF dynamics).
template <typename S>
class IfLayer {
 public:
  IfLayer() = default;
  IfLayer(int in, int out, IfParams params) : linear(in, out), params(params) {}

  nn::Linear<S> linear;
  IfParams params;
  SpikeCounter counter;

  int size() const { return linear.out_features(); }

  /// Stateful single step for streaming use.
  void reset(Eigen::Index batch) {
    membrane_ = Mat<S>::Constant(size(), batch, static_cast<S>(params.v_init));
  }
  Mat<S> step(const Mat<S>& input) {
    if (!input.allFinite()) throw Error("if_step: non-finite input");
    if (membrane_.cols() != input.cols()) reset(input.cols());
    const Mat<S> u = membrane_ + linear.forward(input) * static_cast<S>(1.0 / params.lambda);
    const Mat<S> spike = (u.array() >= static_cast<S>(params.threshold)).template cast<S>().matrix();
    membrane_ = u - static_cast<S>(params.threshold) * spike;
    if (counter.enabled) {
      counter.spikes += static_cast<std::uint64_t>((spike.array() > S(0.5)).count());
      counter.neuron_steps += static_cast<std::uint64_t>(spike.size());
    }
    return static_cast<S>(params.lambda) * spike;
  }
  const Mat<S>& membrane() const { return membrane_; }

  struct Trace {
    std::vector<Mat<S>> inputs;
    IfTrace<S> neuron;
  };

  /// Fresh membranes, T = inputs.size() steps.
  std::vector<Mat<S>> forward(const std::vector<Mat<S>>& inputs, SpikeMode mode, Trace* trace) {
    std::vector<Mat<S>> currents;
    currents.reserve(inputs.size());
    for (const auto& x : inputs) currents.push_back(linear.forward(x));
    if (trace) trace->inputs = inputs;
    return if_forward(currents, params, mode, trace ? &trace->neuron : nullptr, &counter);
  }

  /// Accumulates weight gradients; returns dL/d(inputs) when requested.
  std::vector<Mat<S>> backward(const Trace& trace, const std::vector<Mat<S>>& grad_out,
                               bool need_input_grad) {
    auto grad_currents = if_backward(trace.neuron, grad_out, params);
    std::vector<Mat<S>> grad_in;
    for (std::size_t t = 0; t < grad_currents.size(); ++t) {
      linear.weight.grad.noalias() += grad_currents[t] * trace.inputs[t].transpose();
      linear.bias.grad.col(0) += grad_currents[t].rowwise().sum();
      if (need_input_grad) grad_in.push_back(linear.weight.value.transpose() * grad_currents[t]);
    }
    return grad_in;
  }

  void append_params(nn::ParamList<S>& list, const std::string& prefix) {
    linear.append_params(list, prefix);
  }

 private:
  Mat<S> membrane_;
};

/// Linear decoding of time-averaged population activity.
template <typename S>
struct PopulationReadout {
  nn::Linear<S> linear;

  PopulationReadout() = default;
  PopulationReadout(int population, int outputs) : linear(population, outputs) {}

  static Mat<S> average(const std::vector<Mat<S>>& spikes) {
    Mat<S> mean = spikes.at(0);
    for (std::size_t t = 1; t < spikes.size(); ++t) mean += spikes[t];
    return mean / static_cast<S>(spikes.size());
  }

  Mat<S> decode(const std::vector<Mat<S>>& spikes) const { return linear.forward(average(spikes)); }

  /// Returns dL/d(spikes_t), identical for every t.
  std::vector<Mat<S>> backward(const std::vector<Mat<S>>& spikes, const Mat<S>& grad_out) {
    const Mat<S> grad_mean = linear.backward(average(spikes), grad_out);
    return std::vector<Mat<S>>(spikes.size(), grad_mean / static_cast<S>(spikes.size()));
  }

  void append_params(nn::ParamList<S>& list, const std::string& prefix) {
    linear.append_params(list, prefix);
  }
};

/// Recurrent IF cell: within a fixation the inputs are integrated for T
/// steps, the recurrent term h W_rr + b_r is added only at the first step,
/// membranes restart at v_init, and the hidden state handed to the next
/// fixation is the last step's spikes.
template <typename S>
class SpikingRnn {
 public:
  SpikingRnn() = default;
  SpikingRnn(int input_dim, int hidden, IfParams params)
      : input(input_dim, hidden), recurrent(hidden, hidden), params(params) {}

  nn::Linear<S> input;      // W_xr, b_x
  nn::Linear<S> recurrent;  // W_rr, b_r
  IfParams params;
  SpikeCounter counter;

  int hidden_size() const { return input.out_features(); }

  void init(Rng& rng) {
    input.init(rng);
    recurrent.init(rng);
  }

  struct FixationTrace {
    std::vector<Mat<S>> inputs;
    Mat<S> h_prev;
    IfTrace<S> neuron;
  };

  struct FixationOutput {
    std::vector<Mat<S>> spikes;  // T entries, hidden x batch
    Mat<S> h_next;
  };

  FixationOutput fixation(const std::vector<Mat<S>>& inputs, const Mat<S>& h_prev,
                          SpikeMode mode = SpikeMode::Heaviside, FixationTrace* trace = nullptr) {
    std::vector<Mat<S>> currents;
    currents.reserve(inputs.size());
    for (std::size_t t = 0; t < inputs.size(); ++t) {
      Mat<S> y = input.forward(inputs[t]);
      if (t == 0) y += recurrent.forward(h_prev);
      currents.push_back(std::move(y));
    }
    FixationOutput out;
    out.spikes = if_forward(currents, params, mode, trace ? &trace->neuron : nullptr, &counter);
    out.h_next = out.spikes.back();
    if (trace) {
      trace->inputs = inputs;
      trace->h_prev = h_prev;
    }
    return out;
  }

  /// Backward of one fixation. grad_spikes[T-1] must already include the
  /// gradient arriving through h_next. Returns dL/dh_prev.
  Mat<S> fixation_backward(const FixationTrace& trace, const std::vector<Mat<S>>& grad_spikes) {
    auto grad_currents = if_backward(trace.neuron, grad_spikes, params);
    for (std::size_t t = 0; t < grad_currents.size(); ++t) {
      input.weight.grad.noalias() += grad_currents[t] * trace.inputs[t].transpose();
      input.bias.grad.col(0) += grad_currents[t].rowwise().sum();
    }
    return recurrent.backward(trace.h_prev, grad_currents.front());
  }

  void append_params(nn::ParamList<S>& list, const std::string& prefix) {
    input.append_params(list, prefix + ".input");
    recurrent.append_params(list, prefix + ".recurrent");
  }
};

}  // namespace bvs::snn
