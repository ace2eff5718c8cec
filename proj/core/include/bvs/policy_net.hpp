#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "bvs/nn.hpp"
#include "bvs/snn.hpp"

namespace bvs {

/// Normalized action in [-1, 1]^2 <-> image-centered degrees. The unit
/// square maps onto pixels [0, 650] of the 651 px field, so its edge lies
/// half a pixel inside the square enclosing the search disk.
struct ActionScale {
  double half_range_px = 325.0;
  double pixels_per_degree = 43.4;

  double degrees_per_unit() const { return half_range_px / pixels_per_degree; }
  Vec2 to_degrees(double ax, double ay) const { return {ax * degrees_per_unit(), ay * degrees_per_unit()}; }
  Vec2 to_unit(Vec2 deg) const { return {deg.x / degrees_per_unit(), deg.y / degrees_per_unit()}; }
};

double softplus(double x);
double sigmoid(double x);
/// log(1 - tanh(u)^2), stable for large |u|.
double log_one_minus_tanh_sq(double u);

/// Five decoded values per column: (mean_x, mean_y, chol11_raw, chol21,
/// chol22_raw). The Cholesky diagonal is softplus(raw) + 1e-5, so the
/// covariance is positive definite by construction.
template <typename S>
struct GaussianHead {
  static constexpr double kDiagFloor = 1e-5;

  struct Sample {
    nn::Mat<S> action;    // 2 x B, tanh-squashed
    nn::Mat<S> pre_tanh;  // 2 x B
    nn::Vec<S> log_prob;  // B
  };

  /// u = mean + L eps, a = tanh(u). eps is 2 x B and is kept fixed by the
  /// caller for reparameterized gradients (zero eps = deterministic mode).
  static Sample sample(const nn::Mat<S>& raw, const nn::Mat<S>& eps) {
    const Eigen::Index b = raw.cols();
    Sample out{nn::Mat<S>(2, b), nn::Mat<S>(2, b), nn::Vec<S>(b)};
    for (Eigen::Index j = 0; j < b; ++j) {
      const double l11 = softplus(raw(2, j)) + kDiagFloor;
      const double l21 = raw(3, j);
      const double l22 = softplus(raw(4, j)) + kDiagFloor;
      const double e1 = eps(0, j), e2 = eps(1, j);
      const double u1 = raw(0, j) + l11 * e1;
      const double u2 = raw(1, j) + l21 * e1 + l22 * e2;
      out.pre_tanh(0, j) = static_cast<S>(u1);
      out.pre_tanh(1, j) = static_cast<S>(u2);
      out.action(0, j) = static_cast<S>(std::tanh(u1));
      out.action(1, j) = static_cast<S>(std::tanh(u2));
      out.log_prob(j) = static_cast<S>(-0.5 * (e1 * e1 + e2 * e2) - std::log(l11) - std::log(l22) -
                                       std::log(2.0 * kPi) - log_one_minus_tanh_sq(u1) -
                                       log_one_minus_tanh_sq(u2));
    }
    return out;
  }

  /// Gradient of a loss with respect to `raw`, given dL/d(action) (2 x B)
  /// and dL/d(log_prob) (B), holding eps fixed.
  static nn::Mat<S> backward(const nn::Mat<S>& raw, const nn::Mat<S>& eps, const Sample& s,
                             const nn::Mat<S>& grad_action, const nn::Vec<S>& grad_log_prob) {
    nn::Mat<S> g(5, raw.cols());
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
      const double gl = grad_log_prob(j);
      double gu[2];
      for (int d = 0; d < 2; ++d) {
        const double a = s.action(d, j);
        // d/du of -log(1 - tanh^2 u) is 2 tanh u
        gu[d] = grad_action(d, j) * (1.0 - a * a) + gl * 2.0 * a;
      }
      const double l11 = softplus(raw(2, j)) + kDiagFloor;
      const double l22 = softplus(raw(4, j)) + kDiagFloor;
      const double e1 = eps(0, j), e2 = eps(1, j);
      const double g11 = gu[0] * e1 - gl / l11;
      const double g21 = gu[1] * e1;
      const double g22 = gu[1] * e2 - gl / l22;
      g(0, j) = static_cast<S>(gu[0]);
      g(1, j) = static_cast<S>(gu[1]);
      g(2, j) = static_cast<S>(g11 * sigmoid(raw(2, j)));
      g(3, j) = static_cast<S>(g21);
      g(4, j) = static_cast<S>(g22 * sigmoid(raw(4, j)));
    }
    return g;
  }
};

struct ActorShape {
  int input = 64;
  int hidden = 480;
  snn::IfParams neuron{};  // lambda 1, threshold 1, v_init 0.5, T = 4
};

/// Spiking actor: two fully connected IF layers followed by a linear
/// population readout of the time-averaged spikes into 5 values.
template <typename S>
class SpikingActor {
 public:
  SpikingActor() = default;
  explicit SpikingActor(const ActorShape& shape)
      : shape_(shape),
        layer1(shape.input, shape.hidden, shape.neuron),
        layer2(shape.hidden, shape.hidden, shape.neuron),
        readout(shape.hidden, 5) {}

  snn::IfLayer<S> layer1;
  snn::IfLayer<S> layer2;
  snn::PopulationReadout<S> readout;

  const ActorShape& shape() const { return shape_; }

  void init(Rng& rng) {
    layer1.linear.init(rng);
    layer2.linear.init(rng);
    readout.linear.init(rng);
  }

  struct Trace {
    typename snn::IfLayer<S>::Trace l1, l2;
    std::vector<nn::Mat<S>> s1, s2;
  };

  /// `inputs`: one (input x B) matrix per time step, e.g. the RNN spikes.
  nn::Mat<S> forward(const std::vector<nn::Mat<S>>& inputs, snn::SpikeMode mode = snn::SpikeMode::Heaviside,
                     Trace* trace = nullptr) {
    auto s1 = layer1.forward(inputs, mode, trace ? &trace->l1 : nullptr);
    auto s2 = layer2.forward(s1, mode, trace ? &trace->l2 : nullptr);
    nn::Mat<S> raw = readout.decode(s2);
    if (trace) {
      trace->s1 = std::move(s1);
      trace->s2 = std::move(s2);
    }
    return raw;
  }

  /// Accumulates parameter gradients. Returns dL/d(inputs) if requested.
  std::vector<nn::Mat<S>> backward(const Trace& trace, const nn::Mat<S>& grad_raw, bool need_input_grad) {
    auto g2 = readout.backward(trace.s2, grad_raw);
    auto g1 = layer2.backward(trace.l2, g2, true);
    return layer1.backward(trace.l1, g1, need_input_grad);
  }

  void append_params(nn::ParamList<S>& list, const std::string& prefix) {
    layer1.append_params(list, prefix + ".layer1");
    layer2.append_params(list, prefix + ".layer2");
    readout.append_params(list, prefix + ".readout");
  }

  void set_counting(bool enabled) {
    layer1.counter.enabled = enabled;
    layer2.counter.enabled = enabled;
  }

 private:
  ActorShape shape_;
};

}  // namespace bvs

namespace bvs {

/// Memory RNN plus actor: everything a trained searcher needs at run time.
struct PolicyNetworks {
  snn::SpikingRnn<float> rnn;
  SpikingActor<float> actor;

  static PolicyNetworks make(int rnn_input, const ActorShape& shape, Rng& rng);
  nn::ParamList<float> params();
  void save(const std::filesystem::path& dir) const;
  static PolicyNetworks load(const std::filesystem::path& dir);
};

/// Checkpoint helpers: each parameter becomes `<name>.bvst` inside `dir`,
/// listed with its shape in `manifest.json` together with the neuron
/// parameters of every spiking population.
void save_params(const std::filesystem::path& dir, const nn::ParamList<float>& params,
                 const nlohmann::json& extra);
nlohmann::json load_params(const std::filesystem::path& dir, const nn::ParamList<float>& params);

}  // namespace bvs
