#include <cmath>

#include <gtest/gtest.h>

#include "bvs/snn.hpp"
#include "oracles/spiking.hpp"

using namespace bvs;
using namespace bvs::snn;

namespace {

using M = nn::Mat<double>;

oracle::Matrix to_rows(const M& m) {
  oracle::Matrix out(m.rows(), std::vector<double>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
  return out;
}

std::vector<double> to_vec(const M& m) { return {m.data(), m.data() + m.size()}; }

M random_mat(int rows, int cols, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  M m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

}  // namespace

TEST(Qcfs, WorkedExample) { EXPECT_DOUBLE_EQ(qcfs(3.0, 8.0, 4), 4.0); }

TEST(Qcfs, ClipBounds) {
  for (double x : {-0.5 * 8.0 / 4.0 - 1e-9, -1.0, -100.0}) EXPECT_EQ(qcfs(x, 8.0, 4), 0.0);
  for (double x : {8.0, 9.5, 1e6}) EXPECT_EQ(qcfs(x, 8.0, 4), 8.0);
}

TEST(Qcfs, OutputsAreQuantizedLevels) {
  Rng rng = make_rng(1);
  std::uniform_real_distribution<double> u(-3.0, 12.0);
  for (int k = 0; k < 1000; ++k) {
    const double y = qcfs(u(rng), 8.0, 4);
    const double m = y * 4 / 8.0;
    EXPECT_EQ(m, std::round(m));
    EXPECT_GE(y, 0.0);
    EXPECT_LE(y, 8.0);
  }
}

TEST(IfStep, HalfThresholdDriveSpikesEveryOtherStep) {
  IfLayer<double> layer(1, 1, IfParams{});
  layer.linear.weight.value(0, 0) = 0.5;
  layer.linear.bias.value(0, 0) = 0.0;
  layer.reset(1);
  const M x = M::Ones(1, 1);
  std::vector<double> out;
  for (int t = 0; t < 4; ++t) out.push_back(layer.step(x)(0, 0));
  EXPECT_EQ(out, (std::vector<double>{1.0, 0.0, 1.0, 0.0}));
}

TEST(IfStep, ZeroInputNeverSpikes) {
  IfLayer<double> layer(3, 5, IfParams{});
  layer.reset(1);
  for (int t = 0; t < 100; ++t) EXPECT_TRUE(layer.step(M::Zero(3, 1)).isZero());
}

TEST(IfStep, NonFiniteInputIsRejected) {
  IfLayer<double> layer(2, 2, IfParams{});
  M x(2, 1);
  x << 1.0, std::nan("");
  EXPECT_THROW(layer.step(x), Error);
}

TEST(Conversion, SingleLayerRateEqualsQcfsExactly) {
  Rng rng = make_rng(2);
  std::uniform_real_distribution<double> lam(0.5, 10.0);
  for (int inst = 0; inst < 1000; ++inst) {
    IfParams p;
    p.lambda = lam(rng);
    const int in = 6, out = 8;
    IfLayer<double> layer(in, out, p);
    layer.linear.weight.value = random_mat(out, in, rng, -1.5, 1.5) * p.lambda;
    layer.linear.bias.value = random_mat(out, 1, rng, -0.5, 0.5) * p.lambda;
    const M x = random_mat(in, 1, rng, 0.0, 1.0);
    const auto spikes = layer.forward(std::vector<M>(p.time_steps, x), SpikeMode::Heaviside, nullptr);
    const M pre = layer.linear.forward(x);
    for (int i = 0; i < out; ++i) {
      double sum = 0.0;
      for (const auto& s : spikes) {
        ASSERT_TRUE(s(i, 0) == 0.0 || s(i, 0) == p.lambda);
        sum += s(i, 0);
      }
      ASSERT_DOUBLE_EQ(sum / p.time_steps, qcfs(pre(i, 0), p.lambda, p.time_steps)) << inst << " " << i;
    }
  }
}

TEST(Conversion, TwoLayerDeviationBounded) {
  Rng rng = make_rng(3);
  double total = 0.0;
  long count = 0;
  const IfParams p{8.0, 1.0, 0.5, 4};
  for (int inst = 0; inst < 200; ++inst) {
    IfLayer<double> a(16, 16, p), b(16, 16, p);
    a.linear.weight.value = random_mat(16, 16, rng, -0.5, 0.5) * p.lambda;
    a.linear.bias.value = random_mat(16, 1, rng, -0.2, 0.2) * p.lambda;
    b.linear.weight.value = random_mat(16, 16, rng, -0.5, 0.5);
    b.linear.bias.value = random_mat(16, 1, rng, -0.2, 0.2) * p.lambda;
    const M x = random_mat(16, 1, rng, 0.0, 1.0);
    const auto s1 = a.forward(std::vector<M>(4, x), SpikeMode::Heaviside, nullptr);
    const auto s2 = b.forward(s1, SpikeMode::Heaviside, nullptr);
    const M rate = PopulationReadout<double>::average(s2);
    M h = a.linear.forward(x);
    for (Eigen::Index i = 0; i < h.size(); ++i) h(i) = qcfs(h(i), p.lambda, 4);
    M y = b.linear.forward(h);
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      total += std::abs(rate(i) - qcfs(y(i), p.lambda, 4));
      ++count;
    }
  }
  EXPECT_LE(total / count, p.lambda / p.time_steps);
}

TEST(Rnn, MatchesStraightLineReference) {
  Rng rng = make_rng(4);
  const IfParams p{};
  SpikingRnn<double> cell(10, 64, p);
  cell.init(rng);
  // Larger weights so that a good share of neurons fire.
  cell.input.weight.value *= 3.0;
  cell.recurrent.weight.value *= 3.0;
  M h = M::Zero(64, 1);
  long spikes = 0;
  for (int fix = 0; fix < 5; ++fix) {
    std::vector<M> inputs;
    std::vector<std::vector<double>> raw;
    for (int t = 0; t < 4; ++t) {
      inputs.push_back(random_mat(10, 1, rng, -1.0, 1.0));
      raw.push_back(to_vec(inputs.back()));
    }
    const auto got = cell.fixation(inputs, h);
    const auto ref = oracle::rnn_fixation(to_rows(cell.input.weight.value), to_vec(cell.input.bias.value),
                                          to_rows(cell.recurrent.weight.value),
                                          to_vec(cell.recurrent.bias.value), raw, to_vec(h), p.lambda,
                                          p.threshold, p.v_init);
    for (int t = 0; t < 4; ++t) {
      EXPECT_EQ(to_vec(got.spikes[t]), ref.spikes[t]) << "fixation " << fix << " step " << t;
      spikes += static_cast<long>(got.spikes[t].sum());
    }
    EXPECT_EQ(to_vec(got.h_next), ref.h_next);
    h = got.h_next;
  }
  EXPECT_GT(spikes, 0);
}

TEST(Rnn, ZeroEverythingGivesSilence) {
  SpikingRnn<double> cell(5, 64, IfParams{});
  const auto out = cell.fixation(std::vector<M>(4, M::Zero(5, 1)), M::Zero(64, 1));
  for (const auto& s : out.spikes) EXPECT_TRUE(s.isZero());
  EXPECT_TRUE(out.h_next.isZero());
}

TEST(Rnn, HiddenStateEntersOnlyAtFirstStep) {
  Rng rng = make_rng(5);
  SpikingRnn<double> cell(4, 16, IfParams{});
  cell.init(rng);
  cell.recurrent.weight.value *= 4.0;
  const std::vector<M> inputs(4, random_mat(4, 1, rng, -1, 1));
  SpikingRnn<double>::FixationTrace ta, tb;
  const M h0 = M::Zero(16, 1), h1 = random_mat(16, 1, rng, 0.0, 1.0).unaryExpr([](double v) { return v > 0.5 ? 1.0 : 0.0; });
  cell.fixation(inputs, h0, SpikeMode::Heaviside, &ta);
  cell.fixation(inputs, h1, SpikeMode::Heaviside, &tb);
  // Membrane difference appears at step 1 and then only propagates through
  // the neuron's own state, never through a second recurrent injection.
  const M d0 = tb.neuron.potential[0] - ta.neuron.potential[0];
  EXPECT_TRUE(d0.isApprox(cell.recurrent.weight.value * h1 - cell.recurrent.weight.value * h0, 1e-12));
  auto after_reset = [](const M& u) { return M(u.unaryExpr([](double v) { return v >= 1.0 ? v - 1.0 : v; })); };
  for (int t = 1; t < 4; ++t) {
    const M expect = after_reset(tb.neuron.potential[t - 1]) - after_reset(ta.neuron.potential[t - 1]);
    const M got = tb.neuron.potential[t] - ta.neuron.potential[t];
    EXPECT_LT((got - expect).cwiseAbs().maxCoeff(), 1e-12) << t;
  }
}

TEST(Rnn, ResetsAreExplicit) {
  Rng rng = make_rng(6);
  SpikingRnn<double> cell(4, 32, IfParams{});
  cell.init(rng);
  const std::vector<M> inputs(4, random_mat(4, 1, rng, -1, 1));
  const M h = random_mat(32, 1, rng, 0, 1).unaryExpr([](double v) { return v > 0.5 ? 1.0 : 0.0; });
  const auto a = cell.fixation(inputs, h);
  const auto b = cell.fixation(inputs, h);
  for (int t = 0; t < 4; ++t) EXPECT_EQ(a.spikes[t], b.spikes[t]);
  for (const auto& s : a.spikes)
    for (Eigen::Index i = 0; i < s.size(); ++i) EXPECT_TRUE(s(i) == 0.0 || s(i) == 1.0);
}

TEST(Surrogate, PeakAndTails) {
  EXPECT_EQ(atan_surrogate_grad(0.0), 1.0);
  EXPECT_LT(atan_surrogate_grad(1e6), 1e-12);
  EXPECT_LT(atan_surrogate_grad(-1e6), 1e-12);
  EXPECT_NEAR(atan_surrogate(0.0), 0.5, 1e-15);
}

TEST(Surrogate, DerivativeOfAntiderivative) {
  const double h = 1e-5, u = 0.3;
  const double fd = (atan_surrogate(u + h) - atan_surrogate(u - h)) / (2 * h);
  EXPECT_NEAR(fd, atan_surrogate_grad(u), 1e-6);
  EXPECT_NEAR(atan_surrogate_grad(u), 1.0 / (1.0 + std::pow(kPi * u, 2)), 1e-15);
}

TEST(Surrogate, SmoothModeBackwardMatchesFiniteDifference) {
  Rng rng = make_rng(7);
  IfLayer<double> layer(3, 4, IfParams{});
  layer.linear.init(rng);
  const std::vector<M> inputs = {random_mat(3, 2, rng, -1, 1), random_mat(3, 2, rng, -1, 1),
                                 random_mat(3, 2, rng, -1, 1), random_mat(3, 2, rng, -1, 1)};
  auto loss = [&](IfLayer<double>& l) {
    const auto out = l.forward(inputs, SpikeMode::Smooth, nullptr);
    double s = 0;
    for (std::size_t t = 0; t < out.size(); ++t) s += (t + 1.0) * out[t].sum();
    return s;
  };
  IfLayer<double>::Trace trace;
  const auto out = layer.forward(inputs, SpikeMode::Smooth, &trace);
  std::vector<M> grad_out;
  for (std::size_t t = 0; t < out.size(); ++t) grad_out.push_back(M::Constant(4, 2, t + 1.0));
  layer.linear.weight.zero_grad();
  layer.backward(trace, grad_out, false);
  const double eps = 1e-6;
  for (Eigen::Index i = 0; i < layer.linear.weight.value.size(); ++i) {
    IfLayer<double> plus = layer, minus = layer;
    plus.linear.weight.value.data()[i] += eps;
    minus.linear.weight.value.data()[i] -= eps;
    const double fd = (loss(plus) - loss(minus)) / (2 * eps);
    EXPECT_NEAR(layer.linear.weight.grad.data()[i], fd, 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST(Readout, SilenceDecodesToBias) {
  Rng rng = make_rng(8);
  PopulationReadout<double> r(10, 5);
  r.linear.init(rng);
  EXPECT_TRUE(r.decode(std::vector<M>(4, M::Zero(10, 1))).isApprox(r.linear.bias.value));
}

TEST(Readout, DoublingRatesDoublesResponse) {
  Rng rng = make_rng(9);
  PopulationReadout<double> r(10, 5);
  r.linear.init(rng);
  std::vector<M> s;
  for (int t = 0; t < 4; ++t)
    s.push_back(random_mat(10, 1, rng, 0, 1).unaryExpr([](double v) { return v > 0.7 ? 1.0 : 0.0; }));
  std::vector<M> s2 = s;
  for (auto& m : s2) m *= 2.0;
  const M b = r.linear.bias.value;
  EXPECT_TRUE((r.decode(s2) - b).isApprox(2.0 * (r.decode(s) - b), 1e-12));
}

TEST(Readout, MatchesMatrixProduct) {
  Rng rng = make_rng(10);
  PopulationReadout<double> r(12, 5);
  r.linear.init(rng);
  std::vector<M> s;
  std::vector<double> mean(12, 0.0);
  for (int t = 0; t < 4; ++t) {
    s.push_back(random_mat(12, 1, rng, 0, 1).unaryExpr([](double v) { return v > 0.5 ? 1.0 : 0.0; }));
    for (int i = 0; i < 12; ++i) mean[i] += s.back()(i) / 4.0;
  }
  const auto ref = oracle::affine(to_rows(r.linear.weight.value), to_vec(r.linear.bias.value), mean);
  const M got = r.decode(s);
  for (int k = 0; k < 5; ++k) EXPECT_NEAR(got(k), ref[k], 1e-12);
}
