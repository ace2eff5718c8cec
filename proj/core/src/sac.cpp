#include "bvs/sac.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

namespace bvs {

using nn::Mat;

SacConfig SacConfig::hp(int group) {
  if (group != 1 && group != 2) throw ConfigError("hyperparameter group must be 1 or 2");
  SacConfig c;
  c.entropy_target = group == 1 ? -1.0 : -2.0;
  return c;
}

void SacConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("sac: gamma must lie in (0, 1)");
  if (!(initial_alpha > 0.0)) throw ConfigError("sac: initial alpha must be positive");
  if (replay_capacity == 0 || batch_trials < 1 || max_transitions < 0) throw ConfigError("sac: bad batch sizes");
  if (!(lr_actor > 0.0 && lr_alpha > 0.0 && lr_critic > 0.0 && lr_rnn > 0.0))
    throw ConfigError("sac: learning rates must be positive");
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("sac: tau must lie in (0, 1]");
  if (!(grad_clip > 0.0)) throw ConfigError("sac: gradient clip must be positive");
  if (warmup_trials < 1 || updates_per_fixation < 0 || max_trials < 1 || train_max_fixations < 2)
    throw ConfigError("sac: bad trial counts");
  if (rnn_hidden < 1 || actor_hidden < 1 || critic_hidden < 1 || time_steps < 1)
    throw ConfigError("sac: network sizes must be positive");
}

// ---------------------------------------------------------------------------
// Batching

template <typename S>
SequenceBatch<S> make_sequence_batch(const std::vector<const Episode*>& episodes, const ActionScale& scale,
                                     double detection_threshold_deg) {
  SequenceBatch<S> batch;
  batch.trials = static_cast<int>(episodes.size());
  for (const auto* e : episodes) batch.length = std::max(batch.length, static_cast<int>(e->steps.size()));
  batch.rnn_inputs.assign(static_cast<std::size_t>(batch.length), Mat<S>::Zero(2, batch.trials));
  for (int b = 0; b < batch.trials; ++b) {
    const auto& steps = episodes[static_cast<std::size_t>(b)]->steps;
    const int n = static_cast<int>(steps.size());
    for (int f = 0; f < n; ++f) {
      const Vec2 p = steps[static_cast<std::size_t>(f)].observation.fix_loc_pred_deg;
      batch.rnn_inputs[static_cast<std::size_t>(f)](0, b) = static_cast<S>(p.x / kFieldRadiusDeg);
      batch.rnn_inputs[static_cast<std::size_t>(f)](1, b) = static_cast<S>(p.y / kFieldRadiusDeg);
    }
    for (int t = 0; t + 1 < n; ++t) {
      const auto& s = steps[static_cast<std::size_t>(t)];
      const auto& next = steps[static_cast<std::size_t>(t + 1)];
      TransitionRef tr;
      tr.episode = b;
      tr.step = t;
      tr.detection = s.detection_branch;
      tr.next_detection = next.observation.err_est_deg < detection_threshold_deg;
      tr.done = (t + 2 == n) && episodes[static_cast<std::size_t>(b)]->terminated;
      tr.reward = s.reward;
      tr.action = {s.action.x(), s.action.y()};
      tr.target_pred = scale.to_unit(s.observation.target_abs_pred_deg());
      tr.next_target_pred = scale.to_unit(next.observation.target_abs_pred_deg());
      batch.transitions.push_back(tr);
    }
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Networks

template <typename S>
SacNets<S> SacNets<S>::make(const SacConfig& config, Rng& rng) {
  config.validate();
  snn::IfParams neuron;
  neuron.time_steps = config.time_steps;
  SacNets n;
  n.rnn = snn::SpikingRnn<S>(2, config.rnn_hidden, neuron);
  n.rnn.init(rng);
  n.rnn_target = n.rnn;
  n.actor = SpikingActor<S>(ActorShape{config.rnn_hidden, config.actor_hidden, neuron});
  n.actor.init(rng);
  n.q1 = Critic<S>(config.rnn_hidden, config.critic_hidden);
  n.q2 = Critic<S>(config.rnn_hidden, config.critic_hidden);
  n.q1.init(rng);
  n.q2.init(rng);
  n.q1_target = n.q1;
  n.q2_target = n.q2;
  n.log_alpha.value(0, 0) = static_cast<S>(std::log(config.initial_alpha));
  return n;
}

template <typename S>
nn::ParamList<S> SacNets<S>::critic_params() {
  nn::ParamList<S> l;
  q1.append_params(l, "q1");
  q2.append_params(l, "q2");
  return l;
}

template <typename S>
nn::ParamList<S> SacNets<S>::critic_target_params() {
  nn::ParamList<S> l;
  q1_target.append_params(l, "q1_target");
  q2_target.append_params(l, "q2_target");
  return l;
}

template <typename S>
nn::ParamList<S> SacNets<S>::rnn_params() {
  nn::ParamList<S> l;
  rnn.append_params(l, "rnn");
  return l;
}

template <typename S>
nn::ParamList<S> SacNets<S>::rnn_target_params() {
  nn::ParamList<S> l;
  rnn_target.append_params(l, "rnn_target");
  return l;
}

template <typename S>
nn::ParamList<S> SacNets<S>::actor_params() {
  nn::ParamList<S> l;
  actor.append_params(l, "actor");
  return l;
}

// ---------------------------------------------------------------------------
// Memory unrolling

template <typename S>
Unroll<S> unroll_rnn(snn::SpikingRnn<S>& rnn, const std::vector<Mat<S>>& inputs, snn::SpikeMode mode,
                     bool keep_traces) {
  Unroll<S> u;
  if (inputs.empty()) return u;
  const auto steps = static_cast<std::size_t>(rnn.params.time_steps);
  Mat<S> h = Mat<S>::Zero(rnn.hidden_size(), inputs[0].cols());
  if (keep_traces) u.traces.resize(inputs.size());
  for (std::size_t f = 0; f < inputs.size(); ++f) {
    const std::vector<Mat<S>> x(steps, inputs[f]);
    auto out = rnn.fixation(x, h, mode, keep_traces ? &u.traces[f] : nullptr);
    h = out.h_next;
    u.mean.push_back(snn::PopulationReadout<S>::average(out.spikes));
    u.spikes.push_back(std::move(out.spikes));
  }
  return u;
}

template <typename S>
SpikeGrads<S> zero_spike_grads(const Unroll<S>& unroll) {
  SpikeGrads<S> g(unroll.spikes.size());
  for (std::size_t f = 0; f < g.size(); ++f)
    for (const auto& s : unroll.spikes[f]) g[f].push_back(Mat<S>::Zero(s.rows(), s.cols()));
  return g;
}

template <typename S>
void rnn_backward(snn::SpikingRnn<S>& rnn, const Unroll<S>& unroll, SpikeGrads<S> grads) {
  if (unroll.traces.size() != unroll.spikes.size()) throw Error("rnn_backward: unroll was run without traces");
  Mat<S> grad_h;
  for (std::size_t f = grads.size(); f-- > 0;) {
    if (grad_h.size() > 0) grads[f].back() += grad_h;
    grad_h = rnn.fixation_backward(unroll.traces[f], grads[f]);
  }
}

namespace {

template <typename S>
void add_mean_grad(SpikeGrads<S>& grads, int f, int b, const Eigen::Ref<const Mat<S>>& g) {
  auto& steps = grads[static_cast<std::size_t>(f)];
  const S inv = S(1) / static_cast<S>(steps.size());
  for (auto& s : steps) s.col(b) += inv * g;
}

/// [memory mean at (f, b); action] columns for the search head.
template <typename S>
Mat<S> search_input(const std::vector<Mat<S>>& mean, const std::vector<std::pair<int, int>>& at,
                    const Mat<S>& action) {
  const Eigen::Index h = mean.empty() ? 0 : mean[0].rows();
  Mat<S> x(h + 2, static_cast<Eigen::Index>(at.size()));
  for (std::size_t j = 0; j < at.size(); ++j) {
    x.col(static_cast<Eigen::Index>(j)).head(h) = mean[static_cast<std::size_t>(at[j].first)].col(at[j].second);
    x.col(static_cast<Eigen::Index>(j)).tail(2) = action.col(static_cast<Eigen::Index>(j));
  }
  return x;
}

/// Actor inputs (one matrix per step) gathered from the memory spikes.
template <typename S>
std::vector<Mat<S>> gather_spikes(const Unroll<S>& u, const std::vector<std::pair<int, int>>& at) {
  if (at.empty() || u.spikes.empty()) return {};
  const std::size_t steps = u.spikes[0].size();
  const Eigen::Index h = u.spikes[0][0].rows();
  std::vector<Mat<S>> out(steps, Mat<S>(h, static_cast<Eigen::Index>(at.size())));
  for (std::size_t k = 0; k < steps; ++k)
    for (std::size_t j = 0; j < at.size(); ++j)
      out[k].col(static_cast<Eigen::Index>(j)) =
          u.spikes[static_cast<std::size_t>(at[j].first)][k].col(at[j].second);
  return out;
}

template <typename S>
Mat<S> to_mat(const Eigen::MatrixXd& m) {
  return m.cast<S>();
}

}  // namespace

std::vector<std::pair<int, int>> actor_states(const std::vector<TransitionRef>& transitions) {
  std::vector<std::pair<int, int>> s;
  for (const auto& t : transitions)
    if (!t.detection) s.emplace_back(t.step, t.episode);
  return s;
}

// ---------------------------------------------------------------------------
// Losses

template <typename S>
double critic_loss(SacNets<S>& nets, const SequenceBatch<S>& batch, const UpdateNoise& noise, double alpha,
                   const LossOptions& opt, bool accumulate) {
  const auto& trs = batch.transitions;
  const auto n = static_cast<Eigen::Index>(trs.size());
  if (n == 0) return 0.0;
  Unroll<S> online = unroll_rnn(nets.rnn, batch.rnn_inputs, opt.mode, accumulate);
  const Unroll<S> target = unroll_rnn(nets.rnn_target, batch.rnn_inputs, opt.mode, false);

  // --- TD targets
  std::vector<double> y(static_cast<std::size_t>(n));
  std::vector<std::pair<int, int>> next_search;
  std::vector<Eigen::Index> next_search_idx, next_det_idx;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& t = trs[static_cast<std::size_t>(i)];
    y[static_cast<std::size_t>(i)] = t.reward;
    if (t.done) continue;
    if (t.next_detection) {
      next_det_idx.push_back(i);
    } else {
      next_search.emplace_back(t.step + 1, t.episode);
      next_search_idx.push_back(i);
    }
  }
  if (!next_search.empty()) {
    const auto inputs = gather_spikes(online, next_search);
    const Mat<S> raw = nets.actor.forward(inputs, opt.mode, nullptr);
    Mat<S> eps(2, raw.cols());
    for (Eigen::Index j = 0; j < raw.cols(); ++j) eps.col(j) = noise.next_eps.col(next_search_idx[j]).cast<S>();
    const auto smp = GaussianHead<S>::sample(raw, eps);
    const Mat<S> x = search_input(target.mean, next_search, smp.action);
    const Mat<S> q1 = nets.q1_target.search.forward(x);
    const Mat<S> q2 = nets.q2_target.search.forward(x);
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
      const double q = std::min(static_cast<double>(q1(0, j)), static_cast<double>(q2(0, j)));
      y[static_cast<std::size_t>(next_search_idx[j])] += opt.gamma * (q - alpha * static_cast<double>(smp.log_prob(j)));
    }
  }
  if (!next_det_idx.empty()) {
    Mat<S> x(4, static_cast<Eigen::Index>(next_det_idx.size()));
    for (std::size_t j = 0; j < next_det_idx.size(); ++j) {
      const auto& t = trs[static_cast<std::size_t>(next_det_idx[j])];
      const auto col = static_cast<Eigen::Index>(j);
      const double ax = std::clamp(t.next_target_pred.x + opt.detection_sd * noise.next_det(0, next_det_idx[j]), -1.0, 1.0);
      const double ay = std::clamp(t.next_target_pred.y + opt.detection_sd * noise.next_det(1, next_det_idx[j]), -1.0, 1.0);
      x(0, col) = static_cast<S>(t.next_target_pred.x);
      x(1, col) = static_cast<S>(t.next_target_pred.y);
      x(2, col) = static_cast<S>(ax);
      x(3, col) = static_cast<S>(ay);
    }
    const Mat<S> q1 = nets.q1_target.detection.forward(x);
    const Mat<S> q2 = nets.q2_target.detection.forward(x);
    for (std::size_t j = 0; j < next_det_idx.size(); ++j) {
      const double q = std::min(static_cast<double>(q1(0, static_cast<Eigen::Index>(j))),
                                static_cast<double>(q2(0, static_cast<Eigen::Index>(j))));
      y[static_cast<std::size_t>(next_det_idx[j])] += opt.gamma * q;
    }
  }

  // --- current estimates, split by branch
  std::vector<std::pair<int, int>> search_at;
  std::vector<Eigen::Index> search_idx, det_idx;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& t = trs[static_cast<std::size_t>(i)];
    if (t.detection) {
      det_idx.push_back(i);
    } else {
      search_idx.push_back(i);
      search_at.emplace_back(t.step, t.episode);
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  SpikeGrads<S> grads;
  if (accumulate) grads = zero_spike_grads(online);

  auto run_head = [&](Mlp<S>& h1, Mlp<S>& h2, const Mat<S>& x, const std::vector<Eigen::Index>& idx,
                      bool memory_input) {
    typename Mlp<S>::Cache c1, c2;
    const Mat<S> q1 = h1.forward(x, accumulate ? &c1 : nullptr);
    const Mat<S> q2 = h2.forward(x, accumulate ? &c2 : nullptr);
    Mat<S> g1(1, x.cols()), g2(1, x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double target_y = y[static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])];
      const double e1 = static_cast<double>(q1(0, j)) - target_y;
      const double e2 = static_cast<double>(q2(0, j)) - target_y;
      loss += 0.5 * (e1 * e1 + e2 * e2) * inv_n;
      g1(0, j) = static_cast<S>(e1 * inv_n);
      g2(0, j) = static_cast<S>(e2 * inv_n);
    }
    if (!accumulate) return;
    const Mat<S> gx = h1.backward(c1, g1) + h2.backward(c2, g2);
    if (!memory_input) return;
    const Eigen::Index hsz = x.rows() - 2;
    for (std::size_t j = 0; j < search_at.size(); ++j)
      add_mean_grad<S>(grads, search_at[j].first, search_at[j].second,
                       gx.col(static_cast<Eigen::Index>(j)).head(hsz));
  };

  if (!search_idx.empty()) {
    Mat<S> act(2, static_cast<Eigen::Index>(search_idx.size()));
    for (std::size_t j = 0; j < search_idx.size(); ++j) {
      const auto& t = trs[static_cast<std::size_t>(search_idx[j])];
      act(0, static_cast<Eigen::Index>(j)) = static_cast<S>(t.action.x);
      act(1, static_cast<Eigen::Index>(j)) = static_cast<S>(t.action.y);
    }
    run_head(nets.q1.search, nets.q2.search, search_input(online.mean, search_at, act), search_idx, true);
  }
  if (!det_idx.empty()) {
    Mat<S> x(4, static_cast<Eigen::Index>(det_idx.size()));
    for (std::size_t j = 0; j < det_idx.size(); ++j) {
      const auto& t = trs[static_cast<std::size_t>(det_idx[j])];
      const auto col = static_cast<Eigen::Index>(j);
      x(0, col) = static_cast<S>(t.target_pred.x);
      x(1, col) = static_cast<S>(t.target_pred.y);
      x(2, col) = static_cast<S>(t.action.x);
      x(3, col) = static_cast<S>(t.action.y);
    }
    run_head(nets.q1.detection, nets.q2.detection, x, det_idx, false);
  }
  if (accumulate) rnn_backward(nets.rnn, online, std::move(grads));
  return loss;
}

template <typename S>
double actor_loss(SacNets<S>& nets, const std::vector<Mat<S>>& rnn_inputs, const std::vector<std::pair<int, int>>& states,
                  const Eigen::MatrixXd& eps, double alpha, snn::SpikeMode mode, bool through_rnn, bool accumulate,
                  double* mean_log_prob) {
  const auto m = static_cast<Eigen::Index>(states.size());
  if (m == 0) {
    if (mean_log_prob) *mean_log_prob = 0.0;
    return 0.0;
  }
  const bool rnn_grad = accumulate && through_rnn;
  Unroll<S> mem = unroll_rnn(nets.rnn, rnn_inputs, mode, rnn_grad);
  const auto inputs = gather_spikes(mem, states);
  typename SpikingActor<S>::Trace trace;
  const Mat<S> raw = nets.actor.forward(inputs, mode, accumulate ? &trace : nullptr);
  const Mat<S> e = eps.leftCols(m).template cast<S>();
  const auto smp = GaussianHead<S>::sample(raw, e);
  const Mat<S> x = search_input(mem.mean, states, smp.action);
  typename Mlp<S>::Cache c1, c2;
  const Mat<S> q1 = nets.q1.search.forward(x, &c1);
  const Mat<S> q2 = nets.q2.search.forward(x, &c2);

  const double inv_m = 1.0 / static_cast<double>(m);
  double loss = 0.0, lp_sum = 0.0;
  Mat<S> g1 = Mat<S>::Zero(1, m), g2 = Mat<S>::Zero(1, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const double a = static_cast<double>(q1(0, j)), b = static_cast<double>(q2(0, j));
    const double lp = static_cast<double>(smp.log_prob(j));
    lp_sum += lp;
    loss += (alpha * lp - std::min(a, b)) * inv_m;
    (a <= b ? g1 : g2)(0, j) = static_cast<S>(-inv_m);
  }
  if (mean_log_prob) *mean_log_prob = lp_sum * inv_m;
  if (!accumulate) return loss;

  const Mat<S> gx = nets.q1.search.input_grad(c1, g1) + nets.q2.search.input_grad(c2, g2);
  const Eigen::Index hsz = x.rows() - 2;
  const Mat<S> grad_action = gx.bottomRows(2);
  const nn::Vec<S> grad_lp = nn::Vec<S>::Constant(m, static_cast<S>(alpha * inv_m));
  const Mat<S> grad_raw = GaussianHead<S>::backward(raw, e, smp, grad_action, grad_lp);
  auto grad_in = nets.actor.backward(trace, grad_raw, rnn_grad);
  if (!rnn_grad) return loss;

  SpikeGrads<S> grads = zero_spike_grads(mem);
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto [f, b] = states[static_cast<std::size_t>(j)];
    for (std::size_t k = 0; k < grad_in.size(); ++k) grads[static_cast<std::size_t>(f)][k].col(b) += grad_in[k].col(j);
    add_mean_grad<S>(grads, f, b, gx.col(j).head(hsz));
  }
  rnn_backward(nets.rnn, mem, std::move(grads));
  return loss;
}

// ---------------------------------------------------------------------------
// Update

SacOptimizers make_optimizers(SacNets<float>& nets, const SacConfig& config) {
  nn::ParamList<float> alpha{{"log_alpha", &nets.log_alpha}};
  return SacOptimizers{nn::Adam<float>(nets.critic_params(), config.lr_critic),
                       nn::Adam<float>(nets.rnn_params(), config.lr_rnn),
                       nn::Adam<float>(nets.actor_params(), config.lr_actor),
                       nn::Adam<float>(alpha, config.lr_alpha)};
}

namespace {

Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

}  // namespace

UpdateStats sac_update(const ReplayBuffer<Episode>& buffer, SacNets<float>& nets, SacOptimizers& opt,
                       const SacConfig& config, Rng& rng, std::uint64_t* skipped_counter) {
  UpdateStats st;
  st.alpha = nets.alpha();
  std::vector<const Episode*> eps;
  for (auto slot : buffer.sample_slots(static_cast<std::size_t>(config.batch_trials), rng))
    eps.push_back(&buffer.at(slot));
  auto batch = make_sequence_batch<float>(eps);
  auto& trs = batch.transitions;
  if (config.max_transitions > 0 && trs.size() > static_cast<std::size_t>(config.max_transitions)) {
    // Partial Fisher-Yates: a uniform subset without replacement.
    for (std::size_t i = 0; i < static_cast<std::size_t>(config.max_transitions); ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, trs.size() - 1);
      std::swap(trs[i], trs[pick(rng)]);
    }
    trs.resize(static_cast<std::size_t>(config.max_transitions));
  }
  const auto n = static_cast<Eigen::Index>(trs.size());
  const auto states = actor_states(trs);
  UpdateNoise noise{normal_matrix(2, n, rng), normal_matrix(2, n, rng),
                    normal_matrix(2, static_cast<Eigen::Index>(states.size()), rng)};
  LossOptions lo;
  lo.gamma = config.gamma;

  auto skip = [&]() {
    st.skipped = true;
    if (skipped_counter) ++*skipped_counter;
    return st;
  };

  // Critic + memory: TD learning with joint clipping.
  auto critic_rnn = nets.critic_params();
  for (auto& p : nets.rnn_params()) critic_rnn.push_back(p);
  nn::zero_grads(critic_rnn);
  st.critic_loss = critic_loss(nets, batch, noise, st.alpha, lo, true);
  if (!std::isfinite(st.critic_loss) || !nn::grads_finite(critic_rnn)) return skip();
  st.grad_norm = nn::clip_grad_norm(critic_rnn, config.grad_clip);
  opt.critic.step();
  opt.rnn.step();

  // Actor through the (updated) critics; memory state held constant.
  if (!states.empty()) {
    auto actor = nets.actor_params();
    nn::zero_grads(actor);
    double mean_lp = 0.0;
    st.actor_loss =
        actor_loss(nets, batch.rnn_inputs, states, noise.actor_eps, st.alpha, lo.mode, false, true, &mean_lp);
    if (!std::isfinite(st.actor_loss) || !nn::grads_finite(actor)) return skip();
    opt.actor.step();
    st.entropy = -mean_lp;
    // d/d(log alpha) of -alpha (log pi + target)
    nets.log_alpha.grad(0, 0) = static_cast<float>(-st.alpha * (mean_lp + config.entropy_target));
    opt.alpha.step();
  }

  nn::polyak_update(nets.critic_target_params(), nets.critic_params(), config.tau);
  nn::polyak_update(nets.rnn_target_params(), nets.rnn_params(), config.tau);
  st.alpha = nets.alpha();
  return st;
}

// ---------------------------------------------------------------------------
// Training loop

void LearnerPolicy::reset() {
  h_ = Mat<float>::Zero(nets_.rnn.hidden_size(), 1);
  spikes_.clear();
}

void LearnerPolicy::observe(const DetectorOutput& out) {
  const std::vector<Mat<float>> x(static_cast<std::size_t>(nets_.rnn.params.time_steps), rnn_input(out));
  auto res = nets_.rnn.fixation(x, h_);
  h_ = std::move(res.h_next);
  spikes_ = std::move(res.spikes);
}

Eigen::Vector2d LearnerPolicy::propose(Rng& rng) {
  if (spikes_.empty()) throw Error("learner policy: propose() before observe()");
  const Mat<float> raw = nets_.actor.forward(spikes_);
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat<float> eps(2, 1);
  eps(0, 0) = static_cast<float>(normal(rng));
  eps(1, 0) = static_cast<float>(normal(rng));
  const auto s = GaussianHead<float>::sample(raw, eps);
  return {s.action(0, 0), s.action(1, 0)};
}

void to_json(nlohmann::json& j, const CurvePoint& c) {
  j = {{"trial", c.trial},         {"return", c.ret},         {"correct", c.correct},
       {"fixations", c.fixations}, {"updates", c.updates},    {"critic_loss", c.critic_loss},
       {"actor_loss", c.actor_loss}, {"alpha", c.alpha},      {"entropy", c.entropy}};
}

PolicyNetworks to_policy(const SacNets<float>& nets) {
  PolicyNetworks p;
  p.rnn = nets.rnn;
  p.actor = nets.actor;
  return p;
}

TrainResult train(const Detector& detector, AgentConfig env, const SacConfig& config, std::uint64_t seed,
                  const CurveCallback& on_trial) {
  config.validate();
  env.max_fixations = config.train_max_fixations;
  Rng rng = make_rng(seed, 7);
  SacNets<float> nets = SacNets<float>::make(config, rng);
  SacOptimizers opt = make_optimizers(nets, config);
  ReplayBuffer<Episode> buffer(config.replay_capacity);
  TrainResult result;

  {
    RandomPolicy random;
    const auto base = run_agent_trials(detector, random, env, config.baseline_trials, mix_seed(seed, 0xBA5E));
    double sum = 0.0;
    for (const auto& t : base) sum += t.total_reward();
    result.random_baseline_return = base.empty() ? 0.0 : sum / static_cast<double>(base.size());
  }

  LearnerPolicy policy(nets);
  std::deque<double> window;
  double window_sum = 0.0;
  int below = 0;
  for (int k = 0; k < config.max_trials; ++k) {
    const std::uint64_t s = mix_seed(seed, static_cast<std::uint64_t>(k));
    Episode ep;
    const TrialRecord rec = run_agent_trial(random_scene(s), detector, policy, env, s, &ep);
    buffer.push(std::move(ep));

    CurvePoint cp;
    cp.trial = k;
    cp.ret = rec.total_reward();
    cp.correct = rec.correct();
    cp.fixations = rec.fixation_count();
    if (static_cast<int>(buffer.size()) >= config.warmup_trials) {
      const int updates = rec.fixation_count() * config.updates_per_fixation;
      int done = 0;
      for (int u = 0; u < updates; ++u) {
        const UpdateStats st = sac_update(buffer, nets, opt, config, rng, &result.skipped_updates);
        if (st.skipped) continue;
        ++done;
        cp.critic_loss += st.critic_loss;
        cp.actor_loss += st.actor_loss;
        cp.entropy += st.entropy;
      }
      if (done > 0) {
        cp.critic_loss /= done;
        cp.actor_loss /= done;
        cp.entropy /= done;
      }
      cp.updates = done;
    }
    cp.alpha = nets.alpha();
    result.curve.push_back(cp);
    if (on_trial) on_trial(cp);

    window.push_back(cp.ret);
    window_sum += cp.ret;
    if (static_cast<int>(window.size()) > config.divergence_window) {
      window_sum -= window.front();
      window.pop_front();
    }
    if (k >= config.divergence_after) {
      const double mean = window_sum / static_cast<double>(window.size());
      below = mean < result.random_baseline_return ? below + 1 : 0;
      if (below >= config.divergence_patience) {
        result.diverged = true;
        result.report = "running mean return " + std::to_string(mean) + " stayed below the random baseline " +
                        std::to_string(result.random_baseline_return) + " for " + std::to_string(below) +
                        " trials (stopped at trial " + std::to_string(k) + ")";
        break;
      }
    }
  }
  result.policy = to_policy(nets);
  return result;
}

// ---------------------------------------------------------------------------

template SequenceBatch<float> make_sequence_batch<float>(const std::vector<const Episode*>&, const ActionScale&, double);
template SequenceBatch<double> make_sequence_batch<double>(const std::vector<const Episode*>&, const ActionScale&, double);
template struct SacNets<float>;
template struct SacNets<double>;
template Unroll<float> unroll_rnn<float>(snn::SpikingRnn<float>&, const std::vector<Mat<float>>&, snn::SpikeMode, bool);
template Unroll<double> unroll_rnn<double>(snn::SpikingRnn<double>&, const std::vector<Mat<double>>&, snn::SpikeMode, bool);
template SpikeGrads<float> zero_spike_grads<float>(const Unroll<float>&);
template SpikeGrads<double> zero_spike_grads<double>(const Unroll<double>&);
template void rnn_backward<float>(snn::SpikingRnn<float>&, const Unroll<float>&, SpikeGrads<float>);
template void rnn_backward<double>(snn::SpikingRnn<double>&, const Unroll<double>&, SpikeGrads<double>);
template double critic_loss<float>(SacNets<float>&, const SequenceBatch<float>&, const UpdateNoise&, double,
                                   const LossOptions&, bool);
template double critic_loss<double>(SacNets<double>&, const SequenceBatch<double>&, const UpdateNoise&, double,
                                    const LossOptions&, bool);
template double actor_loss<float>(SacNets<float>&, const std::vector<Mat<float>>&, const std::vector<std::pair<int, int>>&,
                                  const Eigen::MatrixXd&, double, snn::SpikeMode, bool, bool, double*);
template double actor_loss<double>(SacNets<double>&, const std::vector<Mat<double>>&,
                                   const std::vector<std::pair<int, int>>&, const Eigen::MatrixXd&, double,
                                   snn::SpikeMode, bool, bool, double*);

}  // namespace bvs
