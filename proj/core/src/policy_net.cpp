#include "bvs/policy_net.hpp"

#include <cmath>

namespace bvs {

double softplus(double x) { return x > 20.0 ? x : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_one_minus_tanh_sq(double u) {
  // 1 - tanh^2 u = 4 e^{-2|u|} / (1 + e^{-2|u|})^2
  const double a = std::abs(u);
  return std::log(4.0) - 2.0 * a - 2.0 * std::log1p(std::exp(-2.0 * a));
}

}  // namespace bvs

#include <fstream>

#include "bvs/tensor_io.hpp"

namespace bvs {

namespace {

nlohmann::json neuron_json(const snn::IfParams& p) {
  return {{"lambda", p.lambda}, {"threshold", p.threshold}, {"v_init", p.v_init}, {"time_steps", p.time_steps}};
}

snn::IfParams neuron_from_json(const nlohmann::json& j) {
  snn::IfParams p;
  p.lambda = j.at("lambda").get<double>();
  p.threshold = j.at("threshold").get<double>();
  p.v_init = j.at("v_init").get<double>();
  p.time_steps = j.at("time_steps").get<int>();
  return p;
}

}  // namespace

void save_params(const std::filesystem::path& dir, const nn::ParamList<float>& params,
                 const nlohmann::json& extra) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest = extra;
  manifest["format"] = "bvst";
  auto& layers = manifest["tensors"] = nlohmann::json::array();
  for (const auto& p : params) {
    const auto& m = p.param->value;
    Tensor t;
    t.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
    t.data.resize(static_cast<std::size_t>(m.size()));
    // Row-major on disk.
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) t.data[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
    write_bvst(dir / (p.name + ".bvst"), t);
    layers.push_back({{"name", p.name}, {"shape", {m.rows(), m.cols()}}, {"file", p.name + ".bvst"}});
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw FormatError("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

nlohmann::json load_params(const std::filesystem::path& dir, const nn::ParamList<float>& params) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw FormatError("missing manifest.json in " + dir.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad manifest: ") + e.what());
  }
  for (const auto& p : params) {
    const Tensor t = read_bvst(dir / (p.name + ".bvst"));
    auto& m = p.param->value;
    if (t.dims.size() != 2 || t.dims[0] != m.rows() || t.dims[1] != m.cols())
      throw FormatError("checkpoint tensor " + p.name + " has the wrong shape");
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = t.data[static_cast<std::size_t>(r * m.cols() + c)];
  }
  return manifest;
}

PolicyNetworks PolicyNetworks::make(int rnn_input, const ActorShape& shape, Rng& rng) {
  PolicyNetworks n;
  n.rnn = snn::SpikingRnn<float>(rnn_input, shape.input, shape.neuron);
  n.rnn.init(rng);
  n.actor = SpikingActor<float>(shape);
  n.actor.init(rng);
  return n;
}

nn::ParamList<float> PolicyNetworks::params() {
  nn::ParamList<float> list;
  rnn.append_params(list, "rnn");
  actor.append_params(list, "actor");
  return list;
}

void PolicyNetworks::save(const std::filesystem::path& dir) const {
  auto& self = const_cast<PolicyNetworks&>(*this);
  nlohmann::json extra;
  extra["rnn_input"] = rnn.input.in_features();
  extra["rnn_hidden"] = rnn.hidden_size();
  extra["actor_hidden"] = actor.shape().hidden;
  extra["neurons"] = {{"rnn", neuron_json(rnn.params)},
                      {"actor.layer1", neuron_json(actor.layer1.params)},
                      {"actor.layer2", neuron_json(actor.layer2.params)}};
  save_params(dir, self.params(), extra);
}

PolicyNetworks PolicyNetworks::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw FormatError("missing manifest.json in " + dir.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
    ActorShape shape;
    shape.input = manifest.at("rnn_hidden").get<int>();
    shape.hidden = manifest.at("actor_hidden").get<int>();
    shape.neuron = neuron_from_json(manifest.at("neurons").at("actor.layer1"));
    Rng rng(0);
    PolicyNetworks n = make(manifest.at("rnn_input").get<int>(), shape, rng);
    n.rnn.params = neuron_from_json(manifest.at("neurons").at("rnn"));
    load_params(dir, n.params());
    return n;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad manifest: ") + e.what());
  }
}

}  // namespace bvs
