// bvs: command-line front end for the visual-search simulator.

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bvs/agent.hpp"
#include "bvs/config.hpp"
#include "bvs/elm.hpp"
#include "bvs/metrics.hpp"
#include "bvs/retina.hpp"
#include "bvs/sac.hpp"
#include "bvs/service.hpp"
#include "bvs/stimulus.hpp"
#include "bvs/tensor_io.hpp"
#include "bvs/visibility.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bvs;

namespace {

struct Globals {
  std::uint64_t seed = 1;
  std::string config_path;
  std::string data_dir = "data";
  std::vector<std::string> overrides;
  Config config;
};

// Resolved settings: config file, then --set overrides, then explicit flags.
void resolve(Globals& g, CLI::App& app) {
  if (!g.config_path.empty()) g.config = Config::load(g.config_path);
  for (const auto& o : g.overrides) g.config.apply_override(o);
  if (app.count("--seed") || !g.config.contains("seed")) g.config.set("seed", std::to_string(g.seed));
  g.seed = static_cast<std::uint64_t>(g.config.get_int("seed", 1));
  if (app.count("--data-dir") || !g.config.contains("data_dir")) g.config.set("data_dir", g.data_dir);
  g.data_dir = g.config.get_string("data_dir", g.data_dir);
}

void log_config(const Globals& g, const std::string& command, const json& args) {
  json j = {{"command", command}, {"seed", g.seed}, {"config", g.config.to_json()}, {"args", args}};
  std::cerr << "resolved: " << j.dump() << '\n';
}

std::string lower_ext(const fs::path& p) {
  auto e = p.extension().string();
  for (auto& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return e;
}

void write_image(const fs::path& path, const Image& image) {
  const auto ext = lower_ext(path);
  if (ext == ".pgm") {
    write_pgm(path, image);
  } else if (ext == ".png") {
    const auto bytes = encode_png(image);
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("cannot write " + path.string());
  } else {
    write_bvst(path, to_tensor(image));
  }
}

void write_json(const fs::path& path, const json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw FormatError("cannot write " + path.string());
}

VisibilityParams load_map(const std::string& path) {
  if (path.empty()) return reference_visibility();
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open visibility map " + path);
  VisibilityParams p = json::parse(in).get<VisibilityParams>();
  p.validate();
  return p;
}

std::pair<double, double> parse_range(const std::string& s) {
  const auto colon = s.find(':');
  try {
    if (colon == std::string::npos) {
      const double v = std::stod(s);
      return {v, v};
    }
    return {std::stod(s.substr(0, colon)), std::stod(s.substr(colon + 1))};
  } catch (const std::exception&) {
    throw ConfigError("bad range '" + s + "' (expected LO:HI)");
  }
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) lines.push_back(line);
  return lines;
}

std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop = true; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bio-inspired visual search simulator"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Master random seed");
  app.add_option("--config", g.config_path, "key = value settings file")->check(CLI::ExistingFile);
  app.add_option("--data-dir", g.data_dir, "Directory for persistent service data");
  app.add_option("--set", g.overrides, "Config override key=value (repeatable)");

  // gen-stimulus ------------------------------------------------------------
  auto* gen = app.add_subcommand("gen-stimulus", "Synthesize a noise image with an embedded target");
  double gen_contrast = 0.15, gen_rms = 0.2;
  std::optional<double> gen_tx, gen_ty;
  std::string gen_out;
  gen->add_option("--contrast", gen_contrast, "Target contrast");
  gen->add_option("--rms", gen_rms, "RMS contrast of the noise");
  gen->add_option("--target-x", gen_tx, "Target x (deg); random when omitted");
  gen->add_option("--target-y", gen_ty, "Target y (deg); random when omitted");
  gen->add_option("--out", gen_out, "Output (.bvst, .pgm or .png)")->required();
  gen->callback([&] {
    resolve(g, app);
    log_config(g, "gen-stimulus", {{"contrast", gen_contrast}, {"out", gen_out}});
    if (gen_tx.has_value() != gen_ty.has_value()) throw ConfigError("give both --target-x and --target-y or neither");
    StimulusSpec spec;
    spec.noise.seed = g.seed;
    spec.noise.rms_contrast = gen_rms;
    spec.gabor.contrast = gen_contrast;
    std::optional<Vec2> loc;
    if (gen_tx) loc = Vec2{*gen_tx, *gen_ty};
    const SearchImage img = make_search_image(spec, loc);
    write_image(gen_out, img.pixels);
    std::cout << json{{"out", gen_out},
                      {"seed", img.seed},
                      {"target_deg", {img.target_location_deg->x, img.target_location_deg->y}},
                      {"clamped_pixels", img.clamped_pixels},
                      {"clamp_warning", img.clamp_warning}}
                     .dump()
              << '\n';
  });

  // retina-transform --------------------------------------------------------
  auto* ret = app.add_subcommand("retina-transform", "Foveal Cartesian resampling of an image");
  std::string ret_in, ret_out, ret_render;
  double fix_x = 0.0, fix_y = 0.0;
  bool ret_nearest = false;
  ret->add_option("--in", ret_in, "Source image (.bvst)")->required()->check(CLI::ExistingFile);
  ret->add_option("--fix-x", fix_x, "Fixation x (deg)");
  ret->add_option("--fix-y", fix_y, "Fixation y (deg)");
  ret->add_option("--out", ret_out, "Retinal image (.bvst, .pgm or .png)")->required();
  ret->add_option("--render", ret_render, "Also write the foveated render here");
  ret->add_flag("--nearest", ret_nearest, "Nearest-neighbour sampling instead of bilinear");
  ret->callback([&] {
    resolve(g, app);
    log_config(g, "retina-transform", {{"in", ret_in}, {"fix_deg", {fix_x, fix_y}}, {"out", ret_out}});
    SearchImage img;
    img.pixels = to_image(read_bvst(ret_in));
    if (img.pixels.width() != img.pixels.height()) throw ConfigError("source image must be square");
    img.frame.size_px = img.pixels.width();
    FcgConfig fc;
    fc.fill_value = g.config.get_double("mean_luminance", 0.5);
    fc.r_max = 2.0 * img.frame.radius_px();
    img.mean_luminance = fc.fill_value;
    const FcgSolution sol = solve_fcg(fc);
    const RetinalImage r = retinal_transform(img, {fix_x, fix_y}, sol,
                                             ret_nearest ? Interpolation::Nearest : Interpolation::Bilinear);
    write_image(ret_out, r.pixels);
    if (lower_ext(ret_out) == ".bvst") {
      fs::path pgm = ret_out;
      write_pgm(pgm.replace_extension(".pgm"), r.pixels);
    }
    if (!ret_render.empty()) write_image(ret_render, foveated_render(r, img.frame, sol));
  });

  // simulate-2ifc -----------------------------------------------------------
  auto* sim = app.add_subcommand("simulate-2ifc", "Simulated two-interval detection experiment");
  std::string sim_map, sim_out;
  double sim_x = 0.0, sim_y = 0.0, sim_dur = kReferenceDurationMs, sim_bias = 0.0;
  int sim_n = 200;
  bool sim_sweep = false;
  sim->add_option("--map", sim_map, "Visibility parameters (JSON); reference map by default");
  sim->add_option("--x", sim_x, "Target x (deg)");
  sim->add_option("--y", sim_y, "Target y (deg)");
  sim->add_option("--duration", sim_dur, "Presentation duration (ms)");
  sim->add_option("--n", sim_n, "Trials per record");
  sim->add_option("--bias", sim_bias, "Observer bias (0 = cued condition)");
  sim->add_flag("--sweep", sim_sweep, "Sweep eccentricity 0..7 deg on both axes and 4 durations");
  sim->add_option("--out", sim_out, "Output records (.jsonl); stdout by default");
  sim->callback([&] {
    resolve(g, app);
    log_config(g, "simulate-2ifc", {{"map", sim_map}, {"n", sim_n}, {"sweep", sim_sweep}});
    const VisibilityParams map = load_map(sim_map);
    std::vector<std::pair<Vec2, double>> points;
    if (sim_sweep) {
      for (double d : {50.0, 100.0, 250.0, 500.0})
        for (int e = 0; e <= 7; ++e) {
          points.push_back({{double(e), 0.0}, d});
          if (e > 0) points.push_back({{0.0, double(e)}, d});
        }
    } else {
      points.push_back({{sim_x, sim_y}, sim_dur});
    }
    std::ofstream file;
    if (!sim_out.empty()) file.open(sim_out);
    std::ostream& out = sim_out.empty() ? std::cout : file;
    for (std::size_t k = 0; k < points.size(); ++k)
      out << json(simulate_2ifc(map, points[k].first, points[k].second, sim_n, mix_seed(g.seed, k), sim_bias)).dump()
          << '\n';
  });

  // fit-visibility ----------------------------------------------------------
  auto* fitv = app.add_subcommand("fit-visibility", "Least-squares fit of the visibility field");
  std::string fitv_in, fitv_out;
  int fitv_starts = 32;
  fitv->add_option("--in", fitv_in, "2IFC records (.jsonl)")->required()->check(CLI::ExistingFile);
  fitv->add_option("--out", fitv_out, "Fitted parameters (.json); stdout by default");
  fitv->add_option("--starts", fitv_starts, "Random starts");
  fitv->callback([&] {
    resolve(g, app);
    log_config(g, "fit-visibility", {{"in", fitv_in}, {"starts", fitv_starts}});
    std::vector<TwoIfcRecord> records;
    for (const auto& line : read_lines(fitv_in)) records.push_back(json::parse(line).get<TwoIfcRecord>());
    VisibilityFitOptions opt;
    opt.starts = fitv_starts;
    opt.seed = g.seed;
    const VisibilityFit fit = fit_visibility(records, opt);
    json j = fit.params;
    j["loss"] = fit.loss;
    j["starts_tried"] = fit.starts_tried;
    j["starts_discarded"] = fit.starts_discarded;
    write_json(fitv_out, j);
  });

  // fit-weibull -------------------------------------------------------------
  auto* fitw = app.add_subcommand("fit-weibull", "Maximum-likelihood Weibull psychometric fit");
  std::string fitw_in, fitw_out;
  bool fitw_inverted = false;
  fitw->add_option("--in", fitw_in,
                   "JSONL with {level, correct, total} per line, or 2IFC records (level = eccentricity)")
      ->required()
      ->check(CLI::ExistingFile);
  fitw->add_option("--out", fitw_out, "Fit (.json); stdout by default");
  fitw->add_flag("--inverted", fitw_inverted, "Inverted x axis (accuracy falls with the level)");
  fitw->callback([&] {
    resolve(g, app);
    log_config(g, "fit-weibull", {{"in", fitw_in}, {"inverted", fitw_inverted}});
    std::vector<double> levels;
    std::vector<int> correct, total;
    for (const auto& line : read_lines(fitw_in)) {
      const json j = json::parse(line);
      if (j.contains("level")) {
        levels.push_back(j.at("level").get<double>());
        correct.push_back(j.at("correct").get<int>());
        total.push_back(j.at("total").get<int>());
      } else {
        const auto r = j.get<TwoIfcRecord>();
        levels.push_back(r.loc_deg.norm());
        total.push_back(r.n);
        correct.push_back(static_cast<int>(std::lround(r.proportion_correct() * r.n)));
      }
    }
    const WeibullFit fit = fit_weibull(levels, correct, total, fitw_inverted);
    json j = fit;
    if (auto t = fit.threshold(0.794)) j["threshold_0794"] = *t;
    write_json(fitw_out, j);
  });

  // run-elm -----------------------------------------------------------------
  auto* elm = app.add_subcommand("run-elm", "Bayesian entropy-limit-minimization searcher");
  int elm_trials = 2000, elm_calib_trials = 2000;
  std::optional<double> elm_theta, elm_match;
  std::string elm_map, elm_out;
  auto* theta_opt = elm->add_option("--theta", elm_theta, "Stopping threshold on the posterior");
  elm->add_option("--match-accuracy", elm_match, "Calibrate the threshold to this accuracy (0..1)")
      ->excludes(theta_opt);
  elm->add_option("--trials", elm_trials, "Number of trials");
  elm->add_option("--calibration-trials", elm_calib_trials, "Trials per calibration step");
  elm->add_option("--map", elm_map, "Visibility parameters (JSON)");
  elm->add_option("--out", elm_out, "Trial records (.jsonl)");
  elm->callback([&] {
    resolve(g, app);
    ElmConfig cfg;
    cfg.threshold = elm_theta.value_or(g.config.get_double("elm_threshold", 0.9));
    ElmSearcher searcher(load_map(elm_map), cfg);
    json info = {{"trials", elm_trials}, {"map", elm_map.empty() ? "reference" : elm_map}};
    if (elm_match) {
      const auto cal = calibrate_threshold(searcher, *elm_match, elm_calib_trials, mix_seed(g.seed, 0xCA1));
      searcher.config().threshold = cal.threshold;
      info["calibration"] = {{"threshold", cal.threshold}, {"accuracy", cal.accuracy}, {"iterations", cal.iterations}};
    }
    info["threshold"] = searcher.config().threshold;
    log_config(g, "run-elm", info);
    const auto trials = searcher.run_trials(elm_trials, g.seed);
    if (!elm_out.empty()) write_trials_jsonl(fs::path(elm_out), trials);
    json s = summarize(trials);
    s["threshold"] = searcher.config().threshold;
    std::cout << s.dump() << '\n';
  });

  // run-agent ---------------------------------------------------------------
  auto* agent = app.add_subcommand("run-agent", "Run the saccade agent with a given search policy");
  std::string agent_policy = "circular", agent_range = "0.15:0.15", agent_out;
  int agent_trials = 2000, agent_hp = 1, agent_max_fix = 200;
  bool agent_det = false;
  agent->add_option("--policy", agent_policy, "Checkpoint directory, 'circular' or 'random'");
  agent->add_option("--trials", agent_trials, "Number of trials");
  agent->add_option("--contrast-range", agent_range, "Target contrast range LO:HI");
  agent->add_option("--hp", agent_hp, "Reward hyperparameter group (1 or 2)")->check(CLI::Range(1, 2));
  agent->add_option("--max-fixations", agent_max_fix, "Timeout");
  agent->add_flag("--deterministic", agent_det, "Use the mean action of a spiking policy");
  agent->add_option("--out", agent_out, "Trial records (.jsonl)");
  agent->callback([&] {
    resolve(g, app);
    log_config(g, "run-agent", {{"policy", agent_policy}, {"trials", agent_trials}, {"contrast_range", agent_range},
                                {"hp", agent_hp}, {"deterministic", agent_det}});
    const auto [lo, hi] = parse_range(agent_range);
    AgentConfig cfg;
    cfg.rewards = agent_hp == 2 ? RewardConfig::hp2() : RewardConfig::hp1();
    cfg.max_fixations = agent_max_fix;
    const OracleDetector detector;
    std::vector<TrialRecord> trials;
    if (agent_policy == "circular" || agent_policy == "random") {
      std::unique_ptr<SearchPolicy> policy;
      if (agent_policy == "circular")
        policy = std::make_unique<CircularScanPolicy>();
      else
        policy = std::make_unique<RandomPolicy>();
      trials = run_agent_trials(detector, *policy, cfg, agent_trials, g.seed, lo, hi);
    } else {
      auto nets = std::make_shared<const PolicyNetworks>(PolicyNetworks::load(agent_policy));
      SpikingPolicy policy(nets, agent_det);
      policy.set_counting(true);
      for (int k = 0; k < agent_trials; ++k) {
        const std::uint64_t s = mix_seed(g.seed, static_cast<std::uint64_t>(k));
        const std::uint64_t before = policy.spike_count();
        TrialRecord rec = run_agent_trial(random_scene(s, lo, hi), detector, policy, cfg, s);
        rec.spikes = policy.spike_count() - before;
        trials.push_back(std::move(rec));
      }
    }
    if (!agent_out.empty()) write_trials_jsonl(fs::path(agent_out), trials);
    std::cout << json(summarize(trials)).dump() << '\n';
  });

  // train-sac ---------------------------------------------------------------
  auto* tr = app.add_subcommand("train-sac", "Soft actor-critic training of the spiking policy");
  int tr_hp = 1, tr_trials = 5000;
  std::string tr_out = "ckpt", tr_curves;
  tr->add_option("--hp", tr_hp, "Hyperparameter group (1 or 2)")->check(CLI::Range(1, 2));
  tr->add_option("--trials", tr_trials, "Training trials");
  tr->add_option("--out", tr_out, "Checkpoint directory");
  tr->add_option("--curves", tr_curves, "Per-trial training curve (.jsonl)");
  tr->callback([&] {
    resolve(g, app);
    SacConfig sc = SacConfig::hp(tr_hp);
    sc.max_trials = tr_trials;
    sc.updates_per_fixation = static_cast<int>(g.config.get_int("updates_per_fixation", sc.updates_per_fixation));
    sc.max_transitions = static_cast<int>(g.config.get_int("max_transitions", sc.max_transitions));
    sc.validate();
    log_config(g, "train-sac", {{"hp", tr_hp}, {"trials", tr_trials}, {"out", tr_out}, {"curves", tr_curves},
                                {"entropy_target", sc.entropy_target}, {"max_transitions", sc.max_transitions}});
    AgentConfig env;
    env.rewards = tr_hp == 2 ? RewardConfig::hp2() : RewardConfig::hp1();
    std::ofstream curves;
    if (!tr_curves.empty()) curves.open(tr_curves);
    const auto t0 = std::chrono::steady_clock::now();
    const TrainResult res = train(OracleDetector{}, env, sc, g.seed, [&](const CurvePoint& c) {
      if (curves.is_open()) curves << json(c).dump() << '\n';
      if ((c.trial + 1) % 250 == 0) {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cerr << "trial " << c.trial + 1 << " return " << c.ret << " alpha " << c.alpha << " (" << secs << " s)\n";
      }
    });
    res.policy.save(tr_out);
    json j = {{"checkpoint", tr_out},
              {"trials", res.curve.size()},
              {"random_baseline_return", res.random_baseline_return},
              {"diverged", res.diverged},
              {"skipped_updates", res.skipped_updates}};
    if (!res.report.empty()) j["report"] = res.report;
    std::cout << j.dump() << '\n';
    if (res.diverged) throw Error("training diverged: " + res.report);
  });

  // analyze -----------------------------------------------------------------
  auto* an = app.add_subcommand("analyze", "Eye-movement statistics over trial records");
  std::string an_in, an_out, an_density;
  an->add_option("--in", an_in, "Trial records (.jsonl)")->required()->check(CLI::ExistingFile);
  an->add_option("--out", an_out, "Summary (.json); stdout by default");
  an->add_option("--density", an_density, "Fixation density map (.bvst)");
  an->callback([&] {
    resolve(g, app);
    log_config(g, "analyze", {{"in", an_in}, {"out", an_out}, {"density", an_density}});
    const auto trials = read_trials_jsonl(fs::path(an_in));
    if (trials.empty()) throw ConfigError("no trials in " + an_in);
    const SearchSummary s = summarize(trials);
    json j = s;
    j["annulus_4_7_density"] = fixation_density_in_annulus(trials, 4.0, 7.0);
    j["inner_0_2_density"] = fixation_density_in_annulus(trials, 0.0, 2.0);
    write_json(an_out, j);
    if (!an_density.empty()) write_bvst(an_density, to_tensor(s.fixation_density));
  });

  // energy ------------------------------------------------------------------
  auto* en = app.add_subcommand("energy", "Spike-based energy of a policy against its ANN equivalent");
  std::string en_ckpt, en_trials;
  en->add_option("--ckpt", en_ckpt, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  en->add_option("--trials", en_trials, "Trial records whose scenes are replayed (.jsonl)")
      ->required()
      ->check(CLI::ExistingFile);
  en->callback([&] {
    resolve(g, app);
    log_config(g, "energy", {{"ckpt", en_ckpt}, {"trials", en_trials}});
    auto nets = std::make_shared<const PolicyNetworks>(PolicyNetworks::load(en_ckpt));
    SpikingPolicy policy(nets, true);
    policy.set_counting(true);
    const OracleDetector detector;
    AgentConfig cfg;
    const auto records = read_trials_jsonl(fs::path(en_trials));
    long fixations = 0, proposals = 0;
    for (const auto& r : records) {
      const Scene scene{r.target_deg, r.contrast.value_or(0.15), r.seed};
      const auto out = run_agent_trial(scene, detector, policy, cfg, r.seed);
      fixations += out.fixation_count();
    }
    const auto& layer = policy.layer_spikes();
    const int hidden = nets->rnn.hidden_size();
    const int actor_hidden = nets->actor.layer1.linear.out_features();
    // Each memory spike reaches the recurrent weights and the first actor
    // layer; actor spikes reach the next layer.
    const std::vector<double> counts = {double(layer[0]), double(layer[1]), double(layer[2])};
    const std::vector<double> fanouts = {double(hidden + actor_hidden), double(actor_hidden), 5.0};
    const double snn_pj = snn_energy(counts, fanouts);
    proposals = fixations;  // upper bound: the actor runs at most once per fixation
    const int rnn_in = nets->rnn.input.in_features();
    const std::vector<LayerSpec> ann = {LayerSpec::linear(rnn_in + hidden, hidden),
                                        LayerSpec::linear(hidden, actor_hidden),
                                        LayerSpec::linear(actor_hidden, actor_hidden),
                                        LayerSpec::linear(actor_hidden, 5, false)};
    FlopOptions fo;
    fo.exclude_first_conv = false;
    const std::uint64_t flops_per_fixation = ann_flops(ann, fo);
    json j = {{"trials", records.size()},
              {"fixations", fixations},
              {"spikes", {{"memory", layer[0]}, {"actor1", layer[1]}, {"actor2", layer[2]}}},
              {"snn_pj", snn_pj},
              {"snn_pj_per_fixation", fixations ? snn_pj / double(fixations) : 0.0},
              {"ann_flops_per_fixation", flops_per_fixation},
              {"ann_pj_upper_bound", ann_energy(flops_per_fixation) * double(proposals)},
              {"ann_pj_per_fixation", ann_energy(flops_per_fixation)}};
    std::cout << j.dump(2) << '\n';
  });

  // serve -------------------------------------------------------------------
  auto* sv = app.add_subcommand("serve", "JSON-over-HTTP trial service");
  std::string sv_host = "127.0.0.1", sv_ckpt;
  int sv_port = 8080;
  sv->add_option("--host", sv_host, "Bind address");
  sv->add_option("--port", sv_port, "Port (0 = any free port)");
  sv->add_option("--checkpoint", sv_ckpt, "Trained policy for agent comparisons");
  sv->callback([&] {
    resolve(g, app);
    if (!sv_ckpt.empty()) g.config.set("agent_checkpoint", sv_ckpt);
    if (sv->count("--host") || !g.config.contains("host")) g.config.set("host", sv_host);
    if (sv->count("--port") || !g.config.contains("port")) g.config.set("port", std::to_string(sv_port));
    log_config(g, "serve", {});
    Service service(ServiceOptions::from_config(g.config));
    HttpServer server(service, g.config.get_string("host", sv_host), static_cast<int>(g.config.get_int("port", 8080)));
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    server.start();
    std::cerr << "listening on " << g.config.get_string("host", sv_host) << ':' << server.port() << '\n';
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
    std::cerr << "stopped; data flushed to " << service.options().data_dir << '\n';
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
