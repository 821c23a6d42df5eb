#include "simt/harness/run.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "simt/harness/landscape.hpp"
#include "simt/harness/metrics.hpp"

namespace simt::harness {

namespace {

namespace fs = std::filesystem;

constexpr uint64_t kEpisodeSalt = 0xa0761d6478bd642full;
constexpr uint64_t kValSalt = 0xe7037ed1a0b428dbull;
constexpr uint64_t kTestSalt = 0x8ebc6af09c88c6e3ull;
constexpr uint64_t kDirectionSalt = 0x589965cc75374cc3ull;

engine::TrainerConfig trainer_config(const ExperimentConfig& cfg) {
  engine::TrainerConfig tc;
  tc.model = cfg.model;
  tc.adapt = cfg.adapt;
  tc.simt = cfg.simt;
  tc.adam = cfg.adam;
  tc.seed = cfg.seed;
  return tc;
}

std::vector<tasks::Episode> sample_episodes(const tasks::Family& family,
                                            const ExperimentConfig& cfg, int64_t n, Rng& rng) {
  std::vector<tasks::Episode> out;
  out.reserve(n);
  for (int64_t i = 0; i < n; ++i)
    out.push_back(
        tasks::sample_episode(family, cfg.task.n_way, cfg.task.k_shot, cfg.task.q_query, rng));
  return out;
}

int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

EvalSummary to_summary(const engine::EvalStats& st, const std::string& network) {
  EvalSummary s;
  s.mean_loss = st.mean_loss;
  s.std_loss = st.std_loss;
  s.ci95_loss = st.ci95_loss;
  s.mean_acc = st.mean_acc;
  s.std_acc = st.std_acc;
  s.ci95_acc = st.ci95_acc;
  s.conf_query = st.conf_query;
  s.conf_support = st.conf_support;
  s.n = st.n;
  s.network = network;
  return s;
}

Checkpoint make_checkpoint(const engine::TrainState& state, const Rng& episode_rng,
                           bool has_best, int64_t best_step, double best_metric) {
  Checkpoint c;
  c.step = state.step;
  c.theta = state.theta;
  c.theta_moment = state.momentum.theta_moment;
  c.adam_m = state.adam_theta.m;
  c.adam_v = state.adam_theta.v;
  c.adam_t = state.adam_theta.t;
  c.metasgd_alpha = state.metasgd_alpha;
  c.alpha_m = state.adam_alpha.m;
  c.alpha_v = state.adam_alpha.v;
  c.alpha_t = state.adam_alpha.t;
  c.episode_rng = episode_rng.state();
  c.has_best = has_best;
  c.best_step = best_step;
  c.best_metric = best_metric;
  return c;
}

void restore_state(const Checkpoint& c, engine::TrainState& state, Rng& episode_rng) {
  state.step = c.step;
  state.theta = c.theta;
  state.momentum.theta_moment = c.theta_moment;
  state.adam_theta.m = c.adam_m;
  state.adam_theta.v = c.adam_v;
  state.adam_theta.t = c.adam_t;
  state.metasgd_alpha = c.metasgd_alpha;
  state.adam_alpha.m = c.alpha_m;
  state.adam_alpha.v = c.alpha_v;
  state.adam_alpha.t = c.alpha_t;
  episode_rng.set_state(c.episode_rng);
}

void write_summary_json(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << body;
}

std::string json_num(double v) {
  if (!std::isfinite(v)) return "null";
  return format_double(v);
}

void run_few_shot(ExperimentConfig& cfg, const std::string& resume_path) {
  tasks::Family family = build_family(cfg);
  engine::TrainerConfig tc = trainer_config(cfg);
  engine::TrainState state = engine::make_train_state(tc);
  Rng episode_rng(cfg.seed ^ kEpisodeSalt);
  bool has_best = false;
  int64_t best_step = 0;
  double best_metric = 0;

  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  const std::string best_path = (dir / "best.ckpt").string();
  const std::string last_path = (dir / "last.ckpt").string();

  if (!resume_path.empty()) {
    Checkpoint c = checkpoint_load(resume_path);
    if (!c.theta.compatible(state.theta))
      throw ConfigError("resume checkpoint is incompatible with the configured model");
    restore_state(c, state, episode_rng);
    has_best = c.has_best;
    best_step = c.best_step;
    best_metric = c.best_metric;
  }

  MetricsWriter metrics((dir / "metrics.csv").string());
  const int64_t iters = cfg.schedule.iterations;

  while (state.step < iters) {
    const int64_t step = state.step;
    auto batch = sample_episodes(family, cfg, cfg.schedule.task_batch, episode_rng);
    const int64_t t0 = now_ms();
    engine::StepMetrics m = engine::simt_train_step(state, batch, tc);
    const int64_t wall = cfg.timing ? now_ms() - t0 : 0;
    metrics.append({step, "train", m.task_loss, m.kd_loss, m.total_loss, m.accuracy, wall,
                    "theta"});

    const bool eval_point = (step + 1) % cfg.schedule.eval_every == 0 || step + 1 == iters;
    if (!eval_point) continue;

    Rng val_rng = Rng::stream(cfg.seed ^ kValSalt, static_cast<uint64_t>(step));
    auto val_eps = sample_episodes(family, cfg, cfg.schedule.eval_tasks, val_rng);
    const int64_t e0 = now_ms();
    engine::EvalStats th_stats = engine::evaluate_network(
        state.theta, state.metasgd_alpha.empty() ? nullptr : &state.metasgd_alpha, val_eps, tc,
        cfg.adapt.eval_steps);
    const int64_t ewall = cfg.timing ? now_ms() - e0 : 0;
    const bool classification = batch[0].kind == tasks::TaskKind::kClassification;
    metrics.append({step, "val", th_stats.mean_loss, 0.0, th_stats.mean_loss,
                    classification ? th_stats.mean_acc : th_stats.mean_loss, ewall, "theta"});

    double select_metric = th_stats.mean_loss;
    if (cfg.simt) {
      engine::EvalStats mo_stats = engine::evaluate_network(
          state.momentum.theta_moment,
          state.metasgd_alpha.empty() ? nullptr : &state.metasgd_alpha, val_eps, tc,
          cfg.adapt.eval_steps);
      metrics.append({step, "val", mo_stats.mean_loss, 0.0, mo_stats.mean_loss,
                      classification ? mo_stats.mean_acc : mo_stats.mean_loss, 0, "momentum"});
      if (cfg.resolved_eval_network() == "momentum") select_metric = mo_stats.mean_loss;
    }

    if (!has_best || select_metric < best_metric) {
      has_best = true;
      best_metric = select_metric;
      best_step = step;
      checkpoint_save(make_checkpoint(state, episode_rng, has_best, best_step, best_metric),
                      best_path);
    }
    checkpoint_save(make_checkpoint(state, episode_rng, has_best, best_step, best_metric),
                    last_path);
  }

  // Final report: the best checkpoint evaluated on fresh test tasks.
  const std::string report_path = fs::exists(best_path) ? best_path : last_path;
  Checkpoint best = checkpoint_load(report_path);
  Rng test_rng = Rng::stream(cfg.seed ^ kTestSalt, 0);
  auto test_eps = sample_episodes(family, cfg, cfg.schedule.test_tasks, test_rng);
  const std::string network = cfg.resolved_eval_network();
  const ad::ParamSet& net = network == "momentum" ? best.theta_moment : best.theta;
  engine::EvalStats test_stats = engine::evaluate_network(
      net, best.metasgd_alpha.empty() ? nullptr : &best.metasgd_alpha, test_eps, tc,
      cfg.adapt.eval_steps);
  const bool classification = test_eps[0].kind == tasks::TaskKind::kClassification;
  metrics.append({best.step, "test", test_stats.mean_loss, 0.0, test_stats.mean_loss,
                  classification ? test_stats.mean_acc : test_stats.mean_loss, 0, network});

  std::string body = "{\n  \"mode\": \"few-shot\",\n";
  body += "  \"network\": \"" + network + "\",\n";
  body += "  \"best_step\": " + std::to_string(best.step) + ",\n";
  body += "  \"test_tasks\": " + std::to_string(test_stats.n) + ",\n";
  body += "  \"test_loss_mean\": " + json_num(test_stats.mean_loss) + ",\n";
  body += "  \"test_loss_std\": " + json_num(test_stats.std_loss) + ",\n";
  body += "  \"test_loss_ci95\": " + json_num(test_stats.ci95_loss) + ",\n";
  body += "  \"test_accuracy_mean\": " + json_num(test_stats.mean_acc) + ",\n";
  body += "  \"test_accuracy_ci95\": " + json_num(test_stats.ci95_acc) + ",\n";
  body += "  \"confidence_query\": " + json_num(test_stats.conf_query) + ",\n";
  body += "  \"confidence_support\": " + json_num(test_stats.conf_support) + "\n}\n";
  write_summary_json((dir / "summary.json").string(), body);
}

void run_rl(ExperimentConfig& cfg, const std::string& resume_path) {
  rl::RlConfig rc = cfg.rl;
  rl::RlState state = rl::make_rl_state(rc);

  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  const std::string last_path = (dir / "last.ckpt").string();

  if (!resume_path.empty()) {
    Checkpoint c = checkpoint_load(resume_path);
    if (!c.theta.compatible(state.theta))
      throw ConfigError("resume checkpoint is incompatible with the configured policy");
    state.theta = c.theta;
    state.momentum.theta_moment = c.theta_moment;
    state.iter = c.step;
    state.has_best = c.has_best;
    state.best_return = c.best_return;
    if (c.has_best) {
      state.best_theta = c.best_theta;
      state.best_moment = c.best_moment;
    }
  }

  MetricsWriter metrics((dir / "metrics.csv").string());
  std::ofstream returns((dir / "returns.csv").string(), std::ios::trunc);
  returns << "iteration,grad_steps,mean_return,std_return,seed\n";
  std::ofstream trpo_log((dir / "trpo_log.csv").string(), std::ios::trunc);
  trpo_log << "iteration,accepted,kl,loss_before,loss_after,backtracks,grad_norm\n";

  while (state.iter < rc.iterations) {
    const int64_t iter = state.iter;
    const int64_t t0 = now_ms();
    rl::RlIterStats st = rl::rl_train_iteration(state, rc);
    const int64_t wall = cfg.timing ? now_ms() - t0 : 0;
    metrics.append({iter, "train", st.surrogate, st.kd, st.total, st.post_return, wall,
                    "theta"});
    returns << iter << ",0," << format_double(st.pre_return) << ','
            << format_double(st.pre_return_std) << ',' << cfg.seed << "\n";
    returns << iter << ",1," << format_double(st.post_return) << ','
            << format_double(st.post_return_std) << ',' << cfg.seed << "\n";
    returns.flush();
    trpo_log << iter << ',' << (st.trpo.accepted ? 1 : 0) << ','
             << format_double(st.trpo.kl) << ',' << format_double(st.trpo.loss_before) << ','
             << format_double(st.trpo.loss_after) << ',' << st.trpo.backtracks << ','
             << format_double(st.trpo.grad_norm) << "\n";
    trpo_log.flush();

    if ((iter + 1) % cfg.schedule.eval_every == 0 || iter + 1 == rc.iterations) {
      Checkpoint c;
      c.step = state.iter;
      c.theta = state.theta;
      c.theta_moment = state.momentum.theta_moment;
      c.has_best = state.has_best;
      c.best_return = state.best_return;
      if (state.has_best) {
        c.best_theta = state.best_theta;
        c.best_moment = state.best_moment;
      }
      checkpoint_save(c, last_path);
    }
  }

  // Final report: adaptation curve of the best-return policy on fresh tasks.
  const std::string network = cfg.resolved_eval_network();
  const ad::ParamSet& net = network == "momentum"
                                ? (state.has_best ? state.best_moment
                                                  : state.momentum.theta_moment)
                                : (state.has_best ? state.best_theta : state.theta);
  rl::RlEvalCurve curve =
      rl::rl_evaluate(rc, net, cfg.schedule.test_tasks, 3, cfg.seed ^ kTestSalt);
  std::ofstream eval_csv((dir / "eval_curve.csv").string(), std::ios::trunc);
  eval_csv << "grad_steps,mean_return,std_return,seed\n";
  for (size_t s = 0; s < curve.mean_return.size(); ++s)
    eval_csv << s << ',' << format_double(curve.mean_return[s]) << ','
             << format_double(curve.std_return[s]) << ',' << cfg.seed << "\n";
  metrics.append({state.iter, "test", 0.0, 0.0, 0.0, curve.mean_return[1], 0, network});

  std::string body = "{\n  \"mode\": \"rl\",\n";
  body += "  \"network\": \"" + network + "\",\n";
  body += "  \"eval_tasks\": " + std::to_string(cfg.schedule.test_tasks) + ",\n";
  body += "  \"returns_by_step\": [";
  for (size_t s = 0; s < curve.mean_return.size(); ++s)
    body += (s ? ", " : "") + json_num(curve.mean_return[s]);
  body += "],\n  \"return_stds\": [";
  for (size_t s = 0; s < curve.std_return.size(); ++s)
    body += (s ? ", " : "") + json_num(curve.std_return[s]);
  body += "]\n}\n";
  write_summary_json((dir / "summary.json").string(), body);
}

}  // namespace

tasks::Family build_family(ExperimentConfig& cfg) {
  if (cfg.task.family == "sinusoid") return cfg.task.sinusoid;
  if (cfg.task.family == "angle") return cfg.task.angle;
  if (cfg.task.family == "clusters") {
    tasks::ClassTable t = tasks::make_cluster_table(
        cfg.task.num_latent_classes, cfg.task.angle.feature_dim, cfg.task.spread,
        cfg.task.center_dist, cfg.task.examples_per_class, cfg.seed ^ 0x6c62272e07bb0142ull);
    cfg.model.input_dim = t.feature_dim;
    return t;
  }
  tasks::ClassTable t = tasks::load_flat_dataset(cfg.task.path);
  cfg.model.input_dim = t.feature_dim;
  return t;
}

void run_experiment(ExperimentConfig cfg, const std::string& resume_path) {
  if (cfg.mode == "rl")
    run_rl(cfg, resume_path);
  else
    run_few_shot(cfg, resume_path);
}

EvalSummary evaluate_checkpoint(ExperimentConfig cfg, const std::string& ckpt_path,
                                const std::string& network, int64_t n_tasks, uint64_t eval_seed) {
  Checkpoint c = checkpoint_load(ckpt_path);
  const std::string net_name = network.empty() ? cfg.resolved_eval_network() : network;
  if (net_name != "theta" && net_name != "momentum")
    throw ConfigError("network must be theta | momentum");
  const ad::ParamSet& net = net_name == "momentum" ? c.theta_moment : c.theta;

  if (cfg.mode == "rl") {
    rl::RlEvalCurve curve = rl::rl_evaluate(cfg.rl, net, n_tasks, 3, eval_seed);
    EvalSummary s;
    s.network = net_name;
    s.n = n_tasks;
    s.mean_loss = -curve.mean_return[1];
    s.mean_acc = curve.mean_return[1];
    s.std_acc = curve.std_return[1];
    s.ci95_acc = 1.96 * curve.std_return[1] / std::sqrt(static_cast<double>(n_tasks));
    return s;
  }

  tasks::Family family = build_family(cfg);
  engine::TrainerConfig tc = trainer_config(cfg);
  if (!c.theta.compatible(nn::init_params(cfg.model)))
    throw ConfigError("checkpoint is incompatible with the configured model");
  Rng rng = Rng::stream(eval_seed ^ kTestSalt, 1);
  auto eps = sample_episodes(family, cfg, n_tasks, rng);
  engine::EvalStats st = engine::evaluate_network(
      net, c.metasgd_alpha.empty() ? nullptr : &c.metasgd_alpha, eps, tc, cfg.adapt.eval_steps);
  return to_summary(st, net_name);
}

void landscape_to_csv(ExperimentConfig cfg, const std::string& ckpt_path,
                      const std::string& network, double half_width, int res, int64_t n_tasks,
                      const std::string& out_path) {
  if (cfg.mode == "rl") throw ConfigError("landscape scans cover few-shot runs only");
  Checkpoint c = checkpoint_load(ckpt_path);
  const std::string net_name = network.empty() ? cfg.resolved_eval_network() : network;
  const ad::ParamSet& center = net_name == "momentum" ? c.theta_moment : c.theta;

  tasks::Family family = build_family(cfg);
  engine::TrainerConfig tc = trainer_config(cfg);
  Rng task_rng = Rng::stream(cfg.seed ^ kDirectionSalt, 7);
  auto eps = sample_episodes(family, cfg, n_tasks, task_rng);

  // L_train: mean post-adaptation query loss over the fixed task sample,
  // adaptation included.
  auto loss_at = [&](const ad::ParamSet& p) {
    engine::EvalStats st = engine::evaluate_network(
        p, c.metasgd_alpha.empty() ? nullptr : &c.metasgd_alpha, eps, tc, cfg.adapt.steps);
    return st.mean_loss;
  };
  LandscapeGrid grid =
      landscape_scan(center, loss_at, cfg.seed ^ kDirectionSalt, half_width, res);

  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + out_path);
  out << "i,j,loss\n";
  for (int i = 0; i < res; ++i)
    for (int j = 0; j < res; ++j)
      out << format_double(grid.coeff[i]) << ',' << format_double(grid.coeff[j]) << ','
          << format_double(grid.loss[static_cast<size_t>(i) * res + j]) << "\n";
}

}  // namespace simt::harness
