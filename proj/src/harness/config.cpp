#include "simt/harness/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "simt/errors.hpp"

namespace simt::harness {

namespace {

using nlohmann::json;

class Validator {
 public:
  explicit Validator(const std::string& origin) : origin_(origin) {}

  void fail(const std::string& what) { errors_.push_back(what); }

  void require(bool ok, const std::string& what) {
    if (!ok) fail(what);
  }

  void finish() const {
    if (errors_.empty()) return;
    std::ostringstream out;
    out << origin_ << ": " << errors_.size() << " config violation(s):";
    for (const auto& e : errors_) out << "\n  - " << e;
    throw ConfigError(out.str());
  }

  bool ok() const { return errors_.empty(); }

 private:
  std::string origin_;
  std::vector<std::string> errors_;
};

// Fetch helpers that record type errors instead of throwing immediately.
template <typename T>
T get_or(const json& j, const std::string& key, T fallback, Validator& v) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    v.fail("key '" + key + "' has the wrong type");
    return fallback;
  }
}

std::vector<int64_t> get_dims(const json& j, const std::string& key,
                              std::vector<int64_t> fallback, Validator& v) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<std::vector<int64_t>>();
  } catch (const json::exception&) {
    v.fail("key '" + key + "' must be an array of integers");
    return fallback;
  }
}

bool is_classification(const ExperimentConfig& cfg) {
  return cfg.task.family == "clusters" || cfg.task.family == "flat-file";
}

void parse_simt(const json& js, ExperimentConfig& cfg, Validator& v) {
  engine::SimtConfig s;
  // per-algorithm defaults
  if (cfg.algorithm == "maml" || cfg.algorithm == "anil" || cfg.algorithm == "fomaml") {
    s.lambda = 0.5;
    s.dropout.p = 0.2;
  } else if (cfg.algorithm == "metasgd") {
    s.lambda = 0.1;
    s.dropout.p = 0.1;
  } else {
    s.lambda = 5e-3;
    s.dropout.p = 0.1;
  }
  s.eta = (is_classification(cfg) && cfg.task.k_shot >= 5) ? 0.999 : 0.995;
  s.temperature = 4.0;

  s.lambda = get_or(js, "lambda", s.lambda, v);
  s.eta = get_or(js, "eta", s.eta, v);
  s.temperature = get_or(js, "temperature", s.temperature, v);
  s.dropout.p = get_or(js, "dropout_p", s.dropout.p, v);
  s.dropout.seed = get_or(js, "dropout_seed", static_cast<uint64_t>(1), v);
  s.teach_on_support = get_or(js, "teach_on_support", false, v);
  s.lambda_rampup_steps = get_or(js, "lambda_rampup_steps", static_cast<int64_t>(0), v);
  s.dropout_on_task_term = get_or(js, "dropout_on_task_term", true, v);

  v.require(s.lambda >= 0.0 && s.lambda < 1.0, "simt.lambda must be in [0,1)");
  v.require(s.eta >= 0.0 && s.eta < 1.0, "simt.eta must be in [0,1)");
  v.require(s.temperature > 0.0, "simt.temperature must be > 0");
  v.require(s.dropout.p >= 0.0 && s.dropout.p < 1.0, "simt.dropout_p must be in [0,1)");
  v.require(s.lambda_rampup_steps >= 0, "simt.lambda_rampup_steps must be >= 0");
  cfg.simt = s;
}

void parse_task(const json& jt, ExperimentConfig& cfg, Validator& v) {
  TaskConfig& t = cfg.task;
  t.family = get_or<std::string>(jt, "family", t.family, v);
  const bool known = t.family == "sinusoid" || t.family == "angle" || t.family == "clusters" ||
                     t.family == "flat-file";
  v.require(known, "task.family must be sinusoid | angle | clusters | flat-file");
  t.n_way = get_or(jt, "n_way", t.n_way, v);
  t.k_shot = get_or(jt, "k_shot", t.k_shot, v);
  t.q_query = get_or(jt, "q_query", t.q_query, v);
  v.require(t.k_shot >= 1, "task.k_shot must be >= 1");
  v.require(t.q_query >= 1, "task.q_query must be >= 1");

  if (jt.contains("amp")) {
    auto r = get_dims(jt, "amp", {}, v);
    if (jt.at("amp").is_array() && jt.at("amp").size() == 2) {
      t.sinusoid.amp_lo = jt.at("amp")[0].get<double>();
      t.sinusoid.amp_hi = jt.at("amp")[1].get<double>();
    } else {
      v.fail("task.amp must be [lo, hi]");
    }
    (void)r;
  }
  if (jt.contains("x_range") && jt.at("x_range").is_array() && jt.at("x_range").size() == 2) {
    t.sinusoid.x_lo = jt.at("x_range")[0].get<double>();
    t.sinusoid.x_hi = jt.at("x_range")[1].get<double>();
  }
  t.sinusoid.noise_sigma = get_or(jt, "noise_sigma", t.sinusoid.noise_sigma, v);
  t.angle.feature_dim = get_or(jt, "feature_dim", t.angle.feature_dim, v);
  t.angle.gen_seed = get_or(jt, "gen_seed", t.angle.gen_seed, v);
  t.angle.noise_sigma = t.sinusoid.noise_sigma;
  t.num_latent_classes = get_or(jt, "num_latent_classes", t.num_latent_classes, v);
  t.spread = get_or(jt, "spread", t.spread, v);
  t.center_dist = get_or(jt, "center_dist", t.center_dist, v);
  t.examples_per_class = get_or(jt, "examples_per_class", t.examples_per_class, v);
  t.path = get_or<std::string>(jt, "path", t.path, v);

  if (t.family == "clusters") {
    v.require(t.num_latent_classes >= t.n_way,
              "task.num_latent_classes must be >= n_way");
    v.require(t.examples_per_class >= t.k_shot + t.q_query,
              "task.examples_per_class must cover k_shot + q_query");
  }
  if (t.family == "flat-file")
    v.require(!t.path.empty(), "task.path is required for family flat-file");
  if (t.family == "angle")
    v.require(t.angle.feature_dim >= 2, "task.feature_dim must be >= 2");
}

void parse_rl(const json& jr, ExperimentConfig& cfg, Validator& v) {
  rl::RlConfig& r = cfg.rl;
  r.policy.input_dim = 2;
  r.policy.output_dim = 2;
  r.policy.hidden_dims = get_dims(jr, "hidden_dims", {100, 100}, v);
  r.policy.activation = nn::Activation::kRelu;
  r.policy.seed = cfg.seed;
  r.iterations = get_or(jr, "iterations", static_cast<int64_t>(500), v);
  r.task_batch = get_or(jr, "task_batch", static_cast<int64_t>(20), v);
  r.rollouts = get_or(jr, "rollouts", static_cast<int64_t>(20), v);
  r.horizon = static_cast<int>(get_or(jr, "horizon", static_cast<int64_t>(100), v));
  r.inner_alpha = get_or(jr, "inner_alpha", 0.1, v);
  r.eval_alpha_rest = get_or(jr, "eval_alpha_rest", 0.05, v);
  r.gae.gamma = get_or(jr, "gamma", 0.95, v);
  r.gae.lam = get_or(jr, "gae_lambda", 1.0, v);
  r.standardize_advantages = get_or(jr, "standardize_advantages", true, v);
  r.fisher_subsample = get_or(jr, "fisher_subsample", 1.0, v);
  r.target_from_query = get_or(jr, "target_from_query", false, v);
  r.seed = cfg.seed;
  if (jr.contains("trpo")) {
    const json& jt = jr.at("trpo");
    r.trpo.delta = get_or(jt, "delta", 0.01, v);
    r.trpo.cg_iters = static_cast<int>(get_or(jt, "cg_iters", static_cast<int64_t>(10), v));
    r.trpo.cg_damping = get_or(jt, "cg_damping", 1e-2, v);
    r.trpo.backtrack_ratio = get_or(jt, "backtrack_ratio", 0.5, v);
    r.trpo.max_backtracks =
        static_cast<int>(get_or(jt, "max_backtracks", static_cast<int64_t>(10), v));
  }
  v.require(r.iterations >= 1, "rl.iterations must be >= 1");
  v.require(r.task_batch >= 1, "rl.task_batch must be >= 1");
  v.require(r.rollouts >= 1, "rl.rollouts must be >= 1");
  v.require(r.horizon >= 1, "rl.horizon must be >= 1");
  v.require(r.trpo.delta > 0, "rl.trpo.delta must be > 0");
  v.require(r.gae.gamma >= 0 && r.gae.gamma < 1, "rl.gamma must be in [0,1)");
  v.require(r.gae.lam >= 0 && r.gae.lam <= 1, "rl.gae_lambda must be in [0,1]");
  v.require(r.fisher_subsample > 0 && r.fisher_subsample <= 1,
            "rl.fisher_subsample must be in (0,1]");

  // RL default: no dropout on the tiny policy network
  if (cfg.simt) cfg.simt->dropout.p = 0.0;
  if (cfg.simt && jr.contains("lambda")) cfg.simt->lambda = jr.at("lambda").get<double>();
  r.simt = cfg.simt;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": not valid JSON: " + e.what());
  }

  Validator v(origin);
  ExperimentConfig cfg;

  cfg.mode = get_or<std::string>(j, "mode", "few-shot", v);
  v.require(cfg.mode == "few-shot" || cfg.mode == "rl", "mode must be few-shot | rl");
  if (j.contains("seed")) {
    try {
      const int64_t s = j.at("seed").get<int64_t>();
      if (s < 0)
        v.fail("seed must be >= 0");
      else
        cfg.seed = static_cast<uint64_t>(s);
    } catch (const json::exception&) {
      v.fail("seed must be an integer");
    }
  }
  cfg.output_dir = get_or<std::string>(j, "output_dir", cfg.output_dir, v);
  cfg.timing = get_or(j, "timing", false, v);
  cfg.eval_network = get_or<std::string>(j, "eval_network", "", v);
  v.require(cfg.eval_network.empty() || cfg.eval_network == "theta" ||
                cfg.eval_network == "momentum",
            "eval_network must be theta | momentum");

  // algorithm
  const json ja = j.contains("algorithm") ? j.at("algorithm") : json::object();
  cfg.algorithm = get_or<std::string>(ja, "kind", "maml", v);
  bool algo_known = true;
  try {
    cfg.adapt.kind = meta::adapt_kind_from_string(cfg.algorithm);
  } catch (const ConfigError& e) {
    v.fail(e.what());
    algo_known = false;
  }

  if (j.contains("task")) parse_task(j.at("task"), cfg, v);

  // per-algorithm and per-task-kind defaults
  const bool classification = is_classification(cfg);
  cfg.adapt.steps = 5;
  cfg.adapt.eval_steps = 10;
  cfg.adapt.alpha = classification ? 1e-2 : 2e-3;
  cfg.adam.lr = classification ? 1e-3 : 5e-4;
  if (cfg.algorithm == "metasgd") {
    cfg.adapt.steps = 1;
    cfg.adapt.eval_steps = 1;
  }
  if (cfg.algorithm == "fomaml") cfg.adapt.second_order = false;

  cfg.adapt.steps = static_cast<int>(get_or(ja, "steps", static_cast<int64_t>(cfg.adapt.steps), v));
  cfg.adapt.eval_steps =
      static_cast<int>(get_or(ja, "eval_steps", static_cast<int64_t>(cfg.adapt.eval_steps), v));
  cfg.adapt.alpha = get_or(ja, "alpha", cfg.adapt.alpha, v);
  cfg.adapt.second_order = get_or(ja, "second_order", cfg.adapt.second_order, v);
  if (algo_known && cfg.algorithm != "protonet")
    v.require(cfg.adapt.steps >= 1, "algorithm.steps must be >= 1");
  if (cfg.algorithm == "metasgd" && cfg.adapt.steps != 1)
    v.fail("algorithm.steps must be 1 for metasgd");

  // model: input/output dims derive from the task and algorithm
  const json jm = j.contains("model") ? j.at("model") : json::object();
  cfg.model.hidden_dims = get_dims(jm, "hidden_dims", {40, 40}, v);
  const std::string act = get_or<std::string>(jm, "activation", "relu", v);
  v.require(act == "relu" || act == "tanh", "model.activation must be relu | tanh");
  cfg.model.activation = act == "tanh" ? nn::Activation::kTanh : nn::Activation::kRelu;
  cfg.model.seed = cfg.seed;
  for (int64_t h : cfg.model.hidden_dims)
    if (h < 1) v.fail("model.hidden_dims entries must be >= 1");

  if (cfg.task.family == "sinusoid")
    cfg.model.input_dim = 1;
  else if (cfg.task.family == "angle")
    cfg.model.input_dim = cfg.task.angle.feature_dim;
  else
    cfg.model.input_dim = 0;  // clusters: resolved when the table is built
  if (cfg.task.family == "clusters") cfg.model.input_dim = cfg.task.angle.feature_dim;

  if (classification)
    cfg.model.output_dim = cfg.algorithm == "protonet"
                               ? get_or(jm, "embed_dim", static_cast<int64_t>(16), v)
                               : cfg.task.n_way;
  else
    cfg.model.output_dim = 1;

  if (cfg.algorithm == "anil") {
    const int last = static_cast<int>(cfg.model.hidden_dims.size());
    cfg.adapt.adapted_names = {cfg.model.weight_name(last), cfg.model.bias_name(last)};
  }

  if (j.contains("simt") && !j.at("simt").is_null()) parse_simt(j.at("simt"), cfg, v);

  if (j.contains("optimizer")) {
    const json& jo = j.at("optimizer");
    cfg.adam.lr = get_or(jo, "beta", cfg.adam.lr, v);
    cfg.adam.beta1 = get_or(jo, "beta1", 0.9, v);
    cfg.adam.beta2 = get_or(jo, "beta2", 0.999, v);
    cfg.adam.eps = get_or(jo, "eps", 1e-8, v);
    v.require(cfg.adam.lr > 0, "optimizer.beta must be > 0");
  }

  if (j.contains("schedule")) {
    const json& js = j.at("schedule");
    cfg.schedule.iterations = get_or(js, "iterations", cfg.schedule.iterations, v);
    cfg.schedule.task_batch = get_or(js, "task_batch", cfg.schedule.task_batch, v);
    cfg.schedule.eval_every = get_or(js, "eval_every", cfg.schedule.eval_every, v);
    cfg.schedule.eval_tasks = get_or(js, "eval_tasks", cfg.schedule.eval_tasks, v);
    cfg.schedule.test_tasks = get_or(js, "test_tasks", cfg.schedule.test_tasks, v);
  }
  v.require(cfg.schedule.iterations >= 1, "schedule.iterations must be >= 1");
  v.require(cfg.schedule.task_batch >= 1, "schedule.task_batch must be >= 1");
  v.require(cfg.schedule.eval_every >= 1, "schedule.eval_every must be >= 1");
  v.require(cfg.schedule.eval_tasks >= 1, "schedule.eval_tasks must be >= 1");
  v.require(cfg.schedule.test_tasks >= 1, "schedule.test_tasks must be >= 1");

  if (cfg.mode == "rl") parse_rl(j.contains("rl") ? j.at("rl") : json::object(), cfg, v);

  if (cfg.mode == "few-shot" && algo_known && classification == false)
    v.require(cfg.algorithm != "protonet", "protonet requires a classification family");

  v.finish();
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config_text(text, path);
}

}  // namespace simt::harness
