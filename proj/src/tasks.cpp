#include "simt/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "simt/errors.hpp"

namespace simt::tasks {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

Episode sample_sinusoid(const SinusoidFamily& f, int64_t k_shot, int64_t q_query, Rng& rng) {
  Episode ep;
  ep.kind = TaskKind::kRegressionMse;
  ep.input_dim = 1;
  ep.target_dim = 1;
  ep.n_support = k_shot;
  ep.n_query = q_query;
  const double amp = rng.uniform(f.amp_lo, f.amp_hi);
  const double phase = rng.uniform(f.phase_lo, f.phase_hi);
  auto draw = [&](int64_t n, std::vector<double>& x, std::vector<double>& y) {
    x.resize(n);
    y.resize(n);
    for (int64_t i = 0; i < n; ++i) {
      x[i] = rng.uniform(f.x_lo, f.x_hi);
      y[i] = amp * std::sin(x[i] + phase);
      if (f.noise_sigma > 0) y[i] += rng.normal(0.0, f.noise_sigma);
    }
  };
  draw(k_shot, ep.xs, ep.ys);
  draw(q_query, ep.xq, ep.yq);
  return ep;
}

Episode sample_angle(const AngleFamily& f, int64_t k_shot, int64_t q_query, Rng& rng) {
  Episode ep;
  ep.kind = TaskKind::kRegressionAngular;
  ep.input_dim = f.feature_dim;
  ep.target_dim = 1;
  ep.n_support = k_shot;
  ep.n_query = q_query;
  // Fixed embedding of the 2-D circle into feature space, from the family
  // seed so every task shares it.
  Rng gen(f.gen_seed);
  std::vector<double> embed(f.feature_dim * 2);
  for (auto& v : embed) v = gen.normal();
  const double task_rot = rng.uniform(0.0, kTwoPi);
  auto draw = [&](int64_t n, std::vector<double>& x, std::vector<double>& y) {
    x.resize(n * f.feature_dim);
    y.resize(n);
    for (int64_t i = 0; i < n; ++i) {
      const double delta = rng.uniform(0.0, kTwoPi);
      const double c = std::cos(task_rot + delta), s = std::sin(task_rot + delta);
      for (int64_t d = 0; d < f.feature_dim; ++d) {
        double v = embed[d * 2] * c + embed[d * 2 + 1] * s;
        if (f.noise_sigma > 0) v += rng.normal(0.0, f.noise_sigma);
        x[i * f.feature_dim + d] = v;
      }
      y[i] = delta;
    }
  };
  draw(k_shot, ep.xs, ep.ys);
  draw(q_query, ep.xq, ep.yq);
  return ep;
}

Episode sample_classification(const ClassTable& t, int64_t n_way, int64_t k_shot, int64_t q_query,
                              Rng& rng) {
  if (t.num_classes < n_way)
    throw Error("sample_episode: family has " + std::to_string(t.num_classes) +
                " latent classes, need " + std::to_string(n_way));
  Episode ep;
  ep.kind = TaskKind::kClassification;
  ep.input_dim = t.feature_dim;
  ep.target_dim = 0;
  ep.n_way = n_way;
  ep.n_support = n_way * k_shot;
  ep.n_query = n_way * q_query;

  // Choose n_way latent classes without replacement.
  std::vector<int64_t> classes(t.num_classes);
  std::iota(classes.begin(), classes.end(), 0);
  for (int64_t i = 0; i < n_way; ++i) {
    const int64_t j = i + static_cast<int64_t>(rng.below(classes.size() - i));
    std::swap(classes[i], classes[j]);
  }
  classes.resize(n_way);
  ep.class_map = classes;

  for (int64_t local = 0; local < n_way; ++local) {
    const int64_t c = classes[local];
    const int64_t rows = t.rows_in_class(c);
    if (rows < k_shot + q_query)
      throw Error("sample_episode: class " + std::to_string(c) + " has " + std::to_string(rows) +
                  " rows, need " + std::to_string(k_shot + q_query));
    std::vector<int64_t> idx(rows);
    std::iota(idx.begin(), idx.end(), 0);
    for (int64_t i = 0; i < k_shot + q_query; ++i) {
      const int64_t j = i + static_cast<int64_t>(rng.below(idx.size() - i));
      std::swap(idx[i], idx[j]);
    }
    auto push = [&](int64_t pick, bool support) {
      const int64_t row = t.class_offsets[c] + idx[pick];
      const double* src = t.rows.data() + row * t.feature_dim;
      auto& xdst = support ? ep.xs : ep.xq;
      auto& ldst = support ? ep.support_labels : ep.query_labels;
      auto& rdst = support ? ep.support_rows : ep.query_rows;
      xdst.insert(xdst.end(), src, src + t.feature_dim);
      ldst.push_back(local);
      rdst.push_back(row);
    };
    for (int64_t i = 0; i < k_shot; ++i) push(i, true);
    for (int64_t i = 0; i < q_query; ++i) push(k_shot + i, false);
  }
  return ep;
}

}  // namespace

ClassTable make_cluster_table(int64_t num_latent_classes, int64_t feature_dim, double spread,
                              double center_dist, int64_t examples_per_class, uint64_t seed) {
  if (num_latent_classes < 1 || feature_dim < 1 || examples_per_class < 1)
    throw Error("make_cluster_table: sizes must be >= 1");
  Rng rng(seed);
  ClassTable t;
  t.num_classes = num_latent_classes;
  t.feature_dim = feature_dim;
  t.class_offsets.resize(num_latent_classes + 1);
  t.rows.resize(num_latent_classes * examples_per_class * feature_dim);
  int64_t row = 0;
  for (int64_t c = 0; c < num_latent_classes; ++c) {
    t.class_offsets[c] = row;
    std::vector<double> center(feature_dim);
    for (auto& v : center) v = rng.normal(0.0, center_dist);
    for (int64_t i = 0; i < examples_per_class; ++i, ++row)
      for (int64_t d = 0; d < feature_dim; ++d)
        t.rows[row * feature_dim + d] = center[d] + rng.normal(0.0, spread);
  }
  t.class_offsets[num_latent_classes] = row;
  return t;
}

Episode sample_episode(const Family& family, int64_t n_way, int64_t k_shot, int64_t q_query,
                       Rng& rng) {
  if (k_shot < 1 || q_query < 1) throw Error("sample_episode: k_shot and q_query must be >= 1");
  return std::visit(
      [&](const auto& f) -> Episode {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, SinusoidFamily>)
          return sample_sinusoid(f, k_shot, q_query, rng);
        else if constexpr (std::is_same_v<T, AngleFamily>)
          return sample_angle(f, k_shot, q_query, rng);
        else
          return sample_classification(f, n_way, k_shot, q_query, rng);
      },
      family);
}

ad::NodeId mse_loss(ad::Graph& g, ad::NodeId pred, std::span<const double> y) {
  const ad::Shape s = g.shape(pred);
  if (static_cast<int64_t>(y.size()) != s.numel())
    throw ShapeError("mse_loss: target length " + std::to_string(y.size()) +
                     " != prediction numel of " + s.str());
  const int64_t rows = s.rank() >= 1 ? s[0] : 1;
  ad::NodeId diff = ad::sub(g, pred, g.constant(s, y));
  return ad::scale(g, ad::sum(g, ad::square(g, diff)), 1.0 / static_cast<double>(rows));
}

ad::NodeId angular_loss(ad::Graph& g, ad::NodeId pred, std::span<const double> y) {
  const ad::Shape s = g.shape(pred);
  if (static_cast<int64_t>(y.size()) != s.numel())
    throw ShapeError("angular_loss: target length mismatch for " + s.str());
  const int64_t rows = s.rank() >= 1 ? s[0] : 1;
  std::vector<double> cy(y.size()), sy(y.size());
  for (size_t i = 0; i < y.size(); ++i) {
    cy[i] = std::cos(y[i]);
    sy[i] = std::sin(y[i]);
  }
  ad::NodeId dc = ad::sub(g, ad::cos_op(g, pred), g.constant(s, cy));
  ad::NodeId ds = ad::sub(g, ad::sin_op(g, pred), g.constant(s, sy));
  ad::NodeId per = ad::add(g, ad::square(g, dc), ad::square(g, ds));
  return ad::scale(g, ad::sum(g, per), 1.0 / static_cast<double>(rows));
}

ad::NodeId ce_loss(ad::Graph& g, ad::NodeId logits, std::span<const int64_t> labels) {
  const ad::Shape s = g.shape(logits);
  if (s.rank() != 2 || static_cast<int64_t>(labels.size()) != s[0])
    throw ShapeError("ce_loss: logits " + s.str() + " vs " + std::to_string(labels.size()) +
                     " labels");
  const int64_t n = s[0], c = s[1];
  std::vector<double> onehot(n * c, 0.0);
  for (int64_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= c)
      throw Error("ce_loss: label " + std::to_string(labels[i]) + " out of [0," +
                  std::to_string(c) + ")");
    onehot[i * c + labels[i]] = 1.0;
  }
  ad::NodeId lp = ad::log_softmax_last(g, logits);
  ad::NodeId picked = ad::mul(g, lp, g.constant(s, onehot));
  return ad::scale(g, ad::sum(g, picked), -1.0 / static_cast<double>(n));
}

double accuracy(const ad::Graph& g, ad::NodeId logits, std::span<const int64_t> labels) {
  const ad::Shape s = g.shape(logits);
  const int64_t n = s[0], c = s[1];
  auto v = g.value(logits);
  int64_t hits = 0;
  for (int64_t i = 0; i < n; ++i) {
    int64_t best = 0;
    for (int64_t j = 1; j < c; ++j)
      if (v[i * c + j] > v[i * c + best]) best = j;
    if (best == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

ClassTable load_flat_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_flat_dataset: cannot open " + path);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  size_t pos = 0;
  auto fail = [&](const std::string& why) -> IoError {
    return IoError("load_flat_dataset: " + why + " at byte " + std::to_string(pos) + " of " +
                   path);
  };

  size_t eol = content.find('\n');
  if (eol == std::string::npos) throw fail("truncated header");
  std::istringstream header(content.substr(0, eol));
  std::string magic, version;
  int64_t num_classes = -1, feature_dim = -1;
  header >> magic >> version >> num_classes >> feature_dim;
  if (magic != "SIMT-DS" || version != "v1" || header.fail())
    throw fail("malformed header '" + content.substr(0, eol) + "'");
  if (num_classes < 1 || feature_dim < 1) throw fail("non-positive header counts");

  std::vector<std::vector<double>> by_class(num_classes);
  pos = eol + 1;
  while (pos < content.size()) {
    size_t line_end = content.find('\n', pos);
    if (line_end == std::string::npos) throw fail("missing trailing newline");
    const std::string line = content.substr(pos, line_end - pos);
    if (!line.empty()) {
      std::istringstream row(line);
      int64_t cls;
      if (!(row >> cls)) throw fail("unreadable class id");
      if (cls < 0 || cls >= num_classes) throw fail("unknown class id " + std::to_string(cls));
      std::vector<double> feats;
      double v;
      while (row >> v) feats.push_back(v);
      if (!row.eof()) throw fail("non-numeric feature");
      if (static_cast<int64_t>(feats.size()) != feature_dim)
        throw fail("row has " + std::to_string(feats.size()) + " features, expected " +
                   std::to_string(feature_dim));
      by_class[cls].insert(by_class[cls].end(), feats.begin(), feats.end());
    }
    pos = line_end + 1;
  }

  ClassTable t;
  t.num_classes = num_classes;
  t.feature_dim = feature_dim;
  t.class_offsets.resize(num_classes + 1);
  int64_t row = 0;
  for (int64_t c = 0; c < num_classes; ++c) {
    t.class_offsets[c] = row;
    t.rows.insert(t.rows.end(), by_class[c].begin(), by_class[c].end());
    row += static_cast<int64_t>(by_class[c].size()) / feature_dim;
  }
  t.class_offsets[num_classes] = row;
  return t;
}

void dump_flat_dataset(const ClassTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("dump_flat_dataset: cannot open " + path);
  out << "SIMT-DS v1 " << table.num_classes << " " << table.feature_dim << "\n";
  char buf[32];
  for (int64_t c = 0; c < table.num_classes; ++c) {
    for (int64_t r = table.class_offsets[c]; r < table.class_offsets[c + 1]; ++r) {
      out << c;
      for (int64_t d = 0; d < table.feature_dim; ++d) {
        std::snprintf(buf, sizeof(buf), "%.17g", table.rows[r * table.feature_dim + d]);
        out << " " << buf;
      }
      out << "\n";
    }
  }
  if (!out) throw IoError("dump_flat_dataset: write failed for " + path);
}

}  // namespace simt::tasks
