#include "drst/mtgcn.hpp"

#include "drst/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace drst::mtgcn {

void GraphSpec::validate() const {
  if (adjacencies.empty()) throw std::invalid_argument("graphs: no views");
  for (const auto& a : adjacencies) {
    if (a.rows() != node_count || a.cols() != node_count) throw std::invalid_argument("graphs: wrong adjacency size");
    if (!a.allFinite() || a.minCoeff() < 0.0) throw std::invalid_argument("graphs: adjacency must be non-negative");
    if ((a - a.transpose()).cwiseAbs().maxCoeff() > 0.0) throw std::invalid_argument("graphs: adjacency not symmetric");
    if (a.diagonal().cwiseAbs().maxCoeff() > 0.0) throw std::invalid_argument("graphs: nonzero diagonal");
  }
}

Matrix normalize_adjacency(const Eigen::Ref<const Matrix>& a) {
  Matrix s = a;
  s.diagonal().array() += 1.0;
  const Vector d = s.rowwise().sum().cwiseSqrt().cwiseInverse();
  return d.asDiagonal() * s * d.asDiagonal();
}

Samples make_samples(const Dataset& ds, const std::vector<Matrix>* filtered,
                     const std::vector<Index>& covariate_nodes, const std::vector<int>& offsets) {
  if (offsets.empty()) throw std::invalid_argument("make_samples: no task offsets");
  const int max_off = *std::max_element(offsets.begin(), offsets.end());
  if (*std::min_element(offsets.begin(), offsets.end()) < 1) throw std::invalid_argument("make_samples: offsets must be >= 1");
  const Index H = ds.horizon();
  if (H <= max_off) throw std::invalid_argument("make_samples: horizon too short for the task offsets");
  if (filtered && static_cast<Index>(filtered->size()) != ds.n()) {
    throw std::invalid_argument("make_samples: one posterior per individual required");
  }
  for (Index j : covariate_nodes) {
    if (j < 0 || j >= ds.p()) throw std::invalid_argument("make_samples: covariate node out of range");
  }
  const Index K = filtered && !filtered->empty() ? filtered->front().cols() : 0;
  const Index N = static_cast<Index>(covariate_nodes.size()) + K + 1;
  const Index per = H - max_off;
  const Index B = ds.n() * per;
  Samples s;
  s.inputs.resize(N, B);
  s.targets.resize(B, static_cast<Index>(offsets.size()));
  s.strata.resize(B);
  for (Index i = 0; i < ds.n(); ++i) {
    for (Index t = 1; t <= per; ++t) {
      const Index b = i * per + t - 1;
      Index r = 0;
      for (Index j : covariate_nodes) s.inputs(r++, b) = ds.covariates(i, j);
      if (K > 0) {
        const Matrix& post = (*filtered)[static_cast<std::size_t>(i)];
        if (post.rows() < t || post.cols() != K) throw std::invalid_argument("make_samples: posterior too short");
        Index best = 0;
        for (Index k = 0; k < K; ++k) {
          s.inputs(r++, b) = post(t - 1, k);
          if (post(t - 1, k) > post(t - 1, best)) best = k;
        }
        s.strata(b) = static_cast<int>(best) + 1;
      } else {
        s.strata(b) = ds.treatment(i) + 1;
      }
      s.inputs(r, b) = ds.treatment(i);
      for (std::size_t h = 0; h < offsets.size(); ++h) {
        s.targets(b, static_cast<Index>(h)) = ds.outcomes(i, t - 1 + offsets[h]);
      }
    }
  }
  return s;
}

namespace {

// |corr| between the rows of x; zero where a row has no variance.
Matrix abs_correlation(const Matrix& x) {
  const Index N = x.rows();
  Matrix c = x.colwise() - x.rowwise().mean();
  const Vector norm = c.rowwise().norm();
  Matrix r = Matrix::Zero(N, N);
  if (x.cols() < 2) return r;
  const Matrix g = c * c.transpose();
  for (Index a = 0; a < N; ++a) {
    for (Index b = 0; b < N; ++b) {
      if (a != b && norm(a) > 1e-12 * std::sqrt(static_cast<double>(x.cols())) && norm(b) > 1e-12 * std::sqrt(static_cast<double>(x.cols()))) {
        r(a, b) = std::min(1.0, std::abs(g(a, b)) / (norm(a) * norm(b)));
      }
    }
  }
  return r;
}

void prune(Matrix& a, double threshold) {
  a = (a.array() >= threshold).select(a, 0.0);
  a.diagonal().setZero();
  a = 0.5 * (a + a.transpose()).eval();
}

}  // namespace

GraphSpec build_graphs(const Samples& train, double threshold) {
  if (train.inputs.cols() == 0) throw std::invalid_argument("build_graphs: no samples");
  const Index N = train.inputs.rows();
  GraphSpec g;
  g.node_count = N;
  Matrix all = abs_correlation(train.inputs);
  prune(all, threshold);

  std::map<int, std::vector<Index>> groups;
  for (Index b = 0; b < train.strata.size(); ++b) groups[train.strata(b)].push_back(b);
  Matrix within = Matrix::Zero(N, N);
  double total = 0.0;
  for (const auto& [label, ids] : groups) {
    if (ids.size() < 3) continue;
    Matrix xs(N, static_cast<Index>(ids.size()));
    for (std::size_t k = 0; k < ids.size(); ++k) xs.col(static_cast<Index>(k)) = train.inputs.col(ids[k]);
    within += static_cast<double>(ids.size()) * abs_correlation(xs);
    total += static_cast<double>(ids.size());
  }
  if (total > 0.0) within /= total;
  prune(within, threshold);
  g.adjacencies = {std::move(all), std::move(within)};
  return g;
}

Index MtgcnModel::parameter_count() const {
  Index count = 0;
  for (const auto& layer : W) {
    for (const auto& w : layer) count += w.size();
  }
  count += tasks * (1 + nodes + nodes * hidden);
  return count;
}

void MtgcnModel::validate() const {
  if (nodes < 1 || views < 1 || layers < 1 || hidden < 1 || tasks < 1) throw std::invalid_argument("mtgcn: bad shape");
  if (static_cast<int>(W.size()) != layers) throw std::invalid_argument("mtgcn: layer count mismatch");
  for (int l = 0; l < layers; ++l) {
    const Index cin = l == 0 ? 1 : hidden;
    if (static_cast<int>(W[static_cast<std::size_t>(l)].size()) != views) throw std::invalid_argument("mtgcn: view count mismatch");
    for (const auto& w : W[static_cast<std::size_t>(l)]) {
      if (w.rows() != cin || w.cols() != hidden || !w.allFinite()) throw std::invalid_argument("mtgcn: bad layer weight");
    }
  }
  if (bias.size() != tasks || skip.rows() != nodes || skip.cols() != tasks ||
      static_cast<int>(readout.size()) != tasks) {
    throw std::invalid_argument("mtgcn: bad readout shape");
  }
  for (const auto& r : readout) {
    if (r.rows() != nodes || r.cols() != hidden || !r.allFinite()) throw std::invalid_argument("mtgcn: bad readout");
  }
  if (input_mean.size() != nodes || input_scale.size() != nodes || target_mean.size() != tasks ||
      target_scale.size() != tasks) {
    throw std::invalid_argument("mtgcn: bad scaling");
  }
}

MtgcnModel init_model(Index nodes, int views, int tasks, std::uint64_t seed, int layers, int hidden,
                      Activation activation) {
  MtgcnModel m;
  m.nodes = nodes;
  m.views = views;
  m.tasks = tasks;
  m.layers = layers;
  m.hidden = hidden;
  m.activation = activation;
  Rng rng(seed);
  m.W.resize(static_cast<std::size_t>(layers));
  for (int l = 0; l < layers; ++l) {
    const Index cin = l == 0 ? 1 : hidden;
    const double limit = std::sqrt(6.0 / static_cast<double>(cin + hidden));
    for (int v = 0; v < views; ++v) {
      Matrix w(cin, hidden);
      for (Index k = 0; k < w.size(); ++k) w(k) = limit * (2.0 * uniform01(rng) - 1.0);
      m.W[static_cast<std::size_t>(l)].push_back(std::move(w));
    }
  }
  m.bias = Vector::Zero(tasks);
  m.skip = Matrix::Zero(nodes, tasks);
  const double rs = 0.1 / std::sqrt(static_cast<double>(nodes * hidden));
  for (int h = 0; h < tasks; ++h) {
    Matrix r(nodes, hidden);
    for (Index k = 0; k < r.size(); ++k) r(k) = rs * standard_normal(rng);
    m.readout.push_back(std::move(r));
  }
  m.input_mean = Vector::Zero(nodes);
  m.input_scale = Vector::Ones(nodes);
  m.target_mean = Vector::Zero(tasks);
  m.target_scale = Vector::Ones(tasks);
  return m;
}

void fit_scaling(MtgcnModel& model, const Samples& train) {
  if (train.inputs.rows() != model.nodes || train.targets.cols() != model.tasks) {
    throw std::invalid_argument("fit_scaling: shape mismatch");
  }
  const Index B = train.inputs.cols();
  if (B < 2) throw std::invalid_argument("fit_scaling: need at least two samples");
  auto sd = [B](const auto& row, double mean) {
    const double s = std::sqrt((row.array() - mean).square().sum() / static_cast<double>(B));
    return s > 1e-12 ? s : 1.0;
  };
  for (Index n = 0; n < model.nodes; ++n) {
    model.input_mean(n) = train.inputs.row(n).mean();
    model.input_scale(n) = sd(train.inputs.row(n), model.input_mean(n));
  }
  for (Index h = 0; h < model.tasks; ++h) {
    model.target_mean(h) = train.targets.col(h).mean();
    model.target_scale(h) = sd(train.targets.col(h), model.target_mean(h));
  }
}

Vector pack(const MtgcnModel& m) {
  Vector p(m.parameter_count());
  Index k = 0;
  auto put = [&](const auto& x) {
    p.segment(k, x.size()) = Eigen::Map<const Vector>(x.data(), x.size());
    k += x.size();
  };
  for (const auto& layer : m.W) {
    for (const auto& w : layer) put(w);
  }
  for (int h = 0; h < m.tasks; ++h) {
    p(k++) = m.bias(h);
    put(Vector(m.skip.col(h)));
    put(m.readout[static_cast<std::size_t>(h)]);
  }
  return p;
}

void unpack(MtgcnModel& m, const Eigen::Ref<const Vector>& p) {
  if (p.size() != m.parameter_count()) throw std::invalid_argument("unpack: wrong parameter count");
  Index k = 0;
  auto get = [&](auto& x) {
    Eigen::Map<Vector>(x.data(), x.size()) = p.segment(k, x.size());
    k += x.size();
  };
  for (auto& layer : m.W) {
    for (auto& w : layer) get(w);
  }
  for (int h = 0; h < m.tasks; ++h) {
    m.bias(h) = p(k++);
    m.skip.col(h) = p.segment(k, m.nodes);
    k += m.nodes;
    get(m.readout[static_cast<std::size_t>(h)]);
  }
}

std::vector<std::pair<Index, Index>> parameter_groups(const MtgcnModel& m) {
  std::vector<std::pair<Index, Index>> groups;
  Index k = 0;
  for (const auto& layer : m.W) {
    Index len = 0;
    for (const auto& w : layer) len += w.size();
    groups.emplace_back(k, k + len);
    k += len;
  }
  groups.emplace_back(k, m.parameter_count());
  return groups;
}

namespace {

// Activations are stored as (nodes * samples) x channels, element (n, b, c)
// at n + N b + N B c. The same buffer viewed as N x (B * channels) is what
// the adjacency multiplies.
struct Cache {
  Matrix xs;                            // standardized inputs, N x B
  std::vector<Matrix> H;                // H[l], l = 0..L
  std::vector<std::vector<Matrix>> P;   // Ahat_v H[l]
  std::vector<std::vector<Matrix>> S;   // act(P W)
};

Eigen::Map<Matrix> node_view(Matrix& m, Index N) {
  return {m.data(), N, m.size() / N};
}

Eigen::Map<const Matrix> node_view(const Matrix& m, Index N) {
  return {m.data(), N, m.size() / N};
}

std::vector<Matrix> normalized(const MtgcnModel& m, const GraphSpec& g) {
  if (g.node_count != m.nodes || static_cast<int>(g.adjacencies.size()) != m.views) {
    throw std::invalid_argument("mtgcn: graphs do not match the model");
  }
  std::vector<Matrix> out;
  for (const auto& a : g.adjacencies) out.push_back(normalize_adjacency(a));
  return out;
}

// Standardized-unit outputs, samples x tasks.
Matrix run_forward(const MtgcnModel& m, const std::vector<Matrix>& ahat, const Eigen::Ref<const Matrix>& inputs,
                   Cache& c) {
  if (inputs.rows() != m.nodes) throw std::invalid_argument("mtgcn: input has wrong node count");
  const Index N = m.nodes;
  const Index B = inputs.cols();
  // Buffers are reused across calls with the same shapes.
  c.xs = (inputs.colwise() - m.input_mean).array().colwise() / m.input_scale.array();
  const auto layers = static_cast<std::size_t>(m.layers);
  const auto views = static_cast<std::size_t>(m.views);
  c.H.resize(layers + 1);
  c.P.resize(layers);
  c.S.resize(layers);
  c.H[0] = Eigen::Map<const Matrix>(c.xs.data(), N * B, 1);
  for (std::size_t L = 0; L < layers; ++L) {
    const Matrix& h = c.H[L];
    Matrix& next = c.H[L + 1];
    next.setZero(N * B, m.hidden);
    c.P[L].resize(views);
    c.S[L].resize(views);
    for (std::size_t v = 0; v < views; ++v) {
      Matrix& p = c.P[L][v];
      Matrix& s = c.S[L][v];
      p.resize(N * B, h.cols());
      node_view(p, N).noalias() = ahat[v] * node_view(h, N);
      s.noalias() = p * m.W[L][v];
      // tanh via exp: Eigen vectorizes exp but not tanh for doubles.
      if (m.activation == Activation::Tanh) s.array() = 1.0 - 2.0 / ((2.0 * s.array()).exp() + 1.0);
      next += s;
    }
  }
  const auto top = node_view(c.H.back(), N);
  Matrix out = c.xs.transpose() * m.skip;
  out.rowwise() += m.bias.transpose();
  for (int h = 0; h < m.tasks; ++h) {
    const Matrix& r = m.readout[static_cast<std::size_t>(h)];
    for (Index ch = 0; ch < m.hidden; ++ch) {
      out.col(h).noalias() += top.middleCols(B * ch, B).transpose() * r.col(ch);
    }
  }
  return out;
}

Vector run_backward(const MtgcnModel& m, const std::vector<Matrix>& ahat, const Cache& c, const Matrix& d_out) {
  const Index N = m.nodes;
  const Index B = c.xs.cols();
  MtgcnModel g = m;  // gradient in model layout
  Matrix d_top = Matrix::Zero(N * B, m.hidden);
  auto d_top_view = node_view(d_top, N);
  const auto top = node_view(c.H.back(), N);
  for (int h = 0; h < m.tasks; ++h) {
    const auto hs = static_cast<std::size_t>(h);
    g.bias(h) = d_out.col(h).sum();
    g.skip.col(h).noalias() = c.xs * d_out.col(h);
    for (Index ch = 0; ch < m.hidden; ++ch) {
      g.readout[hs].col(ch).noalias() = top.middleCols(B * ch, B) * d_out.col(h);
      d_top_view.middleCols(B * ch, B).noalias() += m.readout[hs].col(ch) * d_out.col(h).transpose();
    }
  }
  Matrix d_h = std::move(d_top);
  for (int l = m.layers - 1; l >= 0; --l) {
    const auto L = static_cast<std::size_t>(l);
    Matrix d_prev = Matrix::Zero(N * B, c.H[L].cols());
    for (int v = 0; v < m.views; ++v) {
      const auto V = static_cast<std::size_t>(v);
      Matrix dq = d_h;
      if (m.activation == Activation::Tanh) dq.array() *= 1.0 - c.S[L][V].array().square();
      g.W[L][V].noalias() = c.P[L][V].transpose() * dq;
      if (l > 0) {
        Matrix dp = dq * m.W[L][V].transpose();
        node_view(d_prev, N).noalias() += ahat[V].transpose() * node_view(dp, N);
      }
    }
    d_h = std::move(d_prev);
  }
  return pack(g);
}

}  // namespace

Matrix forward(const MtgcnModel& model, const GraphSpec& graphs, const Eigen::Ref<const Matrix>& inputs) {
  Cache c;
  Matrix out = run_forward(model, normalized(model, graphs), inputs, c);
  out = out.array().rowwise() * model.target_scale.transpose().array();
  out.rowwise() += model.target_mean.transpose();
  return out;
}

double loss(const MtgcnModel& model, const GraphSpec& graphs, const Samples& data, Vector* gradient) {
  if (data.inputs.cols() != data.targets.rows() || data.targets.cols() != model.tasks) {
    throw std::invalid_argument("mtgcn loss: shape mismatch");
  }
  const Index B = data.inputs.cols();
  if (B == 0) throw std::invalid_argument("mtgcn loss: no samples");
  const auto ahat = normalized(model, graphs);
  Cache c;
  const Matrix out = run_forward(model, ahat, data.inputs, c);
  Matrix ys = (data.targets.rowwise() - model.target_mean.transpose()).array().rowwise() /
              model.target_scale.transpose().array();
  const Matrix resid = out - ys;
  const double count = static_cast<double>(resid.size());
  const double value = resid.squaredNorm() / count;
  if (gradient) *gradient = run_backward(model, ahat, c, 2.0 * resid / count);
  return value;
}

GradientCheck gradient_check(const MtgcnModel& model, const GraphSpec& graphs, const Samples& data, int probes,
                             std::uint64_t seed, double h) {
  GradientCheck result;
  Vector grad;
  loss(model, graphs, data, &grad);
  const Vector base = pack(model);
  MtgcnModel work = model;
  Rng rng(seed);
  for (const auto& [begin, end] : parameter_groups(model)) {
    for (int k = 0; k < probes; ++k) {
      Vector u = Vector::Zero(base.size());
      for (Index j = begin; j < end; ++j) u(j) = standard_normal(rng);
      u /= u.norm();
      unpack(work, base + h * u);
      const double up = loss(work, graphs, data);
      unpack(work, base - h * u);
      const double down = loss(work, graphs, data);
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = grad.dot(u);
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-10});
      result.max_relative_error = std::max(result.max_relative_error, std::abs(analytic - numeric) / denom);
      ++result.probes;
    }
  }
  return result;
}

TrainResult train(MtgcnModel& model, const GraphSpec& graphs, const Samples& data, const TrainOptions& opts) {
  model.validate();
  graphs.validate();
  if (data.inputs.cols() != data.targets.rows() || data.targets.cols() != model.tasks) {
    throw std::invalid_argument("mtgcn train: shape mismatch");
  }
  TrainResult res;
  if (opts.check_gradients) {
    // Derivative code does not depend on the batch size, so a leading slice
    // of the samples checks it at a fraction of the cost.
    const Index k = std::min<Index>(data.inputs.cols(), opts.gradient_samples);
    const Samples head{data.inputs.leftCols(k), data.targets.topRows(k), data.strata.head(k)};
    res.gradient = gradient_check(model, graphs, head, opts.gradient_probes, opts.seed);
    if (!(res.gradient.max_relative_error < opts.gradient_tolerance)) {
      throw std::logic_error("mtgcn: analytic gradient disagrees with finite differences (relative error " +
                             std::to_string(res.gradient.max_relative_error) + ")");
    }
  }
  const auto ahat = normalized(model, graphs);
  const Matrix ys = (data.targets.rowwise() - model.target_mean.transpose()).array().rowwise() /
                    model.target_scale.transpose().array();
  const double count = static_cast<double>(ys.size());
  Cache cache;
  Matrix resid = run_forward(model, ahat, data.inputs, cache) - ys;
  double current = resid.squaredNorm() / count;
  res.loss_trace.push_back(current);
  if (!std::isfinite(current) || current > 1e6) throw EstimationError("mtgcn: initial loss diverged");
  Vector grad = run_backward(model, ahat, cache, 2.0 * resid / count);

  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  Vector theta = pack(model);
  Vector m1 = Vector::Zero(theta.size());
  Vector m2 = Vector::Zero(theta.size());
  double lr = opts.learning_rate;
  int adam_t = 0;  // steps since the moments were last reset
  MtgcnModel trial = model;
  // Backtracks from the current rate until the loss does not rise.
  auto try_step = [&](const Vector& step) {
    for (int attempt = 0; attempt < 40; ++attempt) {
      unpack(trial, theta - lr * step);
      Matrix r = run_forward(trial, ahat, data.inputs, cache) - ys;
      const double next = r.squaredNorm() / count;
      if (!std::isfinite(next) || next > 1e6) {
        if (attempt == 39) throw EstimationError("mtgcn: training diverged");
      } else if (next <= current) {
        theta = pack(trial);
        grad = run_backward(trial, ahat, cache, 2.0 * r / count);
        current = next;
        return true;
      }
      lr *= 0.5;
      ++res.rejected_steps;
    }
    return false;
  };
  auto adam_step = [&] {
    ++adam_t;
    m1 = beta1 * m1 + (1.0 - beta1) * grad;
    m2 = beta2 * m2 + (1.0 - beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1, adam_t);
    const double c2 = 1.0 - std::pow(beta2, adam_t);
    return Vector((m1 / c1).array() / ((m2 / c2).array().sqrt() + eps));
  };
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    bool accepted = try_step(adam_step());
    if (!accepted && adam_t > 1) {
      // Stale momentum can point uphill. A fresh first step is the sign of
      // the gradient, which always descends.
      m1.setZero();
      m2.setZero();
      adam_t = 0;
      lr = opts.learning_rate;
      accepted = try_step(adam_step());
    }
    res.epochs = epoch + 1;
    if (!accepted) break;  // no descent at any step size: stationary to working precision
    res.loss_trace.push_back(current);
    lr = std::min(opts.learning_rate, lr * 1.1);
    const auto w = static_cast<std::size_t>(opts.stop_window);
    if (opts.stop_tolerance > 0.0 && res.loss_trace.size() > w) {
      const double before = res.loss_trace[res.loss_trace.size() - 1 - w];
      if (before - current < opts.stop_tolerance * before) break;
    }
  }
  unpack(model, theta);
  return res;
}

double predictive_error(const MtgcnModel& model, const GraphSpec& graphs, const Samples& test) {
  if (test.inputs.cols() == 0) throw std::invalid_argument("predictive_error: empty test set");
  const Matrix pred = forward(model, graphs, test.inputs);
  return std::sqrt((pred.col(0) - test.targets.col(0)).squaredNorm() / static_cast<double>(pred.rows()));
}

}  // namespace drst::mtgcn
