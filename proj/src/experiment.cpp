#include "drst/experiment.hpp"

#include "drst/hmm.hpp"
#include "drst/propensity.hpp"
#include "drst/rng.hpp"
#include "drst/synth.hpp"
#include "drst/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

namespace drst {

std::string to_string(WeightSource w) {
  switch (w) {
    case WeightSource::Uniform: return "uniform";
    case WeightSource::El: return "el";
    case WeightSource::UniformFallback: return "uniform_fallback";
  }
  return "?";
}

namespace {

std::vector<bool> arm_rows(const Dataset& ds, int arm) {
  const Index H = ds.horizon();
  std::vector<bool> mask(static_cast<std::size_t>(ds.n() * H));
  for (Index i = 0; i < ds.n(); ++i) {
    for (Index t = 0; t < H; ++t) mask[static_cast<std::size_t>(i * H + t)] = ds.treatment(i) == arm;
  }
  return mask;
}

// Predictions of the fitted arm each unit belongs to.
Vector own_arm(const outcome::OutcomeFit& fit, const Matrix& features, const IntVector& t) {
  const Vector m0 = outcome::predict(fit, features, 0);
  const Vector m1 = outcome::predict(fit, features, 1);
  Vector out(t.size());
  for (Index i = 0; i < t.size(); ++i) out(i) = t(i) == 1 ? m1(i) : m0(i);
  return out;
}

struct PropensityFit {
  el::ElSolution sol;
  Vector e_train, e_test, test_weights;
  WeightSource weight_source = WeightSource::Uniform;
};

struct MtgcnRun {
  double pe = 0.0;
  std::vector<double> trace;
  Vector m0, m1;  // last-time predictions under each arm, when requested
};

}  // namespace

struct Pipeline::State {
  Dataset train;
  Dataset test;
  const ExperimentConfig& cfg;
  std::uint64_t seed;

  std::optional<outcome::OutcomeFit> static_fit;
  std::optional<hmm::HmmModel> hmm_model;
  std::vector<hmm::Posterior> train_post, test_post;
  std::optional<outcome::OutcomeFit> latent_fit;
  std::map<bool, PropensityFit> propensity_fits;  // keyed by latent covariates
  std::map<bool, MtgcnRun> mtgcn_runs;

  State(Dataset tr, Dataset te, const ExperimentConfig& c, std::uint64_t s)
      : train(std::move(tr)), test(std::move(te)), cfg(c), seed(s) {}

  outcome::OutcomeFit fit_outcome(const outcome::LatentFeatures& latent) {
    const Matrix f = outcome::build_pooled_features(train, latent, true);
    const Vector y = outcome::pooled_outcomes(train);
    outcome::ArmFitOptions opts = cfg.outcome;
    opts.intercept = latent.mode == outcome::LatentMode::None;
    opts.penalized.assign(static_cast<std::size_t>(f.cols()), false);
    std::fill_n(opts.penalized.begin(), train.p(), true);
    // The time trend is selected like a covariate: an unpenalized slope is
    // extrapolated to the last time point and inflates the arm contrast.
    opts.penalized.back() = true;
    outcome::OutcomeFit fit;
    fit.spec = outcome::feature_spec(train, latent, true);
    fit.arm0 = outcome::fit_arm_bic(f, y, arm_rows(train, 0), cfg.lambda_grid, cfg.scad_a, opts);
    fit.arm1 = outcome::fit_arm_bic(f, y, arm_rows(train, 1), cfg.lambda_grid, cfg.scad_a, opts);
    fit.lambda2 = fit.arm1.lambda;
    return fit;
  }

  const outcome::OutcomeFit& static_outcome() {
    if (!static_fit) static_fit = fit_outcome(outcome::LatentFeatures::none());
    return *static_fit;
  }

  // Y minus the static fit of the unit's own arm; free of the treatment
  // effect, so the HMM sees the latent-state signal plus noise.
  Matrix residuals(const Dataset& ds) {
    const auto& fit = static_outcome();
    Matrix r(ds.n(), ds.horizon());
    for (Index t = 1; t <= ds.horizon(); ++t) {
      const Matrix f = outcome::build_features(ds, outcome::LatentFeatures::none(), t, true);
      r.col(t - 1) = ds.outcomes.col(t - 1) - own_arm(fit, f, ds.treatment);
    }
    return r;
  }

  void ensure_hmm() {
    if (hmm_model) return;
    const int K = cfg.dgp.K;
    const Matrix r_train = residuals(train);
    std::vector<double> pooled(r_train.data(), r_train.data() + r_train.size());
    std::sort(pooled.begin(), pooled.end());
    const Eigen::Map<const Vector> pv(pooled.data(), static_cast<Index>(pooled.size()));
    const double sd = std::sqrt((pv.array() - pv.mean()).square().mean());
    hmm::HmmModel init;
    init.K = K;
    init.pi0 = Vector::Constant(K, 1.0 / K);
    init.A = K == 1 ? Matrix::Ones(1, 1) : Matrix::Constant(K, K, 0.3 / (K - 1));
    if (K > 1) init.A.diagonal().setConstant(0.7);
    init.emit_mean.resize(K);
    init.emit_sd = Vector::Constant(K, sd > 0.0 ? sd : 1.0);
    for (int k = 0; k < K; ++k) {
      const auto q = static_cast<std::size_t>((k + 0.5) / K * static_cast<double>(pooled.size() - 1));
      init.emit_mean(k) = pooled[q];
    }
    auto bw = hmm::baum_welch(init, r_train, cfg.hmm);
    hmm_model = bw.model;
    for (Index i = 0; i < train.n(); ++i) train_post.push_back(hmm::forward_backward(*hmm_model, r_train.row(i).transpose()));
    const Matrix r_test = residuals(test);
    for (Index i = 0; i < test.n(); ++i) test_post.push_back(hmm::forward_backward(*hmm_model, r_test.row(i).transpose()));
  }

  static outcome::LatentFeatures smoothed(const std::vector<hmm::Posterior>& post) {
    std::vector<Matrix> m;
    for (const auto& p : post) m.push_back(p.smoothed);
    return outcome::LatentFeatures::from_posteriors(std::move(m));
  }

  static std::vector<Matrix> filtered(const std::vector<hmm::Posterior>& post) {
    std::vector<Matrix> m;
    for (const auto& p : post) m.push_back(p.filtered);
    return m;
  }

  const outcome::OutcomeFit& latent_outcome() {
    if (!latent_fit) {
      latent_fit = fit_outcome(latent_features(true));
    }
    return *latent_fit;
  }

  outcome::LatentFeatures latent_features(bool train_side) {
    ensure_hmm();
    const auto& post = train_side ? train_post : test_post;
    if (cfg.latent_features == outcome::LatentMode::Soft) return smoothed(post);
    const Dataset& ds = train_side ? train : test;
    const Matrix r = residuals(ds);
    IntMatrix paths(ds.n(), ds.horizon());
    for (Index i = 0; i < ds.n(); ++i) paths.row(i) = hmm::viterbi(*hmm_model, r.row(i).transpose()).transpose();
    return outcome::LatentFeatures::from_states(std::move(paths), cfg.dgp.K);
  }

  // Covariates, then with `latent` the time-averaged smoothed posteriors of
  // the first K-1 states.
  Matrix propensity_covariates(const Dataset& ds, const std::vector<hmm::Posterior>* post) const {
    if (!post) return ds.covariates;
    const Index K = cfg.dgp.K;
    Matrix x(ds.n(), ds.p() + K - 1);
    x.leftCols(ds.p()) = ds.covariates;
    for (Index i = 0; i < ds.n(); ++i) {
      x.row(i).tail(K - 1) = (*post)[static_cast<std::size_t>(i)].smoothed.colwise().mean().head(K - 1);
    }
    return x;
  }

  const PropensityFit& propensity(bool latent) {
    auto it = propensity_fits.find(latent);
    if (it != propensity_fits.end()) return it->second;
    if (latent) ensure_hmm();
    const Matrix x_train = propensity_covariates(train, latent ? &train_post : nullptr);
    const Matrix x_test = propensity_covariates(test, latent ? &test_post : nullptr);
    auto sel = el::select_propensity_bic(x_train, train.treatment, cfg.lambda_grid, cfg.scad_a, cfg.el);
    if (!sel.best.converged) throw EstimationError("propensity: no lambda gave a converged EL fit");
    PropensityFit pf;
    pf.sol = std::move(sel.best);
    const PropensityModel model = pf.sol.model();
    pf.e_train = score_all(model, x_train);
    pf.e_test = score_all(model, x_test);

    // Balance on the test units over the intercept and the covariates the
    // fit kept; the full covariate set is typically infeasible there.
    std::vector<Index> cols{0};
    for (Index j = 1; j < pf.sol.theta.size(); ++j) {
      if (pf.sol.theta(j) != 0.0) cols.push_back(j);
    }
    const Matrix design = design_matrix(x_test, true);
    Matrix G(test.n(), static_cast<Index>(cols.size()));
    for (Index i = 0; i < test.n(); ++i) {
      for (std::size_t c = 0; c < cols.size(); ++c) {
        G(i, static_cast<Index>(c)) = (test.treatment(i) - pf.e_test(i)) * design(i, cols[c]);
      }
    }
    try {
      pf.test_weights = el::solve_inner_weights(G, cfg.el.inner).weights;
      pf.weight_source = WeightSource::El;
    } catch (const InfeasibleConstraints&) {
      pf.test_weights = Vector::Constant(test.n(), 1.0 / static_cast<double>(test.n()));
      pf.weight_source = WeightSource::UniformFallback;
    }
    return propensity_fits[latent] = std::move(pf);
  }

  std::vector<Index> selected_covariates() {
    const auto& fit = static_outcome();
    std::vector<Index> sel;
    for (Index j = 0; j < train.p(); ++j) {
      if (fit.arm0.coef(j) != 0.0 || fit.arm1.coef(j) != 0.0) sel.push_back(j);
    }
    return sel;
  }

  const MtgcnRun& mtgcn_run(bool latent, bool outcome_predictions) {
    auto it = mtgcn_runs.find(latent);
    if (it != mtgcn_runs.end() && (!outcome_predictions || it->second.m0.size() > 0)) return it->second;
    const auto nodes = selected_covariates();
    std::vector<Matrix> f_train, f_test;
    if (latent) {
      ensure_hmm();
      f_train = filtered(train_post);
      f_test = filtered(test_post);
    }
    const auto& ms = cfg.mtgcn;
    const auto s_train = mtgcn::make_samples(train, latent ? &f_train : nullptr, nodes, ms.offsets);
    const auto s_test = mtgcn::make_samples(test, latent ? &f_test : nullptr, nodes, ms.offsets);
    const auto graphs = mtgcn::build_graphs(s_train, ms.threshold);
    const std::uint64_t s = derive_seed(seed, 0, latent ? "mtgcn/latent" : "mtgcn/static");
    auto model = mtgcn::init_model(s_train.inputs.rows(), static_cast<int>(graphs.adjacencies.size()),
                                   static_cast<int>(ms.offsets.size()), s, ms.layers, ms.hidden, ms.activation);
    mtgcn::fit_scaling(model, s_train);
    mtgcn::TrainOptions topts = ms.train;
    topts.seed = s;
    const auto tr = mtgcn::train(model, graphs, s_train, topts);
    MtgcnRun run;
    run.pe = mtgcn::predictive_error(model, graphs, s_test);
    run.trace = tr.loss_trace;
    if (outcome_predictions) {
      // Predict the last time point from the step before it, under each arm.
      const int off = ms.offsets.front();
      const Index per = test.horizon() - *std::max_element(ms.offsets.begin(), ms.offsets.end());
      const Index t_from = test.horizon() - off;
      if (t_from > per) throw std::invalid_argument("mtgcn_outcome: task offsets leave no sample at the last time");
      for (int arm = 0; arm <= 1; ++arm) {
        Dataset d = test;
        d.treatment.setConstant(arm);
        const auto s_arm = mtgcn::make_samples(d, latent ? &f_test : nullptr, nodes, ms.offsets);
        Matrix in(s_arm.inputs.rows(), test.n());
        for (Index i = 0; i < test.n(); ++i) in.col(i) = s_arm.inputs.col(i * per + t_from - 1);
        (arm == 0 ? run.m0 : run.m1) = mtgcn::forward(model, graphs, in).col(0);
      }
    }
    return mtgcn_runs[latent] = std::move(run);
  }

  // (target, time of target) pairs of the first task over the test units.
  double static_pe() {
    const auto& fit = static_outcome();
    const int off = cfg.mtgcn.offsets.front();
    const int max_off = *std::max_element(cfg.mtgcn.offsets.begin(), cfg.mtgcn.offsets.end());
    double ss = 0.0;
    Index count = 0;
    for (Index t = 1; t + max_off <= test.horizon(); ++t) {
      const Matrix f = outcome::build_features(test, outcome::LatentFeatures::none(), t + off, true);
      const Vector pred = own_arm(fit, f, test.treatment);
      ss += (test.outcomes.col(t + off - 1) - pred).squaredNorm();
      count += test.n();
    }
    if (count == 0) throw std::invalid_argument("predictive error: no next-step pairs");
    return std::sqrt(ss / static_cast<double>(count));
  }

  double ipw_mean_pe() {
    const Vector& e_train = propensity(false).e_train;
    const int off = cfg.mtgcn.offsets.front();
    const int max_off = *std::max_element(cfg.mtgcn.offsets.begin(), cfg.mtgcn.offsets.end());
    double num[2] = {0.0, 0.0}, den[2] = {0.0, 0.0};
    for (Index i = 0; i < train.n(); ++i) {
      const int a = train.treatment(i);
      const double w = a == 1 ? 1.0 / e_train(i) : 1.0 / (1.0 - e_train(i));
      for (Index t = 1; t + max_off <= train.horizon(); ++t) {
        num[a] += w * train.outcomes(i, t + off - 1);
        den[a] += w;
      }
    }
    double ss = 0.0;
    Index count = 0;
    for (Index i = 0; i < test.n(); ++i) {
      const int a = test.treatment(i);
      const double pred = den[a] > 0.0 ? num[a] / den[a] : 0.0;
      for (Index t = 1; t + max_off <= test.horizon(); ++t) {
        const double d = test.outcomes(i, t + off - 1) - pred;
        ss += d * d;
        ++count;
      }
    }
    if (count == 0) throw std::invalid_argument("predictive error: no next-step pairs");
    return std::sqrt(ss / static_cast<double>(count));
  }

  dr::DrEstimate finish(dr::DrEstimate est, const std::string& method) const {
    if (cfg.bootstrap) dr::use_bootstrap_interval(est, cfg.bootstrap_resamples, derive_seed(seed, 0, "bootstrap/" + method));
    return est;
  }
};

Pipeline::Pipeline(Dataset train, Dataset test, const ExperimentConfig& cfg, std::uint64_t stream_seed)
    : s_(std::make_unique<State>(std::move(train), std::move(test), cfg, stream_seed)) {}

Pipeline::~Pipeline() = default;

PipelineOutput Pipeline::run(const std::string& method) {
  auto& s = *s_;
  const Index n = s.test.n();
  const Vector y = s.test.outcomes.col(s.test.horizon() - 1);
  const Index H = s.test.horizon();
  const auto formula = s.cfg.formula;
  PipelineOutput out;
  auto static_m = [&](int arm) {
    const Matrix f = outcome::build_features(s.test, outcome::LatentFeatures::none(), H, true);
    return outcome::predict(s.static_outcome(), f, arm);
  };
  auto record_outcome = [&](const outcome::OutcomeFit& fit) {
    out.lambda_outcome0 = fit.arm0.lambda;
    out.lambda_outcome1 = fit.arm1.lambda;
  };

  if (method == "proposed") {
    const auto& pf = s.propensity(s.cfg.propensity_latent);
    const auto& fit = s.latent_outcome();
    record_outcome(fit);
    const auto& mt = s.mtgcn_run(true, s.cfg.mtgcn_outcome);
    Vector m0, m1;
    if (s.cfg.mtgcn_outcome) {
      m0 = mt.m0;
      m1 = mt.m1;
    } else {
      const Matrix f = outcome::build_features(s.test, s.latent_features(false), H, true);
      m0 = outcome::predict(fit, f, 0);
      m1 = outcome::predict(fit, f, 1);
    }
    out.estimate = s.finish(dr::estimate_weighted(s.test.treatment, y, pf.test_weights, pf.e_test, m0, m1, formula), method);
    out.weights = pf.weight_source;
    out.lambda_propensity = pf.sol.lambda;
    out.pe = mt.pe;
    out.loss_trace = mt.trace;
  } else if (method == "ipw_only") {
    const auto& pf = s.propensity(false);
    const Vector zero = Vector::Zero(n);
    out.estimate = s.finish(dr::estimate(s.test.treatment, y, pf.e_test, zero, zero, formula,
                                         dr::Components::PropensityOnly), method);
    out.lambda_propensity = pf.sol.lambda;
    out.pe = s.ipw_mean_pe();
  } else if (method == "outcome_only") {
    record_outcome(s.static_outcome());
    const Vector half = Vector::Constant(n, 0.5);
    out.estimate = s.finish(dr::estimate(s.test.treatment, y, half, static_m(0), static_m(1), formula,
                                         dr::Components::OutcomeOnly), method);
    out.pe = s.static_pe();
  } else if (method == "cbps_scad_static") {
    const auto& pf = s.propensity(false);
    record_outcome(s.static_outcome());
    out.estimate = s.finish(
        dr::estimate_weighted(s.test.treatment, y, pf.test_weights, pf.e_test, static_m(0), static_m(1), formula), method);
    out.weights = pf.weight_source;
    out.lambda_propensity = pf.sol.lambda;
    out.pe = s.static_pe();
  } else if (method == "mtgcn_only") {
    const auto& mt = s.mtgcn_run(false, false);
    out.pe = mt.pe;
    out.loss_trace = mt.trace;
  } else {
    throw std::invalid_argument("unknown method '" + method + "'");
  }
  return out;
}

PipelineOutput method_pipeline(const std::string& name, const Dataset& train, const Dataset& test,
                               const ExperimentConfig& cfg, std::uint64_t stream_seed) {
  Pipeline p(train, test, cfg, stream_seed);
  return p.run(name);
}

std::vector<MethodResult> run_replication(const ExperimentConfig& cfg, int r) {
  std::vector<MethodResult> results;
  synth::DgpConfig dgp = cfg.dgp;
  dgp.seed = cfg.seed + static_cast<std::uint64_t>(r);
  for (const auto& m : cfg.methods) {
    MethodResult res;
    res.replication = r;
    res.method = m;
    res.dgp_seed = dgp.seed;
    results.push_back(std::move(res));
  }
  std::unique_ptr<Pipeline> pipe;
  try {
    const Dataset ds = synth::generate(dgp);
    const SplitIndex sp = split(ds, cfg.train_fraction, derive_seed(cfg.seed, static_cast<std::uint64_t>(r), "split"));
    pipe = std::make_unique<Pipeline>(subset(ds, sp.train_ids), subset(ds, sp.test_ids), cfg,
                                      derive_seed(cfg.seed, static_cast<std::uint64_t>(r), "methods"));
  } catch (const std::exception& e) {
    for (auto& res : results) res.error = std::string("data generation failed: ") + e.what();
    return results;
  }
  for (auto& res : results) {
    try {
      res.output = pipe->run(res.method);
      res.ok = true;
    } catch (const std::exception& e) {
      res.error = e.what();
    }
  }
  return results;
}

namespace {

std::string cell(double v) {
  return std::isfinite(v) ? text::format_double(v) : std::string();
}

std::string clean(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_outputs(const ExperimentConfig& cfg, const RunSummary& sum) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.output_dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + cfg.output_dir.string() + ": " + ec.message());
  {
    auto out = open_out(cfg.output_dir / "replications.csv");
    out << "replication,method,dgp_seed,status,tau_hat,se,ci_low,ci_high,covered,pe,weights,lambda_propensity,"
           "lambda_outcome0,lambda_outcome1,error\n";
    for (const auto& r : sum.results) {
      const auto& o = r.output;
      out << r.replication << ',' << r.method << ',' << r.dgp_seed << ',' << (r.ok ? "ok" : "failed") << ',';
      if (r.ok && o.estimate) {
        const auto& e = *o.estimate;
        out << cell(e.tau_hat) << ',' << cell(e.se) << ',' << cell(e.ci_low) << ',' << cell(e.ci_high) << ','
            << (e.covers(cfg.dgp.treatment_effect) ? 1 : 0) << ',';
      } else {
        out << ",,,,,";
      }
      out << (r.ok && o.pe ? cell(*o.pe) : std::string()) << ',' << (r.ok && o.estimate ? to_string(o.weights) : "")
          << ',' << cell(o.lambda_propensity) << ',' << cell(o.lambda_outcome0) << ',' << cell(o.lambda_outcome1)
          << ',' << clean(r.error) << '\n';
    }
  }
  {
    auto out = open_out(cfg.output_dir / "traces.csv");
    out << "replication,method,step,loss\n";
    for (const auto& r : sum.results) {
      for (std::size_t k = 0; k < r.output.loss_trace.size(); ++k) {
        out << r.replication << ',' << r.method << ',' << k << ',' << cell(r.output.loss_trace[k]) << '\n';
      }
    }
  }
  {
    auto out = open_out(cfg.output_dir / "metrics.csv");
    metrics::write_csv(out, sum.table);
  }
  {
    auto out = open_out(cfg.output_dir / "metrics.txt");
    metrics::write_text(out, sum.table);
  }
  {
    nlohmann::ordered_json j;
    j["program"] = "drst";
    j["version"] = "1.0.0";
    j["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                 std::to_string(EIGEN_MINOR_VERSION);
    j["compiler"] = __VERSION__;
    j["config"] = to_config_text(cfg);
    j["seed_rule"] = "dataset seed = seed + replication; split and method streams derive from (seed, replication, name)";
    auto reps = nlohmann::ordered_json::array();
    for (int r = 0; r < cfg.replications; ++r) {
      reps.push_back({{"replication", r},
                      {"dgp_seed", cfg.seed + static_cast<std::uint64_t>(r)},
                      {"split_seed", derive_seed(cfg.seed, static_cast<std::uint64_t>(r), "split")},
                      {"method_seed", derive_seed(cfg.seed, static_cast<std::uint64_t>(r), "methods")}});
    }
    j["replications"] = reps;
    auto fails = nlohmann::ordered_json::array();
    for (const auto& r : sum.results) {
      if (!r.ok) {
        fails.push_back({{"replication", r.replication}, {"method", r.method}, {"dgp_seed", r.dgp_seed}, {"error", r.error}});
      }
    }
    j["failure_count"] = sum.failures;
    j["failures"] = fails;
    j["files"] = {"replications.csv", "traces.csv", "metrics.csv", "metrics.txt", "manifest.json"};
    auto out = open_out(cfg.output_dir / "manifest.json");
    out << j.dump(2) << '\n';
  }
}

}  // namespace

RunSummary run(const ExperimentConfig& cfg, bool write) {
  cfg.validate();
  std::vector<std::vector<MethodResult>> per(static_cast<std::size_t>(cfg.replications));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < cfg.replications; r = next++) per[static_cast<std::size_t>(r)] = run_replication(cfg, r);
  };
  const int nthreads = std::min(cfg.workers, cfg.replications);
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < nthreads; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  RunSummary sum;
  for (auto& rep : per) {
    for (auto& res : rep) sum.results.push_back(std::move(res));
  }
  for (const auto& m : cfg.methods) {
    std::vector<dr::DrEstimate> est;
    std::vector<double> pe;
    int failed = 0;
    for (const auto& r : sum.results) {
      if (r.method != m) continue;
      if (!r.ok) {
        ++failed;
        continue;
      }
      if (r.output.estimate) est.push_back(*r.output.estimate);
      if (r.output.pe) pe.push_back(*r.output.pe);
    }
    metrics::MetricRow row;
    if (!est.empty()) {
      row = metrics::aggregate(cfg.dgp.treatment_effect, est, pe, m);
    } else if (!pe.empty()) {
      row = metrics::prediction_only(pe, m);
    } else {
      constexpr double nan = std::numeric_limits<double>::quiet_NaN();
      row.method = m;
      row.bias = row.variance = row.mse = row.coverage_pct = row.pe = nan;
    }
    row.failures = failed;
    sum.failures += failed;
    sum.table.push_back(row);
  }
  if (write) write_outputs(cfg, sum);
  return sum;
}

}  // namespace drst
