#include "drst/config.hpp"

#include "drst/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace drst {

std::vector<double> default_lambda_grid() {
  return {0.01, 0.02, 0.03, 0.05, 0.08, 0.12, 0.18, 0.25, 0.35, 0.5};
}

void ExperimentConfig::validate() const {
  dgp.validate();
  if (replications < 1) throw ConfigError("replications must be >= 1");
  if (latent_features == outcome::LatentMode::None) throw ConfigError("latent_features must be soft or hard");
  if (methods.empty()) throw ConfigError("methods must not be empty");
  std::set<std::string> seen;
  for (const auto& m : methods) {
    if (std::find(kAllMethods.begin(), kAllMethods.end(), m) == kAllMethods.end()) {
      throw ConfigError("unknown method '" + m + "'");
    }
    if (!seen.insert(m).second) throw ConfigError("method '" + m + "' listed twice");
  }
  if (lambda_grid.empty()) throw ConfigError("lambda_grid must not be empty");
  for (double l : lambda_grid) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("lambda_grid entries must be >= 0");
  }
  if (!(scad_a > 2.0)) throw ConfigError("scad_a must be > 2");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (bootstrap && bootstrap_resamples < 2) throw ConfigError("bootstrap_resamples must be >= 2");
  if (mtgcn.layers < 1 || mtgcn.hidden < 1) throw ConfigError("mtgcn layers and hidden must be >= 1");
  if (mtgcn.offsets.empty()) throw ConfigError("mtgcn.offsets must not be empty");
  for (int o : mtgcn.offsets) {
    if (o < 1 || o >= dgp.horizon) throw ConfigError("mtgcn.offsets entries must lie in 1..horizon-1");
  }
  if (mtgcn.train.epochs < 0 || !(mtgcn.train.learning_rate > 0.0)) throw ConfigError("bad mtgcn training settings");
  if (!(mtgcn.train.stop_tolerance >= 0.0) || mtgcn.train.stop_window < 1) throw ConfigError("bad mtgcn stopping rule");
  if (mtgcn.train.gradient_probes < 1 || mtgcn.train.gradient_samples < 1) throw ConfigError("bad mtgcn gradient check");
}

ExperimentConfig quick_config() {
  ExperimentConfig cfg;
  cfg.dgp.n = 60;
  cfg.dgp.p = 6;
  cfg.dgp.block_size = 3;
  cfg.dgp.beta = synth::alternating_sparse(6, 4);
  cfg.replications = 2;
  cfg.mtgcn.train.epochs = 20;
  cfg.mtgcn.hidden = 8;
  return cfg;
}

namespace {

using Entries = std::map<std::string, std::string, std::less<>>;

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// Nested list of numbers. depth 1 -> vector, depth 2 -> matrix rows.
struct ListParser {
  std::string_view s;
  std::size_t pos = 0;

  void skip() {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  }
  bool eat(char c) {
    skip();
    if (pos < s.size() && s[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }
  double number() {
    skip();
    const std::size_t start = pos;
    while (pos < s.size() && s[pos] != ',' && s[pos] != ']' && s[pos] != '[') ++pos;
    return text::parse_double(s.substr(start, pos - start));
  }
  template <typename Item>
  std::vector<Item> list(Item (ListParser::*item)()) {
    if (!eat('[')) throw ConfigError("expected '['");
    std::vector<Item> out;
    if (eat(']')) return out;
    do {
      out.push_back((this->*item)());
    } while (eat(','));
    if (!eat(']')) throw ConfigError("expected ']'");
    return out;
  }
  std::vector<double> vec() { return list(&ListParser::number); }
  std::vector<std::vector<double>> mat() { return list(&ListParser::vec); }
  void done() {
    skip();
    if (pos != s.size()) throw ConfigError("trailing characters after list");
  }
};

Vector parse_vector(std::string_view v) {
  ListParser p{v};
  const auto xs = p.vec();
  p.done();
  return Eigen::Map<const Vector>(xs.data(), static_cast<Index>(xs.size()));
}

Matrix parse_matrix(std::string_view v) {
  ListParser p{v};
  const auto rows = p.mat();
  p.done();
  if (rows.empty()) return Matrix(0, 0);
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows.front().size()) throw ConfigError("ragged matrix literal");
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  }
  return m;
}

std::vector<std::string> parse_words(std::string_view v) {
  v = text::trim(v);
  if (!v.empty() && v.front() == '[') {
    if (v.back() != ']') throw ConfigError("expected ']'");
    v = v.substr(1, v.size() - 2);
  }
  std::vector<std::string> out;
  for (auto w : text::split(v, ',')) {
    w = text::trim(w);
    if (!w.empty()) out.emplace_back(w);
  }
  return out;
}

bool parse_bool(std::string_view v) {
  const std::string s = lower(text::trim(v));
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("expected a boolean, got '" + std::string(v) + "'");
}

Matrix default_transition(int K) {
  if (K == 1) return Matrix::Ones(1, 1);
  Matrix A = Matrix::Constant(K, K, 0.2 / (K - 1));
  A.diagonal().setConstant(0.8);
  return A;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text_in, ExperimentConfig cfg) {
  Entries e;
  int line_no = 0;
  for (auto line : text::split(text_in, '\n')) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = text::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key(text::trim(line.substr(0, eq)));
    const std::string value(text::trim(line.substr(eq + 1)));
    if (key.empty() || value.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key or value");
    if (!e.emplace(key, value).second) throw ConfigError("line " + std::to_string(line_no) + ": repeated key " + key);
  }

  std::set<std::string> used;
  auto take = [&](const std::string& key) -> const std::string* {
    const auto it = e.find(key);
    if (it == e.end()) return nullptr;
    used.insert(key);
    return &it->second;
  };
  auto wrap = [](const std::string& key, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError& ex) {
      throw ConfigError(key + ": " + ex.what());
    } catch (const std::invalid_argument& ex) {
      throw ConfigError(key + ": " + ex.what());
    }
  };
  auto real = [&](const std::string& key, double& out) {
    if (auto v = take(key)) wrap(key, [&] { out = text::parse_double(*v); });
  };
  auto integer = [&](const std::string& key, auto& out) {
    if (auto v = take(key)) {
      wrap(key, [&] {
        const long long x = text::parse_int(*v);
        if (x < 0 && std::is_unsigned_v<std::remove_reference_t<decltype(out)>>) throw ConfigError("must be >= 0");
        out = static_cast<std::remove_reference_t<decltype(out)>>(x);
      });
    }
  };
  auto flag = [&](const std::string& key, bool& out) {
    if (auto v = take(key)) wrap(key, [&] { out = parse_bool(*v); });
  };

  auto& d = cfg.dgp;
  const Index old_p = d.p;
  const int old_K = d.K;
  integer("n", d.n);
  integer("p", d.p);
  integer("horizon", d.horizon);
  integer("K", d.K);
  integer("block_size", d.block_size);
  real("within_block_rho", d.within_block_rho);
  real("treatment_effect", d.treatment_effect);
  real("noise_sd", d.noise_sd);
  real("treatment_intercept", d.treatment_intercept);
  integer("seed", cfg.seed);
  d.seed = cfg.seed;
  if (auto v = take("treatment_model")) {
    const std::string m = lower(*v);
    if (m == "nonlinear") d.treatment_model = synth::TreatmentModel::Nonlinear;
    else if (m == "sparse_logistic") d.treatment_model = synth::TreatmentModel::SparseLogistic;
    else throw ConfigError("treatment_model: expected nonlinear or sparse_logistic");
  }
  Index beta_nonzero = 10, treatment_nonzero = 10;
  double beta_magnitude = 1.0, treatment_magnitude = 1.0;
  const bool beta_shape = e.count("beta_nonzero") || e.count("beta_magnitude");
  const bool theta_shape = e.count("treatment_nonzero") || e.count("treatment_magnitude");
  integer("beta_nonzero", beta_nonzero);
  real("beta_magnitude", beta_magnitude);
  integer("treatment_nonzero", treatment_nonzero);
  real("treatment_magnitude", treatment_magnitude);

  if (auto v = take("beta")) {
    wrap("beta", [&] { d.beta = parse_vector(*v); });
  } else if (beta_shape || d.p != old_p || d.beta.size() != d.p) {
    d.beta = synth::alternating_sparse(d.p, beta_nonzero, beta_magnitude);
  }
  if (auto v = take("treatment_theta")) {
    wrap("treatment_theta", [&] { d.treatment_theta = parse_vector(*v); });
  } else if (theta_shape || (d.p != old_p && d.treatment_theta.size() > 0) ||
             (d.treatment_model == synth::TreatmentModel::SparseLogistic && d.treatment_theta.size() != d.p)) {
    d.treatment_theta = synth::alternating_sparse(d.p, treatment_nonzero, treatment_magnitude);
  }
  if (auto v = take("gamma")) {
    wrap("gamma", [&] { d.gamma = parse_vector(*v); });
  } else if (d.K != old_K) {
    d.gamma = Vector::LinSpaced(d.K, 1.0, static_cast<double>(d.K));
  }
  {
    Matrix A = d.K != old_K ? default_transition(d.K) : d.hmm.A;
    Vector pi0 = d.K != old_K ? Vector::Constant(d.K, 1.0 / d.K) : d.hmm.pi0;
    if (auto v = take("transition")) wrap("transition", [&] { A = parse_matrix(*v); });
    if (auto v = take("initial")) wrap("initial", [&] { pi0 = parse_vector(*v); });
    if (A.rows() != d.K || A.cols() != d.K || pi0.size() != d.K) {
      throw ConfigError("transition must be K x K and initial of length K");
    }
    wrap("transition", [&] { d.hmm = hmm::make_chain(A, pi0); });
  }

  integer("replications", cfg.replications);
  if (auto v = take("methods")) cfg.methods = parse_words(*v);
  if (auto v = take("lambda_grid")) {
    wrap("lambda_grid", [&] {
      const Vector g = parse_vector(*v);
      cfg.lambda_grid.assign(g.data(), g.data() + g.size());
    });
  }
  real("scad_a", cfg.scad_a);
  if (auto v = take("output_dir")) cfg.output_dir = *v;
  real("train_fraction", cfg.train_fraction);
  integer("workers", cfg.workers);
  if (auto v = take("dr_formula")) wrap("dr_formula", [&] { cfg.formula = dr::formula_from_string(lower(*v)); });
  flag("bootstrap", cfg.bootstrap);
  if (auto v = take("latent_features")) {
    const std::string a = lower(*v);
    if (a == "soft") cfg.latent_features = outcome::LatentMode::Soft;
    else if (a == "hard") cfg.latent_features = outcome::LatentMode::Hard;
    else throw ConfigError("latent_features: expected soft or hard");
  }
  flag("propensity_latent", cfg.propensity_latent);
  integer("bootstrap_resamples", cfg.bootstrap_resamples);

  integer("el.max_outer", cfg.el.max_outer);
  real("el.outer_tol", cfg.el.outer_tol);
  real("el.zero_threshold", cfg.el.zero_threshold);
  real("el.line_search_tol", cfg.el.line_search_tol);
  integer("el.inner_max_iter", cfg.el.inner.max_iter);
  real("el.inner_tol", cfg.el.inner.tol);
  integer("outcome.max_sweeps", cfg.outcome.max_sweeps);
  real("outcome.tol", cfg.outcome.tol);
  integer("hmm.max_iter", cfg.hmm.max_iter);
  real("hmm.tol", cfg.hmm.tol);
  integer("mtgcn.layers", cfg.mtgcn.layers);
  integer("mtgcn.hidden", cfg.mtgcn.hidden);
  if (auto v = take("mtgcn.activation")) {
    const std::string a = lower(*v);
    if (a == "tanh") cfg.mtgcn.activation = mtgcn::Activation::Tanh;
    else if (a == "linear") cfg.mtgcn.activation = mtgcn::Activation::Linear;
    else throw ConfigError("mtgcn.activation: expected tanh or linear");
  }
  real("mtgcn.threshold", cfg.mtgcn.threshold);
  if (auto v = take("mtgcn.offsets")) {
    wrap("mtgcn.offsets", [&] {
      const Vector o = parse_vector(*v);
      cfg.mtgcn.offsets.clear();
      for (Index k = 0; k < o.size(); ++k) {
        if (o(k) != std::floor(o(k))) throw ConfigError("offsets must be integers");
        cfg.mtgcn.offsets.push_back(static_cast<int>(o(k)));
      }
    });
  }
  integer("mtgcn.epochs", cfg.mtgcn.train.epochs);
  real("mtgcn.learning_rate", cfg.mtgcn.train.learning_rate);
  real("mtgcn.stop_tolerance", cfg.mtgcn.train.stop_tolerance);
  integer("mtgcn.stop_window", cfg.mtgcn.train.stop_window);
  flag("mtgcn.check_gradients", cfg.mtgcn.train.check_gradients);
  integer("mtgcn.gradient_probes", cfg.mtgcn.train.gradient_probes);
  integer("mtgcn.gradient_samples", cfg.mtgcn.train.gradient_samples);
  real("mtgcn.gradient_tolerance", cfg.mtgcn.train.gradient_tolerance);
  flag("mtgcn_outcome", cfg.mtgcn_outcome);

  for (const auto& [key, value] : e) {
    if (!used.count(key)) throw ConfigError("unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

namespace {

std::string vec_text(const Eigen::Ref<const Vector>& v) {
  std::string s = "[";
  for (Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + text::format_double(v(i));
  return s + "]";
}

std::string mat_text(const Matrix& m) {
  std::string s = "[";
  for (Index r = 0; r < m.rows(); ++r) s += (r ? ", " : "") + vec_text(m.row(r).transpose());
  return s + "]";
}

}  // namespace

std::string to_config_text(const ExperimentConfig& c) {
  const auto& d = c.dgp;
  std::ostringstream o;
  auto kv = [&o](const char* k, const std::string& v) { o << k << " = " << v << '\n'; };
  auto num = [](double v) { return text::format_double(v); };
  kv("n", std::to_string(d.n));
  kv("p", std::to_string(d.p));
  kv("horizon", std::to_string(d.horizon));
  kv("K", std::to_string(d.K));
  kv("block_size", std::to_string(d.block_size));
  kv("within_block_rho", num(d.within_block_rho));
  kv("transition", mat_text(d.hmm.A));
  kv("initial", vec_text(d.hmm.pi0));
  kv("gamma", vec_text(d.gamma));
  kv("beta", vec_text(d.beta));
  kv("treatment_effect", num(d.treatment_effect));
  kv("noise_sd", num(d.noise_sd));
  kv("treatment_model", d.treatment_model == synth::TreatmentModel::Nonlinear ? "nonlinear" : "sparse_logistic");
  if (d.treatment_theta.size() > 0) kv("treatment_theta", vec_text(d.treatment_theta));
  kv("treatment_intercept", num(d.treatment_intercept));
  kv("seed", std::to_string(c.seed));
  std::string methods;
  for (const auto& m : c.methods) methods += (methods.empty() ? "" : ", ") + m;
  kv("methods", methods);
  kv("replications", std::to_string(c.replications));
  kv("lambda_grid", vec_text(Eigen::Map<const Vector>(c.lambda_grid.data(), static_cast<Index>(c.lambda_grid.size()))));
  kv("scad_a", num(c.scad_a));
  kv("output_dir", c.output_dir.string());
  kv("train_fraction", num(c.train_fraction));
  kv("workers", std::to_string(c.workers));
  kv("dr_formula", dr::to_string(c.formula));
  kv("bootstrap", c.bootstrap ? "true" : "false");
  kv("latent_features", c.latent_features == outcome::LatentMode::Hard ? "hard" : "soft");
  kv("propensity_latent", c.propensity_latent ? "true" : "false");
  kv("bootstrap_resamples", std::to_string(c.bootstrap_resamples));
  kv("el.max_outer", std::to_string(c.el.max_outer));
  kv("el.outer_tol", num(c.el.outer_tol));
  kv("el.zero_threshold", num(c.el.zero_threshold));
  kv("el.line_search_tol", num(c.el.line_search_tol));
  kv("el.inner_max_iter", std::to_string(c.el.inner.max_iter));
  kv("el.inner_tol", num(c.el.inner.tol));
  kv("outcome.max_sweeps", std::to_string(c.outcome.max_sweeps));
  kv("outcome.tol", num(c.outcome.tol));
  kv("hmm.max_iter", std::to_string(c.hmm.max_iter));
  kv("hmm.tol", num(c.hmm.tol));
  kv("mtgcn.layers", std::to_string(c.mtgcn.layers));
  kv("mtgcn.hidden", std::to_string(c.mtgcn.hidden));
  kv("mtgcn.activation", c.mtgcn.activation == mtgcn::Activation::Tanh ? "tanh" : "linear");
  kv("mtgcn.threshold", num(c.mtgcn.threshold));
  std::string offs = "[";
  for (std::size_t k = 0; k < c.mtgcn.offsets.size(); ++k) offs += (k ? ", " : "") + std::to_string(c.mtgcn.offsets[k]);
  kv("mtgcn.offsets", offs + "]");
  kv("mtgcn.epochs", std::to_string(c.mtgcn.train.epochs));
  kv("mtgcn.learning_rate", num(c.mtgcn.train.learning_rate));
  kv("mtgcn.stop_tolerance", num(c.mtgcn.train.stop_tolerance));
  kv("mtgcn.stop_window", std::to_string(c.mtgcn.train.stop_window));
  kv("mtgcn.check_gradients", c.mtgcn.train.check_gradients ? "true" : "false");
  kv("mtgcn.gradient_probes", std::to_string(c.mtgcn.train.gradient_probes));
  kv("mtgcn.gradient_samples", std::to_string(c.mtgcn.train.gradient_samples));
  kv("mtgcn.gradient_tolerance", num(c.mtgcn.train.gradient_tolerance));
  kv("mtgcn_outcome", c.mtgcn_outcome ? "true" : "false");
  return o.str();
}

}  // namespace drst
