#include "drst/dataset.hpp"

#include "drst/rng.hpp"
#include "drst/text.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace drst {

void Dataset::validate() const {
  const Index rows = covariates.rows();
  if (treatment.size() != rows || outcomes.rows() != rows) {
    throw std::invalid_argument("dataset: covariates, treatment and outcomes disagree on n");
  }
  for (Index i = 0; i < treatment.size(); ++i) {
    if (treatment(i) != 0 && treatment(i) != 1) {
      throw std::invalid_argument("dataset: treatment entries must be 0 or 1");
    }
  }
  if (!covariates.allFinite()) throw std::invalid_argument("dataset: non-finite covariate");
  if (!outcomes.allFinite()) throw std::invalid_argument("dataset: non-finite outcome");
  if (latent_states) {
    if (latent_states->rows() != rows || latent_states->cols() != outcomes.cols()) {
      throw std::invalid_argument("dataset: latent_states shape must be n x horizon");
    }
    if (state_count < 1) throw std::invalid_argument("dataset: state_count must be >= 1");
    if (latent_states->size() > 0 &&
        (latent_states->minCoeff() < 1 || latent_states->maxCoeff() > state_count)) {
      throw std::invalid_argument("dataset: latent state outside 1..K");
    }
  }
  if (true_ate && !std::isfinite(*true_ate)) {
    throw std::invalid_argument("dataset: non-finite true_ate");
  }
}

Dataset make_dataset(Matrix covariates, IntVector treatment, Matrix outcomes,
                     std::optional<IntMatrix> latent_states, int state_count,
                     std::optional<double> true_ate) {
  Dataset ds{std::move(covariates), std::move(treatment), std::move(outcomes),
             std::move(latent_states), state_count, true_ate};
  ds.validate();
  return ds;
}

Dataset subset(const Dataset& ds, std::span<const Index> ids) {
  Dataset out;
  const auto m = static_cast<Index>(ids.size());
  out.covariates.resize(m, ds.p());
  out.treatment.resize(m);
  out.outcomes.resize(m, ds.horizon());
  if (ds.latent_states) out.latent_states = IntMatrix(m, ds.horizon());
  for (Index r = 0; r < m; ++r) {
    const Index i = ids[static_cast<std::size_t>(r)];
    if (i < 0 || i >= ds.n()) throw std::invalid_argument("subset: index out of range");
    out.covariates.row(r) = ds.covariates.row(i);
    out.treatment(r) = ds.treatment(i);
    out.outcomes.row(r) = ds.outcomes.row(i);
    if (ds.latent_states) out.latent_states->row(r) = ds.latent_states->row(i);
  }
  out.state_count = ds.state_count;
  out.true_ate = ds.true_ate;
  return out;
}

SplitIndex split(const Dataset& ds, double train_fraction, std::uint64_t seed) {
  const Index n = ds.n();
  if (n < 2) throw std::invalid_argument("split: need at least two individuals");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("split: train_fraction must lie in (0, 1)");
  }
  const auto n_train = static_cast<Index>(std::lround(train_fraction * static_cast<double>(n)));
  if (n_train < 1 || n_train >= n) {
    throw std::invalid_argument("split: fraction leaves one side empty");
  }
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng rng(seed);
  // Fisher-Yates with our own uniform draw so the partition does not depend on
  // the standard library's shuffle implementation.
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(uniform01(rng) * static_cast<double>(i + 1));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(std::min(j, i))]);
  }
  SplitIndex s;
  s.train_ids.assign(perm.begin(), perm.begin() + n_train);
  s.test_ids.assign(perm.begin() + n_train, perm.end());
  std::sort(s.train_ids.begin(), s.train_ids.end());
  std::sort(s.test_ids.begin(), s.test_ids.end());
  return s;
}

Vector one_hot_state(int z, int state_count) {
  if (state_count < 1 || z < 1 || z > state_count) {
    throw std::invalid_argument("one_hot_state: state out of range");
  }
  Vector v = Vector::Zero(state_count);
  v(z - 1) = 1.0;
  return v;
}

void write_csv(const Dataset& ds, const std::filesystem::path& panel_path,
               const std::filesystem::path& covariate_path) {
  std::ofstream panel(panel_path);
  std::ofstream cov(covariate_path);
  if (!panel || !cov) throw std::runtime_error("write_csv: cannot open output files");
  const bool with_z = ds.latent_states.has_value();
  panel << "id,t,T,Y" << (with_z ? ",Z" : "") << '\n';
  for (Index i = 0; i < ds.n(); ++i) {
    for (Index t = 0; t < ds.horizon(); ++t) {
      panel << i << ',' << (t + 1) << ',' << ds.treatment(i) << ','
            << text::format_double(ds.outcomes(i, t));
      if (with_z) panel << ',' << (*ds.latent_states)(i, t);
      panel << '\n';
    }
  }
  cov << "id";
  for (Index j = 0; j < ds.p(); ++j) cov << ",x" << (j + 1);
  cov << '\n';
  for (Index i = 0; i < ds.n(); ++i) {
    cov << i;
    for (Index j = 0; j < ds.p(); ++j) cov << ',' << text::format_double(ds.covariates(i, j));
    cov << '\n';
  }
  if (!panel || !cov) throw std::runtime_error("write_csv: write failed");
}

namespace {

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_csv: cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!text::trim(line).empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace

Dataset read_csv(const std::filesystem::path& panel_path,
                 const std::filesystem::path& covariate_path) {
  const auto cov_lines = read_lines(covariate_path);
  if (cov_lines.empty()) throw std::invalid_argument("read_csv: empty covariate file");
  const auto cov_header = text::split(cov_lines[0], ',');
  if (text::trim(cov_header[0]) != "id") throw std::invalid_argument("read_csv: covariate header");
  const auto p = static_cast<Index>(cov_header.size() - 1);
  const auto n = static_cast<Index>(cov_lines.size() - 1);
  Matrix x(n, p);
  for (Index r = 0; r < n; ++r) {
    const auto fields = text::split(cov_lines[static_cast<std::size_t>(r + 1)], ',');
    if (static_cast<Index>(fields.size()) != p + 1) {
      throw std::invalid_argument("read_csv: ragged covariate row");
    }
    if (text::parse_int(fields[0]) != r) throw std::invalid_argument("read_csv: covariate ids must be 0..n-1 in order");
    for (Index j = 0; j < p; ++j) x(r, j) = text::parse_double(fields[static_cast<std::size_t>(j + 1)]);
  }

  const auto panel_lines = read_lines(panel_path);
  if (panel_lines.empty()) throw std::invalid_argument("read_csv: empty panel file");
  const auto header = text::split(panel_lines[0], ',');
  const bool with_z = header.size() == 5;
  const char* expected[] = {"id", "t", "T", "Y", "Z"};
  if (header.size() != 4 && header.size() != 5) throw std::invalid_argument("read_csv: panel header");
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (text::trim(header[c]) != expected[c]) throw std::invalid_argument("read_csv: panel header");
  }
  const auto rows = static_cast<Index>(panel_lines.size() - 1);
  if (n == 0 || rows % n != 0) throw std::invalid_argument("read_csv: panel rows not n * horizon");
  const Index horizon = rows / n;
  Matrix y(n, horizon);
  IntVector treat(n);
  IntMatrix z(n, horizon);
  for (Index r = 0; r < rows; ++r) {
    const auto f = text::split(panel_lines[static_cast<std::size_t>(r + 1)], ',');
    if (f.size() != header.size()) throw std::invalid_argument("read_csv: ragged panel row");
    const Index i = r / horizon;
    const Index t = r % horizon;
    if (text::parse_int(f[0]) != i || text::parse_int(f[1]) != t + 1) {
      throw std::invalid_argument("read_csv: panel rows must be ordered by id then t");
    }
    const auto tr = static_cast<int>(text::parse_int(f[2]));
    if (t == 0) {
      treat(i) = tr;
    } else if (treat(i) != tr) {
      throw std::invalid_argument("read_csv: treatment varies within an individual");
    }
    y(i, t) = text::parse_double(f[3]);
    if (with_z) z(i, t) = static_cast<int>(text::parse_int(f[4]));
  }
  if (with_z) {
    const int k = z.size() > 0 ? z.maxCoeff() : 0;
    return make_dataset(std::move(x), std::move(treat), std::move(y), std::move(z), k);
  }
  return make_dataset(std::move(x), std::move(treat), std::move(y));
}

}  // namespace drst
