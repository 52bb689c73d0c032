#include "drst/mtgcn.hpp"
#include "drst/synth.hpp"

#include "generators.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace drst;
using namespace drst::mtgcn;

namespace {

Samples random_samples(Rng& rng, Index nodes, Index count, int tasks) {
  Samples s;
  s.inputs = gen::normal_matrix(rng, nodes, count);
  s.targets = gen::normal_matrix(rng, count, tasks);
  s.strata.resize(count);
  for (Index b = 0; b < count; ++b) s.strata(b) = gen::integer(rng, 1, 2);
  return s;
}

GraphSpec random_graphs(Rng& rng, Index nodes, int views) {
  GraphSpec g;
  g.node_count = nodes;
  for (int v = 0; v < views; ++v) {
    Matrix a = Matrix::Zero(nodes, nodes);
    for (Index i = 0; i < nodes; ++i) {
      for (Index j = i + 1; j < nodes; ++j) {
        if (gen::uniform(rng, 0.0, 1.0) < 0.5) a(i, j) = a(j, i) = gen::uniform(rng, 0.2, 1.0);
      }
    }
    g.adjacencies.push_back(a);
  }
  return g;
}

MtgcnModel scaled_model(Rng& rng, const Samples& s, int views, int layers, int hidden, Activation act,
                        std::uint64_t seed) {
  auto m = init_model(s.inputs.rows(), views, static_cast<int>(s.targets.cols()), seed, layers, hidden, act);
  fit_scaling(m, s);
  // Nonzero bias, skip and larger readout so every parameter matters.
  m.bias = gen::normal_vector(rng, m.tasks, 0.3);
  m.skip = gen::normal_matrix(rng, m.nodes, m.tasks, 0.3);
  for (auto& r : m.readout) r = gen::normal_matrix(rng, m.nodes, m.hidden, 0.3);
  return m;
}

TrainOptions quiet(int epochs) {
  TrainOptions o;
  o.epochs = epochs;
  o.check_gradients = false;
  o.stop_tolerance = 0.0;
  return o;
}

}  // namespace

TEST_CASE("normalize_adjacency examples") {
  CHECK(normalize_adjacency(Matrix::Zero(3, 3)) == Matrix::Identity(3, 3));
  const Matrix n = normalize_adjacency(Matrix{{0.0, 1.0}, {1.0, 0.0}});
  CHECK((n.array() - 0.5).abs().maxCoeff() < 1e-15);
  // Path 0 - 1 - 2: degrees with self-loops 2, 3, 2.
  const Matrix p = normalize_adjacency(Matrix{{0, 1, 0}, {1, 0, 1}, {0, 1, 0}});
  CHECK(p(0, 1) == doctest::Approx(1.0 / std::sqrt(6.0)).epsilon(1e-15));
  CHECK(p(1, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(p(0, 2) == 0.0);
}

TEST_CASE("make_samples layout") {
  auto cfg = synth::default_config();
  cfg.n = 4;
  cfg.p = 5;
  cfg.horizon = 4;
  cfg.beta = synth::alternating_sparse(5, 2);
  const Dataset ds = synth::generate(cfg);
  const std::vector<Index> nodes{1, 3};

  SUBCASE("without posteriors") {
    const Samples s = make_samples(ds, nullptr, nodes, {1, 2});
    REQUIRE(s.inputs.rows() == 3);
    REQUIRE(s.inputs.cols() == 4 * 2);
    for (Index i = 0; i < 4; ++i) {
      for (Index t = 1; t <= 2; ++t) {
        const Index b = i * 2 + t - 1;
        CHECK(s.inputs(0, b) == ds.covariates(i, 1));
        CHECK(s.inputs(1, b) == ds.covariates(i, 3));
        CHECK(s.inputs(2, b) == ds.treatment(i));
        CHECK(s.targets(b, 0) == ds.outcomes(i, t));
        CHECK(s.targets(b, 1) == ds.outcomes(i, t + 1));
        CHECK(s.strata(b) == ds.treatment(i) + 1);
      }
    }
  }
  SUBCASE("with posteriors") {
    std::vector<Matrix> post(4, Matrix::Zero(4, 3));
    for (auto& m : post) m.col(2).setOnes();
    const Samples s = make_samples(ds, &post, nodes);
    REQUIRE(s.inputs.rows() == 2 + 3 + 1);
    CHECK(s.inputs.cols() == 4 * 3);
    CHECK((s.inputs.row(4).array() == 1.0).all());
    CHECK((s.strata.array() == 3).all());
  }
  CHECK_THROWS_AS(make_samples(ds, nullptr, nodes, {}), std::invalid_argument);
  CHECK_THROWS_AS(make_samples(ds, nullptr, nodes, {0}), std::invalid_argument);
  CHECK_THROWS_AS(make_samples(ds, nullptr, nodes, {4}), std::invalid_argument);
  CHECK_THROWS_AS(make_samples(ds, nullptr, {5}), std::invalid_argument);
}

TEST_CASE("build_graphs produces valid pruned correlation views") {
  Rng rng(21);
  Samples s = random_samples(rng, 5, 300, 1);
  s.inputs.row(1) = 2.0 * s.inputs.row(0).array() + 1.0;  // perfectly correlated
  s.inputs.row(4).setConstant(3.0);                          // no variance
  const GraphSpec g = build_graphs(s, 0.2);
  CHECK_NOTHROW(g.validate());
  REQUIRE(g.adjacencies.size() == 2);
  CHECK(g.adjacencies[0](0, 1) == doctest::Approx(1.0));
  CHECK(g.adjacencies[1](0, 1) == doctest::Approx(1.0));
  CHECK(g.adjacencies[0].row(4).isZero(0.0));
  for (const auto& a : g.adjacencies) {
    CHECK(((a.array() == 0.0) || (a.array() >= 0.2)).all());
  }
  // Independent noise rows fall under a high threshold.
  const GraphSpec strict = build_graphs(s, 0.5);
  CHECK(strict.adjacencies[0](2, 3) == 0.0);
}

TEST_CASE("graph validation") {
  GraphSpec g;
  g.node_count = 2;
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
  g.adjacencies = {Matrix{{0.0, 1.0}, {0.5, 0.0}}};
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
  g.adjacencies = {Matrix{{1.0, 0.0}, {0.0, 0.0}}};
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
  g.adjacencies = {Matrix{{0.0, -1.0}, {-1.0, 0.0}}};
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
}

TEST_CASE("pack and unpack round trip") {
  const auto m = init_model(4, 2, 3, 5, 2, 6);
  CHECK(m.parameter_count() == (1 * 6 + 6 * 6) * 2 + 3 * (1 + 4 + 4 * 6));
  MtgcnModel other = init_model(4, 2, 3, 99, 2, 6);
  unpack(other, pack(m));
  CHECK(pack(other) == pack(m));
  const auto groups = parameter_groups(m);
  REQUIRE(groups.size() == 3);
  CHECK(groups.front().first == 0);
  CHECK(groups.back().second == m.parameter_count());
  for (std::size_t k = 1; k < groups.size(); ++k) CHECK(groups[k].first == groups[k - 1].second);
  CHECK_THROWS_AS(unpack(other, Vector::Zero(3)), std::invalid_argument);
}

TEST_CASE("loss gradient matches coordinate-wise central differences") {
  // Independent of gradient_check: every coordinate, no random directions.
  Rng rng(22);
  for (const auto act : {Activation::Tanh, Activation::Linear}) {
    const Samples s = random_samples(rng, 4, 12, 2);
    const GraphSpec g = random_graphs(rng, 4, 2);
    const auto m = scaled_model(rng, s, 2, 2, 3, act, 3);
    Vector grad;
    loss(m, g, s, &grad);
    const Vector base = pack(m);
    MtgcnModel work = m;
    for (Index j = 0; j < base.size(); ++j) {
      const double h = 1e-6;
      Vector p = base;
      p(j) += h;
      unpack(work, p);
      const double up = loss(work, g, s);
      p(j) -= 2 * h;
      unpack(work, p);
      const double down = loss(work, g, s);
      CHECK(std::abs(grad(j) - (up - down) / (2 * h)) < 1e-7);
    }
  }
}

TEST_CASE("gradient check passes at 20 probes per layer") {
  Rng rng(23);
  for (int rep = 0; rep < 5; ++rep) {
    const Index nodes = gen::integer(rng, 2, 8);
    const int views = gen::integer(rng, 1, 3);
    const int layers = gen::integer(rng, 1, 3);
    const int tasks = gen::integer(rng, 1, 3);
    const Samples s = random_samples(rng, nodes, gen::integer(rng, 5, 40), tasks);
    const GraphSpec g = random_graphs(rng, nodes, views);
    const auto m = scaled_model(rng, s, views, layers, gen::integer(rng, 2, 8), Activation::Tanh, rng());
    const auto gc = gradient_check(m, g, s, 20);
    CHECK(gc.probes == 20 * (layers + 1));
    CHECK(gc.max_relative_error < 1e-4);
  }
}

TEST_CASE("dead trunk and readout predict the bias") {
  Rng rng(24);
  const Samples s = random_samples(rng, 5, 30, 2);
  const GraphSpec g = random_graphs(rng, 5, 2);
  auto m = init_model(5, 2, 2, 1);
  fit_scaling(m, s);
  for (auto& layer : m.W) {
    for (auto& w : layer) w.setZero();
  }
  m.bias = Vector{{0.5, -1.0}};
  const Matrix out = forward(m, g, s.inputs);
  for (Index b = 0; b < 30; ++b) {
    for (Index h = 0; h < 2; ++h) {
      CHECK(std::abs(out(b, h) - (m.target_mean(h) + m.target_scale(h) * m.bias(h))) < 1e-12);
    }
  }
}

TEST_CASE("one linear layer is an affine map of the inputs") {
  Rng rng(25);
  const Samples s = random_samples(rng, 6, 2, 2);
  const GraphSpec g = random_graphs(rng, 6, 2);
  const auto m = scaled_model(rng, s, 2, 1, 4, Activation::Linear, 9);
  for (int rep = 0; rep < 20; ++rep) {
    const Vector x = gen::normal_vector(rng, 6);
    const Vector y = gen::normal_vector(rng, 6);
    const double a = gen::uniform(rng, -2.0, 2.0);
    Matrix in(6, 3);
    in << x, y, a * x + (1.0 - a) * y;
    const Matrix out = forward(m, g, in);
    const Vector mix = a * out.row(0) + (1.0 - a) * out.row(1);
    CHECK((out.row(2).transpose() - mix).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("forward is equivariant to sample and node permutations") {
  Rng rng(26);
  const Index N = 5;
  const Samples s = random_samples(rng, N, 20, 2);
  const GraphSpec g = random_graphs(rng, N, 2);
  const auto m = scaled_model(rng, s, 2, 2, 4, Activation::Tanh, 4);
  const Matrix out = forward(m, g, s.inputs);

  std::vector<Index> order(20);
  std::iota(order.begin(), order.end(), 0);
  std::reverse(order.begin(), order.end());
  Matrix shuffled(N, 20);
  for (Index b = 0; b < 20; ++b) shuffled.col(b) = s.inputs.col(order[static_cast<std::size_t>(b)]);
  const Matrix out_s = forward(m, g, shuffled);
  for (Index b = 0; b < 20; ++b) {
    CHECK((out_s.row(b) - out.row(order[static_cast<std::size_t>(b)])).cwiseAbs().maxCoeff() < 1e-12);
  }

  // Relabel nodes: permute inputs, graphs, skip/readout rows and scaling.
  const std::vector<Index> perm{3, 0, 4, 1, 2};
  Eigen::PermutationMatrix<Eigen::Dynamic> P(N);
  for (Index k = 0; k < N; ++k) P.indices()(k) = static_cast<int>(perm[static_cast<std::size_t>(k)]);
  MtgcnModel mp = m;
  mp.skip = P * m.skip;
  for (auto& r : mp.readout) r = P * r;
  mp.input_mean = P * m.input_mean;
  mp.input_scale = P * m.input_scale;
  GraphSpec gp = g;
  for (auto& a : gp.adjacencies) a = P * a * P.transpose();
  const Matrix out_p = forward(mp, gp, P * s.inputs);
  CHECK((out_p - out).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zero epochs leave the model unchanged") {
  Rng rng(27);
  const Samples s = random_samples(rng, 4, 30, 1);
  const GraphSpec g = random_graphs(rng, 4, 2);
  auto m = scaled_model(rng, s, 2, 2, 4, Activation::Tanh, 2);
  const Vector before = pack(m);
  const auto res = train(m, g, s, quiet(0));
  CHECK(pack(m) == before);
  CHECK(res.loss_trace.size() == 1);
  CHECK(res.epochs == 0);
}

TEST_CASE("training loss never increases") {
  Rng rng(28);
  for (int rep = 0; rep < 5; ++rep) {
    const Samples s = random_samples(rng, 5, 60, 2);
    const GraphSpec g = random_graphs(rng, 5, 2);
    auto m = init_model(5, 2, 2, rng());
    fit_scaling(m, s);
    TrainOptions o = quiet(60);
    o.learning_rate = 0.2;  // large enough to force rejected steps
    const auto res = train(m, g, s, o);
    for (std::size_t k = 1; k < res.loss_trace.size(); ++k) CHECK(res.loss_trace[k] <= res.loss_trace[k - 1]);
    CHECK(res.loss_trace.back() == doctest::Approx(loss(m, g, s)).epsilon(1e-12));
  }
}

TEST_CASE("noise-free realizable target trains below 1e-4") {
  // The skip path represents any affine target exactly.
  Rng rng(29);
  Samples s = random_samples(rng, 4, 200, 1);
  const Vector w{{1.0, -0.5, 0.25, 2.0}};
  s.targets.col(0) = (s.inputs.transpose() * w).array() + 0.3;
  const GraphSpec g = build_graphs(s, 0.2);
  auto m = init_model(4, 2, 1, 11);
  fit_scaling(m, s);
  TrainOptions o;
  o.epochs = 3000;
  o.stop_tolerance = 0.0;
  o.learning_rate = 0.01;
  const auto res = train(m, g, s, o);
  CHECK(res.gradient.probes == 20 * 3);
  CHECK(res.gradient.max_relative_error < 1e-4);
  CHECK(loss(m, g, s) < 1e-4);
}

TEST_CASE("predictive_error of a constant predictor") {
  Rng rng(30);
  const Samples s = random_samples(rng, 3, 50, 2);
  const GraphSpec g = random_graphs(rng, 3, 1);
  auto m = init_model(3, 1, 2, 1);
  fit_scaling(m, s);
  for (auto& layer : m.W) {
    for (auto& w : layer) w.setZero();
  }
  // Predicts the first target's training mean everywhere.
  const double mean = s.targets.col(0).mean();
  const double rmse = std::sqrt((s.targets.col(0).array() - mean).square().mean());
  CHECK(predictive_error(m, g, s) == doctest::Approx(rmse).epsilon(1e-12));
  Samples empty;
  empty.inputs.resize(3, 0);
  CHECK_THROWS_AS(predictive_error(m, g, empty), std::invalid_argument);
}
