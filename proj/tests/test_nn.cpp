#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "lmplab/nn.hpp"
#include "lmplab/rng.hpp"

using namespace lmplab;

namespace {

Grid path_grid(int n) {
  Grid g;
  g.n_nodes = n;
  g.reference_node = 0;
  for (int i = 0; i + 1 < n; ++i) g.edges.push_back({i, i + 1, 1.0, 1.0});
  return g;
}

Eigen::MatrixXd random_features(int n, int d, Rng& rng) {
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < d; ++c) x(i, c) = rng.uniform(-1.0, 1.0);
  return x;
}

// min |pre-activation| across hidden layers; finite differences need a
// safety margin from the ReLU kinks
double kink_margin(const Model& model, const Eigen::MatrixXd& x) {
  ForwardCache cache;
  model.forward(x, &cache);
  double margin = std::numeric_limits<double>::infinity();
  for (int t = 0; t + 1 < model.n_layers(); ++t)
    margin = std::min(margin, cache.pre[t].cwiseAbs().minCoeff());
  return margin;
}

// central finite differences against backward() on a random linear
// functional of the output; returns the worst relative error
double fd_worst_rel_err(Model& model, const Eigen::MatrixXd& x, Rng& rng) {
  const int n = model.n_nodes();
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) w[i] = rng.uniform(-1.0, 1.0);

  ForwardCache cache;
  model.forward(x, &cache);
  std::vector<double> grad;
  model.backward(cache, w, grad);

  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    const double saved = model.params()[i];
    model.params()[i] = saved + h;
    const double up = w.dot(model.forward(x));
    model.params()[i] = saved - h;
    const double dn = w.dot(model.forward(x));
    model.params()[i] = saved;
    const double fd = (up - dn) / (2.0 * h);
    const double scale = std::max({1e-6, std::abs(fd), std::abs(grad[i])});
    worst = std::max(worst, std::abs(fd - grad[i]) / scale);
  }
  return worst;
}

}  // namespace

TEST_CASE("all-zero parameters map everything to zero") {
  const Grid g = testutil::ring_grid();
  for (ModelKind kind : {ModelKind::Gnn, ModelKind::Fcnn, ModelKind::Gidnn}) {
    ModelConfig cfg;
    cfg.kind = kind;
    cfg.dims = kind == ModelKind::Fcnn ? std::vector<int>{6, 4, 3}
                                       : std::vector<int>{2, 3, 1};
    cfg.filter_order = 1;
    Model m(g, cfg, 1);
    std::fill(m.params().begin(), m.params().end(), 0.0);
    Rng rng(3);
    const Eigen::VectorXd out = m.forward(random_features(3, 2, rng));
    CHECK(out.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("constructed identity graph layer passes the input through") {
  const Grid g = testutil::two_node_grid();
  ModelConfig cfg;
  cfg.kind = ModelKind::Gnn;
  cfg.dims = {1, 1};
  cfg.filter_order = 1;
  Model m(g, cfg, 1);
  // W = identity (self 1, edges 0), H_0 = H_1 = 0.5, bias 0
  m.params() = {1.0, 1.0, 0.0, 0.0, 0.5, 0.5, 0.0};
  Eigen::MatrixXd x(2, 1);
  x << 0.7, -1.3;
  const Eigen::VectorXd out = m.forward(x);
  CHECK(out[0] == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(out[1] == doctest::Approx(-1.3).epsilon(1e-15));
}

TEST_CASE("two-node graph network matches hand arithmetic") {
  const Grid g = testutil::two_node_grid();
  ModelConfig cfg;
  cfg.kind = ModelKind::Gnn;
  cfg.dims = {1, 2, 1};
  cfg.filter_order = 1;
  Model m(g, cfg, 1);
  REQUIRE(m.parameter_count() == 15);
  // filter: self0, self1, (0,1), (1,0); then H maps; then biases
  m.params() = {0.5, 0.25, 0.1, 0.2,          // W
                1.0, -1.0, 0.5, 0.5,          // layer0 H_0, H_1 (1x2 each)
                0.3, -0.4, 0.6, 0.2,          // layer1 H_0, H_1 (2x1 each)
                0.1, -0.2,                    // layer0 bias
                0.05};                        // layer1 bias
  Eigen::MatrixXd x(2, 1);
  x << 1.0, 2.0;
  const Eigen::VectorXd out = m.forward(x);
  // layer0: WX = [0.7, 0.7]; pre = [[1.45, -0.85], [2.45, -1.85]]; relu
  // layer1: WZ = [0.97, 0.9025]; out = [1.067, 1.3265]
  CHECK(out[0] == doctest::Approx(1.067).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(1.3265).epsilon(1e-12));
}

TEST_CASE("fcnn identity layer reproduces the flattened input") {
  const Grid g = testutil::two_node_grid();
  ModelConfig cfg;
  cfg.kind = ModelKind::Fcnn;
  cfg.dims = {2, 2};
  Model m(g, cfg, 1);
  std::fill(m.params().begin(), m.params().end(), 0.0);
  m.params()[0] = 1.0;  // W row-major identity
  m.params()[3] = 1.0;
  Eigen::MatrixXd x(2, 1);
  x << 3.5, -2.0;
  const Eigen::VectorXd out = m.forward(x);
  CHECK(out[0] == 3.5);
  CHECK(out[1] == -2.0);
}

TEST_CASE("fcnn hand example") {
  const Grid g = testutil::two_node_grid();
  ModelConfig cfg;
  cfg.kind = ModelKind::Fcnn;
  cfg.dims = {2, 2};
  Model m(g, cfg, 1);
  // W = [[1, 2], [-1, 0.5]] row-major, b = [0.25, -0.5]
  m.params() = {1.0, 2.0, -1.0, 0.5, 0.25, -0.5};
  Eigen::MatrixXd x(2, 1);
  x << 1.0, 2.0;
  const Eigen::VectorXd out = m.forward(x);
  CHECK(out[0] == doctest::Approx(1.0 + 4.0 + 0.25).epsilon(1e-15));
  CHECK(out[1] == doctest::Approx(-1.0 + 1.0 - 0.5).epsilon(1e-15));
}

TEST_CASE("gidnn mask follows the topology") {
  const Grid two = testutil::two_node_grid();
  const auto masks2 = gidnn_mask(two, {4, 2});
  REQUIRE(masks2.size() == 1);
  CHECK(masks2[0].cast<int>().sum() == 4);  // all blocks trainable

  const Grid path3 = path_grid(3);
  const auto masks3 = gidnn_mask(path3, {6, 3});
  CHECK(masks3[0](0, 2) == false);
  CHECK(masks3[0](2, 0) == false);
  CHECK(masks3[0](0, 1) == true);
  CHECK(masks3[0].cast<int>().sum() == 3 + 2 * 2);

  CHECK_THROWS_AS(gidnn_mask(path3, {4, 3}), InvalidBlockingError);
}

TEST_CASE("gidnn parameter count equals the mask popcount") {
  const Grid g = testutil::ring_grid();
  const int n = g.n_nodes;
  const std::vector<int> dims{2, 3, 1};
  ModelConfig cfg;
  cfg.kind = ModelKind::Gidnn;
  cfg.dims = dims;
  Model m(g, cfg, 1);

  long expect = 0;
  for (std::size_t t = 0; t + 1 < dims.size(); ++t) {
    const auto mask = gidnn_mask(g, {n * dims[t], n * dims[t + 1]});
    expect += static_cast<long>(mask[0].cast<int>().sum()) * dims[t] * dims[t + 1];
    expect += static_cast<long>(n) * dims[t + 1];  // bias
  }
  CHECK(m.parameter_count() == expect);
  CHECK(m.parameter_count() ==
        count_parameters(ModelKind::Gidnn, dims, g.n_nodes, g.n_edges(), 0));
}

TEST_CASE("gidnn with an all-true mask equals the dense network") {
  const Grid complete3 = testutil::ring_grid();  // K3: every pair adjacent
  ModelConfig gcfg;
  gcfg.kind = ModelKind::Gidnn;
  gcfg.dims = {2, 3, 1};
  Model gid(complete3, gcfg, 5);

  ModelConfig fcfg;
  fcfg.kind = ModelKind::Fcnn;
  fcfg.dims = {6, 9, 3};
  Model fc(complete3, fcfg, 5);

  // assemble the dense weights from the block view: dense block (i,j)
  // is the transpose of the gidnn block (i,j)
  const int n = 3;
  const std::vector<int> dims{2, 3, 1};
  const SparseFilter& pat = gid.filter();
  for (int t = 0; t < 2; ++t) {
    const int din = dims[t], dout = dims[t + 1];
    const long block = static_cast<long>(din) * dout;
    for (int r = 0; r < n; ++r)
      for (int k = pat.row_ptr[r]; k < pat.row_ptr[r + 1]; ++k) {
        const int c = pat.cols[k];
        const double* src =
            gid.params().data() + gid.layer_weight_offset(t) +
            pat.val_index[k] * block;
        for (int a = 0; a < dout; ++a)
          for (int b = 0; b < din; ++b)
            fc.params()[fc.layer_weight_offset(t) +
                        (r * dout + a) * (n * din) + (c * din + b)] =
                src[b * dout + a];
      }
    for (int i = 0; i < n * dout; ++i)
      fc.params()[fc.layer_bias_offset(t) + i] =
          gid.params()[gid.layer_bias_offset(t) + i];
  }

  Rng rng(11);
  const Eigen::MatrixXd x = random_features(3, 2, rng);
  const Eigen::VectorXd a = gid.forward(x);
  const Eigen::VectorXd b = fc.forward(x);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("parameter count law") {
  CHECK(count_parameters(ModelKind::Gnn, {1, 1}, 1, 0, 1) == 4);
  CHECK(count_parameters(ModelKind::Gnn, {32, 32}, 118, 186, 1) == 2570);
  const long width = 118L * 32L;
  CHECK(count_parameters(ModelKind::Fcnn, {118 * 32, 118 * 32}, 118, 186, 1) ==
        width * width + width);
  // dense single layer dwarfs the graph-filter one by ~4 orders
  const double ratio = 2570.0 / static_cast<double>(width * width + width);
  CHECK(ratio < 2e-4);
  // edge count enters linearly
  const long base = count_parameters(ModelKind::Gnn, {8, 8, 1}, 50, 60, 2);
  const long more = count_parameters(ModelKind::Gnn, {8, 8, 1}, 50, 120, 2);
  CHECK(more - base == 120);

  // models report exactly the law
  const Grid g = generate_synthetic_grid(12, 2.5, 1.0, 9);
  ModelConfig cfg;
  cfg.kind = ModelKind::Gnn;
  cfg.dims = {4, 8, 1};
  cfg.filter_order = 2;
  CHECK(Model(g, cfg, 0).parameter_count() ==
        count_parameters(ModelKind::Gnn, cfg.dims, g, 2));
}

TEST_CASE("zero upstream gradient gives zero parameter gradient") {
  const Grid g = testutil::ring_grid();
  ModelConfig cfg;
  cfg.kind = ModelKind::Gnn;
  cfg.dims = {2, 3, 1};
  cfg.filter_order = 2;
  const Model m(g, cfg, 2);
  Rng rng(4);
  ForwardCache cache;
  m.forward(random_features(3, 2, rng), &cache);
  std::vector<double> grad;
  m.backward(cache, Eigen::Vector3d::Zero(), grad);
  for (double v : grad) CHECK(v == 0.0);
}

TEST_CASE("gradients match central finite differences") {
  const Grid g = generate_synthetic_grid(4, 2.2, 1.0, 31);

  auto run_checks = [&](ModelKind kind, std::vector<int> dims, int order) {
    int done = 0;
    std::uint64_t seed = 1;
    while (done < 20) {
      ModelConfig cfg;
      cfg.kind = kind;
      cfg.dims = dims;
      cfg.filter_order = order;
      Model m(g, cfg, mix_seed(1000 + order, seed));
      Rng rng(mix_seed(2000 + order, seed));
      const Eigen::MatrixXd x =
          random_features(4, kind == ModelKind::Fcnn ? dims[0] / 4 : dims[0], rng);
      ++seed;
      if (kink_margin(m, x) < 1e-3) continue;  // too close to a ReLU kink
      CHECK(fd_worst_rel_err(m, x, rng) <= 1e-4);
      ++done;
    }
  };

  SUBCASE("gnn order 1") { run_checks(ModelKind::Gnn, {3, 5, 1}, 1); }
  SUBCASE("gnn order 2") { run_checks(ModelKind::Gnn, {3, 5, 1}, 2); }
  SUBCASE("gnn order 3") { run_checks(ModelKind::Gnn, {3, 5, 1}, 3); }
  SUBCASE("fcnn") { run_checks(ModelKind::Fcnn, {12, 10, 4}, 1); }
  SUBCASE("gidnn") { run_checks(ModelKind::Gidnn, {3, 5, 1}, 1); }
}

TEST_CASE("gradient of a linear model is input-independent") {
  // identity activations arise on the single-layer stack; the gradient
  // w.r.t. H then depends linearly on the input alone
  const Grid g = testutil::two_node_grid();
  ModelConfig cfg;
  cfg.kind = ModelKind::Gnn;
  cfg.dims = {1, 1};
  cfg.filter_order = 1;
  const Model m(g, cfg, 9);
  Eigen::MatrixXd x(2, 1);
  x << 1.0, -2.0;
  ForwardCache cache;
  m.forward(x, &cache);
  std::vector<double> g1, g2;
  m.backward(cache, Eigen::Vector2d(1.0, 1.0), g1);
  m.backward(cache, Eigen::Vector2d(2.0, 2.0), g2);
  for (std::size_t i = 0; i < g1.size(); ++i)
    CHECK(g2[i] == doctest::Approx(2.0 * g1[i]).epsilon(1e-14));
}

TEST_CASE("receptive field is bounded by K hops per layer") {
  const Grid g = path_grid(8);
  ModelConfig cfg;
  cfg.kind = ModelKind::Gnn;
  cfg.dims = {2, 4, 1};
  cfg.filter_order = 1;  // K*T = 2 hops
  const Model m(g, cfg, 13);
  Rng rng(5);
  Eigen::MatrixXd x = random_features(8, 2, rng);
  const Eigen::VectorXd base = m.forward(x);
  x(7, 0) += 0.37;  // perturb the far end
  const Eigen::VectorXd moved = m.forward(x);
  for (int i = 0; i <= 4; ++i) CHECK(moved[i] == base[i]);  // distance > 2: exact
  CHECK(moved[7] != base[7]);
}

TEST_CASE("forward is deterministic") {
  const Grid g = generate_synthetic_grid(9, 2.5, 1.0, 3);
  ModelConfig cfg;
  cfg.kind = ModelKind::Gnn;
  cfg.dims = {3, 6, 1};
  cfg.filter_order = 2;
  const Model m(g, cfg, 17);
  Rng rng(6);
  const Eigen::MatrixXd x = random_features(9, 3, rng);
  const Eigen::VectorXd a = m.forward(x);
  const Eigen::VectorXd b = m.forward(x);
  CHECK(a == b);
}

TEST_CASE("non-finite activations are rejected") {
  const Grid g = testutil::ring_grid();
  ModelConfig cfg;
  cfg.kind = ModelKind::Gnn;
  cfg.dims = {2, 2, 1};
  cfg.filter_order = 1;
  Model m(g, cfg, 21);
  m.params()[0] = std::numeric_limits<double>::infinity();
  Rng rng(7);
  CHECK_THROWS_AS(m.forward(random_features(3, 2, rng)), NonFiniteError);
}

TEST_CASE("dimension mismatches are rejected") {
  const Grid g = testutil::ring_grid();
  ModelConfig cfg;
  cfg.kind = ModelKind::Gnn;
  cfg.dims = {2, 2, 1};
  cfg.filter_order = 1;
  const Model m(g, cfg, 21);
  Rng rng(8);
  CHECK_THROWS_AS(m.forward(random_features(3, 5, rng)), DimensionMismatchError);
  CHECK_THROWS_AS(m.forward(random_features(4, 2, rng)), DimensionMismatchError);
}

TEST_CASE("checkpoint round-trip preserves parameters and stats") {
  testutil::TempDir tmp("ckpt");
  const Grid g = generate_synthetic_grid(10, 2.4, 1.0, 8);
  ModelConfig cfg;
  cfg.kind = ModelKind::Gnn;
  cfg.dims = {4, 8, 1};
  cfg.filter_order = 2;
  Model m(g, cfg, 33);
  NormalizationStats st;
  st.x_mean = Eigen::Vector4d(0.1, -0.2, 0.3, 0.0);
  st.x_std = Eigen::Vector4d(1.0, 2.0, 0.5, 1e-8);
  st.y_mean = 2.5;
  st.y_std = 0.75;
  m.norm = st;

  save_checkpoint(m, tmp.file("m.json"), "t", "d");
  const Model back = load_checkpoint(tmp.file("m.json"), g);
  CHECK(back.params() == m.params());
  CHECK(back.kind() == m.kind());
  CHECK(back.filter_order() == 2);
  REQUIRE(back.norm.has_value());
  CHECK(back.norm->y_std == 0.75);

  Rng rng(9);
  const Eigen::MatrixXd x = random_features(10, 4, rng);
  CHECK(m.forward(x) == back.forward(x));

  const Grid other = generate_synthetic_grid(10, 2.4, 1.0, 9);
  CHECK_THROWS_AS(load_checkpoint(tmp.file("m.json"), other), SchemaMismatchError);
}
