#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "dhlight/dhg/critic.hpp"
#include "dhlight/dhg/hypergraph.hpp"
#include "dhlight/error.hpp"
#include "dhlight/nn/optim.hpp"

using namespace dhlight;
using namespace dhlight::dhg;
using nn::Tape;

namespace {

Matrix rand_m(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  return nn::uniform(r, c, lo, hi, rng);
}

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Row vector r of `m` times `w`.
std::vector<double> row_times(const Matrix& m, std::size_t r, const Matrix& w) {
  std::vector<double> out(w.cols(), 0.0);
  for (std::size_t j = 0; j < w.cols(); ++j)
    for (std::size_t k = 0; k < m.cols(); ++k) out[j] += m(r, k) * w(k, j);
  return out;
}

}  // namespace

TEST_CASE("embed_observations examples") {
  Tape t;
  Var h0 = embed_observations(t.constant(Matrix(2, 3)), t.constant(Matrix(3, 4, 0.7)), t.constant(Matrix(1, 4)));
  CHECK(h0.value() == Matrix(2, 4));

  Var h1 = embed_observations(t.constant(Matrix::row_vector({1, -2, 3})), t.constant(Matrix::identity(3)),
                              t.constant(Matrix(1, 3)));
  CHECK(h1.value() == Matrix::row_vector({1, 0, 3}));

  std::mt19937_64 rng(1);
  const Matrix o = rand_m(5, 6, rng), w = rand_m(6, 4, rng), b = rand_m(1, 4, rng);
  Var h = embed_observations(t.constant(o), t.constant(w), t.constant(b));
  for (std::size_t i = 0; i < 5; ++i) {
    const auto row = row_times(o, i, w);
    for (std::size_t j = 0; j < 4; ++j) CHECK(h.value()(i, j) == doctest::Approx(std::max(0.0, row[j] + b(0, j))));
  }
  CHECK_THROWS_AS(embed_observations(t.constant(o), t.constant(Matrix(5, 4)), t.constant(b)), DimensionError);
}

TEST_CASE("spatial candidate layout") {
  CHECK(spatial_candidate(0, 0) == 1);
  CHECK(spatial_candidate(2, 1) == 1);
  CHECK(spatial_candidate(2, 2) == 3);
  for (std::size_t m = 0; m < 5; ++m)
    for (std::size_t k = 0; k < 4; ++k) CHECK(spatial_slot(m, spatial_candidate(m, k)) == k);
}

TEST_CASE("spatial_reconstruction_error examples") {
  Tape t;
  // Node 1 reconstructs node 0 exactly with p = 1 on that candidate.
  const Matrix h = Matrix::from_rows({{1, 2}, {1, 2}, {5, -1}});
  Matrix p(3, 2);
  p(0, 0) = 1.0;
  Var exact = spatial_reconstruction_error(0, t.constant(h), t.constant(Matrix::identity(2)), t.constant(p));
  CHECK(exact.scalar() == doctest::Approx(0.0));

  Var zero_p = spatial_reconstruction_error(2, t.constant(h), t.constant(Matrix::identity(2)), t.constant(Matrix(3, 2)));
  CHECK(zero_p.scalar() == doctest::Approx(std::sqrt(26.0)));

  std::mt19937_64 rng(4);
  const Matrix hr = rand_m(4, 3, rng), theta = rand_m(3, 3, rng), pr = rand_m(4, 3, rng);
  for (std::size_t m = 0; m < 4; ++m) {
    std::vector<double> diff = row_times(hr, m, theta);
    for (std::size_t k = 0; k < 3; ++k) {
      const std::size_t c = spatial_candidate(m, k);
      for (std::size_t j = 0; j < 3; ++j) diff[j] -= pr(m, k) * hr(c, j);
    }
    Var e = spatial_reconstruction_error(m, t.constant(hr), t.constant(theta), t.constant(pr));
    CHECK(e.scalar() == doctest::Approx(norm2(diff)).epsilon(1e-12));
  }

  CHECK_THROWS_AS(
      spatial_reconstruction_error(0, t.constant(Matrix(1, 2)), t.constant(Matrix::identity(2)), t.constant(Matrix(1, 0))),
      DegenerateGraphError);
}

TEST_CASE("vectorised reconstruction errors agree with the per-master form") {
  std::mt19937_64 rng(8);
  Tape t;
  const Matrix h = rand_m(5, 4, rng), theta = rand_m(4, 4, rng), p = rand_m(5, 4, rng);
  Var hv = t.constant(h);
  Var full = expand_spatial_coefficients(t.constant(p));
  for (std::size_t i = 0; i < 5; ++i) CHECK(full.value()(i, i) == 0.0);
  Var all = reconstruction_errors(hv, t.constant(theta), full, hv);
  for (std::size_t m = 0; m < 5; ++m) {
    Var one = spatial_reconstruction_error(m, hv, t.constant(theta), t.constant(p));
    CHECK(all.value()(m, 0) == doctest::Approx(one.scalar()).epsilon(1e-12));
  }
}

TEST_CASE("build_hyperedges examples") {
  // zeta above every coefficient: masters only.
  std::mt19937_64 rng(2);
  const Matrix ps = rand_m(4, 3, rng, 0.0, 0.5), pt = rand_m(4, 4, rng, 0.0, 0.5);
  for (const auto& e : build_hyperedges(ps, pt, 0.5)) {
    CHECK(e.tail.empty());
    CHECK(e.head == std::vector<std::size_t>{e.master});
  }

  // p = [0.5, -0.2, 0.1] over the candidates of master 0, zeta 0.3.
  Matrix p(4, 3);
  p(0, 0) = 0.5;
  p(0, 1) = -0.2;
  p(0, 2) = 0.1;
  const auto edges = build_hyperedges(p, Matrix(4, 4), 0.3);
  REQUIRE(edges.size() == 8);
  CHECK(edges[0].kind == EdgeKind::kSpatial);
  CHECK(edges[0].tail == std::vector<std::size_t>{1});
  CHECK(edges[0].tail_coeffs == std::vector<double>{0.5});
  CHECK(edges[4].kind == EdgeKind::kTemporal);
  CHECK(edges[4].master == 0);

  // Masters 0 and 1 both keep only node 2.
  Matrix g(3, 2);
  g(0, spatial_slot(0, 2)) = 0.5;
  g(1, spatial_slot(1, 2)) = 0.5;
  const auto grouped = build_hyperedges(g, Matrix(3, 3), 0.3);
  CHECK(grouped[0].head == std::vector<std::size_t>{0, 1});
  CHECK(grouped[1].head == std::vector<std::size_t>{0, 1});
  CHECK(grouped[2].head == std::vector<std::size_t>{2});
  const Matrix m = incidence_matrix(grouped, 6);
  CHECK(m(0, 0) == 1.0);
  CHECK(m(1, 0) == 0.5);
  CHECK(m(2, 0) == 0.5);
  CHECK(m(0, 1) == 0.5);
  CHECK(m(1, 1) == 1.0);

  CHECK_THROWS_AS(build_hyperedges(Matrix(3, 3), Matrix(3, 3), 0.3), DimensionError);
}

TEST_CASE("temporal tails address previous-frame rows") {
  Matrix pt(3, 3);
  pt(1, 1) = 0.9;  // node 1 relies on its own previous state
  pt(1, 2) = 0.4;
  const auto edges = build_hyperedges(Matrix(3, 2), pt, 0.3);
  CHECK(edges[4].tail == std::vector<std::size_t>{4, 5});
  const Matrix m = incidence_matrix(edges, 6);
  CHECK(m(1, 4) == 1.0);
  CHECK(m(4, 4) == 0.9);
  CHECK(m(5, 4) == 0.4);
}

TEST_CASE("incidence_matrix examples") {
  DirectedHyperedge lone;
  lone.master = 2;
  lone.head = {2};
  Matrix m = incidence_matrix({lone}, 6);
  for (std::size_t r = 0; r < 6; ++r) CHECK(m(r, 0) == (r == 2 ? 1.0 : 0.0));

  DirectedHyperedge e;
  e.master = 0;
  e.tail = {1};
  e.tail_coeffs = {0.4};
  e.head = {0, 2};
  m = incidence_matrix({e}, 6);
  CHECK(m(0, 0) == 1.0);
  CHECK(m(1, 0) == 0.4);
  CHECK(m(2, 0) == 0.5);
  CHECK(m(3, 0) == 0.0);

  CHECK_THROWS_AS(incidence_matrix({lone, lone}, 6), ConfigError);
  DirectedHyperedge far = lone;
  far.tail = {9};
  far.tail_coeffs = {0.5};
  CHECK_THROWS_AS(incidence_matrix({far}, 6), ConfigError);
}

TEST_CASE("incidence column structure on random coefficients") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + trial % 7;
    const double zeta = 0.1 * (trial % 9);
    const Matrix ps = rand_m(n, n - 1, rng), pt = rand_m(n, n, rng);
    const auto edges = build_hyperedges(ps, pt, zeta);
    const Matrix m = incidence_matrix(edges, 2 * n);
    REQUIRE(edges.size() == 2 * n);
    for (std::size_t c = 0; c < edges.size(); ++c) {
      const auto& e = edges[c];
      CHECK(e.master == c % n);
      CHECK(std::find(e.tail.begin(), e.tail.end(), e.master) == e.tail.end());
      CHECK(std::find(e.head.begin(), e.head.end(), e.master) != e.head.end());
      double colsum = 0.0;
      int ones = 0;
      for (std::size_t r = 0; r < 2 * n; ++r) {
        colsum += m(r, c);
        if (m(r, c) == 1.0) ++ones;
        const bool is_tail = std::find(e.tail.begin(), e.tail.end(), r) != e.tail.end();
        const bool is_head = std::find(e.head.begin(), e.head.end(), r) != e.head.end();
        if (r == e.master) {
          CHECK(m(r, c) == 1.0);
        } else if (is_tail) {
          CHECK(m(r, c) > zeta);
        } else if (is_head) {
          CHECK(m(r, c) == doctest::Approx(1.0 / static_cast<double>(e.head.size())));
        } else {
          CHECK(m(r, c) == 0.0);
        }
      }
      CHECK(colsum >= 1.0);
      CHECK(ones >= 1);
    }
  }
}

TEST_CASE("raising zeta never enlarges a tail set") {
  std::mt19937_64 rng(17);
  const Matrix ps = rand_m(6, 5, rng), pt = rand_m(6, 6, rng);
  std::vector<DirectedHyperedge> prev = build_hyperedges(ps, pt, -1.0);
  for (double zeta = -0.9; zeta < 1.0; zeta += 0.05) {
    const auto next = build_hyperedges(ps, pt, zeta);
    for (std::size_t i = 0; i < next.size(); ++i) {
      for (std::size_t r : next[i].tail)
        CHECK(std::find(prev[i].tail.begin(), prev[i].tail.end(), r) != prev[i].tail.end());
    }
    prev = next;
  }
}

TEST_CASE("reconstruction_loss examples") {
  Tape t;
  Var zero = reconstruction_loss(t.constant(Matrix(3, 1)), t.constant(Matrix(3, 1)), t.constant(Matrix(3, 2)),
                                 t.constant(Matrix(3, 3)), 0.001, 0.2);
  CHECK(zero.scalar() == 0.0);

  Matrix ps(1, 2);
  ps(0, 0) = 0.5;
  ps(0, 1) = -0.5;
  Var l1 = reconstruction_loss(t.constant(Matrix(1, 1)), t.constant(Matrix(1, 1)), t.constant(ps),
                               t.constant(Matrix(1, 2)), 0.0, 0.0);
  CHECK(l1.scalar() == doctest::Approx(1.0));

  std::mt19937_64 rng(6);
  const Matrix cs = rand_m(4, 1, rng, 0, 2), ct = rand_m(4, 1, rng, 0, 2), p1 = rand_m(4, 3, rng), p2 = rand_m(4, 4, rng);
  double oracle = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    double l1s = 0, l1t = 0, l2s = 0, l2t = 0;
    for (std::size_t k = 0; k < 3; ++k) l1s += std::abs(p1(i, k)), l2s += p1(i, k) * p1(i, k);
    for (std::size_t k = 0; k < 4; ++k) l1t += std::abs(p2(i, k)), l2t += p2(i, k) * p2(i, k);
    oracle += 0.01 * (cs(i, 0) + ct(i, 0)) + l1s + l1t + 0.2 * (std::sqrt(l2s) + std::sqrt(l2t));
  }
  Var l = reconstruction_loss(t.constant(cs), t.constant(ct), t.constant(p1), t.constant(p2), 0.01, 0.2);
  CHECK(l.scalar() == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(l.scalar() >= 0.0);
}

TEST_CASE("hyperedge_embedding examples") {
  Tape t;
  const Matrix h = Matrix::from_rows({{1, 2}, {3, 4}, {5, 6}});
  Matrix unit(3, 1);
  unit(1, 0) = 1.0;
  CHECK(hyperedge_embedding(t.constant(unit), t.constant(h)).value() == Matrix::row_vector({3, 4}));

  Matrix pair(3, 1);
  pair(0, 0) = pair(2, 0) = 1.0;
  CHECK(hyperedge_embedding(t.constant(pair), t.constant(h)).value() == Matrix::row_vector({3, 4}));

  std::mt19937_64 rng(9);
  const Matrix m = rand_m(6, 4, rng, 0.0, 1.0), f = rand_m(6, 3, rng);
  const Matrix e = hyperedge_embedding(t.constant(m), t.constant(f)).value();
  for (std::size_t c = 0; c < 4; ++c) {
    double w = 0.0;
    std::vector<double> acc(3, 0.0);
    for (std::size_t r = 0; r < 6; ++r) {
      w += m(r, c);
      for (std::size_t j = 0; j < 3; ++j) acc[j] += m(r, c) * f(r, j);
    }
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(e(c, j) == doctest::Approx(acc[j] / w).epsilon(1e-12));
      // Convex hull: bounded by the column extremes of the features.
      double lo = 1e9, hi = -1e9;
      for (std::size_t r = 0; r < 6; ++r) lo = std::min(lo, f(r, j)), hi = std::max(hi, f(r, j));
      CHECK(e(c, j) >= lo - 1e-12);
      CHECK(e(c, j) <= hi + 1e-12);
    }
  }
  CHECK_THROWS_AS(hyperedge_embedding(t.constant(Matrix(3, 1)), t.constant(h)), DegenerateGraphError);
}

TEST_CASE("hyperedge_attention weights") {
  std::mt19937_64 rng(10);
  const std::size_t n = 3, d = 4;
  Tape t;
  auto head_with = [&](const Matrix& att_spa, const Matrix& att_tem) {
    return AttentionHeadVars{t.constant(Matrix::identity(d)), t.constant(Matrix::identity(d)),
                             t.constant(Matrix::identity(d)), t.constant(att_spa), t.constant(att_tem)};
  };
  const Matrix h = rand_m(n, d, rng), e = rand_m(n, d, rng);

  // Same keys and same Theta: equal scores.
  const Matrix theta = rand_m(d, d, rng);
  auto same = hyperedge_attention(t.constant(h), t.constant(e), t.constant(e), {head_with(theta, theta)});
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(same.w_spa.value()(i, 0) == doctest::Approx(0.5));
    CHECK(same.w_tem.value()(i, 0) == doctest::Approx(0.5));
  }

  // Zero node embedding: both scores vanish.
  auto zero = hyperedge_attention(t.constant(Matrix(n, d)), t.constant(e), t.constant(rand_m(n, d, rng)),
                                  {head_with(theta, rand_m(d, d, rng))});
  for (std::size_t i = 0; i < n; ++i) CHECK(zero.w_spa.value()(i, 0) == 0.5);

  // Score difference ln 3 gives 0.75. With identity projections and Theta_tem
  // = 0, score_spa = h·e / sqrt(d); pick e so that h·e = 2 ln 3.
  Matrix h1(1, d), e1(1, d);
  h1(0, 0) = 1.0;
  e1(0, 0) = 2.0 * std::log(3.0);
  auto ln3 = hyperedge_attention(t.constant(h1), t.constant(e1), t.constant(e1),
                                 {head_with(Matrix::identity(d), Matrix(d, d))});
  CHECK(ln3.score_spa[0].value()(0, 0) - ln3.score_tem[0].value()(0, 0) == doctest::Approx(std::log(3.0)));
  CHECK(ln3.w_spa.value()(0, 0) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("attention matches a per-node oracle with two heads") {
  std::mt19937_64 rng(12);
  const std::size_t n = 4, d = 6, dk = 3;
  Tape t;
  const Matrix h = rand_m(n, d, rng), es = rand_m(n, d, rng), et = rand_m(n, d, rng);
  std::vector<AttentionHeadVars> heads;
  std::vector<std::array<Matrix, 5>> raw;
  for (int k = 0; k < 2; ++k) {
    std::array<Matrix, 5> m = {rand_m(d, dk, rng), rand_m(d, dk, rng), rand_m(d, dk, rng), rand_m(dk, dk, rng),
                               rand_m(dk, dk, rng)};
    heads.push_back({t.constant(m[0]), t.constant(m[1]), t.constant(m[2]), t.constant(m[3]), t.constant(m[4])});
    raw.push_back(m);
  }
  const auto out = hyperedge_attention(t.constant(h), t.constant(es), t.constant(et), heads);
  const Matrix q = node_update(out.w_spa, out.w_tem, out.key_spa, out.key_tem).value();
  REQUIRE(q.rows() == n);
  REQUIRE(q.cols() == d);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t k = 0; k < 2; ++k) {
      const auto& m = raw[k];
      const auto hq = row_times(h, v, m[0]);
      const auto ks = row_times(es, v, m[1]);
      const auto kt = row_times(et, v, m[2]);
      double s_spa = 0.0, s_tem = 0.0;
      for (std::size_t a = 0; a < dk; ++a)
        for (std::size_t b = 0; b < dk; ++b) {
          s_spa += hq[a] * m[3](a, b) * ks[b];
          s_tem += hq[a] * m[4](a, b) * kt[b];
        }
      s_spa /= std::sqrt(static_cast<double>(d));
      s_tem /= std::sqrt(static_cast<double>(d));
      const double ws = 1.0 / (1.0 + std::exp(s_tem - s_spa));
      CHECK(out.w_spa.value()(v, k) == doctest::Approx(ws).epsilon(1e-12));
      CHECK(out.w_spa.value()(v, k) + out.w_tem.value()(v, k) == doctest::Approx(1.0).epsilon(1e-12));
      for (std::size_t j = 0; j < dk; ++j)
        CHECK(q(v, k * dk + j) == doctest::Approx(ws * ks[j] + (1.0 - ws) * kt[j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("node_update and readout examples") {
  Tape t;
  const Matrix ks = Matrix::from_rows({{1, 2}, {3, 4}}), kt = Matrix::from_rows({{5, 6}, {7, 8}});
  Var one = t.constant(Matrix(2, 1, 1.0)), zero = t.constant(Matrix(2, 1));
  CHECK(node_update(one, zero, {t.constant(ks)}, {t.constant(kt)}).value() == ks);
  Var half = t.constant(Matrix(2, 1, 0.5));
  CHECK(node_update(half, half, {t.constant(ks)}, {t.constant(kt)}).value() == Matrix::from_rows({{3, 4}, {5, 6}}));

  CHECK(graph_readout(t.constant(Matrix::row_vector({1, -2}))).value() == Matrix::row_vector({1, -2}));
  CHECK(graph_readout(t.constant(Matrix::from_rows({{1, -2}, {-1, 2}}))).value() == Matrix::row_vector({0, 0}));
  std::mt19937_64 rng(14);
  const Matrix r = rand_m(5, 3, rng);
  const Matrix mean = graph_readout(t.constant(r)).value();
  for (std::size_t j = 0; j < 3; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < 5; ++i) s += r(i, j);
    CHECK(mean(0, j) == doctest::Approx(s / 5.0).epsilon(1e-14));
  }
  CHECK_THROWS_AS(graph_readout(t.constant(Matrix(0, 3))), DegenerateGraphError);
}

TEST_CASE("critic config validation") {
  CriticConfig cfg;
  cfg.validate();
  cfg.heads = 3;  // 32 not divisible by 3
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.zeta = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.agents = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("critic forward shapes and finite differences") {
  CriticConfig cfg;
  cfg.agents = 4;
  cfg.obs_dim = 6;
  cfg.embed_dim = 8;
  cfg.heads = 2;
  cfg.value_hidden = 5;
  std::mt19937_64 rng(31);
  nn::ParameterStore store;
  HypergraphCritic critic(store, cfg, rng);
  const Matrix obs = rand_m(4, 6, rng, 0.0, 1.0), prev = rand_m(4, 6, rng, 0.0, 1.0);
  {
    Tape t;
    const CriticOutput out = critic.forward(t, store, obs, prev);
    CHECK(out.value.rows() == 1);
    CHECK(out.readout.cols() == 8);
    CHECK(out.edges.size() == 8);
    CHECK(out.l_recon.scalar() >= 0.0);
    CHECK(out.attention.w_spa.cols() == 2);
  }
  auto loss = [&](Tape& t, nn::ParameterStore& s) {
    const CriticOutput out = critic.forward(t, s, obs, prev);
    return nn::add(out.l_recon, nn::hadamard(out.value, out.value));
  };
  const auto rep = nn::finite_diff_check(loss, store);
  INFO("worst " << rep.worst_parameter << " analytic " << rep.analytic << " numeric " << rep.numeric);
  CHECK(rep.max_relative_error <= 1e-4);
}

TEST_CASE("read-only critic forward leaves gradients untouched") {
  CriticConfig cfg;
  cfg.agents = 3;
  cfg.embed_dim = 4;
  std::mt19937_64 rng(3);
  nn::ParameterStore store;
  HypergraphCritic critic(store, cfg, rng);
  const Matrix obs = rand_m(3, 16, rng, 0.0, 1.0);
  Tape t;
  const nn::ParameterStore& frozen = store;
  t.backward(critic.forward(t, frozen, obs, obs).value);
  CHECK(store.grad_norm() == 0.0);
  HypergraphCritic rebound(frozen, cfg);
  CHECK(rebound.params().p_spa == critic.params().p_spa);
}

TEST_CASE("hyperedge dump format") {
  DirectedHyperedge e;
  e.master = 1;
  e.tail = {0, 2};
  e.tail_coeffs = {0.5, 0.75};
  e.head = {1};
  std::ostringstream out;
  write_hyperedge_dump_header(out);
  write_hyperedge_dump(out, 7, {e});
  CHECK(out.str() == "step,kind,master,tail_ids,tail_coeffs,head_ids\n7,spatial,1,0;2,0.5;0.75,1\n");
}
