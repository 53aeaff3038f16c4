#include "dhlight/dhg/hypergraph.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <type_traits>

#include "dhlight/error.hpp"

namespace dhlight::dhg {

const char* kind_name(EdgeKind k) { return k == EdgeKind::kSpatial ? "spatial" : "temporal"; }

std::size_t spatial_candidate(std::size_t master, std::size_t k) { return k < master ? k : k + 1; }

std::size_t spatial_slot(std::size_t master, std::size_t node) {
  if (node == master) throw ConfigError("a master is not its own spatial candidate");
  return node < master ? node : node - 1;
}

namespace {

// An empty tail shares no candidate with anyone, so such a master heads its
// edge alone.
void group_heads(std::vector<DirectedHyperedge>& edges, std::size_t begin, std::size_t end) {
  std::map<std::vector<std::size_t>, std::vector<std::size_t>> groups;
  for (std::size_t e = begin; e < end; ++e)
    if (!edges[e].tail.empty()) groups[edges[e].tail].push_back(edges[e].master);
  for (std::size_t e = begin; e < end; ++e)
    edges[e].head = edges[e].tail.empty() ? std::vector<std::size_t>{edges[e].master} : groups[edges[e].tail];
}

}  // namespace

std::vector<DirectedHyperedge> build_hyperedges(const Matrix& p_spa, const Matrix& p_tem, double zeta) {
  const std::size_t n = p_tem.rows();
  if (p_tem.cols() != n) throw DimensionError("p_tem must be N×N, got " + nn::shape_string(p_tem));
  if (p_spa.rows() != n || p_spa.cols() + 1 != n) {
    throw DimensionError("p_spa must be N×(N-1) with N=" + std::to_string(n) + ", got " + nn::shape_string(p_spa));
  }
  std::vector<DirectedHyperedge> edges(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    DirectedHyperedge& s = edges[i];
    s.kind = EdgeKind::kSpatial;
    s.master = i;
    for (std::size_t k = 0; k + 1 < n; ++k) {
      if (p_spa(i, k) > zeta) {
        s.tail.push_back(spatial_candidate(i, k));
        s.tail_coeffs.push_back(p_spa(i, k));
      }
    }
    DirectedHyperedge& t = edges[n + i];
    t.kind = EdgeKind::kTemporal;
    t.master = i;
    for (std::size_t j = 0; j < n; ++j) {
      if (p_tem(i, j) > zeta) {
        t.tail.push_back(n + j);
        t.tail_coeffs.push_back(p_tem(i, j));
      }
    }
  }
  group_heads(edges, 0, n);
  group_heads(edges, n, 2 * n);
  return edges;
}

Matrix incidence_matrix(const std::vector<DirectedHyperedge>& edges, std::size_t node_count) {
  Matrix m(node_count, edges.size());
  std::set<std::pair<std::size_t, EdgeKind>> seen;
  for (std::size_t c = 0; c < edges.size(); ++c) {
    const DirectedHyperedge& e = edges[c];
    if (!seen.insert({e.master, e.kind}).second) {
      throw ConfigError("duplicate " + std::string(kind_name(e.kind)) + " hyperedge for master " +
                        std::to_string(e.master));
    }
    if (e.tail.size() != e.tail_coeffs.size()) throw ConfigError("tail ids and coefficients differ in length");
    auto check = [&](std::size_t row) {
      if (row >= node_count) {
        throw ConfigError("hyperedge row " + std::to_string(row) + " outside " + std::to_string(node_count) + " nodes");
      }
    };
    check(e.master);
    if (!e.head.empty()) {
      const double share = 1.0 / static_cast<double>(e.head.size());
      for (std::size_t h : e.head) {
        check(h);
        m(h, c) = share;
      }
    }
    for (std::size_t k = 0; k < e.tail.size(); ++k) {
      check(e.tail[k]);
      m(e.tail[k], c) = e.tail_coeffs[k];
    }
    m(e.master, c) = 1.0;
  }
  return m;
}

Var embed_observations(Var obs, Var w_e, Var b_e) { return nn::relu(nn::dense(obs, w_e, b_e)); }

Var expand_spatial_coefficients(Var p_spa) {
  const std::size_t n = p_spa.rows();
  if (p_spa.cols() + 1 != n) throw DimensionError("p_spa must be N×(N-1), got " + nn::shape_string(p_spa.value()));
  std::vector<nn::ScatterEntry> entries;
  entries.reserve(n * (n - 1));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k + 1 < n; ++k) entries.push_back({i * (n - 1) + k, i * n + spatial_candidate(i, k)});
  }
  return nn::scatter(Matrix(n, n), p_spa, entries);
}

Var reconstruction_errors(Var h, Var theta, Var p_full, Var candidates) {
  return nn::row_l2_norm(nn::sub(nn::matmul(h, theta), nn::matmul(p_full, candidates)));
}

Var spatial_reconstruction_error(std::size_t master, Var h, Var theta_spa, Var p_spa) {
  const std::size_t n = h.rows();
  if (n < 2) throw DegenerateGraphError("spatial reconstruction needs at least two nodes");
  if (master >= n) throw LookupError("master " + std::to_string(master) + " outside " + std::to_string(n) + " nodes");
  if (p_spa.rows() != n || p_spa.cols() + 1 != n) {
    throw DimensionError("p_spa must be N×(N-1), got " + nn::shape_string(p_spa.value()));
  }
  const std::size_t self[] = {master};
  std::vector<std::size_t> cands;
  for (std::size_t k = 0; k + 1 < n; ++k) cands.push_back(spatial_candidate(master, k));
  Var projected = nn::matmul(nn::select_rows(h, self), theta_spa);
  Var rebuilt = nn::matmul(nn::select_rows(p_spa, self), nn::select_rows(h, cands));
  return nn::l2_norm(nn::sub(projected, rebuilt));
}

Var reconstruction_loss(Var c_spa, Var c_tem, Var p_spa, Var p_tem, double lambda, double gamma2) {
  Var errors = nn::scale(nn::add(nn::sum(c_spa), nn::sum(c_tem)), lambda);
  Var l1 = nn::add(nn::l1_norm(p_spa), nn::l1_norm(p_tem));
  Var total = nn::add(errors, l1);
  if (p_spa.cols() > 0) total = nn::add(total, nn::scale(nn::sum(nn::row_l2_norm(p_spa)), gamma2));
  return nn::add(total, nn::scale(nn::sum(nn::row_l2_norm(p_tem)), gamma2));
}

Var incidence_var(const std::vector<DirectedHyperedge>& edges, std::size_t agents, Var p_spa, Var p_tem) {
  const std::size_t n = agents;
  Matrix base = incidence_matrix(edges, 2 * n);
  const std::size_t cols = edges.size();
  std::vector<nn::ScatterEntry> spa;
  std::vector<nn::ScatterEntry> tem;
  for (std::size_t c = 0; c < cols; ++c) {
    const DirectedHyperedge& e = edges[c];
    for (std::size_t row : e.tail) {
      if (row == e.master) continue;
      base(row, c) = 0.0;
      if (e.kind == EdgeKind::kSpatial) {
        if (row >= n) throw ConfigError("spatial tail row outside the current frame");
        spa.push_back({e.master * (n - 1) + spatial_slot(e.master, row), row * cols + c});
      } else {
        if (row < n) throw ConfigError("temporal tail row outside the previous frame");
        tem.push_back({e.master * n + (row - n), row * cols + c});
      }
    }
  }
  Var with_spa = nn::scatter(std::move(base), p_spa, spa);
  return nn::add(with_spa, nn::scatter(Matrix(2 * n, cols), p_tem, tem));
}

Var hyperedge_embedding(Var incidence, Var features) {
  if (incidence.rows() != features.rows()) {
    throw DimensionError("incidence " + nn::shape_string(incidence.value()) + " does not match features " +
                         nn::shape_string(features.value()));
  }
  Var weights = nn::transpose(nn::col_sum(incidence));
  for (std::size_t e = 0; e < weights.rows(); ++e) {
    if (std::abs(weights.value()(e, 0)) < 1e-12) {
      throw DegenerateGraphError("hyperedge " + std::to_string(e) + " has zero total weight");
    }
  }
  return nn::div_rows(nn::matmul(nn::transpose(incidence), features), weights);
}

AttentionOutput hyperedge_attention(Var h, Var e_spa, Var e_tem, const std::vector<AttentionHeadVars>& heads) {
  if (heads.empty()) throw ConfigError("attention needs at least one head");
  const std::size_t d = h.cols();
  if (d % heads.size() != 0) {
    throw ConfigError("embedding dim " + std::to_string(d) + " not divisible by " + std::to_string(heads.size()) +
                      " heads");
  }
  if (e_spa.rows() != h.rows() || e_tem.rows() != h.rows()) {
    throw DimensionError("hyperedge embeddings " + nn::shape_string(e_spa.value()) + "/" +
                         nn::shape_string(e_tem.value()) + " do not match nodes " + nn::shape_string(h.value()));
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  AttentionOutput out;
  std::vector<Var> w_spa;
  std::vector<Var> w_tem;
  for (const AttentionHeadVars& p : heads) {
    Var query = nn::matmul(h, p.q_lin);
    Var k_spa = nn::matmul(e_spa, p.k_lin_spa);
    Var k_tem = nn::matmul(e_tem, p.k_lin_tem);
    Var s_spa = nn::scale(nn::row_sum(nn::hadamard(nn::matmul(query, p.att_spa), k_spa)), inv_sqrt_d);
    Var s_tem = nn::scale(nn::row_sum(nn::hadamard(nn::matmul(query, p.att_tem), k_tem)), inv_sqrt_d);
    const Var pair[] = {s_spa, s_tem};
    Var w = nn::softmax_rows(nn::concat_cols(pair));
    w_spa.push_back(nn::slice_cols(w, 0, 1));
    w_tem.push_back(nn::slice_cols(w, 1, 1));
    out.key_spa.push_back(k_spa);
    out.key_tem.push_back(k_tem);
    out.score_spa.push_back(s_spa);
    out.score_tem.push_back(s_tem);
  }
  out.w_spa = nn::concat_cols(w_spa);
  out.w_tem = nn::concat_cols(w_tem);
  return out;
}

Var node_update(Var w_spa, Var w_tem, const std::vector<Var>& key_spa, const std::vector<Var>& key_tem) {
  if (key_spa.size() != key_tem.size() || key_spa.size() != w_spa.cols() || w_spa.cols() != w_tem.cols()) {
    throw DimensionError("node update needs one weight column and key pair per head");
  }
  std::vector<Var> parts;
  for (std::size_t h = 0; h < key_spa.size(); ++h) {
    parts.push_back(nn::add(nn::mul_rows(key_spa[h], nn::slice_cols(w_spa, h, 1)),
                            nn::mul_rows(key_tem[h], nn::slice_cols(w_tem, h, 1))));
  }
  return nn::concat_cols(parts);
}

Var graph_readout(Var q) {
  if (q.rows() == 0) throw DegenerateGraphError("readout over an empty node set");
  return nn::col_mean(q);
}

namespace {

template <typename T>
std::string join(const std::vector<T>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ';';
    if constexpr (std::is_floating_point_v<T>) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", values[i]);
      s += buf;
    } else {
      s += std::to_string(values[i]);
    }
  }
  return s;
}

}  // namespace

void write_hyperedge_dump_header(std::ostream& out) { out << "step,kind,master,tail_ids,tail_coeffs,head_ids\n"; }

void write_hyperedge_dump(std::ostream& out, std::size_t step, const std::vector<DirectedHyperedge>& edges) {
  for (const DirectedHyperedge& e : edges) {
    out << step << ',' << kind_name(e.kind) << ',' << e.master << ',' << join(e.tail) << ',' << join(e.tail_coeffs)
        << ',' << join(e.head) << '\n';
  }
}

}  // namespace dhlight::dhg
