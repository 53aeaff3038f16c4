#pragma once

#include <cstddef>
#include <iosfwd>
#include <random>
#include <vector>

#include "dhlight/nn/matrix.hpp"
#include "dhlight/nn/parameter_store.hpp"
#include "dhlight/nn/tape.hpp"

namespace dhlight::dhg {

using nn::Matrix;
using nn::Var;

enum class EdgeKind { kSpatial, kTemporal };

const char* kind_name(EdgeKind k);

// Rows of the incidence space: 0..N-1 are the current-frame nodes V^t,
// N..2N-1 the previous-frame nodes V^{t-1}.
struct DirectedHyperedge {
  EdgeKind kind = EdgeKind::kSpatial;
  std::size_t master = 0;
  std::vector<std::size_t> tail;     // incidence rows
  std::vector<double> tail_coeffs;   // p coefficient per tail row, each > zeta
  std::vector<std::size_t> head;     // masters sharing this tail set; contains master
};

// Coefficient layout: p_spa is N×(N-1) where row i lists the candidates
// V^t \ {i} in increasing node order; p_tem is N×N over V^{t-1}.
std::size_t spatial_candidate(std::size_t master, std::size_t k);
std::size_t spatial_slot(std::size_t master, std::size_t node);

// Tail sets by threshold (p > zeta); head sets group masters of the same kind
// whose tail sets are identical. Returns N spatial edges followed by N
// temporal edges, each in master order.
std::vector<DirectedHyperedge> build_hyperedges(const Matrix& p_spa, const Matrix& p_tem, double zeta);

// Entries: 1 at the master row, p at tail rows, 1/|H_H| at other head rows,
// 0 elsewhere. Master takes precedence over tail over head. Throws
// ConfigError for a repeated (master, kind) pair or a row outside node_count.
Matrix incidence_matrix(const std::vector<DirectedHyperedge>& edges, std::size_t node_count);

// ---- differentiable pieces ------------------------------------------------

// h_i = ReLU(o_i W_e + b_e) row by row.
Var embed_observations(Var obs, Var w_e, Var b_e);

// N×(N-1) -> N×N with a zero diagonal.
Var expand_spatial_coefficients(Var p_spa);

// Row i: || H(i) theta - p_i · candidates ||_2 for every master at once.
// p_full is N×M, candidates M×d.
Var reconstruction_errors(Var h, Var theta, Var p_full, Var candidates);

// Single-master spatial error over candidates V^t \ {master}. Throws
// DegenerateGraphError when fewer than two nodes exist.
Var spatial_reconstruction_error(std::size_t master, Var h, Var theta_spa, Var p_spa);

// sum_i [ lambda (c_spa_i + c_tem_i) + |p_spa_i|_1 + |p_tem_i|_1
//         + gamma2 (||p_spa_i||_2 + ||p_tem_i||_2) ].
Var reconstruction_loss(Var c_spa, Var c_tem, Var p_spa, Var p_tem, double lambda, double gamma2);

// Incidence matrix whose tail entries stay connected to the p parameters.
Var incidence_var(const std::vector<DirectedHyperedge>& edges, std::size_t agents, Var p_spa, Var p_tem);

// E(e) = sum_v M(v,e) H(v) / sum_v M(v,e); one row per column of M.
Var hyperedge_embedding(Var incidence, Var features);

struct AttentionHeadVars {
  Var q_lin;      // d × d/K
  Var k_lin_spa;  // d × d/K
  Var k_lin_tem;  // d × d/K
  Var att_spa;    // d/K × d/K
  Var att_tem;    // d/K × d/K
};

struct AttentionOutput {
  Var w_spa;  // N × K
  Var w_tem;  // N × K
  std::vector<Var> key_spa;  // per head, N × d/K
  std::vector<Var> key_tem;
  std::vector<Var> score_spa;  // per head, N × 1
  std::vector<Var> score_tem;
};

// score = H(v) Q-Lin Θ K(v)^T / sqrt(d) with K = E(e(v)) K-Lin; the two
// scores per node and head are softmax-normalised against each other.
AttentionOutput hyperedge_attention(Var h, Var e_spa, Var e_tem, const std::vector<AttentionHeadVars>& heads);

// Q(v) = concat_h ( w_spa^h K_spa^h(v) + w_tem^h K_tem^h(v) ).
Var node_update(Var w_spa, Var w_tem, const std::vector<Var>& key_spa, const std::vector<Var>& key_tem);

// Mean over node rows.
Var graph_readout(Var q);

// CSV dump: step,kind,master,tail_ids,tail_coeffs,head_ids (lists ';'-joined).
void write_hyperedge_dump_header(std::ostream& out);
void write_hyperedge_dump(std::ostream& out, std::size_t step, const std::vector<DirectedHyperedge>& edges);

}  // namespace dhlight::dhg
