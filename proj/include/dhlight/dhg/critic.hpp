#pragma once

#include <random>
#include <string>
#include <vector>

#include "dhlight/dhg/hypergraph.hpp"

namespace dhlight::dhg {

struct CriticConfig {
  std::size_t agents = 16;
  std::size_t obs_dim = 16;
  std::size_t embed_dim = 32;
  std::size_t heads = 1;
  std::size_t value_hidden = 64;
  double zeta = 0.3;
  double lambda = 0.001;
  double gamma2 = 0.2;

  void validate() const;
};

// Parameter handles for one hypergraph critic inside a shared store.
struct CriticParams {
  nn::ParamId embed_w, embed_b;
  nn::ParamId theta_spa, theta_tem, p_spa, p_tem;
  struct Head {
    nn::ParamId q_lin, k_lin_spa, k_lin_tem, att_spa, att_tem;
  };
  std::vector<Head> heads;
  nn::ParamId value_w1, value_b1, value_w2, value_b2;
};

struct CriticOutput {
  Var value;    // 1×1
  Var readout;  // 1×d
  Var l_recon;  // 1×1
  Var c_spa;    // N×1
  Var c_tem;    // N×1
  AttentionOutput attention;
  std::vector<DirectedHyperedge> edges;
};

// Directed hypergraph critic: node embedding, hyperedge generation from the
// reconstruction head, hyperedge attention, mean readout and a value MLP.
class HypergraphCritic {
 public:
  // Registers parameters under `prefix` (e.g. "critic.").
  HypergraphCritic(nn::ParameterStore& store, const CriticConfig& cfg, std::mt19937_64& rng,
                   const std::string& prefix = "critic.");
  // Re-binds to parameters already present in `store`.
  HypergraphCritic(const nn::ParameterStore& store, const CriticConfig& cfg, const std::string& prefix = "critic.");

  const CriticConfig& config() const { return cfg_; }
  const CriticParams& params() const { return ids_; }

  // obs and prev_obs are N×obs_dim. Gradients reach `store` on backward.
  CriticOutput forward(nn::Tape& tape, nn::ParameterStore& store, const Matrix& obs, const Matrix& prev_obs) const;
  // Same graph with read-only parameters.
  CriticOutput forward(nn::Tape& tape, const nn::ParameterStore& store, const Matrix& obs,
                       const Matrix& prev_obs) const;

  // Hyperedges implied by the stored p coefficients.
  std::vector<DirectedHyperedge> edges(const nn::ParameterStore& store) const;

 private:
  template <typename Store>
  CriticOutput run(nn::Tape& tape, Store& store, const Matrix& obs, const Matrix& prev_obs) const;

  CriticConfig cfg_;
  CriticParams ids_;
};

}  // namespace dhlight::dhg
