#include "dhlight/dhg/critic.hpp"

#include "dhlight/error.hpp"

namespace dhlight::dhg {

using nn::ParamId;
using nn::ParameterStore;

void CriticConfig::validate() const {
  if (agents < 2) throw ConfigError("critic needs at least two agents (spatial hyperedges need candidates)");
  if (obs_dim < 1 || embed_dim < 1 || value_hidden < 1) throw ConfigError("critic dimensions must be positive");
  if (heads < 1 || embed_dim % heads != 0) {
    throw ConfigError("embedding dim " + std::to_string(embed_dim) + " not divisible by " + std::to_string(heads) +
                      " heads");
  }
  if (!(zeta >= 0.0 && zeta < 1.0)) throw ConfigError("zeta must lie in [0,1)");
  if (!(lambda >= 0.0) || !(gamma2 >= 0.0)) throw ConfigError("lambda and gamma2 must be non-negative");
}

HypergraphCritic::HypergraphCritic(ParameterStore& store, const CriticConfig& cfg, std::mt19937_64& rng,
                                   const std::string& prefix)
    : cfg_(cfg) {
  cfg_.validate();
  const std::size_t n = cfg_.agents;
  const std::size_t d = cfg_.embed_dim;
  const std::size_t dk = d / cfg_.heads;
  ids_.embed_w = store.add(prefix + "embed.w", nn::xavier_uniform(cfg_.obs_dim, d, rng));
  ids_.embed_b = store.add(prefix + "embed.b", Matrix(1, d));
  ids_.theta_spa = store.add(prefix + "recon.theta_spa", nn::xavier_uniform(d, d, rng));
  ids_.theta_tem = store.add(prefix + "recon.theta_tem", nn::xavier_uniform(d, d, rng));
  ids_.p_spa = store.add(prefix + "recon.p_spa", nn::uniform(n, n - 1, 0.0, 1.0, rng));
  ids_.p_tem = store.add(prefix + "recon.p_tem", nn::uniform(n, n, 0.0, 1.0, rng));
  for (std::size_t h = 0; h < cfg_.heads; ++h) {
    const std::string p = prefix + "att.h" + std::to_string(h) + ".";
    CriticParams::Head head;
    head.q_lin = store.add(p + "q_lin", nn::xavier_uniform(d, dk, rng));
    head.k_lin_spa = store.add(p + "k_lin_spa", nn::xavier_uniform(d, dk, rng));
    head.k_lin_tem = store.add(p + "k_lin_tem", nn::xavier_uniform(d, dk, rng));
    head.att_spa = store.add(p + "att_spa", nn::xavier_uniform(dk, dk, rng));
    head.att_tem = store.add(p + "att_tem", nn::xavier_uniform(dk, dk, rng));
    ids_.heads.push_back(head);
  }
  ids_.value_w1 = store.add(prefix + "value.w1", nn::xavier_uniform(d, cfg_.value_hidden, rng));
  ids_.value_b1 = store.add(prefix + "value.b1", Matrix(1, cfg_.value_hidden));
  ids_.value_w2 = store.add(prefix + "value.w2", nn::xavier_uniform(cfg_.value_hidden, 1, rng));
  ids_.value_b2 = store.add(prefix + "value.b2", Matrix(1, 1));
}

HypergraphCritic::HypergraphCritic(const ParameterStore& store, const CriticConfig& cfg, const std::string& prefix)
    : cfg_(cfg) {
  cfg_.validate();
  ids_.embed_w = store.find(prefix + "embed.w");
  ids_.embed_b = store.find(prefix + "embed.b");
  ids_.theta_spa = store.find(prefix + "recon.theta_spa");
  ids_.theta_tem = store.find(prefix + "recon.theta_tem");
  ids_.p_spa = store.find(prefix + "recon.p_spa");
  ids_.p_tem = store.find(prefix + "recon.p_tem");
  for (std::size_t h = 0; h < cfg_.heads; ++h) {
    const std::string p = prefix + "att.h" + std::to_string(h) + ".";
    ids_.heads.push_back({store.find(p + "q_lin"), store.find(p + "k_lin_spa"), store.find(p + "k_lin_tem"),
                          store.find(p + "att_spa"), store.find(p + "att_tem")});
  }
  ids_.value_w1 = store.find(prefix + "value.w1");
  ids_.value_b1 = store.find(prefix + "value.b1");
  ids_.value_w2 = store.find(prefix + "value.w2");
  ids_.value_b2 = store.find(prefix + "value.b2");
  if (store.value(ids_.p_tem).rows() != cfg_.agents) {
    throw DimensionError("stored critic was built for " + std::to_string(store.value(ids_.p_tem).rows()) +
                         " agents, config asks for " + std::to_string(cfg_.agents));
  }
}

std::vector<DirectedHyperedge> HypergraphCritic::edges(const ParameterStore& store) const {
  return build_hyperedges(store.value(ids_.p_spa), store.value(ids_.p_tem), cfg_.zeta);
}

template <typename Store>
CriticOutput HypergraphCritic::run(nn::Tape& tape, Store& store, const Matrix& obs, const Matrix& prev_obs) const {
  const std::size_t n = cfg_.agents;
  if (obs.rows() != n || obs.cols() != cfg_.obs_dim || !obs.same_shape(prev_obs)) {
    throw DimensionError("critic expects " + std::to_string(n) + "×" + std::to_string(cfg_.obs_dim) +
                         " observations, got " + nn::shape_string(obs) + " and " + nn::shape_string(prev_obs));
  }
  auto param = [&](ParamId id) { return tape.param(store, id); };
  Var w_e = param(ids_.embed_w);
  Var b_e = param(ids_.embed_b);
  Var p_spa = param(ids_.p_spa);
  Var p_tem = param(ids_.p_tem);

  Var h = embed_observations(tape.constant(obs), w_e, b_e);
  Var h_prev = embed_observations(tape.constant(prev_obs), w_e, b_e);

  CriticOutput out;
  out.c_spa = reconstruction_errors(h, param(ids_.theta_spa), expand_spatial_coefficients(p_spa), h);
  out.c_tem = reconstruction_errors(h, param(ids_.theta_tem), p_tem, h_prev);
  out.l_recon = reconstruction_loss(out.c_spa, out.c_tem, p_spa, p_tem, cfg_.lambda, cfg_.gamma2);

  out.edges = edges(store);
  Var m = incidence_var(out.edges, n, p_spa, p_tem);
  const Var frames[] = {h, h_prev};
  Var e = hyperedge_embedding(m, nn::concat_rows(frames));

  std::vector<AttentionHeadVars> heads;
  for (const CriticParams::Head& hp : ids_.heads) {
    heads.push_back({param(hp.q_lin), param(hp.k_lin_spa), param(hp.k_lin_tem), param(hp.att_spa),
                     param(hp.att_tem)});
  }
  out.attention = hyperedge_attention(h, nn::slice_rows(e, 0, n), nn::slice_rows(e, n, n), heads);
  Var q = node_update(out.attention.w_spa, out.attention.w_tem, out.attention.key_spa, out.attention.key_tem);
  out.readout = graph_readout(q);
  Var hidden = nn::relu(nn::dense(out.readout, param(ids_.value_w1), param(ids_.value_b1)));
  out.value = nn::dense(hidden, param(ids_.value_w2), param(ids_.value_b2));
  return out;
}

CriticOutput HypergraphCritic::forward(nn::Tape& tape, ParameterStore& store, const Matrix& obs,
                                       const Matrix& prev_obs) const {
  return run(tape, store, obs, prev_obs);
}

CriticOutput HypergraphCritic::forward(nn::Tape& tape, const ParameterStore& store, const Matrix& obs,
                                       const Matrix& prev_obs) const {
  return run(tape, store, obs, prev_obs);
}

}  // namespace dhlight::dhg
