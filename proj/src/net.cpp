#include "tnd/net.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "tnd/error.hpp"
#include "tnd/rng.hpp"

namespace tnd {

NetConfig NetConfig::with_blocks(int blocks) {
  NetConfig cfg;
  cfg.block_widths.clear();
  cfg.block_heads.clear();
  const int wide = blocks / 2;
  for (int b = 0; b < blocks; ++b) {
    cfg.block_widths.push_back(b < wide ? 128 : 64);
    cfg.block_heads.push_back(b < wide ? 8 : 4);
  }
  return cfg;
}

void NetConfig::validate() const {
  if (node_features < 1 || edge_features < 0) fail(errc::invalid_input, "bad feature sizes");
  if (block_widths.empty() || block_widths.size() != block_heads.size()) {
    fail(errc::invalid_input, "block widths and head counts must align and be nonempty");
  }
  for (int w : block_widths) {
    if (w < 1) fail(errc::invalid_input, "block width must be positive");
  }
  for (int h : block_heads) {
    if (h < 1) fail(errc::invalid_input, "head count must be positive");
  }
  if (embed_dim < 1) fail(errc::invalid_input, "embed_dim must be positive");
  if (actor_hidden.empty() || critic_hidden.empty()) {
    fail(errc::invalid_input, "actor/critic hidden sizes must be nonempty");
  }
  if (dropout < 0.0 || dropout >= 1.0) fail(errc::invalid_input, "dropout must lie in [0,1)");
}

namespace {

// Orthogonal initialization via modified Gram-Schmidt on a seeded Gaussian.
ad::Mat orthogonal(std::size_t rows, std::size_t cols, Rng& rng) {
  const bool tall = rows >= cols;
  const std::size_t major = tall ? rows : cols;
  const std::size_t minor = tall ? cols : rows;

  // columns of g get orthonormalized
  std::vector<std::vector<double>> basis(minor, std::vector<double>(major));
  for (auto& column : basis) {
    for (auto& v : column) v = rng.normal();
  }
  for (std::size_t c = 0; c < minor; ++c) {
    for (std::size_t p = 0; p < c; ++p) {
      double dot = 0.0;
      for (std::size_t r = 0; r < major; ++r) dot += basis[c][r] * basis[p][r];
      for (std::size_t r = 0; r < major; ++r) basis[c][r] -= dot * basis[p][r];
    }
    double norm = 0.0;
    for (double v : basis[c]) norm += v * v;
    norm = std::sqrt(norm);
    if (norm < 1e-12) {  // astronomically unlikely; fall back to a unit vector
      std::fill(basis[c].begin(), basis[c].end(), 0.0);
      basis[c][c % major] = 1.0;
    } else {
      for (double& v : basis[c]) v /= norm;
    }
  }

  ad::Mat w(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      w.at(r, c) = tall ? basis[c][r] : basis[r][c];
    }
  }
  return w;
}

ad::Mat zeros(std::size_t rows, std::size_t cols) { return ad::Mat(rows, cols); }

ad::Mat ones(std::size_t rows, std::size_t cols) {
  ad::Mat m(rows, cols);
  std::fill(m.data.begin(), m.data.end(), 1.0);
  return m;
}

}  // namespace

PolicyValueNet::PolicyValueNet(NetConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(seed);
  const auto add = [&](const std::string& name, ad::Mat value) {
    params_.push_back(Param{name, std::move(value), ad::Mat{}});
    return static_cast<int>(params_.size()) - 1;
  };
  const auto linear = [&](const std::string& name, int in, int out, int* w, int* b) {
    *w = add(name + ".w", orthogonal(static_cast<std::size_t>(in), static_cast<std::size_t>(out), rng));
    *b = add(name + ".b", zeros(1, static_cast<std::size_t>(out)));
  };

  linear("input", cfg_.node_features, cfg_.embed_dim, &input_w_, &input_b_);

  int width = cfg_.embed_dim;
  int jk_width = 0;
  for (std::size_t b = 0; b < cfg_.block_widths.size(); ++b) {
    const int out = cfg_.block_widths[b];
    const int heads = cfg_.block_heads[b];
    const std::string prefix = "block" + std::to_string(b);
    BlockRefs refs;
    refs.norm_gain = add(prefix + ".norm.gain", ones(1, static_cast<std::size_t>(width)));
    refs.norm_bias = add(prefix + ".norm.bias", zeros(1, static_cast<std::size_t>(width)));
    for (int h = 0; h < heads; ++h) {
      const std::string hp = prefix + ".head" + std::to_string(h);
      refs.w_src.push_back(add(hp + ".src", orthogonal(static_cast<std::size_t>(width),
                                                       static_cast<std::size_t>(out), rng)));
      refs.w_dst.push_back(add(hp + ".dst", orthogonal(static_cast<std::size_t>(width),
                                                       static_cast<std::size_t>(out), rng)));
      refs.w_edge.push_back(add(hp + ".edge", orthogonal(static_cast<std::size_t>(cfg_.edge_features),
                                                         static_cast<std::size_t>(out), rng)));
      refs.att.push_back(add(hp + ".att", orthogonal(static_cast<std::size_t>(out), 1, rng)));
    }
    refs.bias = add(prefix + ".bias", zeros(1, static_cast<std::size_t>(out)));
    if (width != out) {
      refs.residual = add(prefix + ".res", orthogonal(static_cast<std::size_t>(width),
                                                      static_cast<std::size_t>(out), rng));
    }
    blocks_.push_back(std::move(refs));
    width = out;
    jk_width += out;
  }

  linear("jk", jk_width, cfg_.embed_dim, &jk_w_, &jk_b_);

  int in = cfg_.embed_dim;
  for (std::size_t i = 0; i < cfg_.actor_hidden.size(); ++i) {
    int w = -1, b = -1;
    linear("actor" + std::to_string(i), in, cfg_.actor_hidden[i], &w, &b);
    actor_w_.push_back(w);
    actor_b_.push_back(b);
    in = cfg_.actor_hidden[i];
  }
  {
    int w = -1, b = -1;
    linear("actor.out", in, 1, &w, &b);
    actor_w_.push_back(w);
    actor_b_.push_back(b);
  }

  in = 2 * cfg_.embed_dim;  // mean pooling concatenated with max pooling
  for (std::size_t i = 0; i < cfg_.critic_hidden.size(); ++i) {
    int w = -1, b = -1;
    linear("critic" + std::to_string(i), in, cfg_.critic_hidden[i], &w, &b);
    critic_w_.push_back(w);
    critic_b_.push_back(b);
    in = cfg_.critic_hidden[i];
  }
  {
    int w = -1, b = -1;
    linear("critic.out", in, 1, &w, &b);
    critic_w_.push_back(w);
    critic_b_.push_back(b);
  }
}

std::size_t PolicyValueNet::parameter_count() const {
  std::size_t count = 0;
  for (const Param& p : params_) count += p.value.size();
  return count;
}

void PolicyValueNet::zero_grads() {
  for (Param& p : params_) {
    if (p.grad.size() != p.value.size()) p.grad = ad::Mat(p.value.rows, p.value.cols);
    std::fill(p.grad.data.begin(), p.grad.data.end(), 0.0);
  }
}

ad::Var PolicyValueNet::use(ad::Tape& tape, int index) const {
  const Param& p = params_[static_cast<std::size_t>(index)];
  // grad buffers are pre-sized by zero_grads(); inference tapes never write them
  return tape.param(&p.value, const_cast<ad::Mat*>(&p.grad));
}

std::pair<ad::Var, ad::Var> PolicyValueNet::build(ad::Tape& tape, const StateEncoding& enc,
                                                  AttentionCapture* capture,
                                                  Rng* dropout_rng) const {
  const auto n = static_cast<std::size_t>(enc.node_count);
  if (enc.node_features.size() != n * static_cast<std::size_t>(cfg_.node_features)) {
    fail(errc::invalid_input, "encoding node-feature shape mismatch");
  }
  if (enc.arc_features.size() != enc.arcs.size() * static_cast<std::size_t>(cfg_.edge_features)) {
    fail(errc::invalid_input, "encoding arc-feature shape mismatch");
  }

  ad::Mat x(n, static_cast<std::size_t>(cfg_.node_features));
  x.data = enc.node_features;
  const auto arc_count = enc.arcs.size();
  ad::Mat z(arc_count, static_cast<std::size_t>(cfg_.edge_features));
  z.data = enc.arc_features;
  std::vector<int> src(arc_count), dst(arc_count);
  for (std::size_t a = 0; a < arc_count; ++a) {
    src[a] = enc.arcs[a].first;
    dst[a] = enc.arcs[a].second;
  }

  const ad::Var x_var = tape.leaf(std::move(x));
  const ad::Var z_var = tape.leaf(std::move(z));

  ad::Var h = tape.add_row(tape.matmul(x_var, use(tape, input_w_)), use(tape, input_b_));

  std::vector<ad::Var> block_outputs;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const BlockRefs& refs = blocks_[b];
    const int heads = cfg_.block_heads[b];
    const ad::Var normed =
        tape.layer_norm(h, use(tape, refs.norm_gain), use(tape, refs.norm_bias));

    ad::Var head_sum{-1};
    for (int head = 0; head < heads; ++head) {
      const auto idx = static_cast<std::size_t>(head);
      const ad::Var hs = tape.matmul(normed, use(tape, refs.w_src[idx]));
      const ad::Var ht = tape.matmul(normed, use(tape, refs.w_dst[idx]));
      const ad::Var ge = tape.matmul(z_var, use(tape, refs.w_edge[idx]));
      const ad::Var s_rows = tape.gather_rows(hs, src);
      const ad::Var combined = tape.add(tape.add(s_rows, tape.gather_rows(ht, dst)), ge);
      const ad::Var scores =
          tape.matmul(tape.leaky_relu(combined, cfg_.leaky_slope), use(tape, refs.att[idx]));
      ad::Var alpha = tape.segment_softmax(scores, dst, n);
      if (capture) {
        capture->alphas.push_back(tape.val(alpha).data);
      }
      alpha = tape.dropout(alpha, cfg_.dropout, dropout_rng);
      const ad::Var messages = tape.row_scale(s_rows, alpha);
      const ad::Var aggregated = tape.scatter_sum_rows(messages, dst, n);
      head_sum = head < 1 ? aggregated : tape.add(head_sum, aggregated);
    }
    ad::Var attn = tape.scale(head_sum, 1.0 / static_cast<double>(heads));
    attn = tape.add_row(attn, use(tape, refs.bias));
    const ad::Var activated = tape.dropout(tape.tanh(attn), cfg_.dropout, dropout_rng);
    const ad::Var residual =
        refs.residual < 0 ? h : tape.matmul(h, use(tape, refs.residual));
    h = tape.add(activated, residual);
    block_outputs.push_back(h);
  }

  const ad::Var jk = tape.add_row(tape.matmul(tape.concat_cols(block_outputs), use(tape, jk_w_)),
                                  use(tape, jk_b_));

  ad::Var actor = jk;
  for (std::size_t i = 0; i + 1 < actor_w_.size(); ++i) {
    actor = tape.tanh(tape.add_row(tape.matmul(actor, use(tape, actor_w_[i])),
                                   use(tape, actor_b_[i])));
  }
  const ad::Var logits = tape.add_row(tape.matmul(actor, use(tape, actor_w_.back())),
                                      use(tape, actor_b_.back()));

  ad::Var critic = tape.concat_cols({tape.mean_rows(jk), tape.max_rows(jk)});
  for (std::size_t i = 0; i + 1 < critic_w_.size(); ++i) {
    critic = tape.tanh(tape.add_row(tape.matmul(critic, use(tape, critic_w_[i])),
                                    use(tape, critic_b_[i])));
  }
  const ad::Var value = tape.add_row(tape.matmul(critic, use(tape, critic_w_.back())),
                                     use(tape, critic_b_.back()));
  return {logits, value};
}

NetOutput PolicyValueNet::forward(const StateEncoding& enc) const { return forward(enc, nullptr); }

NetOutput PolicyValueNet::forward(const StateEncoding& enc, AttentionCapture* capture) const {
  ad::Tape tape;
  const auto [logits, value] = build(tape, enc, capture);
  NetOutput out;
  out.logits = tape.val(logits).data;
  out.value = tape.val(value).data[0];
  return out;
}

std::vector<double> masked_policy(const std::vector<double>& logits,
                                  const std::vector<std::uint8_t>& mask) {
  if (logits.size() != mask.size()) fail(errc::invalid_input, "mask size mismatch");
  double max_logit = 0.0;
  bool any = false;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!mask[i]) continue;
    max_logit = any ? std::max(max_logit, logits[i]) : logits[i];
    any = true;
  }
  if (!any) fail(errc::invalid_input, "masked_policy: no valid entries in the mask");
  std::vector<double> probs(logits.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!mask[i]) continue;
    probs[i] = std::exp(logits[i] - max_logit);
    sum += probs[i];
  }
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (mask[i]) probs[i] /= sum;
  }
  return probs;
}

LossBreakdown alphatransit_loss(PolicyValueNet& net, const std::vector<TrainSample>& batch) {
  if (batch.empty()) fail(errc::invalid_input, "empty training batch");
  LossBreakdown out;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const TrainSample& sample : batch) {
    if (sample.candidates.empty() || sample.candidates.size() != sample.pi.size()) {
      fail(errc::invalid_input, "policy target does not align with the candidate set");
    }
    for (double p : sample.pi) {
      if (p < 0.0) fail(errc::invalid_input, "policy target has negative mass");
    }
    for (int c : sample.candidates) {
      if (c < 0 || c >= sample.encoding.node_count) {
        fail(errc::invalid_input, "policy target support outside the encoded node set");
      }
    }
    ad::Tape tape;
    const auto [logits, value] = net.build(tape, sample.encoding);
    const ad::Var cand = tape.gather_rows(logits, sample.candidates);
    const ad::Var lse = tape.logsumexp(cand);
    const ad::Var weighted = tape.weighted_sum(cand, sample.pi);
    const ad::Var policy_loss = tape.sub(lse, weighted);
    const ad::Var value_loss = tape.square(tape.add_scalar(value, -sample.z_norm));
    const ad::Var total = tape.add(policy_loss, value_loss);
    tape.backward(total, inv);
    out.total += tape.val(total).data[0] * inv;
    out.policy += tape.val(policy_loss).data[0] * inv;
    out.value += tape.val(value_loss).data[0] * inv;
  }
  return out;
}

PpoLossBreakdown ppo_loss(PolicyValueNet& net, const std::vector<PpoSample>& batch,
                          double clip_eps, double value_coef, double entropy_coef) {
  if (batch.empty()) fail(errc::invalid_input, "empty PPO batch");
  PpoLossBreakdown out;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const PpoSample& sample : batch) {
    if (sample.candidates.empty() || sample.action_index < 0 ||
        sample.action_index >= static_cast<int>(sample.candidates.size())) {
      fail(errc::invalid_input, "PPO sample action outside its candidate set");
    }
    if (!std::isfinite(sample.advantage)) fail(errc::invalid_input, "non-finite advantage");
    ad::Tape tape;
    const auto [logits, value] = net.build(tape, sample.encoding);
    const ad::Var cand = tape.gather_rows(logits, sample.candidates);
    const ad::Var lse = tape.logsumexp(cand);
    const ad::Var chosen = tape.gather_rows(cand, {sample.action_index});
    const ad::Var logp = tape.sub(chosen, lse);
    const ad::Var surrogate =
        tape.ppo_surrogate(logp, sample.old_logp, sample.advantage, clip_eps);
    const ad::Var entropy = tape.softmax_entropy(cand);
    const ad::Var value_err = tape.square(tape.add_scalar(value, -sample.value_target));
    const ad::Var total = tape.add(
        tape.sub(tape.scale(value_err, value_coef), tape.scale(entropy, entropy_coef)),
        tape.scale(surrogate, -1.0));
    tape.backward(total, inv);
    out.total += tape.val(total).data[0] * inv;
    out.policy += -tape.val(surrogate).data[0] * inv;
    out.value += tape.val(value_err).data[0] * inv;
    out.entropy += tape.val(entropy).data[0] * inv;
  }
  return out;
}

void Adam::step(PolicyValueNet& net) {
  auto& params = net.params();
  if (m_.size() != params.size()) {
    m_.assign(params.size(), ad::Mat{});
    v_.assign(params.size(), ad::Mat{});
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = ad::Mat(params[i].value.rows, params[i].value.cols);
      v_[i] = ad::Mat(params[i].value.rows, params[i].value.cols);
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (p.grad.size() != p.value.size()) continue;  // no gradient accumulated
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad.data[j];
      m_[i].data[j] = beta1_ * m_[i].data[j] + (1.0 - beta1_) * g;
      v_[i].data[j] = beta2_ * v_[i].data[j] + (1.0 - beta2_) * g * g;
      const double m_hat = m_[i].data[j] / bc1;
      const double v_hat = v_[i].data[j] / bc2;
      p.value.data[j] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

std::string Adam::to_json() const {
  nlohmann::json doc;
  doc["step"] = t_;
  doc["lr"] = lr_;
  doc["beta1"] = beta1_;
  doc["beta2"] = beta2_;
  doc["eps"] = eps_;
  doc["m"] = nlohmann::json::array();
  doc["v"] = nlohmann::json::array();
  for (const auto& m : m_) doc["m"].push_back(m.data);
  for (const auto& v : v_) doc["v"].push_back(v.data);
  return doc.dump();
}

void Adam::load_json(const std::string& text, const PolicyValueNet& net) {
  const auto doc = nlohmann::json::parse(text);
  t_ = doc.at("step").get<long long>();
  lr_ = doc.at("lr").get<double>();
  beta1_ = doc.at("beta1").get<double>();
  beta2_ = doc.at("beta2").get<double>();
  eps_ = doc.at("eps").get<double>();
  const auto& params = net.params();
  m_.assign(params.size(), ad::Mat{});
  v_.assign(params.size(), ad::Mat{});
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = ad::Mat(params[i].value.rows, params[i].value.cols);
    v_[i] = ad::Mat(params[i].value.rows, params[i].value.cols);
    const auto& jm = doc.at("m").at(i);
    const auto& jv = doc.at("v").at(i);
    if (jm.size() != m_[i].size() || jv.size() != v_[i].size()) {
      fail(errc::parse, "optimizer moment shape mismatch");
    }
    for (std::size_t j = 0; j < m_[i].size(); ++j) {
      m_[i].data[j] = jm.at(j).get<double>();
      v_[i].data[j] = jv.at(j).get<double>();
    }
  }
}

namespace {

nlohmann::json config_to_json(const NetConfig& cfg) {
  return {{"node_features", cfg.node_features},
          {"edge_features", cfg.edge_features},
          {"block_widths", cfg.block_widths},
          {"block_heads", cfg.block_heads},
          {"embed_dim", cfg.embed_dim},
          {"actor_hidden", cfg.actor_hidden},
          {"critic_hidden", cfg.critic_hidden},
          {"leaky_slope", cfg.leaky_slope},
          {"dropout", cfg.dropout}};
}

NetConfig config_from_json(const nlohmann::json& doc) {
  NetConfig cfg;
  cfg.node_features = doc.at("node_features").get<int>();
  cfg.edge_features = doc.at("edge_features").get<int>();
  cfg.block_widths = doc.at("block_widths").get<std::vector<int>>();
  cfg.block_heads = doc.at("block_heads").get<std::vector<int>>();
  cfg.embed_dim = doc.at("embed_dim").get<int>();
  cfg.actor_hidden = doc.at("actor_hidden").get<std::vector<int>>();
  cfg.critic_hidden = doc.at("critic_hidden").get<std::vector<int>>();
  cfg.leaky_slope = doc.at("leaky_slope").get<double>();
  cfg.dropout = doc.at("dropout").get<double>();
  return cfg;
}

}  // namespace

std::string PolicyValueNet::to_json() const {
  nlohmann::json doc;
  doc["config"] = config_to_json(cfg_);
  doc["params"] = nlohmann::json::array();
  for (const Param& p : params_) {
    doc["params"].push_back(
        {{"name", p.name}, {"rows", p.value.rows}, {"cols", p.value.cols}, {"data", p.value.data}});
  }
  return doc.dump();
}

PolicyValueNet PolicyValueNet::from_json(const std::string& text) {
  const auto doc = nlohmann::json::parse(text);
  PolicyValueNet net(config_from_json(doc.at("config")), 0);
  const auto& jparams = doc.at("params");
  if (jparams.size() != net.params_.size()) {
    fail(errc::parse, "checkpoint parameter count mismatch");
  }
  for (std::size_t i = 0; i < net.params_.size(); ++i) {
    Param& p = net.params_[i];
    const auto& jp = jparams.at(i);
    if (jp.at("name").get<std::string>() != p.name ||
        jp.at("rows").get<std::size_t>() != p.value.rows ||
        jp.at("cols").get<std::size_t>() != p.value.cols) {
      fail(errc::parse, "checkpoint parameter layout mismatch at " + p.name);
    }
    const auto& data = jp.at("data");
    if (data.size() != p.value.size()) fail(errc::parse, "checkpoint data size mismatch");
    for (std::size_t j = 0; j < p.value.size(); ++j) p.value.data[j] = data.at(j).get<double>();
  }
  return net;
}

int PolicyValueNet::param_index(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

}  // namespace tnd
