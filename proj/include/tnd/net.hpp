#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tnd/autodiff.hpp"
#include "tnd/graph.hpp"

namespace tnd {

struct NetConfig {
  int node_features = 16;
  int edge_features = 2;
  std::vector<int> block_widths{128, 128, 64, 64};
  std::vector<int> block_heads{8, 8, 4, 4};
  int embed_dim = 64;  // input projection width and JK output width
  std::vector<int> actor_hidden{256, 128, 64};
  std::vector<int> critic_hidden{256, 128, 64};
  double leaky_slope = 0.2;
  double dropout = 0.0;  // module present, disabled in the trained configuration

  // Channel schedule [128]^(B/2)+[64]^(B-B/2) with head schedule [8]/[4].
  static NetConfig with_blocks(int blocks);
  void validate() const;
};

struct NetOutput {
  std::vector<double> logits;  // length n
  double value = 0.0;
};

// Captured attention weights: one flat vector per (block, head), aligned with
// the encoding's arc list; weights over in-arcs of each destination sum to 1.
struct AttentionCapture {
  std::vector<std::vector<double>> alphas;
};

class PolicyValueNet {
 public:
  struct Param {
    std::string name;
    ad::Mat value;
    ad::Mat grad;
  };

  PolicyValueNet(NetConfig cfg, std::uint64_t seed);

  const NetConfig& config() const { return cfg_; }
  std::size_t parameter_count() const;

  NetOutput forward(const StateEncoding& enc) const;
  NetOutput forward(const StateEncoding& enc, AttentionCapture* capture) const;

  // Tape-building forward shared by inference and the losses; returns the
  // logits column (n x 1) and the value scalar (1 x 1). Dropout only fires
  // when a generator is supplied and the configured rate is above zero.
  std::pair<ad::Var, ad::Var> build(ad::Tape& tape, const StateEncoding& enc,
                                    AttentionCapture* capture = nullptr,
                                    Rng* dropout_rng = nullptr) const;

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  void zero_grads();

  std::string to_json() const;
  static PolicyValueNet from_json(const std::string& text);

 private:
  int param_index(const std::string& name) const;
  ad::Var use(ad::Tape& tape, int index) const;

  NetConfig cfg_;
  std::vector<Param> params_;
  // index tables laid out at construction
  int input_w_ = -1, input_b_ = -1, jk_w_ = -1, jk_b_ = -1;
  struct BlockRefs {
    int norm_gain = -1, norm_bias = -1, bias = -1, residual = -1;  // residual -1 when identity
    std::vector<int> w_src, w_dst, w_edge, att;                    // per head
  };
  std::vector<BlockRefs> blocks_;
  std::vector<int> actor_w_, actor_b_, critic_w_, critic_b_;
};

// Softmax over valid entries; exact zeros elsewhere. Fails on an all-zero mask.
std::vector<double> masked_policy(const std::vector<double>& logits,
                                  const std::vector<std::uint8_t>& mask);

struct TrainSample {
  StateEncoding encoding;
  std::vector<int> candidates;
  std::vector<double> pi;  // target distribution, aligned with candidates
  double z_norm = 0.0;     // normalized terminal value target
};

struct LossBreakdown {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
};

// Mean over the batch of cross-entropy(pi, masked policy) + (V - z)^2.
// Gradients accumulate into the net's parameter store.
LossBreakdown alphatransit_loss(PolicyValueNet& net, const std::vector<TrainSample>& batch);

struct PpoSample {
  StateEncoding encoding;
  std::vector<int> candidates;
  int action_index = 0;  // position within candidates
  double old_logp = 0.0;
  double advantage = 0.0;
  double value_target = 0.0;
};

struct PpoLossBreakdown {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
};

PpoLossBreakdown ppo_loss(PolicyValueNet& net, const std::vector<PpoSample>& batch,
                          double clip_eps, double value_coef, double entropy_coef);

class Adam {
 public:
  explicit Adam(double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(PolicyValueNet& net);
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  long long step_count() const { return t_; }

  std::string to_json() const;
  void load_json(const std::string& text, const PolicyValueNet& net);

 private:
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<ad::Mat> m_, v_;
};

}  // namespace tnd
