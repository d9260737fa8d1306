#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace tnd {
class Rng;
}

namespace tnd::ad {

struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::size_t size() const { return data.size(); }
};

struct Var {
  int id = -1;
};

// Define-by-run reverse-mode tape over matrices. Values are computed eagerly;
// backward() runs the recorded closures in reverse order. Parameter leaves
// accumulate into external gradient buffers so batches can share one store.
class Tape {
 public:
  Var leaf(Mat value);
  Var param(const Mat* value, Mat* grad_out);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var scale(Var a, double factor);
  Var add_scalar(Var a, double constant);
  Var add_row(Var a, Var row);  // row: 1 x c, broadcast over rows of a
  Var tanh(Var a);
  Var leaky_relu(Var a, double slope);
  Var square(Var a);

  // Inverted dropout; identity when rate is 0 or no generator is supplied
  // (evaluation mode).
  Var dropout(Var a, double rate, Rng* rng);

  // Per-row normalization with learned gain/bias (both 1 x c).
  Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5);

  Var gather_rows(Var a, std::vector<int> idx);
  Var scatter_sum_rows(Var a, std::vector<int> idx, std::size_t out_rows);
  Var row_scale(Var a, Var weights);  // weights: rows x 1

  // scores: E x 1; softmax within groups of equal segment id (0..segments-1).
  Var segment_softmax(Var scores, std::vector<int> segment, std::size_t segments);

  Var concat_cols(const std::vector<Var>& parts);
  Var mean_rows(Var a);  // 1 x c
  Var max_rows(Var a);   // 1 x c

  Var sum(Var a);                                          // 1 x 1
  Var weighted_sum(Var a, std::vector<double> weights);    // a: E x 1 -> 1 x 1
  Var logsumexp(Var a);                                    // a: E x 1 -> 1 x 1
  Var softmax_entropy(Var a);                              // a: E x 1 -> 1 x 1
  // min(ratio * adv, clip(ratio, 1-eps, 1+eps) * adv), ratio = exp(logp - old_logp)
  Var ppo_surrogate(Var logp, double old_logp, double advantage, double clip_eps);

  const Mat& val(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
  const Mat& grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].grad; }

  // Reverse sweep from a 1x1 root; seeds with `seed` and adds parameter
  // gradients into their external buffers.
  void backward(Var root, double seed = 1.0);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void(Tape&, const Node&)> back;  // may be empty for leaves
  };

  Var push(Mat value, std::function<void(Tape&, const Node&)> back);
  Mat& grad_ref(Var v) { return nodes_[static_cast<std::size_t>(v.id)].grad; }

  std::vector<Node> nodes_;
};

}  // namespace tnd::ad
