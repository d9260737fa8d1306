#include "tnd/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "tnd/error.hpp"
#include "tnd/rng.hpp"

namespace tnd::ad {

namespace {

void check(bool ok, const char* what) {
  if (!ok) fail(errc::internal, std::string("autodiff shape mismatch: ") + what);
}

}  // namespace

Var Tape::push(Mat value, std::function<void(Tape&, const Node&)> back) {
  nodes_.push_back(Node{std::move(value), Mat{}, std::move(back)});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Mat value) { return push(std::move(value), nullptr); }

Var Tape::param(const Mat* value, Mat* grad_out) {
  return push(*value, [grad_out](Tape&, const Node& node) {
    if (grad_out->size() != node.grad.size()) *grad_out = Mat(node.grad.rows, node.grad.cols);
    for (std::size_t i = 0; i < node.grad.size(); ++i) grad_out->data[i] += node.grad.data[i];
  });
}

Var Tape::matmul(Var a, Var b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  check(A.cols == B.rows, "matmul");
  Mat C(A.rows, B.cols);
  for (std::size_t i = 0; i < A.rows; ++i) {
    for (std::size_t k = 0; k < A.cols; ++k) {
      const double aik = A.data[i * A.cols + k];
      if (aik == 0.0) continue;
      const double* brow = &B.data[k * B.cols];
      double* crow = &C.data[i * C.cols];
      for (std::size_t j = 0; j < B.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return push(std::move(C), [a, b](Tape& t, const Node& node) {
    const Mat& A = t.val(a);
    const Mat& B = t.val(b);
    Mat& dA = t.grad_ref(a);
    Mat& dB = t.grad_ref(b);
    const Mat& dC = node.grad;
    for (std::size_t i = 0; i < A.rows; ++i) {
      for (std::size_t j = 0; j < B.cols; ++j) {
        const double g = dC.data[i * dC.cols + j];
        if (g == 0.0) continue;
        for (std::size_t k = 0; k < A.cols; ++k) {
          dA.data[i * A.cols + k] += g * B.data[k * B.cols + j];
          dB.data[k * B.cols + j] += g * A.data[i * A.cols + k];
        }
      }
    }
  });
}

Var Tape::add(Var a, Var b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  check(A.rows == B.rows && A.cols == B.cols, "add");
  Mat C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C.data[i] += B.data[i];
  return push(std::move(C), [a, b](Tape& t, const Node& node) {
    Mat& dA = t.grad_ref(a);
    Mat& dB = t.grad_ref(b);
    for (std::size_t i = 0; i < node.grad.size(); ++i) {
      dA.data[i] += node.grad.data[i];
      dB.data[i] += node.grad.data[i];
    }
  });
}

Var Tape::sub(Var a, Var b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  check(A.rows == B.rows && A.cols == B.cols, "sub");
  Mat C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C.data[i] -= B.data[i];
  return push(std::move(C), [a, b](Tape& t, const Node& node) {
    Mat& dA = t.grad_ref(a);
    Mat& dB = t.grad_ref(b);
    for (std::size_t i = 0; i < node.grad.size(); ++i) {
      dA.data[i] += node.grad.data[i];
      dB.data[i] -= node.grad.data[i];
    }
  });
}

Var Tape::mul(Var a, Var b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  check(A.rows == B.rows && A.cols == B.cols, "mul");
  Mat C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C.data[i] *= B.data[i];
  return push(std::move(C), [a, b](Tape& t, const Node& node) {
    const Mat& A = t.val(a);
    const Mat& B = t.val(b);
    Mat& dA = t.grad_ref(a);
    Mat& dB = t.grad_ref(b);
    for (std::size_t i = 0; i < node.grad.size(); ++i) {
      dA.data[i] += node.grad.data[i] * B.data[i];
      dB.data[i] += node.grad.data[i] * A.data[i];
    }
  });
}

Var Tape::scale(Var a, double factor) {
  Mat C = val(a);
  for (double& v : C.data) v *= factor;
  return push(std::move(C), [a, factor](Tape& t, const Node& node) {
    Mat& dA = t.grad_ref(a);
    for (std::size_t i = 0; i < node.grad.size(); ++i) dA.data[i] += factor * node.grad.data[i];
  });
}

Var Tape::add_scalar(Var a, double constant) {
  Mat C = val(a);
  for (double& v : C.data) v += constant;
  return push(std::move(C), [a](Tape& t, const Node& node) {
    Mat& dA = t.grad_ref(a);
    for (std::size_t i = 0; i < node.grad.size(); ++i) dA.data[i] += node.grad.data[i];
  });
}

Var Tape::add_row(Var a, Var row) {
  const Mat& A = val(a);
  const Mat& R = val(row);
  check(R.rows == 1 && R.cols == A.cols, "add_row");
  Mat C = A;
  for (std::size_t i = 0; i < A.rows; ++i) {
    for (std::size_t j = 0; j < A.cols; ++j) C.data[i * A.cols + j] += R.data[j];
  }
  return push(std::move(C), [a, row](Tape& t, const Node& node) {
    Mat& dA = t.grad_ref(a);
    Mat& dR = t.grad_ref(row);
    const Mat& dC = node.grad;
    for (std::size_t i = 0; i < dC.rows; ++i) {
      for (std::size_t j = 0; j < dC.cols; ++j) {
        dA.data[i * dC.cols + j] += dC.data[i * dC.cols + j];
        dR.data[j] += dC.data[i * dC.cols + j];
      }
    }
  });
}

Var Tape::tanh(Var a) {
  Mat C = val(a);
  for (double& v : C.data) v = std::tanh(v);
  return push(std::move(C), [a](Tape& t, const Node& node) {
    Mat& dA = t.grad_ref(a);
    for (std::size_t i = 0; i < node.grad.size(); ++i) {
      dA.data[i] += node.grad.data[i] * (1.0 - node.value.data[i] * node.value.data[i]);
    }
  });
}

Var Tape::leaky_relu(Var a, double slope) {
  Mat C = val(a);
  for (double& v : C.data) v = v > 0.0 ? v : slope * v;
  return push(std::move(C), [a, slope](Tape& t, const Node& node) {
    const Mat& A = t.val(a);
    Mat& dA = t.grad_ref(a);
    for (std::size_t i = 0; i < node.grad.size(); ++i) {
      dA.data[i] += node.grad.data[i] * (A.data[i] > 0.0 ? 1.0 : slope);
    }
  });
}

Var Tape::square(Var a) {
  Mat C = val(a);
  for (double& v : C.data) v *= v;
  return push(std::move(C), [a](Tape& t, const Node& node) {
    const Mat& A = t.val(a);
    Mat& dA = t.grad_ref(a);
    for (std::size_t i = 0; i < node.grad.size(); ++i) {
      dA.data[i] += node.grad.data[i] * 2.0 * A.data[i];
    }
  });
}

Var Tape::dropout(Var a, double rate, Rng* rng) {
  if (rate <= 0.0 || rng == nullptr) return a;
  const Mat& A = val(a);
  const double keep = 1.0 - rate;
  std::vector<double> mask(A.size(), 0.0);
  for (auto& m : mask) m = rng->uniform01() < keep ? 1.0 / keep : 0.0;
  Mat C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C.data[i] *= mask[i];
  return push(std::move(C), [a, mask = std::move(mask)](Tape& t, const Node& node) {
    Mat& dA = t.grad_ref(a);
    for (std::size_t i = 0; i < node.grad.size(); ++i) {
      dA.data[i] += node.grad.data[i] * mask[i];
    }
  });
}

Var Tape::layer_norm(Var a, Var gain, Var bias, double eps) {
  const Mat& A = val(a);
  const Mat& G = val(gain);
  const Mat& B = val(bias);
  check(G.rows == 1 && G.cols == A.cols && B.rows == 1 && B.cols == A.cols, "layer_norm");
  Mat C(A.rows, A.cols);
  Mat x_hat(A.rows, A.cols);
  std::vector<double> inv_std(A.rows, 0.0);
  for (std::size_t i = 0; i < A.rows; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < A.cols; ++j) mean += A.at(i, j);
    mean /= static_cast<double>(A.cols);
    double var = 0.0;
    for (std::size_t j = 0; j < A.cols; ++j) {
      const double d = A.at(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(A.cols);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < A.cols; ++j) {
      x_hat.at(i, j) = (A.at(i, j) - mean) * inv_std[i];
      C.at(i, j) = x_hat.at(i, j) * G.data[j] + B.data[j];
    }
  }
  return push(std::move(C),
              [a, gain, bias, x_hat = std::move(x_hat), inv_std = std::move(inv_std)](
                  Tape& t, const Node& node) {
                const Mat& dC = node.grad;
                const Mat& G = t.val(gain);
                Mat& dA = t.grad_ref(a);
                Mat& dG = t.grad_ref(gain);
                Mat& dB = t.grad_ref(bias);
                const auto cols = static_cast<double>(dC.cols);
                for (std::size_t i = 0; i < dC.rows; ++i) {
                  double mean_w = 0.0, mean_wx = 0.0;
                  for (std::size_t j = 0; j < dC.cols; ++j) {
                    const double u = dC.at(i, j);
                    dG.data[j] += u * x_hat.at(i, j);
                    dB.data[j] += u;
                    const double w = u * G.data[j];
                    mean_w += w;
                    mean_wx += w * x_hat.at(i, j);
                  }
                  mean_w /= cols;
                  mean_wx /= cols;
                  for (std::size_t j = 0; j < dC.cols; ++j) {
                    const double w = dC.at(i, j) * G.data[j];
                    dA.at(i, j) += inv_std[i] * (w - mean_w - x_hat.at(i, j) * mean_wx);
                  }
                }
              });
}

Var Tape::gather_rows(Var a, std::vector<int> idx) {
  const Mat& A = val(a);
  Mat C(idx.size(), A.cols);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    for (std::size_t j = 0; j < A.cols; ++j) {
      C.at(i, j) = A.at(static_cast<std::size_t>(idx[i]), j);
    }
  }
  return push(std::move(C), [a, idx = std::move(idx)](Tape& t, const Node& node) {
    Mat& dA = t.grad_ref(a);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t j = 0; j < node.grad.cols; ++j) {
        dA.at(static_cast<std::size_t>(idx[i]), j) += node.grad.at(i, j);
      }
    }
  });
}

Var Tape::scatter_sum_rows(Var a, std::vector<int> idx, std::size_t out_rows) {
  const Mat& A = val(a);
  check(idx.size() == A.rows, "scatter_sum_rows");
  Mat C(out_rows, A.cols);
  for (std::size_t i = 0; i < A.rows; ++i) {
    for (std::size_t j = 0; j < A.cols; ++j) {
      C.at(static_cast<std::size_t>(idx[i]), j) += A.at(i, j);
    }
  }
  return push(std::move(C), [a, idx = std::move(idx)](Tape& t, const Node& node) {
    Mat& dA = t.grad_ref(a);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t j = 0; j < node.grad.cols; ++j) {
        dA.at(i, j) += node.grad.at(static_cast<std::size_t>(idx[i]), j);
      }
    }
  });
}

Var Tape::row_scale(Var a, Var weights) {
  const Mat& A = val(a);
  const Mat& W = val(weights);
  check(W.rows == A.rows && W.cols == 1, "row_scale");
  Mat C = A;
  for (std::size_t i = 0; i < A.rows; ++i) {
    for (std::size_t j = 0; j < A.cols; ++j) C.at(i, j) *= W.data[i];
  }
  return push(std::move(C), [a, weights](Tape& t, const Node& node) {
    const Mat& A = t.val(a);
    const Mat& W = t.val(weights);
    Mat& dA = t.grad_ref(a);
    Mat& dW = t.grad_ref(weights);
    for (std::size_t i = 0; i < A.rows; ++i) {
      for (std::size_t j = 0; j < A.cols; ++j) {
        dA.at(i, j) += node.grad.at(i, j) * W.data[i];
        dW.data[i] += node.grad.at(i, j) * A.at(i, j);
      }
    }
  });
}

Var Tape::segment_softmax(Var scores, std::vector<int> segment, std::size_t segments) {
  const Mat& S = val(scores);
  check(S.cols == 1 && segment.size() == S.rows, "segment_softmax");
  Mat C(S.rows, 1);
  std::vector<double> seg_max(segments, -1e300);
  for (std::size_t i = 0; i < S.rows; ++i) {
    auto& m = seg_max[static_cast<std::size_t>(segment[i])];
    m = std::max(m, S.data[i]);
  }
  std::vector<double> seg_sum(segments, 0.0);
  for (std::size_t i = 0; i < S.rows; ++i) {
    C.data[i] = std::exp(S.data[i] - seg_max[static_cast<std::size_t>(segment[i])]);
    seg_sum[static_cast<std::size_t>(segment[i])] += C.data[i];
  }
  for (std::size_t i = 0; i < S.rows; ++i) {
    C.data[i] /= seg_sum[static_cast<std::size_t>(segment[i])];
  }
  return push(std::move(C),
              [scores, segment = std::move(segment), segments](Tape& t, const Node& node) {
                Mat& dS = t.grad_ref(scores);
                std::vector<double> seg_dot(segments, 0.0);
                for (std::size_t i = 0; i < node.grad.size(); ++i) {
                  seg_dot[static_cast<std::size_t>(segment[i])] +=
                      node.grad.data[i] * node.value.data[i];
                }
                for (std::size_t i = 0; i < node.grad.size(); ++i) {
                  dS.data[i] += node.value.data[i] *
                                (node.grad.data[i] - seg_dot[static_cast<std::size_t>(segment[i])]);
                }
              });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  check(!parts.empty(), "concat_cols: empty");
  const std::size_t rows = val(parts[0]).rows;
  std::size_t cols = 0;
  for (Var p : parts) {
    check(val(p).rows == rows, "concat_cols rows");
    cols += val(p).cols;
  }
  Mat C(rows, cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    const Mat& P = val(p);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < P.cols; ++j) C.at(i, offset + j) = P.at(i, j);
    }
    offset += P.cols;
  }
  return push(std::move(C), [parts](Tape& t, const Node& node) {
    std::size_t offset = 0;
    for (Var p : parts) {
      Mat& dP = t.grad_ref(p);
      for (std::size_t i = 0; i < dP.rows; ++i) {
        for (std::size_t j = 0; j < dP.cols; ++j) dP.at(i, j) += node.grad.at(i, offset + j);
      }
      offset += dP.cols;
    }
  });
}

Var Tape::mean_rows(Var a) {
  const Mat& A = val(a);
  Mat C(1, A.cols);
  for (std::size_t i = 0; i < A.rows; ++i) {
    for (std::size_t j = 0; j < A.cols; ++j) C.data[j] += A.at(i, j);
  }
  for (double& v : C.data) v /= static_cast<double>(A.rows);
  return push(std::move(C), [a](Tape& t, const Node& node) {
    Mat& dA = t.grad_ref(a);
    const double inv = 1.0 / static_cast<double>(dA.rows);
    for (std::size_t i = 0; i < dA.rows; ++i) {
      for (std::size_t j = 0; j < dA.cols; ++j) dA.at(i, j) += node.grad.data[j] * inv;
    }
  });
}

Var Tape::max_rows(Var a) {
  const Mat& A = val(a);
  Mat C(1, A.cols);
  std::vector<std::size_t> argmax(A.cols, 0);
  for (std::size_t j = 0; j < A.cols; ++j) {
    double best = A.at(0, j);
    for (std::size_t i = 1; i < A.rows; ++i) {
      if (A.at(i, j) > best) {
        best = A.at(i, j);
        argmax[j] = i;
      }
    }
    C.data[j] = best;
  }
  return push(std::move(C), [a, argmax = std::move(argmax)](Tape& t, const Node& node) {
    Mat& dA = t.grad_ref(a);
    for (std::size_t j = 0; j < node.grad.cols; ++j) {
      dA.at(argmax[j], j) += node.grad.data[j];
    }
  });
}

Var Tape::sum(Var a) {
  const Mat& A = val(a);
  Mat C(1, 1);
  for (double v : A.data) C.data[0] += v;
  return push(std::move(C), [a](Tape& t, const Node& node) {
    Mat& dA = t.grad_ref(a);
    for (double& g : dA.data) g += node.grad.data[0];
  });
}

Var Tape::weighted_sum(Var a, std::vector<double> weights) {
  const Mat& A = val(a);
  check(A.cols == 1 && weights.size() == A.rows, "weighted_sum");
  Mat C(1, 1);
  for (std::size_t i = 0; i < A.rows; ++i) C.data[0] += weights[i] * A.data[i];
  return push(std::move(C), [a, weights = std::move(weights)](Tape& t, const Node& node) {
    Mat& dA = t.grad_ref(a);
    for (std::size_t i = 0; i < weights.size(); ++i) {
      dA.data[i] += weights[i] * node.grad.data[0];
    }
  });
}

Var Tape::logsumexp(Var a) {
  const Mat& A = val(a);
  check(A.cols == 1 && A.rows >= 1, "logsumexp");
  double m = A.data[0];
  for (double v : A.data) m = std::max(m, v);
  double s = 0.0;
  for (double v : A.data) s += std::exp(v - m);
  Mat C(1, 1);
  C.data[0] = m + std::log(s);
  std::vector<double> softmax(A.rows);
  for (std::size_t i = 0; i < A.rows; ++i) softmax[i] = std::exp(A.data[i] - m) / s;
  return push(std::move(C), [a, softmax = std::move(softmax)](Tape& t, const Node& node) {
    Mat& dA = t.grad_ref(a);
    for (std::size_t i = 0; i < softmax.size(); ++i) {
      dA.data[i] += softmax[i] * node.grad.data[0];
    }
  });
}

Var Tape::softmax_entropy(Var a) {
  const Mat& A = val(a);
  check(A.cols == 1 && A.rows >= 1, "softmax_entropy");
  double m = A.data[0];
  for (double v : A.data) m = std::max(m, v);
  double s = 0.0;
  for (double v : A.data) s += std::exp(v - m);
  std::vector<double> p(A.rows);
  double entropy = 0.0;
  for (std::size_t i = 0; i < A.rows; ++i) {
    p[i] = std::exp(A.data[i] - m) / s;
    if (p[i] > 0.0) entropy -= p[i] * std::log(p[i]);
  }
  Mat C(1, 1);
  C.data[0] = entropy;
  return push(std::move(C), [a, p = std::move(p), entropy](Tape& t, const Node& node) {
    Mat& dA = t.grad_ref(a);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double logp = p[i] > 0.0 ? std::log(p[i]) : 0.0;
      dA.data[i] += -p[i] * (logp + entropy) * node.grad.data[0];
    }
  });
}

Var Tape::ppo_surrogate(Var logp, double old_logp, double advantage, double clip_eps) {
  const Mat& L = val(logp);
  check(L.rows == 1 && L.cols == 1, "ppo_surrogate");
  const double ratio = std::exp(L.data[0] - old_logp);
  const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
  const double surr1 = ratio * advantage;
  const double surr2 = clipped * advantage;
  Mat C(1, 1);
  C.data[0] = std::min(surr1, surr2);
  const double dlogp = surr1 <= surr2 ? ratio * advantage : 0.0;
  return push(std::move(C), [logp, dlogp](Tape& t, const Node& node) {
    t.grad_ref(logp).data[0] += dlogp * node.grad.data[0];
  });
}

void Tape::backward(Var root, double seed) {
  check(root.id >= 0 && val(root).rows == 1 && val(root).cols == 1, "backward root");
  for (Node& node : nodes_) {
    node.grad = Mat(node.value.rows, node.value.cols);
  }
  nodes_[static_cast<std::size_t>(root.id)].grad.data[0] = seed;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (static_cast<int>(i) > root.id) continue;  // nodes after the root cannot contribute
    const Node& node = nodes_[i];
    if (node.back) node.back(*this, node);
  }
}

}  // namespace tnd::ad
