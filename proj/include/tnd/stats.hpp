#pragma once

#include <algorithm>
#include <cmath>

namespace tnd {

// Single-pass running mean/variance (Welford) over raw episode rewards.
class RewardStats {
 public:
  void update(double z) {
    ++count_;
    const double delta = z - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta * (z - mean_);
  }

  long long count() const { return count_; }
  double mean() const { return mean_; }
  double variance() const { return count_ > 0 ? m2_ / static_cast<double>(count_) : 0.0; }
  double stddev() const { return std::sqrt(variance()); }

  double raw_m2() const { return m2_; }
  void restore(long long count, double mean, double m2) {
    count_ = count;
    mean_ = mean;
    m2_ = m2;
  }

 private:
  long long count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

// clip((z - mu) / (sigma + 1e-8), -3, 3); the stats must already include z.
inline double normalize_value(double z, const RewardStats& stats) {
  return std::clamp((z - stats.mean()) / (stats.stddev() + 1e-8), -3.0, 3.0);
}

}  // namespace tnd
