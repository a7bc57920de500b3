#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "swapnet/queue_core.hpp"

namespace swapnet {

/// Observation depth m (letters kept from the head of the word) and the queue
/// length cap L_obs; lengths at or above the cap share one bucket.
struct ObservationSpec {
  std::size_t depth = 1;
  std::size_t length_cap = 8;
  bool operator==(const ObservationSpec&) const = default;
};

/// Truncated queue descriptor: capped length plus the first `depth` letters.
struct Descriptor {
  std::uint32_t length = 0;
  std::vector<Letter> head;
  auto operator<=>(const Descriptor&) const = default;
};

Descriptor describe(std::span<const Letter> word, const ObservationSpec& spec);
Descriptor describe(const QueueState& q, const ObservationSpec& spec);
std::string to_string(const Descriptor& d);

/// Probability distribution over truncated descriptors.
class Marginal {
 public:
  Marginal() = default;
  explicit Marginal(ObservationSpec spec) : spec_(spec) {}

  const ObservationSpec& spec() const { return spec_; }
  const std::map<Descriptor, double>& probs() const { return probs_; }
  void add(const Descriptor& d, double weight) { probs_[d] += weight; }
  double at(const Descriptor& d) const;
  double total() const;
  void scale(double factor);
  /// P(capped length = l) for l in [0, length_cap].
  std::vector<double> length_histogram() const;

 private:
  ObservationSpec spec_;
  std::map<Descriptor, double> probs_;
};

/// ½ Σ |p − q| over the union of supports.
double tv_distance(const Marginal& p, const Marginal& q);

double mean(std::span<const double> xs);
/// Sample standard deviation (n − 1 denominator).
double stddev(std::span<const double> xs);

/// sup |F_n − F| against a reference CDF.
double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf);
/// sup |F_n − G_m| between two samples.
double ks_two_sample(std::vector<double> a, std::vector<double> b);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Percentile bootstrap interval for a statistic of resampled indices.
Interval bootstrap_interval(std::size_t n, const std::function<double(const std::vector<std::size_t>&)>& statistic,
                            double level, std::size_t resamples, std::uint64_t seed);

}  // namespace swapnet
