#include "swapnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "swapnet/error.hpp"
#include "swapnet/random.hpp"

namespace swapnet {

Descriptor describe(std::span<const Letter> word, const ObservationSpec& spec) {
  Descriptor d;
  d.length = static_cast<std::uint32_t>(std::min(word.size(), spec.length_cap));
  const std::size_t keep = std::min(word.size(), spec.depth);
  d.head.assign(word.begin(), word.begin() + static_cast<std::ptrdiff_t>(keep));
  return d;
}

Descriptor describe(const QueueState& q, const ObservationSpec& spec) {
  const auto w = q.word();
  return describe(std::span<const Letter>(w), spec);
}

std::string to_string(const Descriptor& d) {
  std::string s = "l" + std::to_string(d.length);
  for (const auto& l : d.head) s += ":" + std::to_string(l.klass) + "/" + std::to_string(l.dest);
  return s;
}

double Marginal::at(const Descriptor& d) const {
  auto it = probs_.find(d);
  return it == probs_.end() ? 0.0 : it->second;
}

double Marginal::total() const {
  double t = 0.0;
  for (const auto& [d, p] : probs_) t += p;
  return t;
}

void Marginal::scale(double factor) {
  for (auto& [d, p] : probs_) p *= factor;
}

std::vector<double> Marginal::length_histogram() const {
  std::vector<double> h(spec_.length_cap + 1, 0.0);
  for (const auto& [d, p] : probs_) h[d.length] += p;
  return h;
}

double tv_distance(const Marginal& p, const Marginal& q) {
  if (!(p.spec() == q.spec())) throw Error(ErrorCode::SpaceMismatch, "marginals use different observation specs");
  double sum = 0.0;
  for (const auto& [d, pp] : p.probs()) sum += std::abs(pp - q.at(d));
  for (const auto& [d, qq] : q.probs()) {
    if (p.probs().count(d) == 0) sum += std::abs(qq);
  }
  return 0.5 * sum;
}

double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double stddev(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, std::abs(static_cast<double>(i + 1) / n - f), std::abs(f - static_cast<double>(i) / n)});
  }
  return d;
}

double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

Interval bootstrap_interval(std::size_t n, const std::function<double(const std::vector<std::size_t>&)>& statistic,
                            double level, std::size_t resamples, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> stats;
  stats.reserve(resamples);
  std::vector<std::size_t> idx(n);
  for (std::size_t r = 0; r < resamples; ++r) {
    for (auto& i : idx) i = rng.index(n);
    stats.push_back(statistic(idx));
  }
  std::sort(stats.begin(), stats.end());
  const double alpha = (1.0 - level) / 2.0;
  auto pick = [&](double q) {
    const auto k = static_cast<std::size_t>(std::floor(q * static_cast<double>(resamples - 1) + 0.5));
    return stats[std::min(k, resamples - 1)];
  };
  return {pick(alpha), pick(1.0 - alpha)};
}

}  // namespace swapnet
