#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "swapnet/model.hpp"
#include "swapnet/nlmp_ode.hpp"

namespace swapnet {

struct Atom {
  QueueState state;
  double weight = 0.0;
};

/// Finitely supported (possibly signed) measure per node.
struct AtomicMeasure {
  std::vector<std::vector<Atom>> nodes;
};
using SignedAtomicMeasure = AtomicMeasure;

/// Empirical measure of N copies per node, each atom with weight 1/N.
AtomicMeasure empirical(const std::vector<std::vector<QueueState>>& copies);
/// The truncated measure as atoms (ages zero).
AtomicMeasure atoms_of(const NlmpOde& ode, const NodeVector& x);

/// Bounded per-queue function.
struct Observable {
  enum class Kind { Constant, LengthEquals, CappedLength, HeadLetter, ServiceAgeRamp };
  Kind kind = Kind::Constant;
  std::size_t length = 0;
  std::size_t position = 0;
  Letter letter;
  double rate = 1.0;

  static Observable constant() { return {}; }
  /// 1[l(q) = l]
  static Observable length_equals(std::size_t l);
  /// min(l(q), cap) / cap
  static Observable capped_length(std::size_t cap);
  /// 1[letter at position p (from the head) equals a]
  static Observable head_letter(std::size_t p, Letter a);
  /// 1 − exp(−r τ) of the customer in service, 0 for an empty queue.
  static Observable age_ramp(double r);

  bool age_dependent() const { return kind == Kind::ServiceAgeRamp; }
  double operator()(const QueueState& q, const Model& m, NodeId v) const;
  /// Derivative along the growth of the in-service age.
  double age_derivative(const QueueState& q, const Model& m, NodeId v) const;
};

struct Coordinate {
  NodeId node = 0;
  Observable phi;
};

/// F(Δ) = Φ(m), m_i = ⟨φ_i, Δ_{v_i}⟩, Φ a polynomial of degree ≤ 3:
/// Φ(m) = c + Σ a_i m_i + Σ Q_ij m_i m_j + Σ c_i m_i³.
struct TestFunction {
  std::string id;
  std::vector<Coordinate> coords;
  double constant = 0.0;
  std::vector<double> linear;
  std::vector<std::vector<double>> quadratic;
  std::vector<double> cubic;

  static TestFunction make_linear(std::string id, std::vector<Coordinate> coords, std::vector<double> a);
  static TestFunction make_quadratic(std::string id, std::vector<Coordinate> coords, std::vector<double> a,
                                     std::vector<std::vector<double>> q);
  static TestFunction make_cubic(std::string id, std::vector<Coordinate> coords, std::vector<double> a,
                                 std::vector<std::vector<double>> q, std::vector<double> c);

  int degree() const;
  bool age_dependent() const;
  double outer(const std::vector<double>& m) const;
  std::vector<double> gradient(const std::vector<double>& m) const;
};

std::vector<double> means(const TestFunction& f, const Model& model, const AtomicMeasure& delta);
double eval(const TestFunction& f, const Model& model, const AtomicMeasure& delta);
/// Σ_i ∂Φ/∂m_i · ⟨φ_i, h_{v_i}⟩ at Δ.
double frechet(const TestFunction& f, const Model& model, const AtomicMeasure& delta, const SignedAtomicMeasure& h);

/// Ω_N F split by event family.
struct GeneratorBlocks {
  double transport = 0.0;
  double arrivals = 0.0;
  double transits = 0.0;
  double exits = 0.0;
  double swaps = 0.0;
  double total() const { return transport + arrivals + transits + exits + swaps; }
};

/// Exact finite-N generator at an empirical measure; copies sharing a queue
/// state are summed in one term.
GeneratorBlocks omega_N_blocks(const TestFunction& f, const Model& model, const AtomicMeasure& delta);
double omega_N(const TestFunction& f, const Model& model, const AtomicMeasure& delta);
/// The same generator as a literal sum over every copy and copy pair.
double omega_N_literal(const TestFunction& f, const Model& model, const AtomicMeasure& delta);

/// Direction of the limiting flow at Δ as a signed atomic measure.
SignedAtomicMeasure limit_direction(const Model& model, const AtomicMeasure& delta);
/// Age-transport part σ̂F of the limiting generator.
double limit_transport(const TestFunction& f, const Model& model, const AtomicMeasure& delta);
double omega_limit(const TestFunction& f, const Model& model, const AtomicMeasure& delta);

using MeasureSampler = std::function<AtomicMeasure(Rng&, std::size_t)>;

/// N i.i.d. copies per node: uniform length in [0, max_length], uniform
/// letters, and (optionally) a uniform in-service age in [0, 2]. The model
/// must outlive the sampler.
MeasureSampler iid_sampler(const Model& model, std::size_t max_length, bool with_ages);

struct GapStats {
  std::size_t n = 0;
  std::size_t samples = 0;
  double mean_gap = 0.0;
  double max_gap = 0.0;
  std::vector<double> gaps;
};

/// |Ω_N F − Ω F| at sampled Δ_N for each N.
std::vector<GapStats> generator_gap(const TestFunction& f, const Model& model, const std::vector<std::size_t>& n_list,
                                    const MeasureSampler& sampler, std::size_t samples, std::uint64_t seed);

}  // namespace swapnet
