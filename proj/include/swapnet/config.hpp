#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "swapnet/metrics.hpp"
#include "swapnet/model.hpp"
#include "swapnet/nlmp_picard.hpp"

namespace swapnet {

/// Model bounds checked at load time. Infinite values disable a check.
struct ModelBounds {
  /// Strict upper bound on every swap rate.
  double swap_rate = std::numeric_limits<double>::infinity();
  /// Upper bound on the total external arrival rate into any node.
  double arrival = std::numeric_limits<double>::infinity();
  /// Upper bound on every service hazard.
  double hazard = std::numeric_limits<double>::infinity();
  /// Maximum vertex degree; 0 disables the check.
  std::size_t degree = 0;
};

struct GeneratorSettings {
  std::vector<std::size_t> copies{20, 40, 80};
  std::size_t samples = 100;
  std::size_t max_length = 3;
};

struct ExperimentConfig {
  std::string name;
  Model model;
  InitialLaw initial;
  ModelBounds bounds;

  /// Word-length truncation of the ODE state space.
  std::size_t truncation = 8;
  ObservationSpec observation;
  double horizon = 1.0;
  std::vector<double> snapshot_times;

  /// Copy counts N of the finite network.
  std::vector<std::size_t> copies{10};
  /// Independent runs per N in a convergence study.
  std::size_t seeds = 10;
  std::uint64_t seed = 1;

  double ode_dt = 0.01;
  double leak_tolerance = 1e-4;

  double picard_window = 0.25;
  PicardOptions picard;

  GeneratorSettings generator;

  /// The document the config was read from.
  nlohmann::json source;
};

/// Parses and validates a schema-1 document. Syntax and type problems raise
/// ParseError; every bound or reference violation is collected into one
/// ValidationError.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// Bound violations of an already built model, one message per violation.
std::vector<std::string> check_bounds(const Model& model, const ModelBounds& bounds);

}  // namespace swapnet
