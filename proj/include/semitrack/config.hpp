#pragma once

// Run configuration shared by the command-line tools: benchmark, ladder and
// seed. Missing keys keep their defaults; unknown keys are errors.

#include <cstdint>

#include "json.hpp"
#include "semitrack/experiment.hpp"

namespace semitrack {

struct RunConfig {
  std::uint64_t seed = 0;
  BenchmarkSpec benchmark = default_benchmark_spec();
  LadderConfig ladder = default_ladder_config();
};

nlohmann::json to_json(const RunConfig& cfg);

/// Overlays `j` onto `base`. Throws std::invalid_argument naming the key on
/// unknown keys or wrongly typed values.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});

}  // namespace semitrack
