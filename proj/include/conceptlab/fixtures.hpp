#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "conceptlab/cbm.hpp"
#include "conceptlab/goodness.hpp"
#include "conceptlab/synthetic.hpp"

namespace conceptlab::fixtures {

// Half relevant, half random concepts. K is large enough that a cutoff of
// 250 fits inside either half.
SyntheticSpec goodness_spec(std::uint64_t seed = 7);

// 75% relevant, 25% random, for the removal experiments.
SyntheticSpec refinement_spec(std::uint64_t seed = 0);
RefineOptions refinement_options(std::uint64_t seed = 0);
inline constexpr int kRefinementTrials = 10;

// Same features and labels; concepts either all sit near class centers or
// are all random directions orthogonal to the class span.
SyntheticSpec sensitivity_spec(bool relevant, std::uint64_t seed = 7);
TrainConfig sensitivity_config();

// Few training rows per concept, so the classifier on top of the concept
// layer generalizes worse than the probe on raw features.
SyntheticSpec distillation_spec(std::uint64_t seed = 7);
TrainConfig distillation_config();

// Named presets for the `synth` command: standard, mixed, relevant,
// irrelevant, lossy.
std::optional<SyntheticSpec> preset(const std::string& name, std::uint64_t seed);
std::vector<std::string> preset_names();

}  // namespace conceptlab::fixtures
