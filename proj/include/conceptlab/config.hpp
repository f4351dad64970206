#pragma once

#include <filesystem>

#include <json.hpp>

#include "conceptlab/cbm.hpp"
#include "conceptlab/goodness.hpp"
#include "conceptlab/synthetic.hpp"

namespace conceptlab {

// Flat JSON run configuration. Unknown keys and wrongly typed values are
// rejected with an error naming the key; absent keys take defaults.
//
//   alpha beta temperature lambda                       numbers
//   encoder_lr classifier_lr teacher_lr min_lr           numbers
//   encoder_scheduler classifier_scheduler
//   teacher_scheduler                                    booleans (cosine if true)
//   cycle_epochs encoder_epochs teacher_epochs
//   classifier_epochs batch_size hidden_width seed       integers
//   encoder_nonlinearity                                 "relu" | "none"
//   norm_epsilon                                         number
//   norm_mode                                            "per_concept" | "scalar"
//   cutoff                                               integer
//   mode                                                 "task-agnostic" | "task-specific"
//   cutoff_order                                         "subset-softmax" | "truncated-full-softmax"
//   synthetic                                            object, see SyntheticSpec
struct RunConfig {
  TrainConfig train;
  Eigen::Index cutoff = 100;
  GoodnessMode mode = GoodnessMode::task_agnostic;
  CutoffOrder cutoff_order = CutoffOrder::subset_softmax;
  SyntheticSpec synthetic;

  // Every field, defaults included.
  nlohmann::json to_json() const;
};

RunConfig config_from_json(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace conceptlab
