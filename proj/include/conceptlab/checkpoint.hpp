#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "conceptlab/cbm.hpp"
#include "conceptlab/embedding_store.hpp"

namespace conceptlab {

// Model checkpoints are "CBMB" containers with f64 arrays named
// "<layer>.weight" / "<layer>.bias", optional Adam moments
// "<layer>.<tensor>.adam_m" / ".adam_v" and the step counter in meta.

Container encoder_container(const ConceptEncoder& encoder, std::span<const DenseAdam<double>> optimizer = {},
                            std::span<const std::string> concept_names = {});
Container teacher_container(const TeacherProbe& teacher, std::span<const DenseAdam<double>> optimizer = {});
Container classifier_container(const FinalClassifier& classifier, std::span<const DenseAdam<double>> optimizer = {});
Container history_container(const TrainingHistory& history, const std::string& stage);

ConceptEncoder encoder_from_container(const Container& c);
TeacherProbe teacher_from_container(const Container& c);
FinalClassifier classifier_from_container(const Container& c);
TrainingHistory history_from_container(const Container& c);

ConceptEncoder load_encoder(const std::filesystem::path& path);
TeacherProbe load_teacher(const std::filesystem::path& path);
FinalClassifier load_classifier(const std::filesystem::path& path);

}  // namespace conceptlab
