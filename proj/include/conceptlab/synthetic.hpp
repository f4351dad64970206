#pragma once

#include <cstdint>

#include "conceptlab/embedding_store.hpp"

namespace conceptlab {

// Generator parameters for desk-scale fixtures. Rows are Gaussian clusters
// around S random unit class centers in the VLM space; the first
// round(relevant_fraction * K) concepts sit near a class center (concept k
// follows class k mod S) and the rest are isotropic random directions.
struct SyntheticSpec {
  Eigen::Index rows = 600;         // N
  Eigen::Index concepts = 80;      // K
  Eigen::Index classes = 6;        // S
  Eigen::Index feature_dim = 48;   // d_b
  Eigen::Index vlm_dim = 32;       // d_v
  double separation = 4.0;
  double relevant_fraction = 0.5;
  double noise_scale = 0.5;
  std::uint64_t seed = 7;
  // Random concepts are drawn orthogonal to the span of the class centers,
  // so their scores depend on within-class noise only.
  bool orthogonal_random = false;
  // Fraction of the VLM dimensions that are invisible to the backbone map.
  double private_fraction = 0.0;
  // Share of variance that random concepts take from one common direction,
  // in [0, 1). Near 1 they form a tight cluster, as random strings do in
  // real text encoders, and their class signal is left in small residuals.
  double random_coherence = 0.0;

  void validate() const;
  Eigen::Index relevant_count() const;
};

// Deterministic in every field of SyntheticSpec. Features, labels, splits and
// image embeddings depend only on (rows, classes, dims, separation,
// noise_scale, private_fraction, seed); concept embeddings additionally on
// (concepts, relevant_fraction, orthogonal_random, random_coherence).
EmbeddingBundle make_synthetic_bundle(const SyntheticSpec& spec);

// Derives an independent 64-bit stream seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace conceptlab
