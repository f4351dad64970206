#include "conceptlab/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/QR>

#include "conceptlab/error.hpp"

namespace conceptlab {

namespace {

enum Stream : std::uint64_t { kWorld = 1, kSamples = 2, kConcepts = 3, kShared = 4 };

Eigen::MatrixXd gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal(rng);
  return m;
}

std::string random_word(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> length(5, 14);
  std::uniform_int_distribution<int> letter(0, 25);
  std::string w(static_cast<std::size_t>(length(rng)), 'a');
  for (char& ch : w) ch = static_cast<char>('a' + letter(rng));
  return w;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over (seed, stream)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void SyntheticSpec::validate() const {
  require(rows >= 1 && concepts >= 1 && classes >= 1 && feature_dim >= 1 && vlm_dim >= 1,
          "synthetic spec: all counts must be >= 1");
  require(relevant_fraction >= 0.0 && relevant_fraction <= 1.0,
          "synthetic spec: relevant_fraction must be in [0, 1]");
  require(separation >= 0.0, "synthetic spec: separation must be >= 0");
  require(noise_scale >= 0.0, "synthetic spec: noise_scale must be >= 0");
  require(private_fraction >= 0.0 && private_fraction < 1.0,
          "synthetic spec: private_fraction must be in [0, 1)");
  require(random_coherence >= 0.0 && random_coherence < 1.0,
          "synthetic spec: random_coherence must be in [0, 1)");
  require(rows >= classes, "synthetic spec: rows must be >= classes");
}

Eigen::Index SyntheticSpec::relevant_count() const {
  return static_cast<Eigen::Index>(std::llround(relevant_fraction * static_cast<double>(concepts)));
}

EmbeddingBundle make_synthetic_bundle(const SyntheticSpec& spec) {
  spec.validate();
  const Eigen::Index n = spec.rows, s = spec.classes, dv = spec.vlm_dim;
  const Eigen::Index visible = std::max<Eigen::Index>(
      1, dv - static_cast<Eigen::Index>(std::floor(spec.private_fraction * static_cast<double>(dv))));

  std::mt19937_64 world(derive_seed(spec.seed, kWorld));
  // Class centers live in the visible block so the backbone can see them.
  Eigen::MatrixXd centers = Eigen::MatrixXd::Zero(s, dv);
  centers.leftCols(visible) = gaussian(world, s, visible);
  centers.rowwise().normalize();
  const Eigen::MatrixXd backbone =
      gaussian(world, spec.feature_dim, visible) / std::sqrt(static_cast<double>(visible));

  std::mt19937_64 samples(derive_seed(spec.seed, kSamples));
  std::vector<std::uint32_t> labels(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(i % s);
  std::shuffle(labels.begin(), labels.end(), samples);

  Eigen::MatrixXd images = gaussian(samples, n, dv) / std::sqrt(static_cast<double>(dv));
  for (Eigen::Index i = 0; i < n; ++i) images.row(i) += spec.separation * centers.row(labels[static_cast<std::size_t>(i)]);
  Eigen::MatrixXd features = images.leftCols(visible) * backbone.transpose();
  features += spec.noise_scale * gaussian(samples, n, spec.feature_dim) /
              std::sqrt(static_cast<double>(spec.feature_dim));

  std::mt19937_64 concept_rng(derive_seed(spec.seed, kConcepts));
  const Eigen::Index k = spec.concepts, relevant = spec.relevant_count();
  Eigen::MatrixXd concepts(k, dv);
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(k));
  Eigen::MatrixXd center_basis;
  if (spec.orthogonal_random) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(centers.transpose());
    center_basis = qr.householderQ() * Eigen::MatrixXd::Identity(dv, std::min(s, dv));
  }
  Eigen::RowVectorXd shared = Eigen::RowVectorXd::Zero(dv);
  if (spec.random_coherence > 0.0) {
    std::mt19937_64 shared_rng(derive_seed(spec.seed, kShared));
    shared = gaussian(shared_rng, 1, dv);
    if (spec.orthogonal_random) shared -= (shared * center_basis) * center_basis.transpose();
    shared.normalize();
  }
  for (Eigen::Index j = 0; j < k; ++j) {
    Eigen::RowVectorXd row = gaussian(concept_rng, 1, dv);
    if (j < relevant) {
      const Eigen::Index cls = j % s;
      // Graded alignment: the jitter scale varies per concept so relevant
      // concepts differ in how sharply they respond to their class.
      const double jitter = spec.noise_scale * 4.0 * std::uniform_real_distribution<double>(0.05, 1.0)(concept_rng);
      row = centers.row(cls) + jitter * row / std::sqrt(static_cast<double>(dv));
      names.push_back("class_" + std::to_string(cls) + "_attribute_" + std::to_string(j / s));
    } else {
      if (spec.orthogonal_random) row -= (row * center_basis) * center_basis.transpose();
      if (spec.random_coherence > 0.0)
        row = std::sqrt(spec.random_coherence) * shared +
              std::sqrt(1.0 - spec.random_coherence) * row / std::sqrt(static_cast<double>(dv));
      names.push_back(random_word(concept_rng));
    }
    concepts.row(j) = row;
  }

  EmbeddingBundle b;
  b.features = features.cast<float>();
  b.image_embeddings = images.cast<float>();
  b.concept_embeddings = concepts.cast<float>();
  b.labels = std::move(labels);
  b.concept_names = std::move(names);
  for (Eigen::Index c = 0; c < s; ++c) b.class_names.push_back("class_" + std::to_string(c));
  b.split.resize(static_cast<std::size_t>(n));
  const Eigen::Index train_end = n * 6 / 10, val_end = n * 8 / 10;
  for (Eigen::Index i = 0; i < n; ++i)
    b.split[static_cast<std::size_t>(i)] = i < train_end ? Split::train : (i < val_end ? Split::val : Split::test);
  b.validate();
  return b;
}

}  // namespace conceptlab
