#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <gtest/gtest.h>

#include "conceptlab/embedding_store.hpp"

namespace testing_support {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = "conceptlab_";
    if (info != nullptr) name += std::string(info->test_suite_name()) + "_" + info->name();
    path_ = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
}

inline Eigen::MatrixXd gaussian(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

// Extended-precision references.
inline long double dot_ld(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  long double s = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) s += static_cast<long double>(a(i)) * static_cast<long double>(b(i));
  return s;
}

inline long double cosine_ld(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return dot_ld(a, b) / std::sqrt(dot_ld(a, a) * dot_ld(b, b));
}

inline std::vector<long double> softmax_ld(const std::vector<long double>& x) {
  long double mx = x.front();
  for (long double v : x) mx = std::max(mx, v);
  std::vector<long double> e(x.size());
  long double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += e[i] = std::exp(x[i] - mx);
  for (auto& v : e) v /= s;
  return e;
}

inline long double entropy_ld(const std::vector<long double>& p) {
  long double h = 0;
  for (long double v : p)
    if (v > 0) h -= v * std::log(v);
  return h;
}

// Entropy of the softmax over the top-k entries of a row (sort oracle).
inline long double subset_entropy_ld(const Eigen::VectorXd& row, std::size_t k) {
  std::vector<long double> v(row.data(), row.data() + row.size());
  std::sort(v.begin(), v.end(), std::greater<>());
  v.resize(k);
  return entropy_ld(softmax_ld(v));
}

// Small valid bundle with distinct values everywhere.
inline conceptlab::EmbeddingBundle tiny_bundle(Eigen::Index n = 2, Eigen::Index db = 3, Eigen::Index dv = 4,
                                               Eigen::Index k = 3, std::uint32_t classes = 2, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  conceptlab::EmbeddingBundle b;
  b.features = gaussian(rng, n, db).cast<float>();
  b.image_embeddings = gaussian(rng, n, dv).cast<float>();
  b.concept_embeddings = gaussian(rng, k, dv).cast<float>();
  for (Eigen::Index i = 0; i < n; ++i) {
    b.labels.push_back(static_cast<std::uint32_t>(i) % classes);
    b.split.push_back(static_cast<conceptlab::Split>(i % 3));
  }
  for (Eigen::Index j = 0; j < k; ++j) b.concept_names.push_back("concept " + std::to_string(j));
  for (std::uint32_t c = 0; c < classes; ++c) b.class_names.push_back("class_" + std::to_string(c));
  return b;
}

}  // namespace testing_support
