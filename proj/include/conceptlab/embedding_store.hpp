#pragma once

// "CBMB" v1 container.
//
//   offset  size  field
//   0       4     magic "CBMB"
//   4       4     format version (u32, little-endian) = 1
//   8       8     header length L in bytes (u64)
//   16      4     CRC-32 of the header bytes (u32)
//   20      4     reserved, zero
//   24      L     header: UTF-8 JSON document
//   ...           zero padding up to the next multiple of 64
//   blobs         each blob starts at a 64-byte aligned absolute offset and
//                 is zero padded to a multiple of 64 bytes
//
// The header holds {"kind", "meta", "arrays": [{name, dtype, shape, offset,
// length}]}. Numeric dtypes are f32, f64 and u32, all little-endian. The
// utf8 dtype stores shape[0] strings, each as a u32 byte count followed by
// the bytes.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace conceptlab {

inline constexpr char kBundleMagic[4] = {'C', 'B', 'M', 'B'};
inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::uint64_t kBlobAlignment = 64;
inline constexpr std::uint64_t kPreambleSize = 24;

enum class DType { f32, f64, u32, utf8 };

std::string to_string(DType dtype);

struct NamedArray {
  using Payload = std::variant<std::vector<float>, std::vector<double>,
                               std::vector<std::uint32_t>, std::vector<std::string>>;

  std::string name;
  std::vector<std::uint64_t> shape;
  Payload data;

  DType dtype() const;
  std::uint64_t element_count() const;
};

// Directory entry as it appears in a file header.
struct ArrayRecord {
  std::string name;
  DType dtype;
  std::vector<std::uint64_t> shape;
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
};

struct Container {
  std::string kind;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedArray> arrays;

  const NamedArray* find(std::string_view name) const;
  const NamedArray& at(std::string_view name) const;

  void add(std::string name, std::vector<std::uint64_t> shape, NamedArray::Payload data);

  template <typename Derived>
  void add_matrix(std::string name, const Eigen::MatrixBase<Derived>& m);

  // Row-major matrix view of a 2-D (or 1-D, as a column) f64/f32 array.
  Eigen::MatrixXd matrix(std::string_view name) const;
  Eigen::VectorXd vector(std::string_view name) const;
};

// Layout of a container once serialized; directory offsets are absolute.
struct Layout {
  std::string header;
  std::uint64_t data_start = 0;
  std::vector<ArrayRecord> records;
  std::uint64_t file_size = 0;
};

constexpr std::uint64_t align_up(std::uint64_t n, std::uint64_t a = kBlobAlignment) {
  return (n + a - 1) / a * a;
}

Layout plan_layout(const Container& c);
void write_container(const Container& c, const std::filesystem::path& path);
Container read_container(const std::filesystem::path& path);
// Directory of a file without loading payloads (header validated).
std::vector<ArrayRecord> read_directory(const std::filesystem::path& path);

enum class Split : std::uint32_t { train = 0, val = 1, test = 2 };

using RowMatrixXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct EmbeddingBundle {
  RowMatrixXf features;            // N x d_b
  RowMatrixXf image_embeddings;    // N x d_v
  RowMatrixXf concept_embeddings;  // K x d_v
  std::vector<std::uint32_t> labels;
  std::vector<std::string> concept_names;
  std::vector<std::string> class_names;
  std::vector<Split> split;

  Eigen::Index rows() const { return features.rows(); }
  Eigen::Index concept_count() const { return concept_embeddings.rows(); }
  Eigen::Index class_count() const { return static_cast<Eigen::Index>(class_names.size()); }

  std::vector<Eigen::Index> rows_in(Split s) const;

  // Throws Error naming the first violated invariant.
  void validate() const;

  bool operator==(const EmbeddingBundle& other) const;
};

Container to_container(const EmbeddingBundle& b);
EmbeddingBundle bundle_from_container(const Container& c);

void write_bundle(const EmbeddingBundle& bundle, const std::filesystem::path& path);
EmbeddingBundle read_bundle(const std::filesystem::path& path);

// Gathers rows of a matrix by index.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> gather_rows(
    const Eigen::MatrixBase<Derived>& m, std::span<const Eigen::Index> rows) {
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> out(
      static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

std::vector<std::uint32_t> gather(std::span<const std::uint32_t> v, std::span<const Eigen::Index> rows);

template <typename Derived>
void Container::add_matrix(std::string name, const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  std::vector<Scalar> flat(static_cast<std::size_t>(m.size()));
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) flat[k++] = m(r, c);
  std::vector<std::uint64_t> shape;
  if (m.cols() == 1)
    shape = {static_cast<std::uint64_t>(m.rows())};
  else
    shape = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  add(std::move(name), std::move(shape), std::move(flat));
}

}  // namespace conceptlab
