#include "conceptlab/embedding_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <zlib.h>

#include "conceptlab/error.hpp"

namespace conceptlab {

static_assert(std::endian::native == std::endian::little,
              "CBMB payloads are written as native little-endian bytes");

namespace {

std::size_t element_size(DType d) {
  switch (d) {
    case DType::f32:
    case DType::u32:
      return 4;
    case DType::f64:
      return 8;
    case DType::utf8:
      return 1;
  }
  return 0;
}

DType parse_dtype(const std::string& s) {
  if (s == "f32") return DType::f32;
  if (s == "f64") return DType::f64;
  if (s == "u32") return DType::u32;
  if (s == "utf8") return DType::utf8;
  fail("unknown dtype '" + s + "'");
}

std::uint64_t shape_product(const std::vector<std::uint64_t>& shape) {
  std::uint64_t n = 1;
  for (auto d : shape) {
    if (d != 0 && n > UINT64_MAX / d) fail("shape product overflows");
    n *= d;
  }
  return n;
}

std::uint32_t crc32_of(std::string_view bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

template <typename T>
void append_pod(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T load_pod(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

std::string encode_payload(const NamedArray& a) {
  std::string out;
  std::visit(
      [&](const auto& v) {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, std::vector<std::string>>) {
          for (const auto& s : v) {
            require(s.size() <= UINT32_MAX, "string too long in '" + a.name + "'");
            append_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
            out += s;
          }
        } else {
          out.assign(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(v[0]));
        }
      },
      a.data);
  return out;
}

NamedArray decode_payload(const ArrayRecord& r, const char* p) {
  NamedArray a{r.name, r.shape, {}};
  const std::uint64_t n = shape_product(r.shape);
  switch (r.dtype) {
    case DType::f32: {
      std::vector<float> v(n);
      std::memcpy(v.data(), p, n * 4);
      for (float x : v)
        if (!std::isfinite(x)) fail("non-finite payload in array '" + r.name + "'");
      a.data = std::move(v);
      break;
    }
    case DType::f64: {
      std::vector<double> v(n);
      std::memcpy(v.data(), p, n * 8);
      for (double x : v)
        if (!std::isfinite(x)) fail("non-finite payload in array '" + r.name + "'");
      a.data = std::move(v);
      break;
    }
    case DType::u32: {
      std::vector<std::uint32_t> v(n);
      std::memcpy(v.data(), p, n * 4);
      a.data = std::move(v);
      break;
    }
    case DType::utf8: {
      require(r.shape.size() == 1, "utf8 array '" + r.name + "' must be 1-D");
      std::vector<std::string> v;
      v.reserve(n);
      std::uint64_t pos = 0;
      for (std::uint64_t i = 0; i < n; ++i) {
        require(pos + 4 <= r.length, "truncated string table '" + r.name + "'");
        const auto len = load_pod<std::uint32_t>(p + pos);
        pos += 4;
        require(pos + len <= r.length, "truncated string table '" + r.name + "'");
        v.emplace_back(p + pos, len);
        pos += len;
      }
      require(pos == r.length, "string table '" + r.name + "' length mismatch");
      a.data = std::move(v);
      break;
    }
  }
  return a;
}

nlohmann::json record_json(const ArrayRecord& r) {
  return {{"name", r.name},     {"dtype", to_string(r.dtype)}, {"shape", r.shape},
          {"offset", r.offset}, {"length", r.length}};
}

struct ParsedHeader {
  std::string kind;
  nlohmann::json meta;
  std::vector<ArrayRecord> records;
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

ParsedHeader parse_header(const std::string& file) {
  require(file.size() >= kPreambleSize, "truncated header");
  require(std::memcmp(file.data(), kBundleMagic, 4) == 0, "bad magic");
  const auto version = load_pod<std::uint32_t>(file.data() + 4);
  require(version == kFormatVersion, "unsupported version " + std::to_string(version));
  const auto header_len = load_pod<std::uint64_t>(file.data() + 8);
  const auto crc = load_pod<std::uint32_t>(file.data() + 16);
  const auto reserved = load_pod<std::uint32_t>(file.data() + 20);
  require(reserved == 0, "corrupt header: reserved field is nonzero");
  require(header_len <= file.size() - kPreambleSize, "truncated header");
  const std::string_view header(file.data() + kPreambleSize, header_len);
  require(crc32_of(header) == crc, "corrupt header: checksum mismatch");

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("corrupt header: ") + e.what());
  }

  ParsedHeader out;
  try {
    out.kind = doc.at("kind").get<std::string>();
    out.meta = doc.value("meta", nlohmann::json::object());
    for (const auto& e : doc.at("arrays")) {
      ArrayRecord r;
      r.name = e.at("name").get<std::string>();
      r.dtype = parse_dtype(e.at("dtype").get<std::string>());
      r.shape = e.at("shape").get<std::vector<std::uint64_t>>();
      r.offset = e.at("offset").get<std::uint64_t>();
      r.length = e.at("length").get<std::uint64_t>();
      out.records.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("corrupt header: ") + e.what());
  }

  const std::uint64_t data_start = align_up(kPreambleSize + header_len);
  for (const auto& r : out.records) {
    require(r.offset % kBlobAlignment == 0, "array '" + r.name + "' is not 64-byte aligned");
    require(r.offset >= data_start, "array '" + r.name + "' overlaps the header");
    if (r.dtype != DType::utf8) {
      const std::uint64_t n = shape_product(r.shape);
      require(n <= UINT64_MAX / element_size(r.dtype) && n * element_size(r.dtype) == r.length,
              "array '" + r.name + "' length does not match its shape");
    }
    require(r.offset <= file.size() && r.length <= file.size() - r.offset,
            "truncated blob '" + r.name + "'");
  }
  std::vector<const ArrayRecord*> sorted;
  for (const auto& r : out.records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [](const ArrayRecord* a, const ArrayRecord* b) { return a->offset < b->offset; });
  for (std::size_t i = 1; i < sorted.size(); ++i)
    require(sorted[i - 1]->offset + sorted[i - 1]->length <= sorted[i]->offset,
            "directory overlap between '" + sorted[i - 1]->name + "' and '" + sorted[i]->name + "'");
  for (std::size_t i = 0; i < out.records.size(); ++i)
    for (std::size_t j = i + 1; j < out.records.size(); ++j)
      require(out.records[i].name != out.records[j].name,
              "duplicate array '" + out.records[i].name + "'");
  return out;
}

}  // namespace

std::string to_string(DType dtype) {
  switch (dtype) {
    case DType::f32:
      return "f32";
    case DType::f64:
      return "f64";
    case DType::u32:
      return "u32";
    case DType::utf8:
      return "utf8";
  }
  return "?";
}

DType NamedArray::dtype() const {
  switch (data.index()) {
    case 0:
      return DType::f32;
    case 1:
      return DType::f64;
    case 2:
      return DType::u32;
    default:
      return DType::utf8;
  }
}

std::uint64_t NamedArray::element_count() const {
  return std::visit([](const auto& v) { return static_cast<std::uint64_t>(v.size()); }, data);
}

const NamedArray* Container::find(std::string_view name) const {
  for (const auto& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

const NamedArray& Container::at(std::string_view name) const {
  const NamedArray* a = find(name);
  require(a != nullptr, "missing array '" + std::string(name) + "'");
  return *a;
}

void Container::add(std::string name, std::vector<std::uint64_t> shape, NamedArray::Payload data) {
  NamedArray a{std::move(name), std::move(shape), std::move(data)};
  if (a.dtype() != DType::utf8)
    require(shape_product(a.shape) == a.element_count(),
            "array '" + a.name + "' shape does not match its element count");
  else
    require(a.shape.size() == 1 && a.shape[0] == a.element_count(),
            "string table '" + a.name + "' shape mismatch");
  require(find(a.name) == nullptr, "duplicate array '" + a.name + "'");
  arrays.push_back(std::move(a));
}

Eigen::MatrixXd Container::matrix(std::string_view name) const {
  const NamedArray& a = at(name);
  require(a.shape.size() == 1 || a.shape.size() == 2,
          "array '" + a.name + "' is not a matrix");
  const auto rows = static_cast<Eigen::Index>(a.shape[0]);
  const auto cols = static_cast<Eigen::Index>(a.shape.size() == 2 ? a.shape[1] : 1);
  Eigen::MatrixXd m(rows, cols);
  auto fill = [&](const auto& v) {
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        m(r, c) = static_cast<double>(v[static_cast<std::size_t>(r * cols + c)]);
  };
  if (const auto* v = std::get_if<std::vector<double>>(&a.data))
    fill(*v);
  else if (const auto* f = std::get_if<std::vector<float>>(&a.data))
    fill(*f);
  else
    fail("array '" + a.name + "' is not floating point");
  return m;
}

Eigen::VectorXd Container::vector(std::string_view name) const {
  Eigen::MatrixXd m = matrix(name);
  require(m.cols() == 1, "array '" + std::string(name) + "' is not a vector");
  return m.col(0);
}

Layout plan_layout(const Container& c) {
  Layout layout;
  // Offsets depend on the header length and the header lists the offsets,
  // so iterate until the padded header size is stable.
  std::uint64_t data_start = align_up(kPreambleSize + 256);
  for (int pass = 0; pass < 8; ++pass) {
    layout.records.clear();
    std::uint64_t cursor = data_start;
    nlohmann::json arrays = nlohmann::json::array();
    for (const auto& a : c.arrays) {
      ArrayRecord r{a.name, a.dtype(), a.shape, cursor, 0};
      if (a.dtype() == DType::utf8) {
        std::uint64_t len = 0;
        for (const auto& s : std::get<std::vector<std::string>>(a.data)) len += 4 + s.size();
        r.length = len;
      } else {
        r.length = a.element_count() * element_size(a.dtype());
      }
      cursor += align_up(r.length);
      arrays.push_back(record_json(r));
      layout.records.push_back(std::move(r));
    }
    nlohmann::json doc = {{"kind", c.kind}, {"meta", c.meta}, {"arrays", arrays}};
    layout.header = doc.dump();
    const std::uint64_t needed = align_up(kPreambleSize + layout.header.size());
    if (needed == data_start) {
      layout.data_start = data_start;
      layout.file_size = cursor;
      return layout;
    }
    data_start = needed;
  }
  fail("header layout did not converge");
}

void write_container(const Container& c, const std::filesystem::path& path) {
  const Layout layout = plan_layout(c);
  std::string out;
  out.reserve(layout.file_size);
  out.append(kBundleMagic, 4);
  append_pod<std::uint32_t>(out, kFormatVersion);
  append_pod<std::uint64_t>(out, layout.header.size());
  append_pod<std::uint32_t>(out, crc32_of(layout.header));
  append_pod<std::uint32_t>(out, 0);
  out += layout.header;
  out.resize(layout.data_start, '\0');
  for (std::size_t i = 0; i < c.arrays.size(); ++i) {
    out += encode_payload(c.arrays[i]);
    out.resize(align_up(out.size()), '\0');
  }
  require(out.size() == layout.file_size, "internal layout mismatch");

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(f), "cannot open '" + path.string() + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  require(static_cast<bool>(f), "I/O failure writing '" + path.string() + "'");
}

Container read_container(const std::filesystem::path& path) {
  const std::string file = read_file(path);
  ParsedHeader h = parse_header(file);
  Container c;
  c.kind = std::move(h.kind);
  c.meta = std::move(h.meta);
  for (const auto& r : h.records) c.arrays.push_back(decode_payload(r, file.data() + r.offset));
  return c;
}

std::vector<ArrayRecord> read_directory(const std::filesystem::path& path) {
  return parse_header(read_file(path)).records;
}

std::vector<Eigen::Index> EmbeddingBundle::rows_in(Split s) const {
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < split.size(); ++i)
    if (split[i] == s) out.push_back(static_cast<Eigen::Index>(i));
  return out;
}

void EmbeddingBundle::validate() const {
  const auto n = static_cast<std::size_t>(features.rows());
  require(static_cast<std::size_t>(image_embeddings.rows()) == n,
          "row count mismatch: features vs image_embeddings");
  require(labels.size() == n, "row count mismatch: features vs labels");
  require(split.size() == n, "row count mismatch: features vs split");
  require(static_cast<std::size_t>(concept_embeddings.rows()) == concept_names.size(),
          "concept_embeddings rows must equal concept_names length");
  require(concept_embeddings.cols() == image_embeddings.cols(),
          "concept and image embeddings differ in width");
  require(!class_names.empty(), "class_names is empty");
  for (auto y : labels)
    require(y < class_names.size(), "label out of range: " + std::to_string(y));
  for (auto s : split)
    require(static_cast<std::uint32_t>(s) <= 2, "split tag out of range");
  require(features.allFinite(), "non-finite value in features");
  require(image_embeddings.allFinite(), "non-finite value in image_embeddings");
  require(concept_embeddings.allFinite(), "non-finite value in concept_embeddings");
}

bool EmbeddingBundle::operator==(const EmbeddingBundle& o) const {
  auto same = [](const RowMatrixXf& a, const RowMatrixXf& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())) == 0;
  };
  return same(features, o.features) && same(image_embeddings, o.image_embeddings) &&
         same(concept_embeddings, o.concept_embeddings) && labels == o.labels &&
         concept_names == o.concept_names && class_names == o.class_names && split == o.split;
}

Container to_container(const EmbeddingBundle& b) {
  b.validate();
  Container c;
  c.kind = "embedding_bundle";
  auto add_f32 = [&](const char* name, const RowMatrixXf& m) {
    c.add(name, {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())},
          std::vector<float>(m.data(), m.data() + m.size()));
  };
  add_f32("features", b.features);
  add_f32("image_embeddings", b.image_embeddings);
  add_f32("concept_embeddings", b.concept_embeddings);
  c.add("labels", {b.labels.size()}, b.labels);
  std::vector<std::uint32_t> split(b.split.size());
  std::transform(b.split.begin(), b.split.end(), split.begin(),
                 [](Split s) { return static_cast<std::uint32_t>(s); });
  const std::uint64_t split_rows = split.size();
  c.add("split", {split_rows}, std::move(split));
  c.add("concept_names", {b.concept_names.size()}, b.concept_names);
  c.add("class_names", {b.class_names.size()}, b.class_names);
  return c;
}

EmbeddingBundle bundle_from_container(const Container& c) {
  require(c.kind == "embedding_bundle", "container kind '" + c.kind + "' is not an embedding bundle");
  auto f32 = [&](const char* name) {
    const NamedArray& a = c.at(name);
    require(a.dtype() == DType::f32 && a.shape.size() == 2, std::string("array '") + name + "' must be 2-D f32");
    const auto& v = std::get<std::vector<float>>(a.data);
    return RowMatrixXf(Eigen::Map<const RowMatrixXf>(v.data(), static_cast<Eigen::Index>(a.shape[0]),
                                                     static_cast<Eigen::Index>(a.shape[1])));
  };
  auto u32 = [&](const char* name) {
    const NamedArray& a = c.at(name);
    require(a.dtype() == DType::u32 && a.shape.size() == 1, std::string("array '") + name + "' must be 1-D u32");
    return std::get<std::vector<std::uint32_t>>(a.data);
  };
  auto strings = [&](const char* name) {
    const NamedArray& a = c.at(name);
    require(a.dtype() == DType::utf8, std::string("array '") + name + "' must be utf8");
    return std::get<std::vector<std::string>>(a.data);
  };
  EmbeddingBundle b;
  b.features = f32("features");
  b.image_embeddings = f32("image_embeddings");
  b.concept_embeddings = f32("concept_embeddings");
  b.labels = u32("labels");
  for (auto s : u32("split")) {
    require(s <= 2, "split tag out of range");
    b.split.push_back(static_cast<Split>(s));
  }
  b.concept_names = strings("concept_names");
  b.class_names = strings("class_names");
  b.validate();
  return b;
}

void write_bundle(const EmbeddingBundle& bundle, const std::filesystem::path& path) {
  write_container(to_container(bundle), path);
}

EmbeddingBundle read_bundle(const std::filesystem::path& path) {
  return bundle_from_container(read_container(path));
}

std::vector<std::uint32_t> gather(std::span<const std::uint32_t> v, std::span<const Eigen::Index> rows) {
  std::vector<std::uint32_t> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = v[static_cast<std::size_t>(rows[i])];
  return out;
}

}  // namespace conceptlab
