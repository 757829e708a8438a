#include "cmda/binary_io.hpp"

#include <bit>
#include <iterator>

#include "cmda/error.hpp"
#include "cmda/nn.hpp"

namespace cmda {

namespace {

void appendLe(std::vector<char>& buf, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint64_t loadLe(const char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return v;
}

}  // namespace

void BinaryWriter::magic(std::string_view fourcc) { buffer_.insert(buffer_.end(), fourcc.begin(), fourcc.end()); }

void BinaryWriter::u32(std::uint32_t v) { appendLe(buffer_, v, 4); }

void BinaryWriter::f64(double v) { appendLe(buffer_, std::bit_cast<std::uint64_t>(v), 8); }

void BinaryWriter::string(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  buffer_.insert(buffer_.end(), s.begin(), s.end());
}

void BinaryWriter::matrix(const Matrix& m) {
  u32(static_cast<std::uint32_t>(m.rows()));
  u32(static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) f64(m(i, j));
  }
}

void BinaryWriter::vector(const Vector& v) {
  u32(static_cast<std::uint32_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) f64(v(i));
}

void BinaryWriter::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

BinaryReader::BinaryReader(std::vector<char> bytes, std::string source)
    : bytes_(std::move(bytes)), source_(std::move(source)) {}

BinaryReader BinaryReader::open(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return BinaryReader(std::move(bytes), path.string());
}

void BinaryReader::need(std::size_t n, std::string_view what) const {
  if (bytes_.size() - pos_ < n) {
    throw FormatError(source_ + ": truncated file while reading " + std::string(what));
  }
}

void BinaryReader::expectMagic(std::string_view fourcc) {
  need(fourcc.size(), "magic");
  if (std::string_view(bytes_.data() + pos_, fourcc.size()) != fourcc) {
    throw FormatError(source_ + ": bad magic, expected \"" + std::string(fourcc) + "\"");
  }
  pos_ += fourcc.size();
}

std::uint32_t BinaryReader::u32() {
  need(4, "u32");
  const auto v = static_cast<std::uint32_t>(loadLe(bytes_.data() + pos_, 4));
  pos_ += 4;
  return v;
}

double BinaryReader::f64() {
  need(8, "f64");
  const auto v = std::bit_cast<double>(loadLe(bytes_.data() + pos_, 8));
  pos_ += 8;
  return v;
}

std::string BinaryReader::string() {
  const std::uint32_t n = u32();
  need(n, "string");
  std::string s(bytes_.data() + pos_, n);
  pos_ += n;
  return s;
}

Matrix BinaryReader::matrix() {
  const std::uint32_t rows = u32();
  const std::uint32_t cols = u32();
  need(static_cast<std::size_t>(rows) * cols * 8, "matrix values");
  Matrix m(rows, cols);
  for (std::uint32_t i = 0; i < rows; ++i) {
    for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = f64();
  }
  return m;
}

Vector BinaryReader::vector() {
  const std::uint32_t n = u32();
  need(static_cast<std::size_t>(n) * 8, "vector values");
  Vector v(n);
  for (std::uint32_t i = 0; i < n; ++i) v(i) = f64();
  return v;
}

void writeNet(BinaryWriter& w, const EmbeddingNet& net) {
  w.u32(static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& layer : net.layers()) {
    w.matrix(layer.weight);
    // Bias length is implied by the row count.
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) w.f64(layer.bias(i));
  }
}

EmbeddingNet readNet(BinaryReader& r) {
  const std::uint32_t count = r.u32();
  if (count == 0 || count > 64) {
    throw FormatError(r.source() + ": implausible layer count " + std::to_string(count));
  }
  std::vector<DenseLayer> layers;
  for (std::uint32_t k = 0; k < count; ++k) {
    DenseLayer layer;
    layer.weight = r.matrix();
    layer.bias.resize(layer.weight.rows());
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = r.f64();
    layers.push_back(std::move(layer));
  }
  try {
    return EmbeddingNet(std::move(layers));
  } catch (const DimensionError& e) {
    throw FormatError(r.source() + ": inconsistent network layers (" + e.what() + ")");
  }
}

}  // namespace cmda
