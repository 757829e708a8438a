#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "cmda/linalg.hpp"

namespace cmda {

class EmbeddingNet;

// Little-endian primitive writer. Output is buffered and flushed on save().
class BinaryWriter {
 public:
  void magic(std::string_view fourcc);
  void u32(std::uint32_t v);
  void f64(double v);
  void string(std::string_view s);
  // rows, cols, then values row-major.
  void matrix(const Matrix& m);
  void vector(const Vector& v);

  const std::vector<char>& bytes() const { return buffer_; }
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<char> buffer_;
};

// Reader over a whole file; every accessor throws FormatError on truncation.
class BinaryReader {
 public:
  BinaryReader(std::vector<char> bytes, std::string source);
  static BinaryReader open(const std::filesystem::path& path);

  void expectMagic(std::string_view fourcc);
  std::uint32_t u32();
  double f64();
  std::string string();
  Matrix matrix();
  Vector vector();

  bool atEnd() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::string& source() const { return source_; }

 private:
  void need(std::size_t n, std::string_view what) const;

  std::vector<char> bytes_;
  std::size_t pos_ = 0;
  std::string source_;
};

void writeNet(BinaryWriter& w, const EmbeddingNet& net);
EmbeddingNet readNet(BinaryReader& r);

}  // namespace cmda
