#include "cmda/checkpoint.hpp"

#include <string>

#include "cmda/binary_io.hpp"
#include "cmda/error.hpp"

namespace cmda {

namespace {

constexpr std::string_view kMagic = "XMCK";

void writeTo(BinaryWriter& w, const Checkpoint& c) {
  w.magic(kMagic);
  w.u32(kCheckpointVersion);
  c.model.write(w);
  c.preprocessing.write(w);
  w.u32(c.state.epochsDone);
  w.u32(static_cast<std::uint32_t>(c.state.velocities.size()));
  for (const auto& v : c.state.velocities) {
    w.u32(static_cast<std::uint32_t>(v.size()));
    for (double x : v) w.f64(x);
  }
}

Checkpoint readFrom(BinaryReader& r) {
  r.expectMagic(kMagic);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(r.source() + ": unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint c;
  c.model = MultiViewModel::read(r);
  c.preprocessing = Preprocessing::read(r);
  if (c.preprocessing.pds && static_cast<std::size_t>(c.preprocessing.pds->sourceMean.size()) != c.model.videoInputDim()) {
    throw FormatError(r.source() + ": preprocessing dimension does not match the video network");
  }
  c.state.epochsDone = r.u32();
  const std::uint32_t buffers = r.u32();
  const auto params = c.model.parameterSpans();
  if (buffers != 0 && buffers != params.size()) {
    throw FormatError(r.source() + ": optimizer state has " + std::to_string(buffers) + " buffers, model has " +
                      std::to_string(params.size()));
  }
  c.state.velocities.resize(buffers);
  for (std::uint32_t i = 0; i < buffers; ++i) {
    const std::uint32_t n = r.u32();
    if (n != params[i].size()) throw FormatError(r.source() + ": optimizer buffer shape mismatch");
    if (static_cast<std::size_t>(n) * 8 > r.remaining()) {
      throw FormatError(r.source() + ": truncated file while reading optimizer state");
    }
    auto& v = c.state.velocities[i];
    v.resize(n);
    for (auto& x : v) x = r.f64();
  }
  if (!r.atEnd()) throw FormatError(r.source() + ": trailing bytes after checkpoint");
  return c;
}

}  // namespace

std::vector<char> serializeCheckpoint(const Checkpoint& checkpoint) {
  BinaryWriter w;
  writeTo(w, checkpoint);
  return w.bytes();
}

Checkpoint deserializeCheckpoint(std::vector<char> bytes, std::string source) {
  BinaryReader r(std::move(bytes), std::move(source));
  return readFrom(r);
}

void saveCheckpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  BinaryWriter w;
  writeTo(w, checkpoint);
  w.save(path);
}

Checkpoint loadCheckpoint(const std::filesystem::path& path) {
  auto r = BinaryReader::open(path);
  return readFrom(r);
}

}  // namespace cmda
