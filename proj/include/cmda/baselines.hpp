#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "cmda/corpus.hpp"
#include "cmda/linalg.hpp"

namespace cmda {

class BinaryReader;
class BinaryWriter;

inline constexpr double kStdFloor = 1e-8;

// Per-domain standardization: each domain is shifted and scaled to zero mean
// and unit (population) variance per dimension with its own statistics.
struct PdsStats {
  Vector sourceMean;
  Vector sourceStd;
  Vector targetMean;
  Vector targetStd;
};

// Features are one item per column. Each domain needs at least two items.
PdsStats pdsFit(const Matrix& sourceFeatures, const Matrix& targetFeatures);
Matrix pdsApply(const PdsStats& stats, const Matrix& features, Domain domain);

// Maps source features onto the target covariance: x' = T x with
// T = Ct^{1/2} Cs^{-1/2}, both covariances regularized by
// (1e-3 * trace / d) I. Target features are left untouched.
struct CoralTransform {
  Matrix transform;
};

CoralTransform coralFit(const Matrix& sourceFeatures, const Matrix& targetFeatures);
Matrix coralApply(const CoralTransform& coral, const Matrix& sourceFeatures);

// Population covariance, one item per column.
Matrix covariance(const Matrix& features);

enum class BaselineKind : std::uint8_t { kNone = 0, kPds = 1, kCoral = 2 };

std::string_view toString(BaselineKind k);
BaselineKind parseBaselineKind(std::string_view s);

// Input-feature preprocessing fitted once before training and stored with the
// model so evaluation applies the identical transform. kCoral implies PDS
// first, then CORAL on the standardized source features.
struct Preprocessing {
  BaselineKind kind = BaselineKind::kNone;
  std::optional<PdsStats> pds;
  std::optional<CoralTransform> coral;

  static Preprocessing fit(BaselineKind kind, const Matrix& sourceVideo, const Matrix& targetVideo);
  Matrix apply(const Matrix& video, Domain domain) const;
  // Transforms every video feature of the gallery in place.
  void applyTo(Gallery& gallery) const;

  void write(BinaryWriter& w) const;
  static Preprocessing read(BinaryReader& r);
};

}  // namespace cmda
