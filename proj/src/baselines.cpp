#include "cmda/baselines.hpp"

#include <string>

#include <spdlog/spdlog.h>

#include "cmda/binary_io.hpp"
#include "cmda/error.hpp"

namespace cmda {

namespace {

void meanAndStd(const Matrix& x, Vector& mean, Vector& stdev, std::string_view domain) {
  if (x.cols() < 2) throw DegenerateError(std::string("PDS needs at least two ") + std::string(domain) + " items");
  mean = x.rowwise().mean();
  const Matrix centered = x.colwise() - mean;
  stdev = (centered.array().square().rowwise().sum() / static_cast<double>(x.cols())).sqrt().matrix();
  std::size_t floored = 0;
  for (Eigen::Index i = 0; i < stdev.size(); ++i) {
    if (stdev(i) < kStdFloor) {
      stdev(i) = kStdFloor;
      ++floored;
    }
  }
  if (floored) spdlog::warn("PDS: {} constant {} dimension(s), std floored at {}", floored, domain, kStdFloor);
}

// Symmetric matrix power via eigendecomposition; eigenvalues are clamped at 0.
Matrix symmetricPower(const Matrix& m, double power) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
  if (eig.info() != Eigen::Success) throw DegenerateError("CORAL: eigendecomposition failed");
  Vector values = eig.eigenvalues().cwiseMax(0.0);
  for (Eigen::Index i = 0; i < values.size(); ++i) values(i) = std::pow(values(i), power);
  return eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
}

Matrix regularized(const Matrix& cov) {
  const double d = static_cast<double>(cov.rows());
  double lambda = 1e-3 * cov.trace() / d;
  if (!(lambda > 0.0)) lambda = 1e-3;
  return cov + lambda * Matrix::Identity(cov.rows(), cov.cols());
}

}  // namespace

PdsStats pdsFit(const Matrix& sourceFeatures, const Matrix& targetFeatures) {
  if (sourceFeatures.rows() != targetFeatures.rows()) {
    throw DimensionError("pdsFit", static_cast<std::size_t>(sourceFeatures.rows()),
                         static_cast<std::size_t>(targetFeatures.rows()));
  }
  PdsStats s;
  meanAndStd(sourceFeatures, s.sourceMean, s.sourceStd, "source");
  meanAndStd(targetFeatures, s.targetMean, s.targetStd, "target");
  return s;
}

Matrix pdsApply(const PdsStats& stats, const Matrix& features, Domain domain) {
  const Vector& mean = domain == Domain::kSource ? stats.sourceMean : stats.targetMean;
  const Vector& stdev = domain == Domain::kSource ? stats.sourceStd : stats.targetStd;
  if (features.rows() != mean.size()) {
    throw DimensionError("pdsApply", static_cast<std::size_t>(mean.size()), static_cast<std::size_t>(features.rows()));
  }
  return ((features.colwise() - mean).array().colwise() / stdev.array()).matrix();
}

Matrix covariance(const Matrix& features) {
  const Vector mean = features.rowwise().mean();
  const Matrix centered = features.colwise() - mean;
  return centered * centered.transpose() / static_cast<double>(features.cols());
}

CoralTransform coralFit(const Matrix& sourceFeatures, const Matrix& targetFeatures) {
  if (sourceFeatures.rows() != targetFeatures.rows()) {
    throw DimensionError("coralFit", static_cast<std::size_t>(sourceFeatures.rows()),
                         static_cast<std::size_t>(targetFeatures.rows()));
  }
  if (sourceFeatures.cols() < 2 || targetFeatures.cols() < 2) {
    throw DegenerateError("CORAL needs at least two items per domain");
  }
  const Matrix cs = regularized(covariance(sourceFeatures));
  const Matrix ct = regularized(covariance(targetFeatures));
  return CoralTransform{symmetricPower(ct, 0.5) * symmetricPower(cs, -0.5)};
}

Matrix coralApply(const CoralTransform& coral, const Matrix& sourceFeatures) {
  if (sourceFeatures.rows() != coral.transform.cols()) {
    throw DimensionError("coralApply", static_cast<std::size_t>(coral.transform.cols()),
                         static_cast<std::size_t>(sourceFeatures.rows()));
  }
  return coral.transform * sourceFeatures;
}

std::string_view toString(BaselineKind k) {
  switch (k) {
    case BaselineKind::kNone: return "none";
    case BaselineKind::kPds: return "pds";
    case BaselineKind::kCoral: return "coral";
  }
  return "unknown";
}

BaselineKind parseBaselineKind(std::string_view s) {
  if (s == "none") return BaselineKind::kNone;
  if (s == "pds") return BaselineKind::kPds;
  if (s == "coral") return BaselineKind::kCoral;
  throw ConfigError("unknown baseline: " + std::string(s));
}

Preprocessing Preprocessing::fit(BaselineKind kind, const Matrix& sourceVideo, const Matrix& targetVideo) {
  Preprocessing p;
  p.kind = kind;
  if (kind == BaselineKind::kNone) return p;
  p.pds = pdsFit(sourceVideo, targetVideo);
  if (kind == BaselineKind::kCoral) {
    p.coral = coralFit(pdsApply(*p.pds, sourceVideo, Domain::kSource), pdsApply(*p.pds, targetVideo, Domain::kTarget));
  }
  return p;
}

Matrix Preprocessing::apply(const Matrix& video, Domain domain) const {
  if (kind == BaselineKind::kNone) return video;
  Matrix out = pdsApply(*pds, video, domain);
  if (coral && domain == Domain::kSource) out = coralApply(*coral, out);
  return out;
}

void Preprocessing::applyTo(Gallery& gallery) const {
  if (kind == BaselineKind::kNone) return;
  const Matrix transformed = apply(gallery.videoMatrix(), gallery.domain);
  for (std::size_t i = 0; i < gallery.items.size(); ++i) {
    gallery.items[i].videoFeature = transformed.col(static_cast<Eigen::Index>(i));
  }
}

void Preprocessing::write(BinaryWriter& w) const {
  w.u32(static_cast<std::uint32_t>(kind));
  if (kind == BaselineKind::kNone) return;
  w.vector(pds->sourceMean);
  w.vector(pds->sourceStd);
  w.vector(pds->targetMean);
  w.vector(pds->targetStd);
  if (kind == BaselineKind::kCoral) w.matrix(coral->transform);
}

Preprocessing Preprocessing::read(BinaryReader& r) {
  Preprocessing p;
  const std::uint32_t k = r.u32();
  if (k > 2) throw FormatError(r.source() + ": unknown preprocessing kind " + std::to_string(k));
  p.kind = static_cast<BaselineKind>(k);
  if (p.kind == BaselineKind::kNone) return p;
  PdsStats s;
  s.sourceMean = r.vector();
  s.sourceStd = r.vector();
  s.targetMean = r.vector();
  s.targetStd = r.vector();
  p.pds = std::move(s);
  if (p.kind == BaselineKind::kCoral) p.coral = CoralTransform{r.matrix()};
  return p;
}

}  // namespace cmda
