#include "cmda/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <spdlog/spdlog.h>

#include "cmda/error.hpp"

namespace cmda {

std::vector<Prototype> computePrototypes(const Matrix& sourceEmbeddings, const RelevanceView& relevance) {
  if (static_cast<std::size_t>(sourceEmbeddings.cols()) != relevance.itemCount()) {
    throw DimensionError("computePrototypes: embeddings vs relevance items", relevance.itemCount(),
                         static_cast<std::size_t>(sourceEmbeddings.cols()));
  }
  std::vector<Prototype> out;
  out.reserve(relevance.groupCount());
  for (std::size_t g = 0; g < relevance.groupCount(); ++g) {
    const auto& members = relevance.members(g);
    if (members.empty()) {
      spdlog::warn("computePrototypes: empty group skipped");
      continue;
    }
    Vector sum = Vector::Zero(sourceEmbeddings.rows());
    for (std::size_t i : members) sum += sourceEmbeddings.col(static_cast<Eigen::Index>(i));
    Prototype p;
    p.view = relevance.view();
    p.label = relevance.key(g);
    p.group = g;
    p.centroid = sum / static_cast<double>(members.size());
    p.memberCount = members.size();
    p.degenerate = p.centroid.norm() < kDegenerateCentroidNorm;
    if (p.degenerate) {
      spdlog::debug("computePrototypes: degenerate centroid for group {} in {} view", g, toString(p.view));
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<Prototype> computePrototypes(const MultiViewModel& model, const Gallery& source,
                                         const RelevanceView& relevance) {
  return computePrototypes(model.embedBatch(source.videoMatrix(), Modality::kVideo, relevance.view()),
                           relevance);
}

Matrix centroidMatrix(const std::vector<Prototype>& prototypes) {
  if (prototypes.empty()) return Matrix();
  Matrix m(prototypes.front().centroid.size(), static_cast<Eigen::Index>(prototypes.size()));
  for (std::size_t p = 0; p < prototypes.size(); ++p) m.col(static_cast<Eigen::Index>(p)) = prototypes[p].centroid;
  return m;
}

std::string_view toString(LabellingVariant v) {
  return v == LabellingVariant::kNearestSource ? "nearest_source" : "nearest_prototype";
}
std::string_view toString(ConfidenceVariant v) {
  return v == ConfidenceVariant::kPrototype ? "prototype" : "neighbour";
}
std::string_view toString(SamplingVariant v) {
  return v == SamplingVariant::kPerPrototypeTopX ? "per_prototype" : "uniform";
}

LabellingVariant parseLabellingVariant(std::string_view s) {
  if (s == "nearest_source") return LabellingVariant::kNearestSource;
  if (s == "nearest_prototype" || s == "proto") return LabellingVariant::kNearestPrototype;
  throw ConfigError("unknown labelling variant: " + std::string(s));
}
ConfidenceVariant parseConfidenceVariant(std::string_view s) {
  if (s == "prototype") return ConfidenceVariant::kPrototype;
  if (s == "neighbour" || s == "neighbor") return ConfidenceVariant::kNeighbour;
  throw ConfigError("unknown confidence variant: " + std::string(s));
}
SamplingVariant parseSamplingVariant(std::string_view s) {
  if (s == "per_prototype") return SamplingVariant::kPerPrototypeTopX;
  if (s == "uniform") return SamplingVariant::kUniformTopX;
  throw ConfigError("unknown sampling variant: " + std::string(s));
}

void AdaptConfig::validate() const {
  if (!(samplePercent > 0.0 && samplePercent <= 100.0)) {
    throw ConfigError("sample percent must be in (0, 100], got " + std::to_string(samplePercent));
  }
}

std::size_t PseudoLabelTable::selectedCount() const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [](const auto& e) { return e.selected; }));
}

namespace {

std::size_t argminRow(const Matrix& d, Eigen::Index row, const std::vector<bool>* skip = nullptr) {
  std::size_t best = d.cols();
  double bestValue = 0.0;
  for (Eigen::Index j = 0; j < d.cols(); ++j) {
    if (skip && (*skip)[static_cast<std::size_t>(j)]) continue;
    if (best == static_cast<std::size_t>(d.cols()) || d(row, j) < bestValue) {
      best = static_cast<std::size_t>(j);
      bestValue = d(row, j);
    }
  }
  return best;
}

}  // namespace

PseudoLabelTable pseudoLabel(const Matrix& targetEmbeddings, const Matrix& sourceEmbeddings,
                             const std::vector<Prototype>& prototypes, const RelevanceView& relevance,
                             LabellingVariant variant, DistanceCounter* counter) {
  if (sourceEmbeddings.cols() == 0) throw DegenerateError("pseudoLabel: empty source gallery");
  if (static_cast<std::size_t>(sourceEmbeddings.cols()) != relevance.itemCount()) {
    throw DimensionError("pseudoLabel: source embeddings vs relevance items", relevance.itemCount(),
                         static_cast<std::size_t>(sourceEmbeddings.cols()));
  }
  if (prototypes.empty()) throw DegenerateError("pseudoLabel: no prototypes");

  // Map relevance group -> prototype slot.
  std::vector<std::size_t> slotOfGroup(relevance.groupCount(), prototypes.size());
  for (std::size_t p = 0; p < prototypes.size(); ++p) slotOfGroup[prototypes[p].group] = p;

  const Matrix toSource = pairwiseCosineDistance(targetEmbeddings, sourceEmbeddings);
  const Matrix toProto = pairwiseCosineDistance(targetEmbeddings, centroidMatrix(prototypes));
  if (counter) {
    counter->sourcePairs += static_cast<std::size_t>(toSource.size());
    counter->prototypePairs += static_cast<std::size_t>(toProto.size());
  }
  std::vector<bool> degenerate(prototypes.size());
  for (std::size_t p = 0; p < prototypes.size(); ++p) degenerate[p] = prototypes[p].degenerate;

  PseudoLabelTable table;
  table.view = relevance.view();
  table.prototypeCount = prototypes.size();
  table.entries.resize(static_cast<std::size_t>(targetEmbeddings.cols()));
  for (Eigen::Index t = 0; t < targetEmbeddings.cols(); ++t) {
    auto& e = table.entries[static_cast<std::size_t>(t)];
    e.target = static_cast<std::size_t>(t);
    e.view = relevance.view();
    e.nearestSource = argminRow(toSource, t);
    e.neighbourDistance = toSource(t, static_cast<Eigen::Index>(e.nearestSource));
    std::size_t slot;
    if (variant == LabellingVariant::kNearestSource) {
      e.inheritedGroup = relevance.groupOf(e.nearestSource);
      slot = slotOfGroup[e.inheritedGroup];
    } else {
      slot = argminRow(toProto, t, &degenerate);
      if (slot == prototypes.size()) throw DegenerateError("pseudoLabel: every prototype is degenerate");
      e.inheritedGroup = prototypes[slot].group;
    }
    e.label = relevance.key(e.inheritedGroup);
    e.prototypeDistance = slot < prototypes.size() ? toProto(t, static_cast<Eigen::Index>(slot)) : 1.0;
  }
  return table;
}

double confidence(const PseudoLabelEntry& entry, const std::vector<Prototype>& prototypes,
                  ConfidenceVariant variant) {
  if (variant == ConfidenceVariant::kNeighbour) return confidenceFromDistance(entry.neighbourDistance);
  const auto it = std::find_if(prototypes.begin(), prototypes.end(),
                               [&](const Prototype& p) { return p.group == entry.inheritedGroup; });
  if (it == prototypes.end()) {
    throw Error(ErrorKind::kInvalidArgument,
                "confidence: no prototype for group " + std::to_string(entry.inheritedGroup));
  }
  if (it->degenerate) {
    spdlog::debug("confidence: degenerate prototype for target {}, confidence set to 0", entry.target);
    return 0.0;
  }
  return confidenceFromDistance(entry.prototypeDistance);
}

void assignConfidence(PseudoLabelTable& table, const std::vector<Prototype>& prototypes,
                      ConfidenceVariant variant) {
  for (auto& e : table.entries) e.confidence = confidence(e, prototypes, variant);
}

std::size_t selectionCount(std::size_t assigned, double percent) {
  if (assigned == 0) return 0;
  // The epsilon absorbs representation error, e.g. 60 * 10 / 100.
  const auto n = static_cast<std::size_t>(std::floor(percent * static_cast<double>(assigned) / 100.0 + 1e-9));
  return std::clamp<std::size_t>(n, 1, assigned);
}

namespace {

void selectTop(PseudoLabelTable& table, std::vector<std::size_t>& candidates, double percent) {
  const std::size_t keep = selectionCount(candidates.size(), percent);
  std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
    return table.entries[a].confidence > table.entries[b].confidence;
  });
  for (std::size_t k = 0; k < keep; ++k) table.entries[candidates[k]].selected = true;
}

}  // namespace

void selectTargets(PseudoLabelTable& table, double percent, SamplingVariant variant) {
  for (auto& e : table.entries) e.selected = false;
  if (table.entries.empty()) return;
  if (variant == SamplingVariant::kUniformTopX) {
    std::vector<std::size_t> all(table.entries.size());
    std::iota(all.begin(), all.end(), 0);
    selectTop(table, all, percent);
    return;
  }
  std::size_t maxGroup = 0;
  for (const auto& e : table.entries) maxGroup = std::max(maxGroup, e.inheritedGroup);
  std::vector<std::vector<std::size_t>> byGroup(maxGroup + 1);
  for (std::size_t t = 0; t < table.entries.size(); ++t) byGroup[table.entries[t].inheritedGroup].push_back(t);
  for (auto& members : byGroup) {
    if (!members.empty()) selectTop(table, members, percent);
  }
}

AdaptState epochRefresh(const MultiViewModel& model, const Gallery& source, const Gallery& target,
                        const RelevanceSets& relevance, const AdaptConfig& config) {
  config.validate();
  if (target.size() == 0) throw DegenerateError("epochRefresh: empty target gallery");
  const Matrix sourceVideo = source.videoMatrix();
  const Matrix targetVideo = target.videoMatrix();
  AdaptState state;
  for (View v : kAllViews) {
    const Matrix srcEmb = model.embedBatch(sourceVideo, Modality::kVideo, v);
    const Matrix tgtEmb = model.embedBatch(targetVideo, Modality::kVideo, v);
    auto& out = state.views[static_cast<std::size_t>(v)];
    out.prototypes = computePrototypes(srcEmb, relevance[v]);
    out.table = pseudoLabel(tgtEmb, srcEmb, out.prototypes, relevance[v], config.labelling, &state.distances);
    assignConfidence(out.table, out.prototypes, config.confidence);
    selectTargets(out.table, config.samplePercent, config.sampling);
  }
  return state;
}

LabelAccuracy labelAccuracy(const PseudoLabelTable& table, std::span<const CaptionRecord> truth) {
  if (truth.size() != table.entries.size()) {
    throw DimensionError("labelAccuracy: truth captions vs table entries", table.entries.size(), truth.size());
  }
  LabelAccuracy acc;
  if (table.entries.empty()) return acc;
  std::size_t correct = 0;
  std::size_t correctSelected = 0;
  for (const auto& e : table.entries) {
    const bool ok = e.label == groupKeyFor(truth[e.target], table.view);
    correct += ok;
    if (e.selected) {
      ++acc.selectedCount;
      correctSelected += ok;
    }
  }
  acc.all = static_cast<double>(correct) / static_cast<double>(table.entries.size());
  acc.selected = acc.selectedCount ? static_cast<double>(correctSelected) / static_cast<double>(acc.selectedCount) : 0.0;
  return acc;
}

double labelDiversity(const PseudoLabelTable& table) {
  if (table.prototypeCount == 0) return 0.0;
  std::vector<std::size_t> groups;
  for (const auto& e : table.entries) {
    if (e.selected) groups.push_back(e.inheritedGroup);
  }
  std::sort(groups.begin(), groups.end());
  const auto distinct = static_cast<std::size_t>(std::unique(groups.begin(), groups.end()) - groups.begin());
  return static_cast<double>(distinct) / static_cast<double>(table.prototypeCount);
}

double meanConfidence(const PseudoLabelTable& table) {
  if (table.entries.empty()) return 0.0;
  double s = 0.0;
  for (const auto& e : table.entries) s += e.confidence;
  return s / static_cast<double>(table.entries.size());
}

}  // namespace cmda
