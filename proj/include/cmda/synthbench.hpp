#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmda/config.hpp"
#include "cmda/corpus.hpp"

namespace cmda {

// Gaussian action clusters in a latent video space, paired with text clusters,
// and a target domain whose video features go through an invertible affine
// shift x -> R x + t.
struct SynthSpec {
  int numVerbs = 6;
  int numNouns = 6;
  int itemsPerAction = 20;  // per domain, before imbalance
  std::size_t featureDim = 32;
  // Class structure lives in a random latentDim-dimensional subspace of the
  // video features; the remaining directions carry noise only. 0 = featureDim.
  std::size_t latentDim = 6;
  std::size_t textDim = 24;
  double clusterStd = 1.0;
  // Std of the latent verb and noun centroid components, and of the per-action
  // interaction term added on top.
  double centroidScale = 3.0;
  double interactionScale = 0.5;
  // Text features: per-class centroids (std textCentroidScale) plus noise.
  double textCentroidScale = 1.0;
  double textNoise = 0.5;
  // Sub-clusters per action; > 1 makes actions multi-modal.
  int modesPerAction = 1;
  double modeSpread = 0.0;
  // R = Q G Q^T, with Q a random orthogonal basis and G rotating consecutive
  // coordinate planes by shiftAngle radians, so every vector turns by exactly
  // that angle. The translation has norm shiftTranslation * clusterStd.
  double shiftAngle = 1.0;
  double shiftTranslation = 20.0;
  // Per-action count scales with (rank + 1)^-classImbalance over a random
  // action ranking; 0 means balanced.
  double classImbalance = 0.0;
  // Ambiguous target clips: this fraction of target videos is centred on a
  // blend (1 - mix) * own centroid + mix * centroid of another random action,
  // while keeping its own caption.
  double ambiguousFraction = 0.2;
  double ambiguousMix = 0.45;
  std::uint64_t seed = 1;

  void validate() const;
  nlohmann::json toJson() const;
  static SynthSpec fromJson(const nlohmann::json& j);
};

struct SynthData {
  Gallery source;
  Gallery target;
  std::vector<CaptionRecord> targetTruth;  // indexed by target item
  Vocabulary vocab;
  Matrix shift;             // R
  Vector shiftTranslation;  // t
};

// Items per action under the SynthSpec's imbalance, indexed verb * numNouns + noun.
std::vector<int> actionCounts(const SynthSpec& spec);

SynthData generateSynth(const SynthSpec& spec);

struct SynthFiles {
  std::filesystem::path sourceVideo, sourceText, sourceMeta;
  std::filesystem::path targetVideo, targetMeta;
  std::filesystem::path targetTruth, targetText;
  std::filesystem::path vocab, spec;

  static SynthFiles in(const std::filesystem::path& dir);
  // Run paths over these files, with outputs in `outputDir`.
  PathsConfig runPaths(const std::filesystem::path& outputDir) const;
};

// Writes the corpus files plus the SynthSpec as JSON. Target captions go only to
// the evaluation-only truth file and its text features.
SynthFiles writeSynth(const SynthData& data, const SynthSpec& spec, const std::filesystem::path& dir);

}  // namespace cmda
