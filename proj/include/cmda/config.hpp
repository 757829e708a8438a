#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "cmda/adapt.hpp"
#include "cmda/baselines.hpp"
#include "cmda/multiview.hpp"
#include "cmda/ranking.hpp"

namespace cmda {

enum class Stage { kGen, kPretrain, kAdapt, kEval, kExport };

std::string_view toString(Stage s);

// Empty paths are unset. Relative paths resolve against the config file.
struct PathsConfig {
  std::filesystem::path sourceVideo, sourceText, sourceMeta;
  std::filesystem::path targetVideo, targetMeta;
  // Evaluation-only target captions.
  std::filesystem::path targetTruth, targetText;
  std::filesystem::path vocab;
  // Optional validation gallery (target domain, with its own truth) used to
  // keep the best epoch by nDCG.
  std::filesystem::path valVideo, valMeta, valTruth, valText;
  std::filesystem::path outputDir;
};

struct TrainConfig {
  double learningRate = 0.01;
  double momentum = 0.9;
  std::size_t batchSize = 256;
  std::size_t pretrainEpochs = 30;
  std::size_t adaptEpochs = 30;
  std::uint64_t seed = 0;
  double hardNegativeFraction = 0.3;
  LossWeights loss;
};

struct RunConfig {
  Stage stage = Stage::kPretrain;
  PathsConfig paths;
  TrainConfig train;
  AdaptConfig adapt;
  // Input sizes are taken from the data; only hidden/embedding sizes apply.
  ModelDims model;
  BaselineKind baseline = BaselineKind::kPds;

  void validate() const;

  // `withPaths` false gives the provenance form used for hashing and reports.
  nlohmann::json toJson(bool withPaths = true) const;
  // Missing fields keep their defaults; unknown fields are rejected.
  static RunConfig fromJson(const nlohmann::json& j, const std::filesystem::path& baseDir = {});
  static RunConfig load(const std::filesystem::path& file);

  // FNV-1a 64 of the canonical path-free JSON, as 16 hex digits.
  std::string hash() const;

  // Smaller networks and batches for single-core desk runs on the synthetic
  // benchmark; the full-scale sizes remain the plain defaults.
  static RunConfig benchProfile();
};

void writeJsonFile(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace cmda
