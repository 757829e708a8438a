#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "cmda/adapt.hpp"
#include "cmda/checkpoint.hpp"
#include "cmda/config.hpp"
#include "cmda/eval.hpp"
#include "cmda/nn.hpp"

namespace cmda {

// Training inputs. Holds raw (unpreprocessed) features and, by construction,
// no target captions.
struct Dataset {
  Gallery source;
  std::optional<Gallery> target;
  std::optional<Vocabulary> vocab;
};

// A captioned target-domain gallery used for scoring only.
struct LabelledGallery {
  Gallery gallery;  // uncaptioned; raw features
  std::vector<CaptionRecord> truth;
};

// Loads the source gallery and, when configured, the uncaptioned target
// gallery. Refuses any configuration in which a training input is the
// evaluation-only truth file.
Dataset loadTrainingData(const PathsConfig& paths, bool requireTarget);
LabelledGallery loadEvaluationGallery(const PathsConfig& paths);
std::optional<LabelledGallery> loadValidationGallery(const PathsConfig& paths);

struct EpochLog {
  std::size_t epoch = 0;  // global, 1-based
  double loss = 0.0;      // mean step objective
  std::size_t steps = 0;
  std::size_t triplets = 0;
  std::size_t crossDomainTriplets = 0;
  std::size_t skipped = 0;
  std::optional<double> validationNdcg;
};

// Truth-free per-epoch statistics of the pseudo-label tables.
struct DiagnosticsRow {
  std::size_t epoch = 0;  // adaptation epoch, 1-based
  View view = View::kAction;
  std::size_t selected = 0;
  std::size_t prototypes = 0;
  double diversity = 0.0;              // under the configured sampling
  double perPrototypeDiversity = 0.0;  // same table, per-prototype top-x
  double uniformDiversity = 0.0;       // same table, uniform top-x
  double meanConfidence = 0.0;
};

DiagnosticsRow diagnose(std::size_t epoch, const PseudoLabelTable& table, const AdaptConfig& config);

// Pseudo-label tables used by one adaptation epoch, one per view.
using LabelSnapshot = std::array<PseudoLabelTable, 3>;

struct LabelAccuracyRow {
  std::size_t epoch = 0;
  View view = View::kAction;
  LabelAccuracy accuracy;
};

// Scores logged label tables against held-out captions (evaluation side).
std::vector<LabelAccuracyRow> labelAccuracyLog(std::span<const LabelSnapshot> history,
                                               std::span<const CaptionRecord> truth);

// Sampling seeds for one epoch: independent streams for source and
// cross-domain triplets, both a pure function of (seed, global epoch).
std::uint64_t epochSeed(std::uint64_t seed, std::size_t globalEpoch, std::uint64_t stream);

// Minibatch loop over preprocessed galleries.
class Trainer {
 public:
  Trainer(const TrainConfig& config, const Gallery& source, const Gallery* target);

  // One pass over the shuffled source gallery in chunks of batchSize anchors.
  // Cross-domain terms are sampled from `adaptation` when it is non-null and
  // their lambdas are positive.
  EpochLog runEpoch(MultiViewModel& model, SgdMomentum& sgd, std::size_t globalEpoch,
                    const AdaptState* adaptation) const;

  const RelevanceSets& relevance() const { return relevance_; }

 private:
  TrainConfig config_;
  const Gallery* source_;
  const Gallery* target_;
  RelevanceSets relevance_;
};

struct TrainOutcome {
  Checkpoint checkpoint;
  std::vector<EpochLog> epochs;
  std::vector<DiagnosticsRow> diagnostics;
  std::vector<LabelSnapshot> labelHistory;  // adaptation only
  std::optional<std::size_t> bestEpoch;
};

// Source-only training. Cross-domain lambdas are forced to 0 (with a warning
// when set). With `resume`, training continues from its epoch counter.
TrainOutcome pretrain(const RunConfig& config, const Dataset& data, const LabelledGallery* validation = nullptr,
                      const Checkpoint* resume = nullptr);

// Iterative adaptation from `init`: each epoch refreshes pseudo-labels with
// the current model, then trains on source plus cross-domain terms. Nothing
// here can see target captions; label quality is scored later from
// labelHistory.
TrainOutcome adapt(const RunConfig& config, const Dataset& data, const Checkpoint& init,
                   const LabelledGallery* validation = nullptr);

EvalReport evaluateCheckpoint(const Checkpoint& checkpoint, const LabelledGallery& gallery);

// Report with metrics, provenance and, when a source gallery is available,
// per-view pseudo-label diagnostics of the final model.
nlohmann::json buildReport(const RunConfig& config, const Checkpoint& checkpoint, const LabelledGallery& gallery,
                           const Dataset* data);

// CSV rows: id, domain, view, embedding values; one row per item and view.
void writeEmbeddings(const std::filesystem::path& path, const Checkpoint& checkpoint, const Dataset& data);

void writeLossLog(const std::filesystem::path& path, std::span<const EpochLog> epochs);
void writeDiagnostics(const std::filesystem::path& path, std::span<const DiagnosticsRow> rows);
// CSV: adapt_epoch, view, target_id, verb, noun, confidence, selected.
void writeLabelLog(const std::filesystem::path& path, std::span<const LabelSnapshot> history, const Gallery& target);
std::vector<LabelSnapshot> readLabelLog(const std::filesystem::path& path, const Gallery& target);
void writeLabelAccuracy(const std::filesystem::path& path, std::span<const LabelAccuracyRow> rows);

// File-level stages used by the command line. Each writes its resolved
// config beside its outputs in paths.outputDir.
std::filesystem::path runPretrain(const RunConfig& config, const std::filesystem::path& resumeFrom = {});
std::filesystem::path runAdapt(const RunConfig& config, const std::filesystem::path& initCheckpoint);
// With `labelLog`, also scores an adaptation run's pseudo-labels against the
// truth file and writes label_accuracy.csv next to the report.
nlohmann::json runEval(const RunConfig& config, const std::filesystem::path& checkpoint,
                       const std::filesystem::path& reportPath = {}, const std::filesystem::path& labelLog = {});
std::size_t runExport(const RunConfig& config, const std::filesystem::path& checkpoint,
                      const std::filesystem::path& csvPath);

}  // namespace cmda
