#include "cmda/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <spdlog/spdlog.h>

#include "cmda/error.hpp"
#include "cmda/ranking.hpp"

namespace cmda {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

bool samePath(const fs::path& a, const fs::path& b) {
  if (a.empty() || b.empty()) return false;
  std::error_code ec;
  if (fs::exists(a, ec) && fs::exists(b, ec)) return fs::equivalent(a, b, ec);
  return fs::weakly_canonical(a, ec) == fs::weakly_canonical(b, ec);
}

void require(const fs::path& p, std::string_view name) {
  if (p.empty()) throw ConfigError("paths." + std::string(name) + " is required");
}

std::optional<Vocabulary> maybeVocabulary(const PathsConfig& paths) {
  if (paths.vocab.empty()) return std::nullopt;
  return readVocabulary(paths.vocab);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

ModelDims dimsFor(const RunConfig& config, const Dataset& data) {
  ModelDims d = config.model;
  d.videoInput = data.source.videoDim;
  d.textInput = data.source.textDim;
  return d;
}

Gallery preprocessed(const Gallery& g, const Preprocessing& p) {
  Gallery out = g;
  p.applyTo(out);
  return out;
}

std::vector<std::vector<double>> copyVelocities(const SgdMomentum& sgd) { return sgd.velocities(); }

void writeResolvedConfig(const fs::path& path, const RunConfig& config) {
  json j = config.toJson(true);
  j["config_hash"] = config.hash();
  writeJsonFile(path, j);
}

fs::path outputDir(const RunConfig& config) {
  require(config.paths.outputDir, "output_dir");
  fs::create_directories(config.paths.outputDir);
  return config.paths.outputDir;
}

std::ofstream openForWrite(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.precision(17);
  return out;
}

// Keeps the best-scoring model when a validation gallery is present.
struct BestTracker {
  const LabelledGallery* validation;
  std::optional<double> bestScore;
  std::optional<Checkpoint> best;
  std::optional<std::size_t> bestEpoch;

  void observe(EpochLog& log, const Checkpoint& current) {
    if (!validation) return;
    const double score = evaluateCheckpoint(current, *validation).ndcg;
    log.validationNdcg = score;
    if (!bestScore || score > *bestScore) {
      bestScore = score;
      best = current;
      bestEpoch = log.epoch;
    }
  }
  void finish(TrainOutcome& outcome) {
    if (!best) return;
    spdlog::info("best validation epoch {} (nDCG {:.4f})", *bestEpoch, *bestScore);
    outcome.checkpoint = std::move(*best);
    outcome.bestEpoch = bestEpoch;
  }
};

}  // namespace

Dataset loadTrainingData(const PathsConfig& paths, bool requireTarget) {
  const std::array<std::pair<const fs::path*, const char*>, 5> inputs{
      {{&paths.sourceVideo, "source_video"},
       {&paths.sourceText, "source_text"},
       {&paths.sourceMeta, "source_meta"},
       {&paths.targetVideo, "target_video"},
       {&paths.targetMeta, "target_meta"}}};
  for (const auto& [p, name] : inputs) {
    for (const fs::path* held : {&paths.targetTruth, &paths.targetText, &paths.valTruth, &paths.valText}) {
      if (samePath(*p, *held)) {
        throw ProtocolError("paths." + std::string(name) + " points at evaluation-only caption data (" +
                            held->string() + "); held-out captions cannot be used for training");
      }
    }
  }
  require(paths.sourceVideo, "source_video");
  require(paths.sourceText, "source_text");
  require(paths.sourceMeta, "source_meta");
  Dataset d;
  d.vocab = maybeVocabulary(paths);
  d.source = loadSourceGallery(paths.sourceVideo, paths.sourceText, paths.sourceMeta, d.vocab);
  const bool haveTarget = !paths.targetVideo.empty() || !paths.targetMeta.empty();
  if (requireTarget || haveTarget) {
    require(paths.targetVideo, "target_video");
    require(paths.targetMeta, "target_meta");
    d.target = loadTargetGallery(paths.targetVideo, paths.targetMeta);
    if (d.target->videoDim != d.source.videoDim) {
      throw DimensionError("target vs source video feature dimension", d.source.videoDim, d.target->videoDim);
    }
  }
  return d;
}

LabelledGallery loadEvaluationGallery(const PathsConfig& paths) {
  require(paths.targetVideo, "target_video");
  require(paths.targetMeta, "target_meta");
  require(paths.targetTruth, "target_truth");
  require(paths.targetText, "target_text");
  LabelledGallery g;
  g.gallery = loadTargetGallery(paths.targetVideo, paths.targetMeta);
  g.truth = loadTargetTruth(paths.targetTruth, paths.targetText, g.gallery, maybeVocabulary(paths));
  return g;
}

std::optional<LabelledGallery> loadValidationGallery(const PathsConfig& paths) {
  if (paths.valVideo.empty() && paths.valMeta.empty() && paths.valTruth.empty() && paths.valText.empty()) {
    return std::nullopt;
  }
  require(paths.valVideo, "val_video");
  require(paths.valMeta, "val_meta");
  require(paths.valTruth, "val_truth");
  require(paths.valText, "val_text");
  LabelledGallery g;
  g.gallery = loadTargetGallery(paths.valVideo, paths.valMeta);
  g.truth = loadTargetTruth(paths.valTruth, paths.valText, g.gallery, maybeVocabulary(paths));
  return g;
}

DiagnosticsRow diagnose(std::size_t epoch, const PseudoLabelTable& table, const AdaptConfig& config) {
  DiagnosticsRow row;
  row.epoch = epoch;
  row.view = table.view;
  row.selected = table.selectedCount();
  row.prototypes = table.prototypeCount;
  row.diversity = labelDiversity(table);
  row.meanConfidence = meanConfidence(table);
  PseudoLabelTable copy = table;
  selectTargets(copy, config.samplePercent, SamplingVariant::kPerPrototypeTopX);
  row.perPrototypeDiversity = labelDiversity(copy);
  selectTargets(copy, config.samplePercent, SamplingVariant::kUniformTopX);
  row.uniformDiversity = labelDiversity(copy);
  return row;
}

std::vector<LabelAccuracyRow> labelAccuracyLog(std::span<const LabelSnapshot> history,
                                               std::span<const CaptionRecord> truth) {
  std::vector<LabelAccuracyRow> rows;
  for (std::size_t e = 0; e < history.size(); ++e) {
    for (const auto& table : history[e]) {
      rows.push_back(LabelAccuracyRow{e + 1, table.view, labelAccuracy(table, truth)});
    }
  }
  return rows;
}

std::uint64_t epochSeed(std::uint64_t seed, std::size_t globalEpoch, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(static_cast<std::uint64_t>(globalEpoch) * 4 + stream));
}

Trainer::Trainer(const TrainConfig& config, const Gallery& source, const Gallery* target)
    : config_(config), source_(&source), target_(target), relevance_(buildRelevanceSets(source)) {
  config_.loss.validate();
  if (config_.batchSize == 0) throw ConfigError("train.batch_size must be positive");
}

EpochLog Trainer::runEpoch(MultiViewModel& model, SgdMomentum& sgd, std::size_t globalEpoch,
                           const AdaptState* adaptation) const {
  std::mt19937_64 sourceRng(epochSeed(config_.seed, globalEpoch, 1));
  std::mt19937_64 crossRng(epochSeed(config_.seed, globalEpoch, 2));

  // Hard negatives follow the current geometry of the action prototypes.
  const auto& actionRel = relevance_[View::kAction];
  const HardNegativeIndex hardNegatives(computePrototypes(model, *source_, actionRel), actionRel.groupCount(),
                                        config_.hardNegativeFraction);
  const TripletSampler sampler(relevance_, &hardNegatives);

  const bool srcToTgt = adaptation && config_.loss.lambdaSrcToTgt > 0.0;
  const bool tgtToSrc = adaptation && config_.loss.lambdaTgtToSrc > 0.0;
  if ((srcToTgt || tgtToSrc) && !target_) throw ConfigError("cross-domain terms need a target gallery");

  std::vector<std::size_t> order(source_->size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), sourceRng);

  EpochLog log;
  log.epoch = globalEpoch + 1;
  double lossSum = 0.0;
  for (std::size_t start = 0; start < order.size(); start += config_.batchSize) {
    const std::size_t n = std::min(config_.batchSize, order.size() - start);
    const std::span<const std::size_t> anchors(order.data() + start, n);
    std::vector<TermBatch> batches;
    for (View view : kAllViews) {
      for (LossTerm term : kSourceTerms) batches.push_back(sampler.sampleSource(view, term, anchors, sourceRng));
    }
    for (View view : kAllViews) {
      if (!srcToTgt && !tgtToSrc) break;
      const auto& table = (*adaptation)[view].table;
      const auto* actionTable = &(*adaptation)[View::kAction].table;
      if (srcToTgt) {
        batches.push_back(sampler.sampleCrossDomain(table, LossTerm::kSourceToTarget, n, crossRng, actionTable));
      }
      if (tgtToSrc) {
        batches.push_back(sampler.sampleCrossDomain(table, LossTerm::kTargetToSource, n, crossRng, actionTable));
      }
    }
    const LossResult result = computeLoss(model, *source_, target_, batches, config_.loss, true);
    const auto params = model.parameterSpans();
    const auto grads = result.gradients.spans();
    sgd.step(params, grads);

    lossSum += result.total;
    ++log.steps;
    for (const auto& t : result.terms) {
      log.triplets += t.triplets;
      log.skipped += t.skipped;
      if (isCrossDomain(t.term)) log.crossDomainTriplets += t.triplets;
    }
  }
  log.loss = log.steps ? lossSum / static_cast<double>(log.steps) : 0.0;
  if (!std::isfinite(log.loss)) throw DegenerateError("training diverged: non-finite loss");
  return log;
}

TrainOutcome pretrain(const RunConfig& config, const Dataset& data, const LabelledGallery* validation,
                      const Checkpoint* resume) {
  RunConfig cfg = config;
  cfg.validate();
  if (cfg.train.loss.lambdaSrcToTgt != 0.0 || cfg.train.loss.lambdaTgtToSrc != 0.0) {
    spdlog::warn("pretrain uses source losses only; cross-domain lambdas ({}, {}) are ignored",
                 cfg.train.loss.lambdaSrcToTgt, cfg.train.loss.lambdaTgtToSrc);
    cfg.train.loss.lambdaSrcToTgt = 0.0;
    cfg.train.loss.lambdaTgtToSrc = 0.0;
  }

  TrainOutcome out;
  Checkpoint& ck = out.checkpoint;
  if (resume) {
    ck = *resume;
    if (ck.model.videoInputDim() != data.source.videoDim || ck.model.textInputDim() != data.source.textDim) {
      throw DimensionError("resume checkpoint vs source video features", ck.model.videoInputDim(),
                           data.source.videoDim);
    }
  } else {
    if (cfg.baseline != BaselineKind::kNone && !data.target) {
      throw ConfigError("baseline '" + std::string(toString(cfg.baseline)) +
                        "' needs target video features (paths.target_video, paths.target_meta)");
    }
    ck.preprocessing = cfg.baseline == BaselineKind::kNone
                           ? Preprocessing{}
                           : Preprocessing::fit(cfg.baseline, data.source.videoMatrix(), data.target->videoMatrix());
    ck.model = MultiViewModel::create(dimsFor(cfg, data), cfg.train.seed);
  }

  const Gallery source = preprocessed(data.source, ck.preprocessing);
  const Trainer trainer(cfg.train, source, nullptr);
  SgdMomentum sgd(cfg.train.learningRate, cfg.train.momentum);
  if (!ck.state.velocities.empty()) sgd.setVelocities(ck.state.velocities);

  BestTracker tracker{validation, {}, {}, {}};
  for (std::size_t g = ck.state.epochsDone; g < cfg.train.pretrainEpochs; ++g) {
    EpochLog log = trainer.runEpoch(ck.model, sgd, g, nullptr);
    ck.state.epochsDone = static_cast<std::uint32_t>(g + 1);
    ck.state.velocities = copyVelocities(sgd);
    tracker.observe(log, ck);
    spdlog::info("pretrain epoch {} loss {:.6f}", log.epoch, log.loss);
    out.epochs.push_back(log);
  }
  tracker.finish(out);
  return out;
}

TrainOutcome adapt(const RunConfig& config, const Dataset& data, const Checkpoint& init,
                   const LabelledGallery* validation) {
  config.validate();
  if (!data.target) throw ConfigError("adaptation needs a target gallery");
  if (init.model.videoInputDim() != data.source.videoDim || init.model.textInputDim() != data.source.textDim) {
    throw DimensionError("init checkpoint vs source video features", init.model.videoInputDim(),
                         data.source.videoDim);
  }
  if (init.preprocessing.kind != config.baseline) {
    spdlog::warn("init checkpoint uses '{}' preprocessing, config asks for '{}'; keeping the checkpoint's",
                 toString(init.preprocessing.kind), toString(config.baseline));
  }

  TrainOutcome out;
  Checkpoint& ck = out.checkpoint;
  ck = init;
  const Gallery source = preprocessed(data.source, ck.preprocessing);
  const Gallery target = preprocessed(*data.target, ck.preprocessing);
  const Trainer trainer(config.train, source, &target);
  SgdMomentum sgd(config.train.learningRate, config.train.momentum);
  if (!ck.state.velocities.empty()) sgd.setVelocities(ck.state.velocities);

  BestTracker tracker{validation, {}, {}, {}};
  for (std::size_t e = 0; e < config.train.adaptEpochs; ++e) {
    const std::size_t g = ck.state.epochsDone;
    const AdaptState state = epochRefresh(ck.model, source, target, trainer.relevance(), config.adapt);
    LabelSnapshot snapshot;
    for (View v : kAllViews) {
      snapshot[static_cast<std::size_t>(v)] = state[v].table;
      out.diagnostics.push_back(diagnose(e + 1, state[v].table, config.adapt));
    }
    out.labelHistory.push_back(std::move(snapshot));

    EpochLog log = trainer.runEpoch(ck.model, sgd, g, &state);
    ck.state.epochsDone = static_cast<std::uint32_t>(g + 1);
    ck.state.velocities = copyVelocities(sgd);
    tracker.observe(log, ck);
    spdlog::info("adapt epoch {} loss {:.6f} (cross-domain triplets {})", e + 1, log.loss, log.crossDomainTriplets);
    out.epochs.push_back(log);
  }
  tracker.finish(out);
  return out;
}

EvalReport evaluateCheckpoint(const Checkpoint& checkpoint, const LabelledGallery& gallery) {
  const Gallery g = preprocessed(gallery.gallery, checkpoint.preprocessing);
  return evaluateModel(checkpoint.model, g, gallery.truth);
}

json buildReport(const RunConfig& config, const Checkpoint& checkpoint, const LabelledGallery& gallery,
                 const Dataset* data) {
  const EvalReport r = evaluateCheckpoint(checkpoint, gallery);
  json j;
  j["ndcg"] = r.ndcg;
  j["map"] = r.map;
  j["queries"] = r.queries;
  j["ndcg_queries"] = r.ndcgQueries;
  j["map_queries"] = r.mapQueries;
  j["gallery_size"] = gallery.gallery.size();
  j["epochs_trained"] = checkpoint.state.epochsDone;
  j["preprocessing"] = std::string(toString(checkpoint.preprocessing.kind));
  j["seed"] = config.train.seed;
  j["config_hash"] = config.hash();
  j["config"] = config.toJson(false);
  if (data && gallery.gallery.domain == Domain::kTarget) {
    const Gallery source = preprocessed(data->source, checkpoint.preprocessing);
    const Gallery target = preprocessed(gallery.gallery, checkpoint.preprocessing);
    const AdaptState state =
        epochRefresh(checkpoint.model, source, target, buildRelevanceSets(source), config.adapt);
    json perView = json::object();
    for (View v : kAllViews) {
      const auto& table = state[v].table;
      const LabelAccuracy acc = labelAccuracy(table, gallery.truth);
      const DiagnosticsRow d = diagnose(0, table, config.adapt);
      perView[std::string(toString(v))] = json{{"label_accuracy_all", acc.all},
                                               {"label_accuracy_selected", acc.selected},
                                               {"selected", acc.selectedCount},
                                               {"prototypes", d.prototypes},
                                               {"label_diversity", d.diversity},
                                               {"mean_confidence", d.meanConfidence}};
    }
    j["per_view"] = perView;
  }
  return j;
}

void writeEmbeddings(const fs::path& path, const Checkpoint& checkpoint, const Dataset& data) {
  auto out = openForWrite(path);
  std::size_t maxDim = 0;
  for (View v : kAllViews) maxDim = std::max(maxDim, checkpoint.model.embedDim(v));
  out << "id,domain,view";
  for (std::size_t i = 0; i < maxDim; ++i) out << ",e" << i;
  out << '\n';
  std::vector<const Gallery*> galleries{&data.source};
  if (data.target) galleries.push_back(&*data.target);
  for (const Gallery* raw : galleries) {
    const Gallery g = preprocessed(*raw, checkpoint.preprocessing);
    const Matrix video = g.videoMatrix();
    for (View v : kAllViews) {
      const Matrix emb = checkpoint.model.embedBatch(video, Modality::kVideo, v);
      for (std::size_t i = 0; i < g.size(); ++i) {
        out << g.items[i].externalId << ',' << toString(g.domain) << ',' << toString(v);
        const auto col = emb.col(static_cast<Eigen::Index>(i));
        for (Eigen::Index k = 0; k < col.size(); ++k) out << ',' << col(k);
        for (std::size_t k = static_cast<std::size_t>(col.size()); k < maxDim; ++k) out << ',';
        out << '\n';
      }
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void writeLossLog(const fs::path& path, std::span<const EpochLog> epochs) {
  auto out = openForWrite(path);
  out << "epoch,loss,steps,triplets,cross_domain_triplets,skipped,val_ndcg\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << e.loss << ',' << e.steps << ',' << e.triplets << ',' << e.crossDomainTriplets << ','
        << e.skipped << ',';
    if (e.validationNdcg) out << *e.validationNdcg;
    out << '\n';
  }
}

void writeDiagnostics(const fs::path& path, std::span<const DiagnosticsRow> rows) {
  auto out = openForWrite(path);
  out << "adapt_epoch,view,selected,prototypes,diversity,per_prototype_diversity,uniform_diversity,mean_confidence\n";
  for (const auto& r : rows) {
    out << r.epoch << ',' << toString(r.view) << ',' << r.selected << ',' << r.prototypes << ',' << r.diversity << ','
        << r.perPrototypeDiversity << ',' << r.uniformDiversity << ',' << r.meanConfidence << '\n';
  }
}

void writeLabelLog(const fs::path& path, std::span<const LabelSnapshot> history, const Gallery& target) {
  auto out = openForWrite(path);
  out << "adapt_epoch,view,target_id,verb,noun,prototypes,confidence,selected\n";
  for (std::size_t e = 0; e < history.size(); ++e) {
    for (const auto& table : history[e]) {
      for (const auto& entry : table.entries) {
        out << e + 1 << ',' << toString(table.view) << ',' << target.items.at(entry.target).externalId << ','
            << entry.label.verb << ',' << entry.label.noun << ',' << table.prototypeCount << ',' << entry.confidence
            << ',' << (entry.selected ? 1 : 0) << '\n';
      }
    }
  }
}

std::vector<LabelSnapshot> readLabelLog(const fs::path& path, const Gallery& target) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::map<std::int64_t, std::size_t> indexOf;
  for (std::size_t i = 0; i < target.size(); ++i) indexOf[target.items[i].externalId] = i;

  std::vector<LabelSnapshot> history;
  std::string line;
  std::size_t lineNo = 0;
  std::getline(in, line);
  while (std::getline(in, line)) {
    ++lineNo;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineNo + 1);
    std::stringstream ss(line);
    std::string epochS, viewS, idS, verbS, nounS, protoS, confS, selS;
    if (!std::getline(ss, epochS, ',') || !std::getline(ss, viewS, ',') || !std::getline(ss, idS, ',') ||
        !std::getline(ss, verbS, ',') || !std::getline(ss, nounS, ',') || !std::getline(ss, protoS, ',') ||
        !std::getline(ss, confS, ',') || !std::getline(ss, selS, ',')) {
      throw FormatError(where + ": expected 8 columns");
    }
    try {
      const std::size_t epoch = std::stoul(epochS);
      if (epoch == 0) throw FormatError(where + ": epochs are 1-based");
      if (history.size() < epoch) history.resize(epoch);
      const View view = parseView(viewS);
      auto& table = history[epoch - 1][static_cast<std::size_t>(view)];
      table.view = view;
      table.prototypeCount = std::stoul(protoS);
      const auto found = indexOf.find(std::stoll(idS));
      if (found == indexOf.end()) throw FormatError(where + ": unknown target id " + idS);
      PseudoLabelEntry entry;
      entry.target = found->second;
      entry.view = view;
      entry.label = GroupKey{std::stoi(verbS), std::stoi(nounS)};
      entry.confidence = std::stod(confS);
      entry.selected = selS == "1";
      table.entries.push_back(entry);
    } catch (const std::logic_error&) {
      throw FormatError(where + ": malformed value");
    }
  }
  for (auto& snapshot : history) {
    for (auto& table : snapshot) {
      if (table.entries.size() != target.size()) {
        throw FormatError(path.string() + ": label table does not cover the target gallery");
      }
      std::sort(table.entries.begin(), table.entries.end(),
                [](const auto& a, const auto& b) { return a.target < b.target; });
    }
  }
  return history;
}

void writeLabelAccuracy(const fs::path& path, std::span<const LabelAccuracyRow> rows) {
  auto out = openForWrite(path);
  out << "adapt_epoch,view,accuracy_all,accuracy_selected,selected\n";
  for (const auto& r : rows) {
    out << r.epoch << ',' << toString(r.view) << ',' << r.accuracy.all << ',' << r.accuracy.selected << ','
        << r.accuracy.selectedCount << '\n';
  }
}

fs::path runPretrain(const RunConfig& config, const fs::path& resumeFrom) {
  const fs::path dir = outputDir(config);
  const Dataset data = loadTrainingData(config.paths, config.baseline != BaselineKind::kNone);
  const auto validation = loadValidationGallery(config.paths);
  std::optional<Checkpoint> resume;
  if (!resumeFrom.empty()) resume = loadCheckpoint(resumeFrom);
  const TrainOutcome out =
      pretrain(config, data, validation ? &*validation : nullptr, resume ? &*resume : nullptr);
  RunConfig resolved = config;
  resolved.stage = Stage::kPretrain;
  writeResolvedConfig(dir / "pretrain_config.json", resolved);
  writeLossLog(dir / "pretrain_loss.csv", out.epochs);
  const fs::path ckpt = dir / "pretrain.xmck";
  saveCheckpoint(ckpt, out.checkpoint);
  return ckpt;
}

fs::path runAdapt(const RunConfig& config, const fs::path& initCheckpoint) {
  const fs::path dir = outputDir(config);
  const Dataset data = loadTrainingData(config.paths, true);
  const auto validation = loadValidationGallery(config.paths);
  const Checkpoint init = loadCheckpoint(initCheckpoint);
  const TrainOutcome out = adapt(config, data, init, validation ? &*validation : nullptr);
  RunConfig resolved = config;
  resolved.stage = Stage::kAdapt;
  writeResolvedConfig(dir / "adapt_config.json", resolved);
  writeLossLog(dir / "adapt_loss.csv", out.epochs);
  writeDiagnostics(dir / "adapt_diagnostics.csv", out.diagnostics);
  writeLabelLog(dir / "adapt_labels.csv", out.labelHistory, *data.target);
  const fs::path ckpt = dir / "adapt.xmck";
  saveCheckpoint(ckpt, out.checkpoint);
  return ckpt;
}

json runEval(const RunConfig& config, const fs::path& checkpoint, const fs::path& reportPath,
             const fs::path& labelLog) {
  const Checkpoint ck = loadCheckpoint(checkpoint);
  const LabelledGallery gallery = loadEvaluationGallery(config.paths);
  std::optional<Dataset> data;
  if (!config.paths.sourceVideo.empty()) data = loadTrainingData(config.paths, false);
  const json report = buildReport(config, ck, gallery, data ? &*data : nullptr);
  fs::path out = reportPath;
  if (out.empty() && !config.paths.outputDir.empty()) out = config.paths.outputDir / "report.json";
  if (!out.empty()) {
    writeJsonFile(out, report);
    RunConfig resolved = config;
    resolved.stage = Stage::kEval;
    writeResolvedConfig(out.parent_path() / "eval_config.json", resolved);
  }
  if (!labelLog.empty()) {
    const auto history = readLabelLog(labelLog, gallery.gallery);
    const fs::path accPath = (out.empty() ? labelLog.parent_path() : out.parent_path()) / "label_accuracy.csv";
    writeLabelAccuracy(accPath, labelAccuracyLog(history, gallery.truth));
  }
  return report;
}

std::size_t runExport(const RunConfig& config, const fs::path& checkpoint, const fs::path& csvPath) {
  const Checkpoint ck = loadCheckpoint(checkpoint);
  const Dataset data = loadTrainingData(config.paths, false);
  writeEmbeddings(csvPath, ck, data);
  return (data.source.size() + (data.target ? data.target->size() : 0)) * kAllViews.size();
}

}  // namespace cmda
