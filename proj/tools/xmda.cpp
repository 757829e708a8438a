// Command-line front end: gen, pretrain, adapt, eval, export.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "cmda/config.hpp"
#include "cmda/error.hpp"
#include "cmda/pipeline.hpp"
#include "cmda/synthbench.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

int fail(std::string_view kind, const std::string& message, int code) {
  std::cerr << json{{"error", std::string(kind)}, {"message", message}}.dump() << std::endl;
  return code;
}

// Settings that may override the config file from the command line.
struct Overrides {
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batchSize;
  std::optional<double> learningRate;
  std::optional<std::string> baseline;
  std::optional<double> samplePercent;
  std::optional<std::string> labelling, confidence, sampling;
  std::optional<double> lambdaSrcToTgt, lambdaTgtToSrc;

  void addTraining(CLI::App* app) {
    app->add_option("--out", out, "Output directory (overrides paths.output_dir)");
    app->add_option("--seed", seed, "Training seed");
    app->add_option("--epochs", epochs, "Number of epochs for this stage");
    app->add_option("--batch-size", batchSize, "Anchors per minibatch");
    app->add_option("--lr", learningRate, "Learning rate");
  }
  void addAdapt(CLI::App* app) {
    app->add_option("--sample-percent", samplePercent, "Percent of pseudo-labelled targets kept (x)");
    app->add_option("--labelling", labelling, "nearest_source | nearest_prototype");
    app->add_option("--confidence", confidence, "prototype | neighbour");
    app->add_option("--sampling", sampling, "per_prototype | uniform");
    app->add_option("--lambda-st", lambdaSrcToTgt, "Weight of the source-to-target term");
    app->add_option("--lambda-ts", lambdaTgtToSrc, "Weight of the target-to-source term");
  }

  void apply(cmda::RunConfig& c, cmda::Stage stage) const {
    if (!out.empty()) c.paths.outputDir = out;
    if (seed) c.train.seed = *seed;
    if (epochs) (stage == cmda::Stage::kAdapt ? c.train.adaptEpochs : c.train.pretrainEpochs) = *epochs;
    if (batchSize) c.train.batchSize = *batchSize;
    if (learningRate) c.train.learningRate = *learningRate;
    if (baseline) c.baseline = cmda::parseBaselineKind(*baseline);
    if (samplePercent) c.adapt.samplePercent = *samplePercent;
    if (labelling) c.adapt.labelling = cmda::parseLabellingVariant(*labelling);
    if (confidence) c.adapt.confidence = cmda::parseConfidenceVariant(*confidence);
    if (sampling) c.adapt.sampling = cmda::parseSamplingVariant(*sampling);
    if (lambdaSrcToTgt) c.train.loss.lambdaSrcToTgt = *lambdaSrcToTgt;
    if (lambdaTgtToSrc) c.train.loss.lambdaTgtToSrc = *lambdaTgtToSrc;
    c.stage = stage;
    c.validate();
  }
};

cmda::RunConfig loadConfig(const std::string& path, const Overrides& o, cmda::Stage stage) {
  cmda::RunConfig c = cmda::RunConfig::load(path);
  o.apply(c, stage);
  return c;
}

// A run config for the generated benchmark, with paths relative to `dir`.
json benchRunConfig() {
  const cmda::RunConfig c = cmda::RunConfig::benchProfile();
  json j = c.toJson(true);
  j["paths"] = json{{"source_video", "source_video.xmfe"}, {"source_text", "source_text.xmfe"},
                    {"source_meta", "source_meta.jsonl"},  {"target_video", "target_video.xmfe"},
                    {"target_meta", "target_meta.jsonl"},  {"target_truth", "target_truth.jsonl"},
                    {"target_text", "target_text.xmfe"},   {"vocab", "vocab.json"},
                    {"output_dir", "run"}};
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-domain text-to-video retrieval: training, adaptation and evaluation"};
  app.require_subcommand(1);
  std::string logLevel = "info";
  app.add_option("--log-level", logLevel, "trace | debug | info | warn | error | off");

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic benchmark");
  std::string genOut, genSpec;
  cmda::SynthSpec spec;
  std::optional<std::uint64_t> genSeed;
  gen->add_option("--out", genOut, "Output directory")->required();
  gen->add_option("--spec", genSpec, "SynthSpec JSON file");
  gen->add_option("--seed", genSeed, "Generator seed");
  gen->add_option("--verbs", spec.numVerbs, "Number of verb classes");
  gen->add_option("--nouns", spec.numNouns, "Number of noun classes");
  gen->add_option("--items-per-action", spec.itemsPerAction, "Items per action and domain");
  gen->add_option("--feature-dim", spec.featureDim, "Video feature dimension");
  gen->add_option("--text-dim", spec.textDim, "Text feature dimension");
  gen->add_option("--shift-angle", spec.shiftAngle, "Target rotation angle (radians)");
  gen->add_option("--shift-translation", spec.shiftTranslation, "Target translation norm / cluster std");
  gen->add_option("--imbalance", spec.classImbalance, "Class imbalance exponent");

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "Train on the captioned source gallery");
  std::string preConfig, preResume;
  Overrides preOver;
  pre->add_option("--config", preConfig, "Run config JSON")->required();
  pre->add_option("--resume", preResume, "Continue from a pretrain checkpoint");
  pre->add_option("--baseline", preOver.baseline, "none | pds | coral");
  preOver.addTraining(pre);

  // adapt
  auto* ad = app.add_subcommand("adapt", "Adapt a pretrained model to the uncaptioned target gallery");
  std::string adConfig, adInit;
  Overrides adOver;
  ad->add_option("--config", adConfig, "Run config JSON")->required();
  ad->add_option("--init", adInit, "Initial checkpoint")->required();
  adOver.addTraining(ad);
  adOver.addAdapt(ad);

  // eval
  auto* ev = app.add_subcommand("eval", "Score a checkpoint on the target gallery");
  std::string evConfig, evCheckpoint, evReport, evLabels;
  ev->add_option("--config", evConfig, "Run config JSON")->required();
  ev->add_option("--checkpoint", evCheckpoint, "Checkpoint to evaluate")->required();
  ev->add_option("--report", evReport, "Report path (default <output_dir>/report.json)");
  ev->add_option("--labels", evLabels, "Adaptation label log to score against the truth file");

  // export
  auto* ex = app.add_subcommand("export", "Write video embeddings of both galleries as CSV");
  std::string exConfig, exCheckpoint, exOut;
  ex->add_option("--config", exConfig, "Run config JSON")->required();
  ex->add_option("--checkpoint", exCheckpoint, "Checkpoint")->required();
  ex->add_option("--out", exOut, "CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 64);
  }

  try {
    spdlog::set_level(spdlog::level::from_str(logLevel));
    if (*gen) {
      if (!genSpec.empty()) {
        std::ifstream in(genSpec);
        if (!in) throw cmda::IoError("cannot open for reading: " + genSpec);
        spec = cmda::SynthSpec::fromJson(json::parse(in));
      }
      if (genSeed) spec.seed = *genSeed;
      spec.validate();
      const auto data = cmda::generateSynth(spec);
      cmda::writeSynth(data, spec, genOut);
      cmda::writeJsonFile(fs::path(genOut) / "run.json", benchRunConfig());
      std::cout << json{{"source_items", data.source.size()}, {"target_items", data.target.size()},
                        {"out", genOut}}.dump()
                << std::endl;
    } else if (*pre) {
      const auto config = loadConfig(preConfig, preOver, cmda::Stage::kPretrain);
      const auto ckpt = cmda::runPretrain(config, preResume);
      std::cout << json{{"checkpoint", ckpt.string()}, {"config_hash", config.hash()}}.dump() << std::endl;
    } else if (*ad) {
      const auto config = loadConfig(adConfig, adOver, cmda::Stage::kAdapt);
      const auto ckpt = cmda::runAdapt(config, adInit);
      std::cout << json{{"checkpoint", ckpt.string()}, {"config_hash", config.hash()}}.dump() << std::endl;
    } else if (*ev) {
      auto config = cmda::RunConfig::load(evConfig);
      config.stage = cmda::Stage::kEval;
      std::cout << cmda::runEval(config, evCheckpoint, evReport, evLabels).dump(2) << std::endl;
    } else if (*ex) {
      auto config = cmda::RunConfig::load(exConfig);
      config.stage = cmda::Stage::kExport;
      const auto rows = cmda::runExport(config, exCheckpoint, exOut);
      std::cout << json{{"rows", rows}, {"out", exOut}}.dump() << std::endl;
    }
  } catch (const cmda::Error& e) {
    return fail(cmda::toString(e.kind()), e.what(), 2);
  } catch (const json::exception& e) {
    return fail("format", e.what(), 2);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return EXIT_SUCCESS;
}
