#include "cmda/config.hpp"

#include <cstdio>
#include <fstream>

#include "cmda/error.hpp"

namespace cmda {

using nlohmann::json;

std::string_view toString(Stage s) {
  switch (s) {
    case Stage::kGen: return "gen";
    case Stage::kPretrain: return "pretrain";
    case Stage::kAdapt: return "adapt";
    case Stage::kEval: return "eval";
    case Stage::kExport: return "export";
  }
  return "unknown";
}

namespace {

Stage parseStage(std::string_view s) {
  for (Stage st : {Stage::kGen, Stage::kPretrain, Stage::kAdapt, Stage::kEval, Stage::kExport}) {
    if (toString(st) == s) return st;
  }
  throw ConfigError("unknown stage: " + std::string(s));
}

// Paths in a fixed order; name -> member.
template <typename Fn>
void forEachPath(PathsConfig& p, Fn&& fn) {
  fn("source_video", p.sourceVideo);
  fn("source_text", p.sourceText);
  fn("source_meta", p.sourceMeta);
  fn("target_video", p.targetVideo);
  fn("target_meta", p.targetMeta);
  fn("target_truth", p.targetTruth);
  fn("target_text", p.targetText);
  fn("vocab", p.vocab);
  fn("val_video", p.valVideo);
  fn("val_meta", p.valMeta);
  fn("val_truth", p.valTruth);
  fn("val_text", p.valText);
  fn("output_dir", p.outputDir);
}

void rejectUnknown(const json& j, std::initializer_list<std::string_view> known, std::string_view section) {
  if (!j.is_object()) throw ConfigError(std::string(section) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (auto k : known) ok = ok || k == key;
    if (!ok) throw ConfigError("unknown config field '" + std::string(section) + "." + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void RunConfig::validate() const {
  if (!(train.learningRate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
  if (!(train.momentum >= 0.0 && train.momentum < 1.0)) throw ConfigError("train.momentum must be in [0, 1)");
  if (train.batchSize == 0) throw ConfigError("train.batch_size must be positive");
  if (!(train.hardNegativeFraction > 0.0 && train.hardNegativeFraction <= 1.0)) {
    throw ConfigError("train.hard_negative_fraction must be in (0, 1]");
  }
  train.loss.validate();
  adapt.validate();
  if (model.videoHidden == 0 || model.textHidden == 0 || model.embedDim == 0) {
    throw ConfigError("model sizes must be positive");
  }
}

json RunConfig::toJson(bool withPaths) const {
  json j;
  if (withPaths) {
    j["stage"] = std::string(toString(stage));
    json p = json::object();
    PathsConfig copy = paths;
    forEachPath(copy, [&](const char* name, std::filesystem::path& v) { p[name] = v.string(); });
    j["paths"] = p;
  }
  j["train"] = json{{"learning_rate", train.learningRate},
                    {"momentum", train.momentum},
                    {"batch_size", train.batchSize},
                    {"pretrain_epochs", train.pretrainEpochs},
                    {"adapt_epochs", train.adaptEpochs},
                    {"seed", train.seed},
                    {"hard_negative_fraction", train.hardNegativeFraction},
                    {"margin", train.loss.margin},
                    {"lambda_src_tgt", train.loss.lambdaSrcToTgt},
                    {"lambda_tgt_src", train.loss.lambdaTgtToSrc},
                    {"view_weights", train.loss.viewWeights}};
  j["adapt"] = json{{"sample_percent", adapt.samplePercent},
                    {"labelling", std::string(toString(adapt.labelling))},
                    {"confidence", std::string(toString(adapt.confidence))},
                    {"sampling", std::string(toString(adapt.sampling))}};
  j["model"] = json{{"video_hidden", model.videoHidden},
                    {"text_hidden", model.textHidden},
                    {"embed_dim", model.embedDim},
                    {"action_head", model.actionHead}};
  j["baseline"] = std::string(toString(baseline));
  return j;
}

RunConfig RunConfig::fromJson(const json& j, const std::filesystem::path& baseDir) {
  RunConfig c;
  try {
    rejectUnknown(j, {"stage", "paths", "train", "adapt", "model", "baseline"}, "config");
    if (j.contains("stage")) c.stage = parseStage(j.at("stage").get<std::string>());
    if (j.contains("paths")) {
      const json& p = j.at("paths");
      if (!p.is_object()) throw ConfigError("paths must be a JSON object");
      std::size_t matched = 0;
      forEachPath(c.paths, [&](const char* name, std::filesystem::path& v) {
        if (!p.contains(name)) return;
        ++matched;
        const auto s = p.at(name).get<std::string>();
        if (s.empty()) return;
        std::filesystem::path path(s);
        v = path.is_relative() && !baseDir.empty() ? baseDir / path : path;
      });
      if (matched != p.size()) rejectUnknown(p, {}, "paths");
    }
    if (j.contains("train")) {
      const json& t = j.at("train");
      rejectUnknown(t,
                    {"learning_rate", "momentum", "batch_size", "pretrain_epochs", "adapt_epochs", "seed",
                     "hard_negative_fraction", "margin", "lambda_src_tgt", "lambda_tgt_src", "view_weights"},
                    "train");
      read(t, "learning_rate", c.train.learningRate);
      read(t, "momentum", c.train.momentum);
      read(t, "batch_size", c.train.batchSize);
      read(t, "pretrain_epochs", c.train.pretrainEpochs);
      read(t, "adapt_epochs", c.train.adaptEpochs);
      read(t, "seed", c.train.seed);
      read(t, "hard_negative_fraction", c.train.hardNegativeFraction);
      read(t, "margin", c.train.loss.margin);
      read(t, "lambda_src_tgt", c.train.loss.lambdaSrcToTgt);
      read(t, "lambda_tgt_src", c.train.loss.lambdaTgtToSrc);
      read(t, "view_weights", c.train.loss.viewWeights);
    }
    if (j.contains("adapt")) {
      const json& a = j.at("adapt");
      rejectUnknown(a, {"sample_percent", "labelling", "confidence", "sampling"}, "adapt");
      read(a, "sample_percent", c.adapt.samplePercent);
      if (a.contains("labelling")) c.adapt.labelling = parseLabellingVariant(a.at("labelling").get<std::string>());
      if (a.contains("confidence")) {
        c.adapt.confidence = parseConfidenceVariant(a.at("confidence").get<std::string>());
      }
      if (a.contains("sampling")) c.adapt.sampling = parseSamplingVariant(a.at("sampling").get<std::string>());
    }
    if (j.contains("model")) {
      const json& m = j.at("model");
      rejectUnknown(m, {"video_hidden", "text_hidden", "embed_dim", "action_head"}, "model");
      read(m, "video_hidden", c.model.videoHidden);
      read(m, "text_hidden", c.model.textHidden);
      read(m, "embed_dim", c.model.embedDim);
      read(m, "action_head", c.model.actionHead);
    }
    if (j.contains("baseline")) c.baseline = parseBaselineKind(j.at("baseline").get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open for reading: " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
  return fromJson(j, file.parent_path());
}

std::string RunConfig::hash() const {
  const std::string canonical = toJson(false).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunConfig RunConfig::benchProfile() {
  RunConfig c;
  c.model.videoHidden = 128;
  c.model.textHidden = 128;
  c.model.embedDim = 64;
  c.train.batchSize = 64;
  return c;
}

void writeJsonFile(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace cmda
