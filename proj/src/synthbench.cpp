#include "cmda/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "cmda/error.hpp"

namespace cmda {

using nlohmann::json;

void SynthSpec::validate() const {
  if (numVerbs <= 0 || numNouns <= 0) throw ConfigError("synth: numVerbs and numNouns must be positive");
  if (itemsPerAction <= 0) throw ConfigError("synth: itemsPerAction must be positive");
  if (featureDim == 0 || textDim == 0) throw ConfigError("synth: feature dimensions must be positive");
  if (latentDim > featureDim) throw ConfigError("synth: latentDim must not exceed featureDim");
  if (!(clusterStd > 0.0)) throw ConfigError("synth: clusterStd must be > 0");
  if (centroidScale < 0.0 || interactionScale < 0.0 || textCentroidScale < 0.0 || textNoise < 0.0 ||
      modeSpread < 0.0 || shiftTranslation < 0.0) {
    throw ConfigError("synth: scales must be non-negative");
  }
  if (modesPerAction <= 0) throw ConfigError("synth: modesPerAction must be positive");
  if (!std::isfinite(shiftAngle)) throw ConfigError("synth: shiftAngle must be finite");
  if (classImbalance < 0.0) throw ConfigError("synth: classImbalance must be >= 0");
  if (!(ambiguousFraction >= 0.0 && ambiguousFraction <= 1.0)) {
    throw ConfigError("synth: ambiguousFraction must be in [0, 1]");
  }
  if (!(ambiguousMix >= 0.0 && ambiguousMix <= 1.0)) throw ConfigError("synth: ambiguousMix must be in [0, 1]");
}

json SynthSpec::toJson() const {
  return json{{"num_verbs", numVerbs},
              {"num_nouns", numNouns},
              {"items_per_action", itemsPerAction},
              {"feature_dim", featureDim},
              {"latent_dim", latentDim},
              {"text_dim", textDim},
              {"cluster_std", clusterStd},
              {"centroid_scale", centroidScale},
              {"interaction_scale", interactionScale},
              {"text_centroid_scale", textCentroidScale},
              {"text_noise", textNoise},
              {"modes_per_action", modesPerAction},
              {"mode_spread", modeSpread},
              {"shift_angle", shiftAngle},
              {"shift_translation", shiftTranslation},
              {"class_imbalance", classImbalance},
              {"ambiguous_fraction", ambiguousFraction},
              {"ambiguous_mix", ambiguousMix},
              {"seed", seed}};
}

SynthSpec SynthSpec::fromJson(const json& j) {
  SynthSpec s;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "num_verbs") s.numVerbs = value.get<int>();
      else if (key == "num_nouns") s.numNouns = value.get<int>();
      else if (key == "items_per_action") s.itemsPerAction = value.get<int>();
      else if (key == "feature_dim") s.featureDim = value.get<std::size_t>();
      else if (key == "latent_dim") s.latentDim = value.get<std::size_t>();
      else if (key == "text_dim") s.textDim = value.get<std::size_t>();
      else if (key == "cluster_std") s.clusterStd = value.get<double>();
      else if (key == "centroid_scale") s.centroidScale = value.get<double>();
      else if (key == "interaction_scale") s.interactionScale = value.get<double>();
      else if (key == "text_centroid_scale") s.textCentroidScale = value.get<double>();
      else if (key == "text_noise") s.textNoise = value.get<double>();
      else if (key == "modes_per_action") s.modesPerAction = value.get<int>();
      else if (key == "mode_spread") s.modeSpread = value.get<double>();
      else if (key == "shift_angle") s.shiftAngle = value.get<double>();
      else if (key == "shift_translation") s.shiftTranslation = value.get<double>();
      else if (key == "class_imbalance") s.classImbalance = value.get<double>();
      else if (key == "ambiguous_fraction") s.ambiguousFraction = value.get<double>();
      else if (key == "ambiguous_mix") s.ambiguousMix = value.get<double>();
      else if (key == "seed") s.seed = value.get<std::uint64_t>();
      else throw ConfigError("synth: unknown field '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synth: ") + e.what());
  }
  s.validate();
  return s;
}

namespace {

Vector gaussian(std::size_t dim, double stdev, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vector v(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = stdev * n(rng);
  return v;
}

Matrix randomOrthogonal(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  const auto d = static_cast<Eigen::Index>(dim);
  Matrix g(d, d);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c) g(r, c) = n(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index c = 0; c < d; ++c) {
    if (r(c, c) < 0.0) q.col(c) = -q.col(c);
  }
  return q;
}

Matrix planeRotation(std::size_t dim, double angle) {
  const auto d = static_cast<Eigen::Index>(dim);
  Matrix g = Matrix::Identity(d, d);
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  for (Eigen::Index i = 0; i + 1 < d; i += 2) {
    g(i, i) = c;
    g(i, i + 1) = -s;
    g(i + 1, i) = s;
    g(i + 1, i + 1) = c;
  }
  return g;
}

}  // namespace

std::vector<int> actionCounts(const SynthSpec& spec) {
  spec.validate();
  const auto actions = static_cast<std::size_t>(spec.numVerbs * spec.numNouns);
  std::vector<int> counts(actions, spec.itemsPerAction);
  if (spec.classImbalance == 0.0) return counts;
  std::vector<std::size_t> order(actions);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t rank = 0; rank < actions; ++rank) {
    const double w = std::pow(static_cast<double>(rank + 1), -spec.classImbalance);
    counts[order[rank]] = std::max(2, static_cast<int>(std::lround(spec.itemsPerAction * w)));
  }
  return counts;
}

SynthData generateSynth(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const int verbs = spec.numVerbs;
  const int nouns = spec.numNouns;
  const std::size_t actions = static_cast<std::size_t>(verbs * nouns);

  const std::size_t latent = spec.latentDim == 0 ? spec.featureDim : spec.latentDim;
  // Orthonormal embedding of the latent class space into the feature space.
  const Matrix basis = randomOrthogonal(spec.featureDim, rng).leftCols(static_cast<Eigen::Index>(latent));

  std::vector<Vector> verbPart, nounPart, textVerb, textNoun;
  for (int v = 0; v < verbs; ++v) verbPart.push_back(gaussian(latent, spec.centroidScale, rng));
  for (int n = 0; n < nouns; ++n) nounPart.push_back(gaussian(latent, spec.centroidScale, rng));
  std::vector<std::vector<Vector>> modes(actions);
  for (std::size_t a = 0; a < actions; ++a) {
    const Vector centre = verbPart[a / static_cast<std::size_t>(nouns)] +
                          nounPart[a % static_cast<std::size_t>(nouns)] +
                          gaussian(latent, spec.interactionScale, rng);
    for (int m = 0; m < spec.modesPerAction; ++m) {
      const Vector mode = spec.modesPerAction == 1 ? centre : Vector(centre + gaussian(latent, spec.modeSpread, rng));
      modes[a].push_back(basis * mode);
    }
  }
  for (int v = 0; v < verbs; ++v) textVerb.push_back(gaussian(spec.textDim, spec.textCentroidScale, rng));
  for (int n = 0; n < nouns; ++n) textNoun.push_back(gaussian(spec.textDim, spec.textCentroidScale, rng));

  SynthData data;
  const Matrix q = randomOrthogonal(spec.featureDim, rng);
  data.shift = q * planeRotation(spec.featureDim, spec.shiftAngle) * q.transpose();
  Vector dir = gaussian(spec.featureDim, 1.0, rng);
  dir /= std::max(dir.norm(), 1e-12);
  data.shiftTranslation = dir * spec.shiftTranslation * spec.clusterStd;
  data.vocab = Vocabulary{verbs, nouns};

  const auto counts = actionCounts(spec);
  std::bernoulli_distribution ambiguous(spec.ambiguousFraction);
  std::uniform_int_distribution<std::size_t> otherAction(0, actions - 2);
  auto makeDomain = [&](Domain domain, Gallery& gallery, std::vector<CaptionRecord>& captions) {
    std::vector<std::pair<Vector, CaptionRecord>> rows;
    for (std::size_t a = 0; a < actions; ++a) {
      const int verb = static_cast<int>(a / static_cast<std::size_t>(nouns));
      const int noun = static_cast<int>(a % static_cast<std::size_t>(nouns));
      for (int i = 0; i < counts[a]; ++i) {
        Vector video = modes[a][static_cast<std::size_t>(i % spec.modesPerAction)];
        if (domain == Domain::kTarget && spec.ambiguousFraction > 0.0 && actions > 1 && ambiguous(rng)) {
          std::size_t b = otherAction(rng);
          if (b >= a) ++b;
          video = (1.0 - spec.ambiguousMix) * video + spec.ambiguousMix * modes[b][0];
        }
        video += gaussian(spec.featureDim, spec.clusterStd, rng);
        if (domain == Domain::kTarget) video = data.shift * video + data.shiftTranslation;
        CaptionRecord c;
        c.verbClass = verb;
        c.nounClass = noun;
        c.textFeature = textVerb[static_cast<std::size_t>(verb)] + textNoun[static_cast<std::size_t>(noun)] +
                        gaussian(spec.textDim, spec.textNoise, rng);
        c.rawText = "verb" + std::to_string(verb) + " noun" + std::to_string(noun);
        rows.emplace_back(std::move(video), std::move(c));
      }
    }
    std::shuffle(rows.begin(), rows.end(), rng);
    gallery.domain = domain;
    gallery.videoDim = spec.featureDim;
    gallery.textDim = domain == Domain::kSource ? spec.textDim : 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      GalleryItem item;
      item.id = ItemId{domain, i};
      item.externalId = static_cast<std::int64_t>(i);
      item.videoFeature = std::move(rows[i].first);
      if (domain == Domain::kSource) item.caption = rows[i].second;
      else captions.push_back(std::move(rows[i].second));
      gallery.items.push_back(std::move(item));
    }
  };
  std::vector<CaptionRecord> unused;
  makeDomain(Domain::kSource, data.source, unused);
  makeDomain(Domain::kTarget, data.target, data.targetTruth);
  return data;
}

SynthFiles SynthFiles::in(const std::filesystem::path& dir) {
  return SynthFiles{dir / "source_video.xmfe", dir / "source_text.xmfe", dir / "source_meta.jsonl",
                    dir / "target_video.xmfe", dir / "target_meta.jsonl", dir / "target_truth.jsonl",
                    dir / "target_text.xmfe",  dir / "vocab.json",        dir / "synth_spec.json"};
}

PathsConfig SynthFiles::runPaths(const std::filesystem::path& outputDir) const {
  PathsConfig p;
  p.sourceVideo = sourceVideo;
  p.sourceText = sourceText;
  p.sourceMeta = sourceMeta;
  p.targetVideo = targetVideo;
  p.targetMeta = targetMeta;
  p.targetTruth = targetTruth;
  p.targetText = targetText;
  p.vocab = vocab;
  p.outputDir = outputDir;
  return p;
}

SynthFiles writeSynth(const SynthData& data, const SynthSpec& spec, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  const auto files = SynthFiles::in(dir);

  writeFeatures(files.sourceVideo, data.source.videoMatrix());
  writeFeatures(files.sourceText, data.source.textMatrix());
  std::vector<MetadataRecord> meta;
  for (std::size_t i = 0; i < data.source.size(); ++i) {
    const auto& item = data.source.items[i];
    meta.push_back(MetadataRecord{item.externalId, Domain::kSource, item.caption->verbClass, item.caption->nounClass,
                                  static_cast<std::int64_t>(i), item.caption->rawText});
  }
  writeMetadata(files.sourceMeta, meta);

  writeFeatures(files.targetVideo, data.target.videoMatrix());
  meta.clear();
  for (const auto& item : data.target.items) {
    meta.push_back(MetadataRecord{item.externalId, Domain::kTarget, std::nullopt, std::nullopt, std::nullopt,
                                  std::nullopt});
  }
  writeMetadata(files.targetMeta, meta);

  Matrix truthText(static_cast<Eigen::Index>(spec.textDim), static_cast<Eigen::Index>(data.targetTruth.size()));
  meta.clear();
  for (std::size_t i = 0; i < data.targetTruth.size(); ++i) {
    const auto& c = data.targetTruth[i];
    truthText.col(static_cast<Eigen::Index>(i)) = c.textFeature;
    meta.push_back(MetadataRecord{data.target.items[i].externalId, Domain::kTarget, c.verbClass, c.nounClass,
                                  static_cast<std::int64_t>(i), c.rawText});
  }
  writeFeatures(files.targetText, truthText);
  writeMetadata(files.targetTruth, meta);

  writeVocabulary(files.vocab, data.vocab);
  std::ofstream out(files.spec, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + files.spec.string());
  out << spec.toJson().dump(2) << '\n';
  return files;
}

}  // namespace cmda
