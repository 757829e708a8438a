#include "cmda/eval.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "cmda/error.hpp"

namespace cmda {

double gradedRelevance(const CaptionRecord& query, const CaptionRecord& item) {
  if (query.verbClass < 0 || query.nounClass < 0 || item.verbClass < 0 || item.nounClass < 0) {
    throw Error(ErrorKind::kInvalidArgument, "gradedRelevance: missing class labels");
  }
  return 0.5 * ((query.verbClass == item.verbClass ? 1.0 : 0.0) + (query.nounClass == item.nounClass ? 1.0 : 0.0));
}

std::vector<double> relevanceInRankOrder(const QueryResult& result) {
  std::vector<double> out;
  out.reserve(result.ranking.size());
  for (std::size_t i : result.ranking) out.push_back(result.relevance.at(i));
  return out;
}

namespace {

double dcg(std::span<const double> rel) {
  double s = 0.0;
  for (std::size_t i = 0; i < rel.size(); ++i) s += rel[i] / std::log2(static_cast<double>(i) + 2.0);
  return s;
}

}  // namespace

std::optional<double> queryNdcg(std::span<const double> rankedRelevance) {
  std::vector<double> ideal(rankedRelevance.begin(), rankedRelevance.end());
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  const double idcg = dcg(ideal);
  if (idcg <= 0.0) return std::nullopt;
  return dcg(rankedRelevance) / idcg;
}

std::optional<double> averagePrecision(std::span<const double> rankedRelevance) {
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < rankedRelevance.size(); ++i) {
    if (rankedRelevance[i] > kBinaryRelevanceThreshold) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  if (hits == 0) return std::nullopt;
  return sum / static_cast<double>(hits);
}

double ndcg(std::span<const QueryResult> results) { return summarize(results).ndcg; }

double meanAP(std::span<const QueryResult> results) { return summarize(results).map; }

EvalReport summarize(std::span<const QueryResult> results) {
  EvalReport r;
  r.queries = results.size();
  double ndcgSum = 0.0;
  double apSum = 0.0;
  for (const auto& q : results) {
    const auto ranked = relevanceInRankOrder(q);
    if (const auto v = queryNdcg(ranked)) {
      ndcgSum += *v;
      ++r.ndcgQueries;
    }
    if (const auto v = averagePrecision(ranked)) {
      apSum += *v;
      ++r.mapQueries;
    }
  }
  r.ndcg = r.ndcgQueries ? ndcgSum / static_cast<double>(r.ndcgQueries) : 0.0;
  r.map = r.mapQueries ? apSum / static_cast<double>(r.mapQueries) : 0.0;
  return r;
}

std::vector<QueryResult> rankGallery(const MultiViewModel& model, const Gallery& gallery,
                                     std::span<const CaptionRecord> galleryTruth,
                                     std::span<const CaptionRecord> queries) {
  if (gallery.size() == 0) throw DegenerateError("evaluation: empty gallery");
  if (queries.empty()) throw DegenerateError("evaluation: empty query set");
  if (galleryTruth.size() != gallery.size()) {
    throw DimensionError("evaluation: gallery truth vs gallery items", gallery.size(), galleryTruth.size());
  }
  Matrix queryText(static_cast<Eigen::Index>(model.textInputDim()), static_cast<Eigen::Index>(queries.size()));
  for (std::size_t q = 0; q < queries.size(); ++q) {
    if (static_cast<std::size_t>(queries[q].textFeature.size()) != model.textInputDim()) {
      throw DimensionError("evaluation: query text feature", model.textInputDim(),
                           static_cast<std::size_t>(queries[q].textFeature.size()));
    }
    queryText.col(static_cast<Eigen::Index>(q)) = queries[q].textFeature;
  }
  const Matrix queryEmb = model.embedBatch(queryText, Modality::kText, View::kAction);
  const Matrix videoEmb = model.embedBatch(gallery.videoMatrix(), Modality::kVideo, View::kAction);
  const Matrix dist = pairwiseCosineDistance(queryEmb, videoEmb);

  std::vector<QueryResult> out(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    auto& r = out[q];
    r.ranking.resize(gallery.size());
    std::iota(r.ranking.begin(), r.ranking.end(), 0);
    const auto row = static_cast<Eigen::Index>(q);
    std::sort(r.ranking.begin(), r.ranking.end(), [&](std::size_t a, std::size_t b) {
      const double da = dist(row, static_cast<Eigen::Index>(a));
      const double db = dist(row, static_cast<Eigen::Index>(b));
      return da != db ? da < db : a < b;
    });
    r.relevance.resize(gallery.size());
    for (std::size_t i = 0; i < gallery.size(); ++i) r.relevance[i] = gradedRelevance(queries[q], galleryTruth[i]);
  }
  return out;
}

EvalReport evaluateModel(const MultiViewModel& model, const Gallery& gallery,
                         std::span<const CaptionRecord> galleryTruth) {
  return summarize(rankGallery(model, gallery, galleryTruth, galleryTruth));
}

}  // namespace cmda
