#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "cmda/corpus.hpp"
#include "cmda/multiview.hpp"

namespace cmda {

// (1[same verb] + 1[same noun]) / 2, so 0, 0.5 or 1.
double gradedRelevance(const CaptionRecord& query, const CaptionRecord& item);

// Relevance above this counts as relevant for average precision.
inline constexpr double kBinaryRelevanceThreshold = 0.5;

struct QueryResult {
  // Gallery item indices by ascending distance, ties to the lower index.
  std::vector<std::size_t> ranking;
  // Graded relevance of every gallery item to the query, indexed by item.
  std::vector<double> relevance;
};

std::vector<double> relevanceInRankOrder(const QueryResult& result);

// DCG = sum_i rel_i / log2(i + 1) over the full ranking (i from 1), divided
// by the DCG of the ideal ordering. nullopt when every relevance is zero.
std::optional<double> queryNdcg(std::span<const double> rankedRelevance);

// Relevance is binarized with rel > 0.5. nullopt when nothing is relevant.
std::optional<double> averagePrecision(std::span<const double> rankedRelevance);

// Means over the queries that define a value. 0 when none does.
double ndcg(std::span<const QueryResult> results);
double meanAP(std::span<const QueryResult> results);

struct EvalReport {
  double ndcg = 0.0;
  double map = 0.0;
  std::size_t queries = 0;
  std::size_t ndcgQueries = 0;
  std::size_t mapQueries = 0;
};

// Ranks the gallery videos for every query text in the action space.
std::vector<QueryResult> rankGallery(const MultiViewModel& model, const Gallery& gallery,
                                     std::span<const CaptionRecord> galleryTruth,
                                     std::span<const CaptionRecord> queries);

EvalReport summarize(std::span<const QueryResult> results);

// Every held-out caption is used as a query against the whole gallery.
EvalReport evaluateModel(const MultiViewModel& model, const Gallery& gallery,
                         std::span<const CaptionRecord> galleryTruth);

}  // namespace cmda
