#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <numeric>
#include <random>
#include <set>

#include "cmda/adapt.hpp"
#include "cmda/checkpoint.hpp"
#include "cmda/error.hpp"
#include "cmda/multiview.hpp"
#include "cmda/ranking.hpp"
#include "oracles.hpp"

using namespace cmda;

namespace {

ModelDims smallDims(bool head = false) {
  ModelDims d;
  d.videoInput = 6;
  d.textInput = 5;
  d.videoHidden = 7;
  d.textHidden = 8;
  d.embedDim = 4;
  d.actionHead = head;
  return d;
}

// Source gallery with explicit (verb, noun) captions and random features.
Gallery captioned(const std::vector<std::pair<int, int>>& labels, std::uint64_t seed, std::size_t vdim = 6,
                  std::size_t tdim = 5) {
  std::mt19937_64 rng(seed);
  Gallery g;
  g.domain = Domain::kSource;
  g.videoDim = vdim;
  g.textDim = tdim;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    GalleryItem item;
    item.id = {Domain::kSource, i};
    item.videoFeature = oracle::randomVector(vdim, rng);
    CaptionRecord c;
    c.verbClass = labels[i].first;
    c.nounClass = labels[i].second;
    c.textFeature = oracle::randomVector(tdim, rng);
    item.caption = c;
    g.items.push_back(item);
  }
  return g;
}

std::vector<std::pair<int, int>> grid(int verbs, int nouns, int per) {
  std::vector<std::pair<int, int>> out;
  for (int k = 0; k < per; ++k)
    for (int v = 0; v < verbs; ++v)
      for (int n = 0; n < nouns; ++n) out.emplace_back(v, n);
  return out;
}

}  // namespace

TEST_CASE("action space concatenates 256-wide views into 512") {
  const auto model = MultiViewModel::create(ModelDims{}, 1);
  CHECK(model.embedDim(View::kVerb) == 256);
  CHECK(model.embedDim(View::kNoun) == 256);
  CHECK(model.embedDim(View::kAction) == 512);
}

TEST_CASE("verb and noun views have independent parameters") {
  auto model = MultiViewModel::create(smallDims(), 2);
  std::mt19937_64 rng(5);
  const Vector x = oracle::randomVector(6, rng);
  const Vector verb = model.embedVideo(x, View::kVerb);
  const Vector action = model.embedVideo(x, View::kAction);
  for (auto& layer : model.net(View::kNoun, Modality::kVideo).layers()) layer.bias.array() += 0.5;
  CHECK((model.embedVideo(x, View::kVerb) - verb).norm() == 0.0);
  CHECK((model.embedVideo(x, View::kAction) - action).norm() > 1e-6);
}

TEST_CASE("text embeddings are unit vectors and depend only on the feature") {
  const auto model = MultiViewModel::create(smallDims(true), 3);
  std::mt19937_64 rng(8);
  CaptionRecord a, b;
  a.verbClass = 0;
  a.nounClass = 1;
  a.textFeature = oracle::randomVector(5, rng);
  b = a;
  b.verbClass = 3;
  for (View v : kAllViews) {
    const Vector ea = model.embedText(a, v);
    CHECK(std::abs(ea.norm() - 1.0) < 1e-9);
    CHECK((ea - model.embedText(b, v)).norm() == 0.0);
  }
}

TEST_CASE("action embedding is the normalized concatenation") {
  const auto model = MultiViewModel::create(smallDims(), 4);
  std::mt19937_64 rng(1);
  const Vector x = oracle::randomVector(6, rng);
  Vector cat(8);
  cat << model.embedVideo(x, View::kVerb), model.embedVideo(x, View::kNoun);
  CHECK((model.embedVideo(x, View::kAction) - cat.normalized()).norm() < 1e-14);
}

TEST_CASE("hinge reference values") {
  CHECK(tripletHinge(0.3, 0.5, 0.1) == 0.0);
  CHECK(tripletHinge(0.5, 0.3, 0.1) == doctest::Approx(0.3));
  CHECK(tripletHinge(0.42, 0.42, 0.1) == doctest::Approx(0.1));
}

TEST_CASE("objective gradients pass central differences through the whole model") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CAPTURE(seed);
    const auto plain = oracle::checkModelLoss(seed, false);
    const auto head = oracle::checkModelLoss(seed, true);
    CHECK(plain.checked > 0);
    CHECK(head.checked > plain.checked);
    CHECK(plain.maxRelError < oracle::kFdTolerance);
    CHECK(head.maxRelError < oracle::kFdTolerance);
  }
}

TEST_CASE("objective matches the brute-force triplet oracle") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto p = oracle::makeToyProblem(seed, seed % 2 == 1);
    p.weights.margin = 0.1;
    const auto r = computeLoss(p.model, p.source, &p.target, p.batches, p.weights);
    CHECK(r.total == doctest::Approx(oracle::bruteForceLoss(p.model, p.source, &p.target, p.batches, p.weights))
                         .epsilon(1e-12));
  }
}

TEST_CASE("four-item case equals the hand sum over every valid triplet") {
  // Two actions with two videos each; all within-modal video triplets.
  const auto g = captioned({{0, 0}, {0, 0}, {1, 1}, {1, 1}}, 17);
  const auto model = MultiViewModel::create(smallDims(), 9);
  const auto rel = buildRelevance(g, View::kAction);
  TermBatch b;
  b.view = View::kAction;
  b.term = LossTerm::kVideoToVideo;
  double hand = 0.0;
  for (std::size_t a = 0; a < 4; ++a) {
    for (std::size_t p : rel.relevantTo(a)) {
      for (std::size_t n : rel.irrelevantTo(a)) {
        b.triplets.push_back({{{Domain::kSource, a}, Modality::kVideo},
                              {{Domain::kSource, p}, Modality::kVideo},
                              {{Domain::kSource, n}, Modality::kVideo},
                              View::kAction});
        const Vector ea = model.embedVideo(g.items[a].videoFeature, View::kAction);
        const double dp = cosineDistance(ea, model.embedVideo(g.items[p].videoFeature, View::kAction));
        const double dn = cosineDistance(ea, model.embedVideo(g.items[n].videoFeature, View::kAction));
        hand += std::max(0.0, 0.1 + dp - dn);
      }
    }
  }
  REQUIRE(b.triplets.size() == 8);
  LossWeights w;
  const std::vector<TermBatch> batches{b};
  CHECK(computeLoss(model, g, nullptr, batches, w).total == doctest::Approx(hand).epsilon(1e-12));
}

TEST_CASE("well separated embeddings give zero loss") {
  // Identity-like nets on one-hot inputs: distinct actions are orthogonal.
  auto g = captioned({{0, 0}, {0, 0}, {1, 1}, {1, 1}}, 3, 4, 4);
  for (std::size_t i = 0; i < 4; ++i) {
    g.items[i].videoFeature = Vector::Zero(4);
    g.items[i].videoFeature(static_cast<Eigen::Index>(i / 2)) = 1.0;
  }
  ModelDims d;
  d.videoInput = 4;
  d.textInput = 4;
  d.videoHidden = 4;
  d.textHidden = 4;
  d.embedDim = 4;
  auto model = MultiViewModel::create(d, 1);
  for (View v : {View::kVerb, View::kNoun}) {
    for (auto& layer : model.net(v, Modality::kVideo).layers()) {
      layer.weight = Matrix::Identity(4, 4);
      layer.bias.setZero();
    }
  }
  const auto sets = buildRelevanceSets(g);
  const TripletSampler sampler(sets, nullptr);
  std::vector<std::size_t> anchors{0, 1, 2, 3};
  std::mt19937_64 rng(1);
  std::vector<TermBatch> batches;
  for (View v : kAllViews) batches.push_back(sampler.sampleSource(v, LossTerm::kVideoToVideo, anchors, rng));
  const auto r = computeLoss(model, g, nullptr, batches, LossWeights{});
  CHECK(r.total == 0.0);
  for (const auto& t : r.terms) CHECK(t.violated == 0);
}

TEST_CASE("zero lambdas reduce the objective to the source terms") {
  auto p = oracle::makeToyProblem(4, false);
  p.weights.margin = 0.1;
  p.weights.lambdaSrcToTgt = 0.0;
  p.weights.lambdaTgtToSrc = 0.0;
  std::vector<TermBatch> sourceOnly;
  for (const auto& b : p.batches)
    if (!isCrossDomain(b.term)) sourceOnly.push_back(b);
  const auto all = computeLoss(p.model, p.source, &p.target, p.batches, p.weights);
  const auto src = computeLoss(p.model, p.source, nullptr, sourceOnly, p.weights);
  CHECK(all.total == doctest::Approx(src.total).epsilon(1e-14));
}

TEST_CASE("doubling a cross-domain weight doubles its contribution") {
  auto p = oracle::makeToyProblem(6, false);
  const auto once = crossDomainLoss(p.model, p.source, p.target, p.batches, View::kVerb, LossTerm::kSourceToTarget,
                                    p.weights);
  p.weights.lambdaSrcToTgt *= 2.0;
  const auto twice = crossDomainLoss(p.model, p.source, p.target, p.batches, View::kVerb,
                                     LossTerm::kSourceToTarget, p.weights);
  CHECK(twice.total == doctest::Approx(2.0 * once.total).epsilon(1e-14));
}

TEST_CASE("cross-domain terms leave the text networks untouched") {
  auto p = oracle::makeToyProblem(2, true);
  std::vector<TermBatch> cross;
  for (const auto& b : p.batches)
    if (isCrossDomain(b.term)) cross.push_back(b);
  const auto r = computeLoss(p.model, p.source, &p.target, cross, p.weights);
  CHECK(r.gradients.net(View::kVerb, Modality::kText).squaredNorm() == 0.0);
  CHECK(r.gradients.net(View::kNoun, Modality::kText).squaredNorm() == 0.0);
  CHECK(r.gradients.net(View::kVerb, Modality::kVideo).squaredNorm() > 0.0);
}

TEST_CASE("verb-view losses do not touch noun parameters") {
  auto p = oracle::makeToyProblem(3, false);
  std::vector<TermBatch> verbOnly;
  for (const auto& b : p.batches)
    if (b.view == View::kVerb) verbOnly.push_back(b);
  const auto r = computeLoss(p.model, p.source, &p.target, verbOnly, p.weights);
  CHECK(r.gradients.net(View::kNoun, Modality::kVideo).squaredNorm() == 0.0);
  CHECK(r.gradients.net(View::kNoun, Modality::kText).squaredNorm() == 0.0);
  CHECK(r.gradients.net(View::kVerb, Modality::kText).squaredNorm() > 0.0);
}

TEST_CASE("single group: every anchor is skipped and the loss is zero") {
  const auto g = captioned({{0, 0}, {0, 0}, {0, 0}}, 2);
  const auto sets = buildRelevanceSets(g);
  const TripletSampler sampler(sets, nullptr);
  std::vector<std::size_t> anchors{0, 1, 2};
  std::mt19937_64 rng(1);
  for (LossTerm t : kSourceTerms) {
    const auto b = sampler.sampleSource(View::kAction, t, anchors, rng);
    CHECK(b.triplets.empty());
    CHECK(b.skipped == 3);
    const std::vector<TermBatch> batches{b};
    const auto model = MultiViewModel::create(smallDims(), 1);
    CHECK(computeLoss(model, g, nullptr, batches, LossWeights{}).total == 0.0);
  }
}

TEST_CASE("neighbour count rule") {
  CHECK(HardNegativeIndex::neighbourCount(10, 0.3) == 3);
  CHECK(HardNegativeIndex::neighbourCount(3, 0.3) == 1);
  CHECK(HardNegativeIndex::neighbourCount(10, 1.0) == 9);
  CHECK(HardNegativeIndex::neighbourCount(1, 0.3) == 0);
}

TEST_CASE("hard negatives come from the three nearest of ten prototypes") {
  // Ten actions on a line: prototype k sits at angle k * 0.1 rad.
  std::vector<std::pair<int, int>> labels;
  for (int a = 0; a < 10; ++a) labels.emplace_back(a, 0);
  Matrix emb(2, 10);
  for (int a = 0; a < 10; ++a) emb.col(a) << std::cos(0.1 * a), std::sin(0.1 * a);
  const auto g = captioned(labels, 1);
  const auto rel = buildRelevance(g, View::kAction);
  const auto protos = computePrototypes(emb, rel);
  const HardNegativeIndex index(protos, rel.groupCount(), 0.3);
  const auto& near0 = index.nearestGroups(rel.groupOf(0));
  REQUIRE(near0.size() == 3);
  CHECK(std::set<std::size_t>(near0.begin(), near0.end()) ==
        std::set<std::size_t>{rel.groupOf(1), rel.groupOf(2), rel.groupOf(3)});
  const auto& near9 = index.nearestGroups(rel.groupOf(9));
  CHECK(std::vector<std::size_t>(near9.begin(), near9.end()) ==
        std::vector<std::size_t>{rel.groupOf(8), rel.groupOf(7), rel.groupOf(6)});
}

TEST_CASE("sampler respects relevance, mining pools and seeds") {
  const auto g = captioned(grid(3, 4, 3), 21);
  const auto sets = buildRelevanceSets(g);
  const auto model = MultiViewModel::create(smallDims(), 5);
  const auto protos = computePrototypes(model, g, sets[View::kAction]);
  const HardNegativeIndex index(protos, sets[View::kAction].groupCount(), 0.3);
  const TripletSampler mined(sets, &index);
  std::vector<std::size_t> anchors(g.size());
  std::iota(anchors.begin(), anchors.end(), std::size_t{0});
  for (View v : kAllViews) {
    const auto& rel = sets[v];
    for (LossTerm t : kSourceTerms) {
      std::mt19937_64 r1(7), r2(7);
      const auto b1 = mined.sampleSource(v, t, anchors, r1);
      const auto b2 = mined.sampleSource(v, t, anchors, r2);
      REQUIRE(b1.triplets.size() == b2.triplets.size());
      for (std::size_t k = 0; k < b1.triplets.size(); ++k) {
        const auto& a = b1.triplets[k];
        CHECK(a.positive == b2.triplets[k].positive);
        CHECK(a.negative == b2.triplets[k].negative);
        CHECK(rel.relevant(a.anchor.item.index, a.positive.item.index));
        CHECK_FALSE(rel.relevant(a.positive.item.index, a.negative.item.index));
        // Negative's action group is among the anchor's nearest action prototypes.
        const auto& near = index.nearestGroups(sets[View::kAction].groupOf(a.anchor.item.index));
        CHECK(std::find(near.begin(), near.end(), sets[View::kAction].groupOf(a.negative.item.index)) != near.end());
        if (t == LossTerm::kVideoToVideo || t == LossTerm::kTextToText) {
          CHECK(a.anchor.item.index != a.positive.item.index);
        }
      }
    }
  }
}

TEST_CASE("full fraction mining matches plain sampling pools in the action view") {
  const auto g = captioned(grid(2, 3, 2), 4);
  const auto sets = buildRelevanceSets(g);
  const auto model = MultiViewModel::create(smallDims(), 5);
  const auto protos = computePrototypes(model, g, sets[View::kAction]);
  const HardNegativeIndex all(protos, sets[View::kAction].groupCount(), 1.0);
  const TripletSampler mined(sets, &all), plain(sets, nullptr);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(mined.negativePool(View::kAction, i) == plain.negativePool(View::kAction, i));
}

TEST_CASE("cross-domain sampling uses only selected targets") {
  const auto g = captioned(grid(2, 2, 3), 6);
  const auto sets = buildRelevanceSets(g);
  const TripletSampler sampler(sets, nullptr);
  PseudoLabelTable table;
  table.view = View::kAction;
  table.prototypeCount = sets[View::kAction].groupCount();
  for (std::size_t t = 0; t < 6; ++t) {
    PseudoLabelEntry e;
    e.target = t;
    e.view = View::kAction;
    e.inheritedGroup = t % 4;
    e.selected = false;
    table.entries.push_back(e);
  }
  std::mt19937_64 rng(3);
  SUBCASE("nothing selected") {
    for (LossTerm d : {LossTerm::kSourceToTarget, LossTerm::kTargetToSource}) {
      const auto b = sampler.sampleCrossDomain(table, d, 10, rng);
      CHECK(b.triplets.empty());
      CHECK(b.skipped == 10);
    }
  }
  SUBCASE("some selected") {
    for (std::size_t t : {0u, 1u, 5u}) table.entries[t].selected = true;
    const auto st = sampler.sampleCrossDomain(table, LossTerm::kSourceToTarget, 50, rng);
    for (const auto& tr : st.triplets) {
      CHECK(table.entries[tr.positive.item.index].selected);
      CHECK(table.entries[tr.negative.item.index].selected);
      CHECK(table.entries[tr.positive.item.index].inheritedGroup == sets[View::kAction].groupOf(tr.anchor.item.index));
      CHECK(table.entries[tr.negative.item.index].inheritedGroup != sets[View::kAction].groupOf(tr.anchor.item.index));
    }
    const auto ts = sampler.sampleCrossDomain(table, LossTerm::kTargetToSource, 50, rng);
    CHECK(ts.triplets.size() == 50);
    for (const auto& tr : ts.triplets) {
      CHECK(table.entries[tr.anchor.item.index].selected);
      const auto g0 = table.entries[tr.anchor.item.index].inheritedGroup;
      CHECK(sets[View::kAction].groupOf(tr.positive.item.index) == g0);
      CHECK(sets[View::kAction].groupOf(tr.negative.item.index) != g0);
    }
  }
}

TEST_CASE("one group with one confident target has no source-to-target negatives") {
  const auto g = captioned({{0, 0}, {0, 0}}, 6);
  const auto sets = buildRelevanceSets(g);
  const TripletSampler sampler(sets, nullptr);
  PseudoLabelTable table;
  table.view = View::kAction;
  table.prototypeCount = 1;
  PseudoLabelEntry e;
  e.selected = true;
  table.entries.push_back(e);
  std::mt19937_64 rng(1);
  const auto b = sampler.sampleCrossDomain(table, LossTerm::kSourceToTarget, 4, rng);
  CHECK(b.triplets.empty());
  CHECK(b.skipped == 4);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  Checkpoint c;
  c.model = MultiViewModel::create(smallDims(true), 12);
  std::mt19937_64 rng(2);
  const Matrix s = oracle::randomMatrix(6, 20, rng), t = oracle::randomMatrix(6, 25, rng, 2.0);
  c.preprocessing = Preprocessing::fit(BaselineKind::kCoral, s, t);
  c.state.epochsDone = 7;
  for (const auto& span : c.model.parameterSpans()) {
    const Vector v = oracle::randomVector(span.size(), rng);
    c.state.velocities.emplace_back(v.data(), v.data() + v.size());
  }
  const auto path = std::filesystem::temp_directory_path() / "cmda_roundtrip.xmck";
  saveCheckpoint(path, c);
  const auto back = loadCheckpoint(path);
  std::filesystem::remove(path);
  const Vector x = oracle::randomVector(6, rng);
  for (View v : kAllViews) CHECK((back.model.embedVideo(x, v) - c.model.embedVideo(x, v)).norm() == 0.0);
  CHECK((back.preprocessing.kind == BaselineKind::kCoral));
  CHECK((back.preprocessing.apply(s, Domain::kSource) - c.preprocessing.apply(s, Domain::kSource)).norm() == 0.0);
  CHECK(back.state.epochsDone == 7);
  CHECK(back.state.velocities == c.state.velocities);
  CHECK(serializeCheckpoint(back) == serializeCheckpoint(c));
}

TEST_CASE("checkpoint rejects optimizer state that does not fit the model") {
  Checkpoint c;
  c.model = MultiViewModel::create(smallDims(), 1);
  c.state.velocities = {{0.5, -1.25}, {3.0}};
  CHECK_THROWS_AS(deserializeCheckpoint(serializeCheckpoint(c), "mem"), FormatError);
}

TEST_CASE("checkpoint rejects other versions and truncation") {
  Checkpoint c;
  c.model = MultiViewModel::create(smallDims(), 1);
  auto bytes = serializeCheckpoint(c);
  SUBCASE("version") {
    const std::uint32_t v = kCheckpointVersion + 1;
    std::memcpy(bytes.data() + 4, &v, sizeof v);
    try {
      deserializeCheckpoint(bytes, "mem");
      FAIL("accepted");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("version") != std::string::npos);
    }
  }
  SUBCASE("truncated") {
    bytes.resize(bytes.size() - 3);
    CHECK_THROWS_AS(deserializeCheckpoint(bytes, "mem"), FormatError);
  }
  SUBCASE("bad magic") {
    bytes[0] = 'Z';
    CHECK_THROWS_AS(deserializeCheckpoint(bytes, "mem"), FormatError);
  }
}
