#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "cmda/corpus.hpp"
#include "cmda/error.hpp"
#include "oracles.hpp"

using namespace cmda;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("cmda_corpus_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path operator/(const std::string& f) const { return path / f; }
};

void writeText(const fs::path& p, const std::string& body) {
  std::ofstream out(p);
  out << body;
}

MetadataRecord sourceRecord(std::int64_t id, int verb, int noun, std::int64_t row) {
  MetadataRecord r;
  r.id = id;
  r.domain = Domain::kSource;
  r.verb = verb;
  r.noun = noun;
  r.textFeatureRow = row;
  return r;
}

MetadataRecord targetRecord(std::int64_t id) {
  MetadataRecord r;
  r.id = id;
  r.domain = Domain::kTarget;
  return r;
}

// Three captioned source items, two target items and their held-out truth.
struct SmallCorpus {
  TempDir dir{"small"};
  Matrix sourceVideo, text, targetVideo, targetText;

  SmallCorpus() {
    std::mt19937_64 rng(3);
    sourceVideo = oracle::randomMatrix(4, 3, rng);
    text = oracle::randomMatrix(2, 3, rng);
    targetVideo = oracle::randomMatrix(4, 2, rng);
    targetText = oracle::randomMatrix(2, 2, rng);
    writeFeatures(dir / "sv.xmfe", sourceVideo);
    writeFeatures(dir / "st.xmfe", text);
    writeFeatures(dir / "tv.xmfe", targetVideo);
    writeFeatures(dir / "tt.xmfe", targetText);
    const std::vector<MetadataRecord> src{sourceRecord(10, 0, 1, 2), sourceRecord(11, 1, 1, 0),
                                          sourceRecord(12, 0, 0, 1)};
    writeMetadata(dir / "sm.jsonl", src);
    const std::vector<MetadataRecord> tgt{targetRecord(20), targetRecord(21)};
    writeMetadata(dir / "tm.jsonl", tgt);
    auto t0 = sourceRecord(21, 1, 0, 0);
    auto t1 = sourceRecord(20, 0, 1, 1);
    t0.domain = t1.domain = Domain::kTarget;
    const std::vector<MetadataRecord> truth{t0, t1};
    writeMetadata(dir / "truth.jsonl", truth);
  }
};

}  // namespace

TEST_CASE("group keys per view") {
  CHECK(groupKeyFor(2, 5, View::kVerb) == GroupKey{2, -1});
  CHECK(groupKeyFor(2, 5, View::kNoun) == GroupKey{-1, 5});
  CHECK(groupKeyFor(2, 5, View::kAction) == GroupKey{2, 5});
  CHECK((parseView("noun") == View::kNoun));
  CHECK_THROWS_AS(parseView("adverb"), ConfigError);
}

TEST_CASE("relevance groups follow the view") {
  std::vector<CaptionRecord> caps(4);
  const int labels[4][2] = {{0, 0}, {0, 1}, {1, 0}, {0, 0}};
  for (int i = 0; i < 4; ++i) {
    caps[i].verbClass = labels[i][0];
    caps[i].nounClass = labels[i][1];
  }
  const auto verb = buildRelevance(caps, View::kVerb);
  const auto noun = buildRelevance(caps, View::kNoun);
  const auto action = buildRelevance(caps, View::kAction);
  CHECK(verb.groupCount() == 2);
  CHECK(noun.groupCount() == 2);
  CHECK(action.groupCount() == 3);
  // Same verb, different noun: relevant in the verb view only.
  CHECK(verb.relevant(0, 1));
  CHECK_FALSE(noun.relevant(0, 1));
  CHECK_FALSE(action.relevant(0, 1));
  CHECK(action.relevant(0, 3));
  CHECK(action.relevantTo(0) == std::vector<std::size_t>{3});
  CHECK(action.irrelevantTo(0) == std::vector<std::size_t>{1, 2});
  // Verb groups are unions of action groups.
  for (std::size_t a = 0; a < action.groupCount(); ++a) {
    const auto& m = action.members(a);
    for (std::size_t i : m) CHECK(verb.groupOf(i) == verb.groupOf(m.front()));
  }
  CHECK(action.findGroup(GroupKey{1, 0}).has_value());
  CHECK_FALSE(action.findGroup(GroupKey{1, 1}).has_value());
}

TEST_CASE("feature files round trip bit-exactly") {
  TempDir dir("roundtrip");
  std::mt19937_64 rng(1);
  const Matrix m = oracle::randomMatrix(7, 5, rng, 100.0);
  writeFeatures(dir / "a.xmfe", m);
  const Matrix back = readFeatures(dir / "a.xmfe");
  CHECK(back.rows() == 7);
  CHECK(back.cols() == 5);
  CHECK((back - m).norm() == 0.0);
  CHECK(fs::file_size(dir / "a.xmfe") == 16 + 7 * 5 * 8);
}

TEST_CASE("feature reader rejects malformed files") {
  TempDir dir("badfeatures");
  std::mt19937_64 rng(1);
  writeFeatures(dir / "ok.xmfe", oracle::randomMatrix(3, 2, rng));
  std::vector<char> bytes(fs::file_size(dir / "ok.xmfe"));
  {
    std::ifstream in(dir / "ok.xmfe", std::ios::binary);
    in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  auto dump = [&](const std::string& name, const std::vector<char>& b) {
    std::ofstream out(dir / name, std::ios::binary);
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
    return dir / name;
  };
  SUBCASE("magic") {
    auto b = bytes;
    b[1] = 'Q';
    CHECK_THROWS_AS(readFeatures(dump("m.xmfe", b)), FormatError);
  }
  SUBCASE("version") {
    auto b = bytes;
    b[4] = 9;
    CHECK_THROWS_AS(readFeatures(dump("v.xmfe", b)), FormatError);
  }
  SUBCASE("truncated payload") {
    auto b = bytes;
    b.resize(b.size() - 8);
    CHECK_THROWS_AS(readFeatures(dump("t.xmfe", b)), FormatError);
  }
  SUBCASE("trailing bytes") {
    auto b = bytes;
    b.push_back(0);
    CHECK_THROWS_AS(readFeatures(dump("x.xmfe", b)), FormatError);
  }
  SUBCASE("non-finite value") {
    auto b = bytes;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::memcpy(b.data() + 16, &nan, 8);
    CHECK_THROWS_AS(readFeatures(dump("n.xmfe", b)), FormatError);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(readFeatures(dir / "absent.xmfe"), IoError); }
}

TEST_CASE("metadata parsing errors carry the line") {
  TempDir dir("meta");
  writeText(dir / "bad.jsonl", "{\"id\": 1, \"domain\": \"source\"}\n{not json}\n");
  try {
    readMetadata(dir / "bad.jsonl");
    FAIL("accepted");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("bad.jsonl:2") != std::string::npos);
  }
  writeText(dir / "dom.jsonl", "{\"id\": 1, \"domain\": \"elsewhere\"}\n");
  CHECK_THROWS_AS(readMetadata(dir / "dom.jsonl"), FormatError);
  writeText(dir / "empty.jsonl", "\n\n");
  CHECK_THROWS_AS(readMetadata(dir / "empty.jsonl"), FormatError);
}

TEST_CASE("source and target galleries load with captions only on the source side") {
  SmallCorpus c;
  const Vocabulary vocab{2, 2};
  const auto src = loadSourceGallery(c.dir / "sv.xmfe", c.dir / "st.xmfe", c.dir / "sm.jsonl", vocab);
  REQUIRE(src.size() == 3);
  CHECK(src.videoDim == 4);
  CHECK(src.textDim == 2);
  CHECK(src.items[1].externalId == 11);
  CHECK(src.items[1].caption->verbClass == 1);
  CHECK((src.items[0].caption->textFeature - c.text.col(2)).norm() == 0.0);
  CHECK((src.videoMatrix() - c.sourceVideo).norm() == 0.0);

  const auto tgt = loadTargetGallery(c.dir / "tv.xmfe", c.dir / "tm.jsonl");
  REQUIRE(tgt.size() == 2);
  for (const auto& item : tgt.items) CHECK_FALSE(item.caption.has_value());
  CHECK_THROWS(tgt.textMatrix());

  // Truth is matched on id, not on line order.
  const auto truth = loadTargetTruth(c.dir / "truth.jsonl", c.dir / "tt.xmfe", tgt, vocab);
  REQUIRE(truth.size() == 2);
  CHECK(truth[0].verbClass == 0);
  CHECK(truth[0].nounClass == 1);
  CHECK(truth[1].verbClass == 1);
  CHECK((truth[1].textFeature - c.targetText.col(0)).norm() == 0.0);
}

TEST_CASE("loaders reject inconsistent inputs") {
  SmallCorpus c;
  SUBCASE("row count mismatch") {
    CHECK_THROWS_AS(loadSourceGallery(c.dir / "tv.xmfe", c.dir / "st.xmfe", c.dir / "sm.jsonl"), DimensionError);
  }
  SUBCASE("class outside the vocabulary") {
    CHECK_THROWS_AS(loadSourceGallery(c.dir / "sv.xmfe", c.dir / "st.xmfe", c.dir / "sm.jsonl", Vocabulary{1, 2}),
                    FormatError);
  }
  SUBCASE("text row out of range") {
    std::mt19937_64 rng(2);
    writeFeatures(c.dir / "short.xmfe", oracle::randomMatrix(2, 2, rng));
    CHECK_THROWS_AS(loadSourceGallery(c.dir / "sv.xmfe", c.dir / "short.xmfe", c.dir / "sm.jsonl"), FormatError);
  }
  SUBCASE("duplicate ids") {
    const std::vector<MetadataRecord> dup{sourceRecord(1, 0, 0, 0), sourceRecord(1, 0, 0, 1),
                                          sourceRecord(2, 0, 0, 2)};
    writeMetadata(c.dir / "dup.jsonl", dup);
    CHECK_THROWS_AS(loadSourceGallery(c.dir / "sv.xmfe", c.dir / "st.xmfe", c.dir / "dup.jsonl"), FormatError);
  }
  SUBCASE("target record in the source gallery") {
    CHECK_THROWS_AS(loadSourceGallery(c.dir / "tv.xmfe", c.dir / "tt.xmfe", c.dir / "tm.jsonl"), FormatError);
  }
  SUBCASE("truth with an unknown id") {
    const auto tgt = loadTargetGallery(c.dir / "tv.xmfe", c.dir / "tm.jsonl");
    auto r0 = sourceRecord(20, 0, 0, 0), r1 = sourceRecord(99, 0, 0, 1);
    r0.domain = r1.domain = Domain::kTarget;
    const std::vector<MetadataRecord> recs{r0, r1};
    writeMetadata(c.dir / "t2.jsonl", recs);
    CHECK_THROWS_AS(loadTargetTruth(c.dir / "t2.jsonl", c.dir / "tt.xmfe", tgt), FormatError);
  }
}

TEST_CASE("the target loader refuses captioned records") {
  SmallCorpus c;
  // The truth file is itself a valid target metadata file, except that it
  // carries captions.
  try {
    loadTargetGallery(c.dir / "tv.xmfe", c.dir / "truth.jsonl");
    FAIL("accepted");
  } catch (const ProtocolError& e) {
    CHECK((e.kind() == ErrorKind::kProtocol));
  }
  // A single caption field is enough.
  writeText(c.dir / "one.jsonl",
            "{\"id\": 20, \"domain\": \"target\"}\n{\"id\": 21, \"domain\": \"target\", \"noun\": 0}\n");
  CHECK_THROWS_AS(loadTargetGallery(c.dir / "tv.xmfe", c.dir / "one.jsonl"), ProtocolError);
}

TEST_CASE("vocabulary round trip and validation") {
  TempDir dir("vocab");
  writeVocabulary(dir / "v.json", Vocabulary{4, 7});
  const auto v = readVocabulary(dir / "v.json");
  CHECK(v.numVerbs == 4);
  CHECK(v.numNouns == 7);
  writeText(dir / "bad.json", "{\"verbs\": 0, \"nouns\": 3}");
  CHECK_THROWS_AS(readVocabulary(dir / "bad.json"), FormatError);
}
