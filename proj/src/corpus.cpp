#include "cmda/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "cmda/binary_io.hpp"
#include "cmda/error.hpp"

namespace cmda {

using nlohmann::json;

std::string_view toString(Domain d) { return d == Domain::kSource ? "source" : "target"; }

std::string_view toString(View v) {
  switch (v) {
    case View::kVerb: return "verb";
    case View::kNoun: return "noun";
    case View::kAction: return "action";
  }
  return "unknown";
}

View parseView(std::string_view name) {
  if (name == "verb") return View::kVerb;
  if (name == "noun") return View::kNoun;
  if (name == "action") return View::kAction;
  throw ConfigError("unknown view: " + std::string(name));
}

GroupKey groupKeyFor(int verbClass, int nounClass, View view) {
  switch (view) {
    case View::kVerb: return {verbClass, -1};
    case View::kNoun: return {-1, nounClass};
    case View::kAction: return {verbClass, nounClass};
  }
  return {};
}

Matrix Gallery::videoMatrix() const {
  Matrix m(static_cast<Eigen::Index>(videoDim), static_cast<Eigen::Index>(items.size()));
  for (std::size_t i = 0; i < items.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = items[i].videoFeature;
  return m;
}

Matrix Gallery::textMatrix() const {
  Matrix m(static_cast<Eigen::Index>(textDim), static_cast<Eigen::Index>(items.size()));
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!items[i].caption) throw Error(ErrorKind::kInvalidArgument, "textMatrix: item without caption");
    m.col(static_cast<Eigen::Index>(i)) = items[i].caption->textFeature;
  }
  return m;
}

RelevanceView::RelevanceView(View view, std::span<const GroupKey> itemKeys) : view_(view) {
  std::map<GroupKey, std::vector<std::size_t>> grouped;
  for (std::size_t i = 0; i < itemKeys.size(); ++i) grouped[itemKeys[i]].push_back(i);
  groupOf_.resize(itemKeys.size());
  for (auto& [key, members] : grouped) {
    const std::size_t g = keys_.size();
    for (std::size_t i : members) groupOf_[i] = g;
    keys_.push_back(key);
    members_.push_back(std::move(members));
  }
}

std::optional<std::size_t> RelevanceView::findGroup(const GroupKey& key) const {
  const auto it = std::lower_bound(keys_.begin(), keys_.end(), key);
  if (it == keys_.end() || *it != key) return std::nullopt;
  return static_cast<std::size_t>(it - keys_.begin());
}

std::vector<std::size_t> RelevanceView::relevantTo(std::size_t anchor) const {
  std::vector<std::size_t> out;
  for (std::size_t i : members_[groupOf_[anchor]]) {
    if (i != anchor) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> RelevanceView::irrelevantTo(std::size_t anchor) const {
  std::vector<std::size_t> out;
  const std::size_t g = groupOf_[anchor];
  for (std::size_t i = 0; i < groupOf_.size(); ++i) {
    if (groupOf_[i] != g) out.push_back(i);
  }
  return out;
}

RelevanceView buildRelevance(std::span<const CaptionRecord> captions, View view) {
  std::vector<GroupKey> keys;
  keys.reserve(captions.size());
  for (const auto& c : captions) keys.push_back(groupKeyFor(c, view));
  return RelevanceView(view, keys);
}

RelevanceView buildRelevance(const Gallery& gallery, View view) {
  std::vector<GroupKey> keys;
  keys.reserve(gallery.size());
  for (const auto& item : gallery.items) {
    if (!item.caption) {
      throw Error(ErrorKind::kInvalidArgument,
                  "buildRelevance: item " + std::to_string(item.id.index) + " has no caption");
    }
    keys.push_back(groupKeyFor(*item.caption, view));
  }
  return RelevanceView(view, keys);
}

RelevanceSets buildRelevanceSets(const Gallery& gallery) {
  RelevanceSets sets;
  for (View v : kAllViews) sets.views[static_cast<std::size_t>(v)] = buildRelevance(gallery, v);
  return sets;
}

// ---------------------------------------------------------------------------

Matrix readFeatures(const std::filesystem::path& path) {
  auto r = BinaryReader::open(path);
  r.expectMagic("XMFE");
  const std::uint32_t version = r.u32();
  if (version != kFeatureFormatVersion) {
    throw FormatError(path.string() + ": unsupported feature format version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  const std::uint32_t dim = r.u32();
  if (count == 0) throw FormatError(path.string() + ": empty feature file");
  if (dim == 0) throw FormatError(path.string() + ": zero feature dimension");
  const std::size_t expectedBytes = static_cast<std::size_t>(count) * dim * 8;
  if (r.remaining() != expectedBytes) {
    throw FormatError(path.string() + ": header declares " + std::to_string(count) + "x" +
                      std::to_string(dim) + " values but payload holds " +
                      std::to_string(r.remaining()) + " bytes");
  }
  Matrix m(dim, count);
  for (std::uint32_t i = 0; i < count; ++i) {
    for (std::uint32_t j = 0; j < dim; ++j) m(j, i) = r.f64();
  }
  if (!m.allFinite()) throw FormatError(path.string() + ": non-finite feature value");
  return m;
}

void writeFeatures(const std::filesystem::path& path, const Matrix& columns) {
  BinaryWriter w;
  w.magic("XMFE");
  w.u32(kFeatureFormatVersion);
  w.u32(static_cast<std::uint32_t>(columns.cols()));
  w.u32(static_cast<std::uint32_t>(columns.rows()));
  for (Eigen::Index i = 0; i < columns.cols(); ++i) {
    for (Eigen::Index j = 0; j < columns.rows(); ++j) w.f64(columns(j, i));
  }
  w.save(path);
}

namespace {

template <typename T>
std::optional<T> optionalField(const json& j, const char* name) {
  const auto it = j.find(name);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

MetadataRecord parseRecord(const std::string& line, const std::string& where) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw FormatError(where + ": invalid JSON (" + e.what() + ")");
  }
  if (!j.is_object()) throw FormatError(where + ": record is not a JSON object");
  MetadataRecord rec;
  try {
    rec.id = j.at("id").get<std::int64_t>();
    const auto domain = j.at("domain").get<std::string>();
    if (domain == "source") {
      rec.domain = Domain::kSource;
    } else if (domain == "target") {
      rec.domain = Domain::kTarget;
    } else {
      throw FormatError(where + ": unknown domain \"" + domain + "\"");
    }
    rec.verb = optionalField<int>(j, "verb");
    rec.noun = optionalField<int>(j, "noun");
    rec.textFeatureRow = optionalField<std::int64_t>(j, "text_feature_row");
    rec.raw = optionalField<std::string>(j, "raw");
  } catch (const json::exception& e) {
    throw FormatError(where + ": " + e.what());
  }
  return rec;
}

void checkClass(std::optional<int> cls, int limit, const char* what, const std::string& where) {
  if (!cls) throw FormatError(where + ": missing " + what + " class");
  if (*cls < 0 || (limit > 0 && *cls >= limit)) {
    throw FormatError(where + ": unknown " + what + " class id " + std::to_string(*cls));
  }
}

CaptionRecord captionFrom(const MetadataRecord& rec, const Matrix& text,
                          const std::optional<Vocabulary>& vocab, const std::string& where) {
  checkClass(rec.verb, vocab ? vocab->numVerbs : 0, "verb", where);
  checkClass(rec.noun, vocab ? vocab->numNouns : 0, "noun", where);
  if (!rec.textFeatureRow) throw FormatError(where + ": missing text_feature_row");
  const auto row = *rec.textFeatureRow;
  if (row < 0 || row >= text.cols()) {
    throw FormatError(where + ": text_feature_row " + std::to_string(row) + " out of range (" +
                      std::to_string(text.cols()) + " rows)");
  }
  return CaptionRecord{*rec.verb, *rec.noun, text.col(static_cast<Eigen::Index>(row)), rec.raw};
}

void checkUniqueIds(std::span<const MetadataRecord> records, const std::filesystem::path& path) {
  std::set<std::int64_t> seen;
  for (const auto& r : records) {
    if (!seen.insert(r.id).second) {
      throw FormatError(path.string() + ": duplicate id " + std::to_string(r.id));
    }
  }
}

}  // namespace

std::vector<MetadataRecord> readMetadata(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::vector<MetadataRecord> out;
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parseRecord(line, path.string() + ":" + std::to_string(lineNo)));
  }
  if (out.empty()) throw FormatError(path.string() + ": empty metadata file");
  return out;
}

void writeMetadata(const std::filesystem::path& path, std::span<const MetadataRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  for (const auto& r : records) {
    json j;
    j["id"] = r.id;
    j["domain"] = std::string(toString(r.domain));
    j["verb"] = r.verb ? json(*r.verb) : json(nullptr);
    j["noun"] = r.noun ? json(*r.noun) : json(nullptr);
    j["text_feature_row"] = r.textFeatureRow ? json(*r.textFeatureRow) : json(nullptr);
    j["raw"] = r.raw ? json(*r.raw) : json(nullptr);
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Gallery loadSourceGallery(const std::filesystem::path& videoFeatures,
                          const std::filesystem::path& textFeatures,
                          const std::filesystem::path& metadata,
                          const std::optional<Vocabulary>& vocab) {
  const Matrix video = readFeatures(videoFeatures);
  const Matrix text = readFeatures(textFeatures);
  const auto records = readMetadata(metadata);
  if (static_cast<std::size_t>(video.cols()) != records.size()) {
    throw DimensionError("source gallery: metadata rows vs video feature rows", records.size(),
                         static_cast<std::size_t>(video.cols()));
  }
  checkUniqueIds(records, metadata);

  Gallery g;
  g.domain = Domain::kSource;
  g.videoDim = static_cast<std::size_t>(video.rows());
  g.textDim = static_cast<std::size_t>(text.rows());
  g.items.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    const std::string where = metadata.string() + ":" + std::to_string(i + 1);
    if (rec.domain != Domain::kSource) throw FormatError(where + ": non-source record in source gallery");
    g.items.push_back(GalleryItem{ItemId{Domain::kSource, i}, video.col(static_cast<Eigen::Index>(i)),
                                  captionFrom(rec, text, vocab, where), rec.id});
  }
  return g;
}

Gallery loadTargetGallery(const std::filesystem::path& videoFeatures,
                          const std::filesystem::path& metadata) {
  const Matrix video = readFeatures(videoFeatures);
  const auto records = readMetadata(metadata);
  if (static_cast<std::size_t>(video.cols()) != records.size()) {
    throw DimensionError("target gallery: metadata rows vs video feature rows", records.size(),
                         static_cast<std::size_t>(video.cols()));
  }
  checkUniqueIds(records, metadata);

  Gallery g;
  g.domain = Domain::kTarget;
  g.videoDim = static_cast<std::size_t>(video.rows());
  g.items.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    const std::string where = metadata.string() + ":" + std::to_string(i + 1);
    if (rec.domain != Domain::kTarget) throw FormatError(where + ": non-target record in target gallery");
    if (rec.verb || rec.noun || rec.textFeatureRow || rec.raw) {
      throw ProtocolError(where + ": target item carries a caption; held-out target captions are "
                                  "evaluation-only and cannot be used for training");
    }
    g.items.push_back(GalleryItem{ItemId{Domain::kTarget, i}, video.col(static_cast<Eigen::Index>(i)),
                                  std::nullopt, rec.id});
  }
  return g;
}

std::vector<CaptionRecord> loadTargetTruth(const std::filesystem::path& truthMetadata,
                                           const std::filesystem::path& textFeatures,
                                           const Gallery& target,
                                           const std::optional<Vocabulary>& vocab) {
  const Matrix text = readFeatures(textFeatures);
  const auto records = readMetadata(truthMetadata);
  const std::size_t targetCount = target.size();
  std::map<std::int64_t, std::size_t> indexOf;
  for (std::size_t i = 0; i < targetCount; ++i) indexOf[target.items[i].externalId] = i;
  if (records.size() != targetCount) {
    throw DimensionError("target truth: caption rows vs target items", targetCount, records.size());
  }
  std::vector<std::optional<CaptionRecord>> byItem(targetCount);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    const std::string where = truthMetadata.string() + ":" + std::to_string(i + 1);
    if (rec.domain != Domain::kTarget) throw FormatError(where + ": truth record is not a target item");
    const auto found = indexOf.find(rec.id);
    if (found == indexOf.end()) {
      throw FormatError(where + ": id " + std::to_string(rec.id) + " is not in the target gallery");
    }
    auto& slot = byItem[found->second];
    if (slot) throw FormatError(where + ": duplicate id " + std::to_string(rec.id));
    slot = captionFrom(rec, text, vocab, where);
  }
  std::vector<CaptionRecord> out;
  out.reserve(targetCount);
  for (auto& c : byItem) out.push_back(std::move(*c));
  return out;
}

Vocabulary readVocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  try {
    const json j = json::parse(in);
    Vocabulary v{j.at("verbs").get<int>(), j.at("nouns").get<int>()};
    if (v.numVerbs <= 0 || v.numNouns <= 0) throw FormatError(path.string() + ": vocabulary sizes must be positive");
    return v;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void writeVocabulary(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << json{{"verbs", vocab.numVerbs}, {"nouns", vocab.numNouns}}.dump(2) << '\n';
}

}  // namespace cmda
