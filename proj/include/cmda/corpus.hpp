#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cmda/linalg.hpp"

namespace cmda {

enum class Domain : std::uint8_t { kSource, kTarget };

std::string_view toString(Domain d);

struct ItemId {
  Domain domain = Domain::kSource;
  std::size_t index = 0;

  auto operator<=>(const ItemId&) const = default;
};

struct CaptionRecord {
  int verbClass = -1;
  int nounClass = -1;
  Vector textFeature;
  std::optional<std::string> rawText;
};

struct GalleryItem {
  ItemId id;
  Vector videoFeature;
  std::optional<CaptionRecord> caption;
  std::int64_t externalId = 0;  // "id" field of the metadata record
};

enum class View : std::uint8_t { kVerb = 0, kNoun = 1, kAction = 2 };

inline constexpr std::array<View, 3> kAllViews{View::kVerb, View::kNoun, View::kAction};

std::string_view toString(View v);
View parseView(std::string_view name);

// Label of a relevance group. Unused components are -1 (the noun in the verb
// view, the verb in the noun view).
struct GroupKey {
  int verb = -1;
  int noun = -1;

  auto operator<=>(const GroupKey&) const = default;
};

GroupKey groupKeyFor(int verbClass, int nounClass, View view);
inline GroupKey groupKeyFor(const CaptionRecord& c, View view) {
  return groupKeyFor(c.verbClass, c.nounClass, view);
}

struct Vocabulary {
  int numVerbs = 0;
  int numNouns = 0;
};

struct Gallery {
  Domain domain = Domain::kSource;
  std::size_t videoDim = 0;
  std::size_t textDim = 0;  // 0 for galleries without captions
  std::vector<GalleryItem> items;

  std::size_t size() const { return items.size(); }
  // One item per column.
  Matrix videoMatrix() const;
  // Text features of captioned items, one column per item; throws if any
  // item lacks a caption.
  Matrix textMatrix() const;
};

// Relevance groups for one view. Groups are ordered by key, members by index.
class RelevanceView {
 public:
  RelevanceView() = default;
  RelevanceView(View view, std::span<const GroupKey> itemKeys);

  View view() const { return view_; }
  std::size_t itemCount() const { return groupOf_.size(); }
  std::size_t groupCount() const { return keys_.size(); }

  const GroupKey& key(std::size_t group) const { return keys_[group]; }
  const std::vector<std::size_t>& members(std::size_t group) const { return members_[group]; }
  std::size_t groupOf(std::size_t item) const { return groupOf_[item]; }
  std::optional<std::size_t> findGroup(const GroupKey& key) const;

  bool relevant(std::size_t a, std::size_t b) const { return groupOf_[a] == groupOf_[b]; }
  // Items sharing the anchor's group, the anchor itself excluded.
  std::vector<std::size_t> relevantTo(std::size_t anchor) const;
  std::vector<std::size_t> irrelevantTo(std::size_t anchor) const;

 private:
  View view_ = View::kAction;
  std::vector<GroupKey> keys_;
  std::vector<std::vector<std::size_t>> members_;
  std::vector<std::size_t> groupOf_;
};

struct RelevanceSets {
  std::array<RelevanceView, 3> views;

  const RelevanceView& operator[](View v) const { return views[static_cast<std::size_t>(v)]; }
};

// Groups the captioned items of a gallery. Throws if any item lacks a caption.
RelevanceView buildRelevance(const Gallery& gallery, View view);
RelevanceSets buildRelevanceSets(const Gallery& gallery);
// Same, from explicit captions (used for held-out target truth).
RelevanceView buildRelevance(std::span<const CaptionRecord> captions, View view);

// ---------------------------------------------------------------------------
// On-disk formats.

// XMFE: magic, version u32, count u32, dim u32, count x dim f64 LE row-major.
inline constexpr std::uint32_t kFeatureFormatVersion = 1;

Matrix readFeatures(const std::filesystem::path& path);  // dim x count
void writeFeatures(const std::filesystem::path& path, const Matrix& columns);

struct MetadataRecord {
  std::int64_t id = 0;
  Domain domain = Domain::kSource;
  std::optional<int> verb;
  std::optional<int> noun;
  std::optional<std::int64_t> textFeatureRow;
  std::optional<std::string> raw;
};

std::vector<MetadataRecord> readMetadata(const std::filesystem::path& path);
void writeMetadata(const std::filesystem::path& path, std::span<const MetadataRecord> records);

// Captioned source gallery. Text features live in their own XMFE file and are
// addressed by text_feature_row.
Gallery loadSourceGallery(const std::filesystem::path& videoFeatures,
                          const std::filesystem::path& textFeatures,
                          const std::filesystem::path& metadata,
                          const std::optional<Vocabulary>& vocab = std::nullopt);

// Uncaptioned target gallery for training. Any record carrying caption fields
// is rejected with ProtocolError.
Gallery loadTargetGallery(const std::filesystem::path& videoFeatures,
                          const std::filesystem::path& metadata);

// Evaluation-only held-out captions for the target gallery, returned indexed
// by target item (matched on metadata id). Every item must appear exactly once.
std::vector<CaptionRecord> loadTargetTruth(const std::filesystem::path& truthMetadata,
                                           const std::filesystem::path& textFeatures,
                                           const Gallery& target,
                                           const std::optional<Vocabulary>& vocab = std::nullopt);

Vocabulary readVocabulary(const std::filesystem::path& path);
void writeVocabulary(const std::filesystem::path& path, const Vocabulary& vocab);

}  // namespace cmda
