#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "duetml/image.hpp"
#include "duetml/util.hpp"

namespace duetml {

struct ImageRef {
  std::string id;
  std::string content_hash;  // pixel_digest of the decoded raster
  int width = 0;
  int height = 0;
  std::string storage_path;  // relative to the session directory

  bool operator==(const ImageRef&) const = default;
};

struct Category {
  std::string name;
  std::vector<ImageRef> images;
  Timestamp created_at{0};

  bool operator==(const Category&) const = default;
};

struct UploadReport {
  std::vector<ImageRef> added;
  std::vector<std::size_t> duplicate_indices;
};

/// Reversible path-safe encoding of a category name: bytes outside
/// [A-Za-z0-9_-] become %XX.
std::string escape_category_name(std::string_view name);
std::string unescape_category_name(std::string_view escaped);

/// The user-curated training data. Not internally synchronised; the owning
/// session serialises mutations.
class TrainingDataset {
 public:
  static constexpr std::size_t kMaxCategories = 10;
  static constexpr int kManifestFormat = 1;

  const Category& add_category(std::string_view name, Timestamp now = system_now());

  /// Appends decodable, non-duplicate payloads in order. On the first
  /// undecodable payload, throws UndecodableImage carrying its index; the
  /// payloads before it stay committed.
  UploadReport upload_images(std::string_view category_name, std::span<const Bytes> payloads);

  void remove_category(std::string_view name);
  void rename_category(std::string_view old_name, std::string_view new_name);

  const std::vector<Category>& categories() const { return categories_; }
  const Category* find(std::string_view name) const;
  const Category& get(std::string_view name) const;  // throws UnknownCategory
  std::uint64_t version() const { return version_; }
  std::size_t total_images() const;
  std::size_t non_empty_count() const;

  /// Encoded bytes as uploaded.
  const Bytes& blob(const ImageRef& ref) const;
  Image decode(const ImageRef& ref) const;
  const std::map<std::string, Bytes>& blobs() const { return blobs_; }

  std::string manifest_json() const;
  /// Rebuilds a dataset from its manifest; `load_blob` maps a storage path
  /// to file bytes. Throws CorruptManifest / VersionMismatch.
  static TrainingDataset from_manifest(std::string_view manifest,
                                       const std::function<Bytes(const std::string&)>& load_blob);

  bool operator==(const TrainingDataset&) const = default;

 private:
  Category& mutable_get(std::string_view name);

  std::vector<Category> categories_;
  std::uint64_t version_ = 0;
  std::uint64_t next_image_seq_ = 1;
  std::map<std::string, Bytes> blobs_;
};

}  // namespace duetml
