#include "duetml/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <json.hpp>
#include <set>

#include "duetml/error.hpp"

namespace duetml {

std::string escape_category_name(std::string_view name) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : name) {
    const bool safe = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                      c == '_' || c == '-';
    if (safe) {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xf]);
    }
  }
  return out;
}

std::string unescape_category_name(std::string_view escaped) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
  };
  std::string out;
  for (std::size_t i = 0; i < escaped.size(); ++i) {
    if (escaped[i] != '%') {
      out.push_back(escaped[i]);
      continue;
    }
    if (i + 2 >= escaped.size())
      throw Error(ErrorCode::CorruptManifest, "truncated escape in category directory");
    const int hi = nibble(escaped[i + 1]);
    const int lo = nibble(escaped[i + 2]);
    if (hi < 0 || lo < 0) throw Error(ErrorCode::CorruptManifest, "bad escape in category directory");
    out.push_back(static_cast<char>(hi << 4 | lo));
    i += 2;
  }
  return out;
}

namespace {

std::string validated_name(std::string_view raw) {
  std::string name = trim(raw);
  if (name.empty()) throw Error(ErrorCode::EmptyName, "category name is empty");
  return name;
}

}  // namespace

const Category* TrainingDataset::find(std::string_view name) const {
  for (const auto& c : categories_)
    if (c.name == name) return &c;
  return nullptr;
}

const Category& TrainingDataset::get(std::string_view name) const {
  if (const auto* c = find(name)) return *c;
  throw Error(ErrorCode::UnknownCategory, "no category '" + std::string(name) + "'");
}

Category& TrainingDataset::mutable_get(std::string_view name) {
  return const_cast<Category&>(get(name));
}

std::size_t TrainingDataset::total_images() const {
  std::size_t n = 0;
  for (const auto& c : categories_) n += c.images.size();
  return n;
}

std::size_t TrainingDataset::non_empty_count() const {
  return static_cast<std::size_t>(std::count_if(categories_.begin(), categories_.end(),
                                                [](const Category& c) { return !c.images.empty(); }));
}

const Category& TrainingDataset::add_category(std::string_view raw, Timestamp now) {
  std::string name = validated_name(raw);
  if (find(name)) throw Error(ErrorCode::DuplicateName, "category '" + name + "' already exists");
  if (categories_.size() >= kMaxCategories)
    throw Error(ErrorCode::CategoryLimitExceeded, "at most 10 categories are allowed");
  categories_.push_back(Category{std::move(name), {}, now});
  ++version_;
  return categories_.back();
}

UploadReport TrainingDataset::upload_images(std::string_view category_name,
                                            std::span<const Bytes> payloads) {
  Category& cat = mutable_get(category_name);
  ++version_;
  UploadReport report;
  for (std::size_t i = 0; i < payloads.size(); ++i) {
    Image img;
    ImageFormat fmt;
    try {
      fmt = sniff_format(payloads[i]);
      img = decode_image(payloads[i]);
    } catch (const Error& e) {
      throw Error(ErrorCode::UndecodableImage,
                  "payload " + std::to_string(i) + ": " + e.what(), i);
    }
    const std::string hash = pixel_digest(img);
    const bool dup = std::any_of(cat.images.begin(), cat.images.end(),
                                 [&](const ImageRef& r) { return r.content_hash == hash; });
    if (dup) {
      report.duplicate_indices.push_back(i);
      continue;
    }
    char id[32];
    std::snprintf(id, sizeof id, "img%06llu", static_cast<unsigned long long>(next_image_seq_++));
    ImageRef ref{id, hash, img.width, img.height,
                 "dataset/" + escape_category_name(cat.name) + "/" + id + "." +
                     std::string(extension(fmt))};
    blobs_[ref.id] = payloads[i];
    cat.images.push_back(ref);
    report.added.push_back(std::move(ref));
  }
  return report;
}

void TrainingDataset::remove_category(std::string_view name) {
  auto it = std::find_if(categories_.begin(), categories_.end(),
                         [&](const Category& c) { return c.name == name; });
  if (it == categories_.end())
    throw Error(ErrorCode::UnknownCategory, "no category '" + std::string(name) + "'");
  for (const auto& r : it->images) blobs_.erase(r.id);
  categories_.erase(it);
  ++version_;
}

void TrainingDataset::rename_category(std::string_view old_name, std::string_view new_raw) {
  Category& cat = mutable_get(old_name);
  std::string name = validated_name(new_raw);
  if (name != cat.name && find(name))
    throw Error(ErrorCode::DuplicateName, "category '" + name + "' already exists");
  cat.name = std::move(name);
  // Blobs are keyed by id, so only the on-disk location moves.
  const std::string dir = "dataset/" + escape_category_name(cat.name) + "/";
  for (auto& r : cat.images)
    r.storage_path = dir + r.storage_path.substr(r.storage_path.rfind('/') + 1);
  ++version_;
}

const Bytes& TrainingDataset::blob(const ImageRef& ref) const {
  auto it = blobs_.find(ref.id);
  if (it == blobs_.end()) throw Error(ErrorCode::IoError, "missing image data for " + ref.id);
  return it->second;
}

Image TrainingDataset::decode(const ImageRef& ref) const { return decode_image(blob(ref)); }

std::string TrainingDataset::manifest_json() const {
  nlohmann::json j;
  j["format"] = kManifestFormat;
  j["escaping"] = "percent-v1";
  j["version"] = version_;
  j["next_image_seq"] = next_image_seq_;
  j["categories"] = nlohmann::json::array();
  for (const auto& c : categories_) {
    nlohmann::json jc;
    jc["name"] = c.name;
    jc["dir"] = escape_category_name(c.name);
    jc["created_at"] = c.created_at.count();
    jc["images"] = nlohmann::json::array();
    for (const auto& r : c.images) {
      jc["images"].push_back({{"id", r.id},
                              {"hash", r.content_hash},
                              {"width", r.width},
                              {"height", r.height},
                              {"path", r.storage_path}});
    }
    j["categories"].push_back(std::move(jc));
  }
  return j.dump(2);
}

TrainingDataset TrainingDataset::from_manifest(
    std::string_view manifest, const std::function<Bytes(const std::string&)>& load_blob) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(manifest);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptManifest, std::string("dataset manifest: ") + e.what());
  }
  TrainingDataset ds;
  try {
    if (j.at("format").get<int>() != kManifestFormat)
      throw Error(ErrorCode::VersionMismatch, "dataset manifest format " + j.at("format").dump());
    ds.version_ = j.at("version").get<std::uint64_t>();
    ds.next_image_seq_ = j.at("next_image_seq").get<std::uint64_t>();
    std::set<std::string> names;
    for (const auto& jc : j.at("categories")) {
      Category c;
      c.name = jc.at("name").get<std::string>();
      if (unescape_category_name(jc.at("dir").get<std::string>()) != c.name)
        throw Error(ErrorCode::CorruptManifest, "category directory does not match name");
      if (!names.insert(c.name).second)
        throw Error(ErrorCode::CorruptManifest, "duplicate category " + c.name);
      c.created_at = Timestamp(jc.at("created_at").get<std::int64_t>());
      for (const auto& ji : jc.at("images")) {
        ImageRef r{ji.at("id").get<std::string>(), ji.at("hash").get<std::string>(),
                   ji.at("width").get<int>(), ji.at("height").get<int>(),
                   ji.at("path").get<std::string>()};
        ds.blobs_[r.id] = load_blob(r.storage_path);
        c.images.push_back(std::move(r));
      }
      ds.categories_.push_back(std::move(c));
    }
    if (ds.categories_.size() > kMaxCategories)
      throw Error(ErrorCode::CorruptManifest, "more than 10 categories");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptManifest, std::string("dataset manifest: ") + e.what());
  }
  return ds;
}

}  // namespace duetml
