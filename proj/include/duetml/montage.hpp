#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "duetml/dataset.hpp"
#include "duetml/image.hpp"

namespace duetml {

struct MontageGeometry {
  static constexpr std::size_t kMaxThumbnails = 50;
  static constexpr int kMaxColumns = 10;
  static constexpr int kThumbSize = 96;
  static constexpr int kHeaderHeight = 48;
  static constexpr int kGlyphScale = 3;
};

/// One category rendered as a single composite: a header band with the
/// category name over a row-major grid of up to 50 thumbnails.
struct Montage {
  std::string category_name;
  std::vector<ImageRef> selected;  // grid order
  Image pixels;
  Bytes png;
  std::string digest;  // sha256 of png
  std::uint64_t seed = 0;
};

/// Selects min(50, n) images uniformly without replacement and shuffles them
/// into the grid, both driven by `seed`. Throws EmptyCategory.
Montage render_montage(const TrainingDataset& dataset, const Category& category,
                       std::uint64_t seed);

/// One montage per non-empty category, in dataset order. Each category gets
/// its own seed derived from `seed` and its position.
std::vector<Montage> render_all(const TrainingDataset& dataset, std::uint64_t seed);

/// Seed render_all hands to the category at `index`.
std::uint64_t category_seed(std::uint64_t seed, std::size_t index);

/// Draws `text` into `img` with the built-in bitmap font. Returns the pen
/// advance in pixels.
int draw_text(Image& img, int x, int y, std::string_view text, int scale,
              std::uint8_t r, std::uint8_t g, std::uint8_t b);

}  // namespace duetml
