#include "duetml/montage.hpp"

#include <algorithm>
#include <cmath>

#include "duetml/error.hpp"
#include "font5x7.hpp"

namespace duetml {

namespace {

constexpr std::uint8_t kHeaderBg = 255;
constexpr std::uint8_t kCellBg = 235;
constexpr int kGlyphAdvance = 6;  // 5 columns plus 1 spacing, before scaling

// ASCII passes through; each non-ASCII code point becomes '?'.
std::string to_drawable(std::string_view text) {
  std::string out;
  for (unsigned char c : text) {
    if (c < 0x80) {
      out.push_back(c >= 0x20 && c < 0x7f ? static_cast<char>(c) : '?');
    } else if ((c & 0xc0) != 0x80) {
      out.push_back('?');
    }
  }
  return out;
}

void blit_thumbnail(Image& canvas, const Image& src, int cell_x, int cell_y) {
  constexpr int kSize = MontageGeometry::kThumbSize;
  const double scale = std::min(static_cast<double>(kSize) / src.width,
                                static_cast<double>(kSize) / src.height);
  const int tw = std::clamp(static_cast<int>(std::lround(src.width * scale)), 1, kSize);
  const int th = std::clamp(static_cast<int>(std::lround(src.height * scale)), 1, kSize);
  const Image thumb = resize_bilinear(src, tw, th);
  const int ox = cell_x + (kSize - tw) / 2;
  const int oy = cell_y + (kSize - th) / 2;
  for (int y = 0; y < th; ++y)
    std::copy_n(thumb.at(0, y), static_cast<std::size_t>(tw) * 3, canvas.at(ox, oy + y));
}

}  // namespace

int draw_text(Image& img, int x, int y, std::string_view text, int scale, std::uint8_t r,
              std::uint8_t g, std::uint8_t b) {
  const std::string drawable = to_drawable(text);
  int pen = x;
  for (char ch : drawable) {
    const auto& glyph = detail::kFont5x7[static_cast<std::size_t>(ch - 0x20)];
    for (int col = 0; col < 5; ++col) {
      for (int row = 0; row < 7; ++row) {
        if (!(glyph[static_cast<std::size_t>(col)] >> row & 1)) continue;
        for (int dy = 0; dy < scale; ++dy) {
          for (int dx = 0; dx < scale; ++dx) {
            const int px = pen + col * scale + dx;
            const int py = y + row * scale + dy;
            if (px < 0 || py < 0 || px >= img.width || py >= img.height) continue;
            std::uint8_t* p = img.at(px, py);
            p[0] = r;
            p[1] = g;
            p[2] = b;
          }
        }
      }
    }
    pen += kGlyphAdvance * scale;
  }
  return pen - x;
}

std::uint64_t category_seed(std::uint64_t seed, std::size_t index) {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(index) + 1));
}

Montage render_montage(const TrainingDataset& dataset, const Category& category,
                       std::uint64_t seed) {
  using G = MontageGeometry;
  if (category.images.empty())
    throw Error(ErrorCode::EmptyCategory, "category '" + category.name + "' has no images");

  const auto order = seeded_permutation(category.images.size(), seed);
  const std::size_t count = std::min(G::kMaxThumbnails, order.size());

  Montage m;
  m.category_name = category.name;
  m.seed = seed;
  m.selected.reserve(count);
  for (std::size_t i = 0; i < count; ++i) m.selected.push_back(category.images[order[i]]);

  const int cols = std::min(G::kMaxColumns, static_cast<int>(count));
  const int rows = static_cast<int>((count + static_cast<std::size_t>(cols) - 1) / cols);
  const int text_width =
      static_cast<int>(to_drawable(category.name).size()) * kGlyphAdvance * G::kGlyphScale;
  const int width =
      std::max(cols * G::kThumbSize, std::min(G::kMaxColumns * G::kThumbSize, text_width + 16));
  const int height = G::kHeaderHeight + rows * G::kThumbSize;

  Image canvas(width, height, kCellBg);
  for (int y = 0; y < G::kHeaderHeight; ++y)
    std::fill_n(canvas.at(0, y), static_cast<std::size_t>(width) * 3, kHeaderBg);
  const int text_y = (G::kHeaderHeight - 7 * G::kGlyphScale) / 2;
  draw_text(canvas, 8, text_y, category.name, G::kGlyphScale, 0, 0, 0);

  for (std::size_t i = 0; i < count; ++i) {
    const int cx = static_cast<int>(i % static_cast<std::size_t>(cols)) * G::kThumbSize;
    const int cy = G::kHeaderHeight + static_cast<int>(i / static_cast<std::size_t>(cols)) * G::kThumbSize;
    blit_thumbnail(canvas, dataset.decode(m.selected[i]), cx, cy);
  }

  m.png = encode_png(canvas);
  m.digest = sha256_hex(m.png);
  m.pixels = std::move(canvas);
  return m;
}

std::vector<Montage> render_all(const TrainingDataset& dataset, std::uint64_t seed) {
  std::vector<Montage> out;
  const auto& cats = dataset.categories();
  for (std::size_t i = 0; i < cats.size(); ++i) {
    if (cats[i].images.empty()) continue;
    out.push_back(render_montage(dataset, cats[i], category_seed(seed, i)));
  }
  return out;
}

}  // namespace duetml
