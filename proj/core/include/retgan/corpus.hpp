#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "retgan/rng.hpp"
#include "retgan/tensor.hpp"

namespace retgan {

// Procedural paired image/caption corpus: 32x32 scenes of 1-3 colored
// shapes on a 3x3 grid, plus two caption variants per image (with and
// without position tokens). Everything is a pure function of the seed.

enum class Shape : std::uint8_t { kCircle = 0, kSquare = 1, kTriangle = 2 };
enum class SizeClass : std::uint8_t { kSmall = 0, kLarge = 1 };

struct SceneObject {
  Shape shape;
  std::uint8_t color;  // palette id, never equal to the background id
  SizeClass size;
  std::uint8_t cell;   // 3x3 grid cell, row-major 0..8
};

struct SceneSpec {
  std::uint8_t background;  // palette id
  std::vector<SceneObject> objects;  // 1..3, distinct cells, painted in order
};

struct Caption {
  std::vector<std::uint32_t> tokens;
  std::string text;
};

struct CorpusManifest {
  std::uint64_t seed = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::size_t captions_per_image = 2;

  std::size_t n_images() const { return n_train + n_test; }
  std::size_t n_captions() const { return captions_per_image * n_images(); }
  bool is_train_image(std::size_t image_index) const { return image_index < n_train; }
};

struct Corpus {
  CorpusManifest manifest;
  Tensor images;                  // [N x 3072] flattened rasters
  std::vector<SceneSpec> specs;   // empty when loaded from disk
  std::vector<Caption> captions;  // caption 2i and 2i+1 describe image i

  std::size_t image_of_caption(std::size_t caption_index) const { return caption_index / 2; }
  /// One [32 x 32 x 3] raster copied out of the batch matrix.
  Tensor image_raster(std::size_t image_index) const;
};

// ---- palette / grammar ----
constexpr std::size_t kPaletteSize = 8;
constexpr std::size_t kShapeCount = 3;
constexpr std::size_t kGridCells = 9;

/// Palette color as [r, g, b] in [0,1]; each channel is an exact multiple
/// of 1/255 so PPM round trips are lossless.
std::array<double, 3> palette_color(std::size_t id);
const std::string& color_name(std::size_t id);
const std::string& shape_name(Shape s);
const std::string& cell_name(std::size_t cell);

/// Fixed grammar vocabulary: 8 colors, 3 shapes, 9 cells, "on", "background".
const std::vector<std::string>& vocabulary();
std::uint32_t token_id(const std::string& token);  // error on unknown token
/// Whitespace-split caption text to token ids; unknown words are an error.
std::vector<std::uint32_t> tokenize(const std::string& text);

// ---- generation ----
Tensor render_scene(const SceneSpec& spec);             // -> [32 x 32 x 3]
Caption caption_of(const SceneSpec& spec, int variant); // variant 0 keeps cells, 1 drops them
SceneSpec sample_scene(Rng& rng);
Corpus generate_corpus(std::uint64_t seed, std::size_t n_train, std::size_t n_test);

// ---- persistence ----
/// Writes manifest.txt, captions.txt and images/img_NNNNN.ppm under dir.
void save_corpus(const Corpus& corpus, const std::string& dir);
Corpus load_corpus(const std::string& dir);

}  // namespace retgan
