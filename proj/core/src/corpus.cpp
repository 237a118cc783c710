#include "retgan/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "retgan/check.hpp"
#include "retgan/math.hpp"
#include "retgan/ppm.hpp"

namespace retgan {

namespace {
namespace fs = std::filesystem;

constexpr std::uint64_t kDomainScene = 0x5345454e;  // per-image substream tag

// Byte-level palette; stored pixel values are byte/255 so a PPM round trip
// reproduces them bit-exactly.
struct PaletteEntry {
  const char* name;
  std::uint8_t r, g, b;
};
constexpr PaletteEntry kPalette[kPaletteSize] = {
    {"red", 200, 30, 30},    {"green", 30, 180, 60},  {"blue", 40, 70, 220},
    {"yellow", 230, 220, 50}, {"purple", 140, 60, 190}, {"orange", 240, 140, 30},
    {"white", 245, 245, 245}, {"black", 15, 15, 15},
};

const char* kShapeNames[kShapeCount] = {"circle", "square", "triangle"};
const char* kCellNames[kGridCells] = {
    "top_left",    "top_center",    "top_right",
    "middle_left", "middle_center", "middle_right",
    "bottom_left", "bottom_center", "bottom_right",
};

// Cell centers chosen so every shape (largest is 11 px across) stays inside
// its own third of the raster; objects in distinct cells never overlap.
constexpr int kCellCenter[3] = {5, 16, 27};

void put_pixel(Tensor& img, int x, int y, std::size_t color) {
  if (x < 0 || y < 0 || x >= int(num::kImageSide) || y >= int(num::kImageSide)) return;
  const auto rgb = palette_color(color);
  double* p = img.data() + (std::size_t(y) * num::kImageSide + std::size_t(x)) * 3;
  p[0] = rgb[0];
  p[1] = rgb[1];
  p[2] = rgb[2];
}

void paint_square(Tensor& img, int cx, int cy, int side, std::size_t color) {
  for (int y = cy - side / 2; y < cy - side / 2 + side; ++y)
    for (int x = cx - side / 2; x < cx - side / 2 + side; ++x) put_pixel(img, x, y, color);
}

void paint_circle(Tensor& img, int cx, int cy, int r, std::size_t color) {
  for (int y = cy - r; y <= cy + r; ++y)
    for (int x = cx - r; x <= cx + r; ++x)
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) put_pixel(img, x, y, color);
}

void paint_triangle(Tensor& img, int cx, int cy, int w, int h, std::size_t color) {
  for (int k = 0; k < h; ++k) {
    const int wk = std::max<int>(1, int(std::lround(double(w) * (k + 1) / h)));
    const int left = cx - wk / 2;
    const int y = cy - h / 2 + k;
    for (int x = left; x < left + wk; ++x) put_pixel(img, x, y, color);
  }
}
}  // namespace

std::array<double, 3> palette_color(std::size_t id) {
  RETGAN_CHECK(id < kPaletteSize, "palette: color id " << id << " out of range");
  const PaletteEntry& e = kPalette[id];
  return {e.r / 255.0, e.g / 255.0, e.b / 255.0};
}

const std::string& color_name(std::size_t id) {
  RETGAN_CHECK(id < kPaletteSize, "palette: color id " << id << " out of range");
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& e : kPalette) v.emplace_back(e.name);
    return v;
  }();
  return names[id];
}

const std::string& shape_name(Shape s) {
  static const std::vector<std::string> names = {kShapeNames[0], kShapeNames[1], kShapeNames[2]};
  const auto i = static_cast<std::size_t>(s);
  RETGAN_CHECK(i < kShapeCount, "shape id " << i << " out of range");
  return names[i];
}

const std::string& cell_name(std::size_t cell) {
  RETGAN_CHECK(cell < kGridCells, "grid cell " << cell << " out of range");
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const char* n : kCellNames) v.emplace_back(n);
    return v;
  }();
  return names[cell];
}

const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> vocab = [] {
    std::vector<std::string> v;
    for (std::size_t c = 0; c < kPaletteSize; ++c) v.push_back(color_name(c));
    for (std::size_t s = 0; s < kShapeCount; ++s) v.push_back(shape_name(Shape(s)));
    for (std::size_t g = 0; g < kGridCells; ++g) v.push_back(cell_name(g));
    v.push_back("on");
    v.push_back("background");
    return v;
  }();
  return vocab;
}

std::uint32_t token_id(const std::string& token) {
  static const std::map<std::string, std::uint32_t> index = [] {
    std::map<std::string, std::uint32_t> m;
    const auto& v = vocabulary();
    for (std::uint32_t i = 0; i < v.size(); ++i) m[v[i]] = i;
    return m;
  }();
  auto it = index.find(token);
  RETGAN_CHECK(it != index.end(), "vocabulary: unknown token '" << token << "'");
  return it->second;
}

std::vector<std::uint32_t> tokenize(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::uint32_t> tokens;
  std::string word;
  while (in >> word) tokens.push_back(token_id(word));
  RETGAN_CHECK(!tokens.empty(), "tokenize: empty caption");
  return tokens;
}

Tensor render_scene(const SceneSpec& spec) {
  RETGAN_CHECK(spec.background < kPaletteSize, "render: bad background id");
  Tensor img({num::kImageSide, num::kImageSide, 3});
  const auto bg = palette_color(spec.background);
  for (std::size_t i = 0; i < img.size(); i += 3) {
    img[i] = bg[0];
    img[i + 1] = bg[1];
    img[i + 2] = bg[2];
  }
  std::vector<SceneObject> ordered = spec.objects;
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const SceneObject& a, const SceneObject& b) { return a.cell < b.cell; });
  for (const SceneObject& o : ordered) {
    RETGAN_CHECK(o.cell < kGridCells && o.color < kPaletteSize, "render: bad object fields");
    const int cx = kCellCenter[o.cell % 3];
    const int cy = kCellCenter[o.cell / 3];
    const bool large = o.size == SizeClass::kLarge;
    switch (o.shape) {
      case Shape::kCircle: paint_circle(img, cx, cy, large ? 5 : 3, o.color); break;
      case Shape::kSquare: paint_square(img, cx, cy, large ? 10 : 6, o.color); break;
      case Shape::kTriangle:
        paint_triangle(img, cx, cy, large ? 10 : 6, large ? 10 : 6, o.color);
        break;
    }
  }
  return img;
}

Caption caption_of(const SceneSpec& spec, int variant) {
  RETGAN_CHECK(variant == 0 || variant == 1, "caption: variant must be 0 or 1");
  Caption cap;
  std::vector<std::string> words;
  for (const SceneObject& o : spec.objects) {
    words.push_back(color_name(o.color));
    words.push_back(shape_name(o.shape));
    if (variant == 0) words.push_back(cell_name(o.cell));
  }
  words.push_back("on");
  words.push_back(color_name(spec.background));
  words.push_back("background");
  std::ostringstream text;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) text << ' ';
    text << words[i];
    cap.tokens.push_back(token_id(words[i]));
  }
  cap.text = text.str();
  RETGAN_CHECK(cap.tokens.size() <= 16, "caption: token limit exceeded");
  return cap;
}

SceneSpec sample_scene(Rng& rng) {
  SceneSpec spec;
  spec.background = std::uint8_t(rng.below(kPaletteSize));
  const std::size_t count = 1 + rng.below(3);
  std::vector<bool> used(kGridCells, false);
  for (std::size_t i = 0; i < count; ++i) {
    SceneObject o;
    std::uint64_t cell = rng.below(kGridCells);
    while (used[cell]) cell = rng.below(kGridCells);
    used[cell] = true;
    o.cell = std::uint8_t(cell);
    o.shape = Shape(rng.below(kShapeCount));
    // object color drawn from the 7 non-background colors
    std::uint64_t c = rng.below(kPaletteSize - 1);
    if (c >= spec.background) ++c;
    o.color = std::uint8_t(c);
    o.size = SizeClass(rng.below(2));
    spec.objects.push_back(o);
  }
  return spec;
}

Corpus generate_corpus(std::uint64_t seed, std::size_t n_train, std::size_t n_test) {
  RETGAN_CHECK(n_train > 0 && n_test > 0, "corpus: n_train and n_test must be positive");
  Corpus corpus;
  corpus.manifest.seed = seed;
  corpus.manifest.n_train = n_train;
  corpus.manifest.n_test = n_test;
  const std::size_t n = n_train + n_test;
  corpus.images = Tensor({n, num::kImagePixels});
  const Rng base(seed);
  for (std::size_t i = 0; i < n; ++i) {
    Rng stream = base.fork(kDomainScene, i);
    SceneSpec spec = sample_scene(stream);
    const Tensor raster = render_scene(spec);
    std::copy(raster.data(), raster.data() + raster.size(),
              corpus.images.data() + i * num::kImagePixels);
    corpus.captions.push_back(caption_of(spec, 0));
    corpus.captions.push_back(caption_of(spec, 1));
    corpus.specs.push_back(std::move(spec));
  }
  return corpus;
}

Tensor Corpus::image_raster(std::size_t image_index) const {
  RETGAN_CHECK(image_index < manifest.n_images(), "corpus: image index " << image_index
                                                      << " out of range");
  Tensor img({num::kImageSide, num::kImageSide, 3});
  const double* src = images.data() + image_index * num::kImagePixels;
  std::copy(src, src + num::kImagePixels, img.data());
  return img;
}

void save_corpus(const Corpus& corpus, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "images");
  {
    std::ofstream mf(fs::path(dir) / "manifest.txt", std::ios::trunc);
    RETGAN_CHECK_RUNTIME(mf.good(), "corpus: cannot write manifest under " << dir);
    mf << "seed = " << corpus.manifest.seed << "\n";
    mf << "n_train = " << corpus.manifest.n_train << "\n";
    mf << "n_test = " << corpus.manifest.n_test << "\n";
    mf << "captions_per_image = " << corpus.manifest.captions_per_image << "\n";
  }
  {
    std::ofstream cf(fs::path(dir) / "captions.txt", std::ios::trunc);
    RETGAN_CHECK_RUNTIME(cf.good(), "corpus: cannot write captions under " << dir);
    for (const Caption& c : corpus.captions) cf << c.text << "\n";
  }
  for (std::size_t i = 0; i < corpus.manifest.n_images(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%05zu.ppm", i);
    write_ppm((fs::path(dir) / "images" / name).string(), corpus.image_raster(i));
  }
}

Corpus load_corpus(const std::string& dir) {
  const fs::path root(dir);
  RETGAN_CHECK_RUNTIME(fs::exists(root / "manifest.txt"),
                       "corpus: missing " << (root / "manifest.txt").string());
  Corpus corpus;
  {
    std::ifstream mf(root / "manifest.txt");
    std::string line;
    std::map<std::string, std::uint64_t> kv;
    while (std::getline(mf, line)) {
      std::istringstream ls(line);
      std::string key, eq;
      std::uint64_t value;
      if (ls >> key >> eq >> value && eq == "=") kv[key] = value;
    }
    for (const char* key : {"seed", "n_train", "n_test", "captions_per_image"})
      RETGAN_CHECK_RUNTIME(kv.count(key), "corpus: manifest missing key '" << key << "'");
    corpus.manifest.seed = kv["seed"];
    corpus.manifest.n_train = kv["n_train"];
    corpus.manifest.n_test = kv["n_test"];
    corpus.manifest.captions_per_image = kv["captions_per_image"];
  }
  const std::size_t n = corpus.manifest.n_images();
  corpus.images = Tensor({n, num::kImagePixels});
  for (std::size_t i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%05zu.ppm", i);
    const Tensor img = read_ppm((root / "images" / name).string());
    RETGAN_CHECK_RUNTIME(img.size() == num::kImagePixels,
                         "corpus: image " << i << " has wrong dimensions");
    std::copy(img.data(), img.data() + img.size(), corpus.images.data() + i * num::kImagePixels);
  }
  {
    std::ifstream cf(root / "captions.txt");
    RETGAN_CHECK_RUNTIME(cf.good(), "corpus: missing " << (root / "captions.txt").string());
    std::string line;
    while (std::getline(cf, line)) {
      if (line.empty()) continue;
      Caption cap;
      cap.text = line;
      std::istringstream ls(line);
      std::string word;
      while (ls >> word) cap.tokens.push_back(token_id(word));
      corpus.captions.push_back(std::move(cap));
    }
  }
  RETGAN_CHECK_RUNTIME(corpus.captions.size() == corpus.manifest.n_captions(),
                       "corpus: caption count " << corpus.captions.size() << " does not match "
                                                << corpus.manifest.n_captions());
  return corpus;
}

}  // namespace retgan
