#include "retgan/ppm.hpp"

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>

#include "retgan/check.hpp"

namespace retgan {

void write_ppm(const std::string& path, const Tensor& image) {
  RETGAN_CHECK(image.rank() == 3 && image.shape()[2] == 3,
               "ppm: expected [H x W x 3] image, got " << image.shape_str());
  const std::size_t h = image.shape()[0], w = image.shape()[1];
  std::string body;
  body.reserve(h * w * 3);
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double x = image[i];
    RETGAN_CHECK(x >= 0.0 && x <= 1.0, "ppm: pixel value " << x << " outside [0,1]");
    body.push_back(static_cast<char>(std::lround(255.0 * x)));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  RETGAN_CHECK_RUNTIME(f.good(), "ppm: cannot open " << path << " for writing");
  f << "P6\n" << w << " " << h << "\n255\n";
  f.write(body.data(), static_cast<std::streamsize>(body.size()));
  RETGAN_CHECK_RUNTIME(f.good(), "ppm: short write to " << path);
}

namespace {
// Next whitespace-delimited header token, skipping "#" comments.
std::string next_token(std::istream& in, const std::string& path) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {}
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  RETGAN_CHECK_RUNTIME(!tok.empty(), "ppm: truncated header in " << path);
  return tok;
}
}  // namespace

Tensor read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  RETGAN_CHECK_RUNTIME(f.good(), "ppm: cannot open " << path);
  RETGAN_CHECK_RUNTIME(next_token(f, path) == "P6", "ppm: " << path << " is not binary P6");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(next_token(f, path));
    h = std::stoul(next_token(f, path));
    maxval = std::stoul(next_token(f, path));
  } catch (const std::logic_error&) {
    RETGAN_CHECK_RUNTIME(false, "ppm: malformed header in " << path);
  }
  RETGAN_CHECK_RUNTIME(maxval == 255, "ppm: unsupported maxval " << maxval << " in " << path);
  RETGAN_CHECK_RUNTIME(w > 0 && h > 0, "ppm: bad dimensions in " << path);
  std::string body(w * h * 3, '\0');
  f.read(body.data(), static_cast<std::streamsize>(body.size()));
  RETGAN_CHECK_RUNTIME(f.gcount() == static_cast<std::streamsize>(body.size()),
                       "ppm: truncated pixel data in " << path);
  Tensor img({h, w, 3});
  for (std::size_t i = 0; i < img.size(); ++i)
    img[i] = static_cast<std::uint8_t>(body[i]) / 255.0;
  return img;
}

}  // namespace retgan
