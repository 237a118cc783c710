#pragma once

#include <string>

#include "retgan/tensor.hpp"

namespace retgan {

/// Binary PPM (P6, maxval 255). Pixel values map as byte = round(255 * x)
/// on write and x = byte / 255 on read, so palette colors that are exact
/// multiples of 1/255 survive a round trip bit-exactly.
void write_ppm(const std::string& path, const Tensor& image);  // [H x W x 3], values in [0,1]
Tensor read_ppm(const std::string& path);                      // -> [H x W x 3]

}  // namespace retgan
