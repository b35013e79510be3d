#pragma once

#include <string>
#include <vector>

#include "mvcc/errors.hpp"

namespace mvcc {

// Row-major interleaved pixels in [0,1]; channels is 3 (PPM) or 1 (PGM).
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> pixels;

    static Image zeros(int height, int width, int channels);

    double& at(int y, int x, int ch) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + ch];
    }
    double at(int y, int x, int ch) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + ch];
    }
};

// Reads binary PPM (P6) or PGM (P5), maxval 255. Throws IngestionError on
// malformed input.
Image read_image(const std::string& path);

// Writes P6 for 3-channel, P5 for 1-channel images; values clamped to [0,1].
void write_image(const std::string& path, const Image& img);

}  // namespace mvcc
