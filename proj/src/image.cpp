#include "mvcc/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

namespace mvcc {

namespace {

// Skips whitespace and '#' comments, then reads one ASCII integer.
int read_header_int(std::istream& in, const std::string& path) {
    for (;;) {
        const int c = in.peek();
        if (c == EOF) throw IngestionError("unexpected end of header in '" + path + "'");
        if (std::isspace(c)) {
            in.get();
        } else if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else {
            break;
        }
    }
    int value = 0;
    if (!(in >> value) || value < 0) {
        throw IngestionError("malformed header integer in '" + path + "'");
    }
    return value;
}

}  // namespace

Image Image::zeros(int height, int width, int channels) {
    if (height < 1 || width < 1 || (channels != 1 && channels != 3)) {
        throw ConfigError("invalid image dimensions " + std::to_string(height) + "x" +
                          std::to_string(width) + "x" + std::to_string(channels));
    }
    Image img;
    img.height = height;
    img.width = width;
    img.channels = channels;
    img.pixels.assign(static_cast<std::size_t>(height) * width * channels, 0.0);
    return img;
}

Image read_image(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IngestionError("cannot open image '" + path + "'");
    char m0 = 0, m1 = 0;
    f.get(m0);
    f.get(m1);
    int channels = 0;
    if (m0 == 'P' && m1 == '6') {
        channels = 3;
    } else if (m0 == 'P' && m1 == '5') {
        channels = 1;
    } else {
        throw IngestionError("'" + path + "' is not a binary PPM/PGM file");
    }
    const int width = read_header_int(f, path);
    const int height = read_header_int(f, path);
    const int maxval = read_header_int(f, path);
    if (width < 1 || height < 1) {
        throw IngestionError("'" + path + "' has invalid size " + std::to_string(width) + "x" +
                             std::to_string(height));
    }
    if (maxval != 255) {
        throw IngestionError("'" + path + "' has unsupported maxval " + std::to_string(maxval));
    }
    f.get();  // single whitespace byte after maxval
    const std::size_t n = static_cast<std::size_t>(height) * width * channels;
    std::vector<unsigned char> raw(n);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(f.gcount()) != n) {
        throw IngestionError("'" + path + "' is truncated: expected " + std::to_string(n) +
                             " pixel bytes");
    }
    Image img = Image::zeros(height, width, channels);
    for (std::size_t i = 0; i < n; ++i) img.pixels[i] = raw[i] / 255.0;
    return img;
}

void write_image(const std::string& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3) {
        throw ConfigError("write_image: unsupported channel count " +
                          std::to_string(img.channels));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IngestionError("cannot open '" + path + "' for writing");
    f << (img.channels == 3 ? "P6" : "P5") << "\n"
      << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> raw(img.pixels.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const double v = std::clamp(img.pixels[i], 0.0, 1.0);
        raw[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    f.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!f) throw IngestionError("short write to '" + path + "'");
}

}  // namespace mvcc
