#include "mvcc/mask.hpp"

#include <algorithm>
#include <cmath>

namespace mvcc {

Mask Mask::zeros(int height, int width) {
    if (height < 1 || width < 1) {
        throw ConfigError("invalid mask size " + std::to_string(height) + "x" +
                          std::to_string(width));
    }
    Mask m;
    m.height = height;
    m.width = width;
    m.values.assign(static_cast<std::size_t>(height) * width, 0);
    return m;
}

Mask Mask::ones(int height, int width) {
    Mask m = zeros(height, width);
    std::fill(m.values.begin(), m.values.end(), std::uint8_t{1});
    return m;
}

int Mask::popcount() const {
    int n = 0;
    for (std::uint8_t v : values) n += v;
    return n;
}

Mask mask_from_image(const Image& img) {
    if (img.channels != 1) {
        throw IngestionError("mask image must be single-channel, got " +
                             std::to_string(img.channels) + " channels");
    }
    Mask m = Mask::zeros(img.height, img.width);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        m.values[i] = img.pixels[i] > 0.0 ? 1 : 0;
    }
    return m;
}

Image mask_to_image(const Mask& mask) {
    Image img = Image::zeros(mask.height, mask.width, 1);
    for (std::size_t i = 0; i < mask.values.size(); ++i) {
        img.pixels[i] = mask.values[i] ? 1.0 : 0.0;
    }
    return img;
}

namespace {

void check_divisible(const Mask& mask, int h, int w) {
    if (h < 1 || w < 1 || mask.height % h != 0 || mask.width % w != 0) {
        throw ShapeError("mask " + std::to_string(mask.height) + "x" +
                         std::to_string(mask.width) + " is not divisible into " +
                         std::to_string(h) + "x" + std::to_string(w) + " cells");
    }
    if (mask.height / h != mask.width / w) {
        throw ShapeError("downsample strides differ between axes");
    }
}

}  // namespace

Mask downsample_nearest(const Mask& mask, int h, int w) {
    check_divisible(mask, h, w);
    const int s = mask.height / h;
    Mask out = Mask::zeros(h, w);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const int sy = static_cast<int>(std::floor((i + 0.5) * s));
            const int sx = static_cast<int>(std::floor((j + 0.5) * s));
            out.at(i, j) = mask.at(sy, sx);
        }
    }
    return out;
}

Mask downsample_any(const Mask& mask, int h, int w) {
    check_divisible(mask, h, w);
    const int s = mask.height / h;
    Mask out = Mask::zeros(h, w);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            std::uint8_t hit = 0;
            for (int dy = 0; dy < s && !hit; ++dy) {
                for (int dx = 0; dx < s; ++dx) {
                    if (mask.at(i * s + dy, j * s + dx)) {
                        hit = 1;
                        break;
                    }
                }
            }
            out.at(i, j) = hit;
        }
    }
    return out;
}

Tensor filter_tokens(Tape& tape, const Tensor& f1, const Tensor& f2,
                     const std::vector<std::uint8_t>& coarse_flat, MaskMode mode) {
    if (f1.rank() != 2 || f2.rank() != 2 || f1.shape() != f2.shape()) {
        throw ShapeError("filter_tokens: frames must be equal rank-2 grids, got " +
                         shape_str(f1.shape()) + " and " + shape_str(f2.shape()));
    }
    if (coarse_flat.size() != static_cast<std::size_t>(f1.dim(0))) {
        throw ShapeError("filter_tokens: mask length " + std::to_string(coarse_flat.size()) +
                         " does not match " + std::to_string(f1.dim(0)) + " tokens per frame");
    }
    if (mode == MaskMode::zero) {
        return concat_rows(tape, row_select(tape, f1, coarse_flat),
                           row_select(tape, f2, coarse_flat));
    }
    std::vector<int> kept;
    for (std::size_t i = 0; i < coarse_flat.size(); ++i) {
        if (coarse_flat[i]) kept.push_back(static_cast<int>(i));
    }
    if (kept.empty()) {
        throw ContractError("filter_tokens: all-zero mask in drop mode leaves no memory tokens");
    }
    return concat_rows(tape, take_rows(tape, f1, kept), take_rows(tape, f2, kept));
}

Mask diff_cd_baseline(const Image& a, const Image& b, double threshold, int min_blob) {
    if (a.height != b.height || a.width != b.width || a.channels != b.channels) {
        throw ShapeError("diff_cd_baseline: image shapes disagree");
    }
    Mask m = Mask::zeros(a.height, a.width);
    for (int y = 0; y < a.height; ++y) {
        for (int x = 0; x < a.width; ++x) {
            double d = 0.0;
            for (int c = 0; c < a.channels; ++c) d += std::abs(a.at(y, x, c) - b.at(y, x, c));
            m.at(y, x) = d / a.channels > threshold ? 1 : 0;
        }
    }
    if (min_blob <= 1) return m;
    // remove 4-connected components smaller than min_blob
    std::vector<std::int32_t> label(m.values.size(), -1);
    std::vector<std::size_t> stack;
    for (std::size_t start = 0; start < m.values.size(); ++start) {
        if (!m.values[start] || label[start] != -1) continue;
        stack.assign(1, start);
        label[start] = static_cast<std::int32_t>(start);
        std::vector<std::size_t> members;
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            members.push_back(p);
            const int y = static_cast<int>(p) / m.width;
            const int x = static_cast<int>(p) % m.width;
            const int ny[4] = {y - 1, y + 1, y, y};
            const int nx[4] = {x, x, x - 1, x + 1};
            for (int k = 0; k < 4; ++k) {
                if (ny[k] < 0 || ny[k] >= m.height || nx[k] < 0 || nx[k] >= m.width) continue;
                const std::size_t q = static_cast<std::size_t>(ny[k]) * m.width + nx[k];
                if (m.values[q] && label[q] == -1) {
                    label[q] = static_cast<std::int32_t>(start);
                    stack.push_back(q);
                }
            }
        }
        if (static_cast<int>(members.size()) < min_blob) {
            for (std::size_t p : members) m.values[p] = 0;
        }
    }
    return m;
}

}  // namespace mvcc
