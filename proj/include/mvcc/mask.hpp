#pragma once

#include <cstdint>
#include <vector>

#include "mvcc/image.hpp"
#include "mvcc/tensor.hpp"

namespace mvcc {

// Binary change mask, full or coarse resolution.
struct Mask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> values;  // row-major, {0,1}

    static Mask zeros(int height, int width);
    static Mask ones(int height, int width);

    std::uint8_t& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
    int popcount() const;
};

// Nonzero image values become 1. Requires a single-channel image.
Mask mask_from_image(const Image& img);
Image mask_to_image(const Mask& mask);  // 0 -> 0, 1 -> 255

// Center-sample nearest downsampling: out(i,j) = mask(floor((i+0.5)s), floor((j+0.5)s)).
// Requires height % h == 0 and width % w == 0.
Mask downsample_nearest(const Mask& mask, int h, int w);

// Block max: out(i,j) = 1 iff any pixel of the s-by-s block is 1.
Mask downsample_any(const Mask& mask, int h, int w);

enum class MaskMode { zero, drop };

// Filters the two projected token grids by a flattened coarse mask and
// concatenates them into the decoder memory sequence.
// zero: masked tokens are zeroed in place, memory length stays 2*hw.
// drop: masked tokens are removed; an all-zero mask raises ContractError.
Tensor filter_tokens(Tape& tape, const Tensor& f1, const Tensor& f2,
                     const std::vector<std::uint8_t>& coarse_flat, MaskMode mode);

// Stand-in change detector: mean absolute channel difference thresholded,
// then 4-connected components smaller than min_blob pixels removed.
Mask diff_cd_baseline(const Image& a, const Image& b, double threshold = 0.2, int min_blob = 8);

}  // namespace mvcc
