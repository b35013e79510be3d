#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mvcc/tensor.hpp"

namespace mvcc {

struct AdamConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second moment buffers per parameter plus the shared step counter.
struct AdamState {
    AdamConfig config;
    std::uint64_t step = 0;
    std::map<std::string, std::vector<double>> m;
    std::map<std::string, std::vector<double>> v;
};

// One bias-corrected Adam update over every requires_grad parameter.
// Gradients are consumed as-is; call zero_grad afterwards.
// Throws NumericError on a non-finite gradient, naming the parameter.
void adam_step(std::vector<std::pair<std::string, Tensor>>& params, AdamState& state);

}  // namespace mvcc
