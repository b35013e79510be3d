#include "mvcc/optim.hpp"

#include <cmath>

namespace mvcc {

void adam_step(std::vector<std::pair<std::string, Tensor>>& params, AdamState& state) {
    state.step += 1;
    const AdamConfig& cfg = state.config;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (auto& [name, param] : params) {
        if (!param.requires_grad()) continue;
        auto g = param.grad();
        auto w = param.values();
        auto& m = state.m[name];
        auto& v = state.v[name];
        if (m.empty()) m.assign(w.size(), 0.0);
        if (v.empty()) v.assign(w.size(), 0.0);
        if (m.size() != w.size() || v.size() != w.size()) {
            throw ConfigError("adam_step: stale moment buffers for parameter '" + name + "'");
        }
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (!std::isfinite(g[i])) {
                throw NumericError("adam_step: non-finite gradient in parameter '" + name +
                                   "' at element " + std::to_string(i));
            }
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

}  // namespace mvcc
