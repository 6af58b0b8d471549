#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace nrf {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
struct AdamState {
    std::vector<T> m, v;
    std::int64_t step = 0;

    void init(std::size_t n) {
        m.assign(n, T(0));
        v.assign(n, T(0));
        step = 0;
    }
};

// Bias-corrected Adam update. Throws std::runtime_error naming the parameter
// index (and `label`) on non-finite gradients.
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state,
               const AdamConfig& cfg, const std::string& label = "params");

}  // namespace nrf
