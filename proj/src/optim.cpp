#include "nrf/optim.hpp"

#include "nrf/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace nrf {

template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state,
               const AdamConfig& cfg, const std::string& label) {
    if (params.size() != grads.size())
        throw std::invalid_argument("adam_step: parameter/gradient size mismatch");
    if (state.m.size() != params.size()) state.init(params.size());
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (!std::isfinite(grads[i]))
            throw std::runtime_error("adam_step: non-finite gradient at " + label + "[" +
                                     std::to_string(i) + "]");
    state.step += 1;
    const T corr1 = T(1) / (T(1) - static_cast<T>(std::pow(cfg.beta1, static_cast<double>(state.step))));
    const T corr2 = T(1) / (T(1) - static_cast<T>(std::pow(cfg.beta2, static_cast<double>(state.step))));
    kern::adam_update(params.data(), grads.data(), state.m.data(), state.v.data(), params.size(),
                      static_cast<T>(cfg.lr), static_cast<T>(cfg.beta1), static_cast<T>(cfg.beta2),
                      static_cast<T>(cfg.eps), corr1, corr2);
}

template void adam_step<float>(std::span<float>, std::span<const float>, AdamState<float>&,
                               const AdamConfig&, const std::string&);
template void adam_step<double>(std::span<double>, std::span<const double>, AdamState<double>&,
                                const AdamConfig&, const std::string&);

}  // namespace nrf
