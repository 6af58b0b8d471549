#pragma once

#include "nrf/vec.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace nrf {

// Octave counts for the sin/cos feature stacks. gamma(v) carries no raw
// identity term, so each input dimension expands to 2*L values.
struct EncodingConfig {
    int l_pos = 10;
    int l_dir = 4;
    int l_normal = 4;

    int pos_dim() const { return 6 * l_pos; }
    int dir_dim() const { return 6 * l_dir; }
    int normal_dim() const { return 6 * l_normal; }

    void validate() const;
    bool operator==(const EncodingConfig&) const = default;
};

struct FieldArch {
    int trunk_layers = 8;
    int trunk_width = 256;
    bool use_view_dir = true;    // feed gamma(d) at the injection layer
    bool use_normals = true;     // feed gamma(n_ps) at the injection layer

    void validate() const;
    bool operator==(const FieldArch&) const = default;
};

// gamma(v) = [sin(2^0 v), cos(2^0 v), ..., sin(2^{L-1} v), cos(2^{L-1} v)],
// blocked per octave. out.size() must equal 2 * L * v.size().
template <typename T>
void fourier_encode(std::span<const T> v, int octaves, std::span<T> out);

template <typename T>
void fourier_encode3(const Vec3<T>& v, int octaves, T* out);

// One radiance-field network: trunk of fully-connected ReLU layers on the
// position encoding, a linear density head off the last trunk layer, and a
// color branch whose injection layer receives the trunk features concatenated
// with the direction/normal encodings.
template <typename T>
struct FieldParamsT {
    struct Block {
        std::size_t offset = 0;
        int rows = 0, cols = 0;  // weight rows x cols; bias stored right after
        std::size_t weight_count() const { return static_cast<std::size_t>(rows) * cols; }
        std::size_t total() const { return weight_count() + cols; }
    };

    EncodingConfig enc;
    FieldArch arch;
    std::vector<Block> trunk;   // trunk[0].rows == enc.pos_dim()
    Block sigma_head;           // trunk_width -> 1
    Block inject;               // trunk_width (+dir)(+normal) -> trunk_width
    Block color_head;           // trunk_width -> 3
    std::vector<T> values;      // all weights and biases, flat

    int inject_in_dim() const {
        return arch.trunk_width + (arch.use_view_dir ? enc.dir_dim() : 0) +
               (arch.use_normals ? enc.normal_dim() : 0);
    }
    const T* w(const Block& b) const { return values.data() + b.offset; }
    T* w(const Block& b) { return values.data() + b.offset; }
    const T* bias(const Block& b) const { return values.data() + b.offset + b.weight_count(); }
    T* bias(const Block& b) { return values.data() + b.offset + b.weight_count(); }
};

using FieldParams = FieldParamsT<float>;

// Fan-in scaled uniform init, deterministic in the seed. Biases start at 0.
template <typename T>
FieldParamsT<T> init_field(const EncodingConfig& enc, const FieldArch& arch, std::uint64_t seed);

struct FieldOutput {
    double sigma = 0;   // relu(density head) >= 0
    Vec3d color;        // sigmoid(color head), per channel in [0,1]
};

// Activations retained by the batched forward pass for the exact backward
// pass. Gradients accumulate per batch row in row order.
template <typename T>
struct ForwardCache {
    int m = 0;
    const T* input = nullptr;               // x_enc rows; must outlive backward
    std::vector<std::vector<T>> trunk_act;  // post-ReLU, one per trunk layer
    std::vector<T> inject_in;               // [trunk_out | d_enc | n_enc]
    std::vector<T> inject_act;              // post-ReLU
    std::vector<T> sigma;                   // post-ReLU density
    std::vector<T> color;                   // post-sigmoid
};

// x_enc: m rows of pos_dim; d_enc: m rows of dir_dim (ignored when the arch
// disables it; may be null then); n_enc likewise. sigma: m values; color: m*3.
template <typename T>
void field_forward(const FieldParamsT<T>& params, const T* x_enc, const T* d_enc, const T* n_enc,
                   int m, T* sigma, T* color, ForwardCache<T>* cache);

// Density-only forward (the density head precedes the injection layer).
template <typename T>
void field_forward_density(const FieldParamsT<T>& params, const T* x_enc, int m, T* sigma);

// Accumulates d(loss)/d(params) into grad (same layout as params.values)
// given upstream gradients on sigma and color.
template <typename T>
void field_backward(const FieldParamsT<T>& params, const ForwardCache<T>& cache,
                    const T* dsigma, const T* dcolor, T* grad);

// Single-sample convenience wrapper; validates encoding dimensions.
template <typename T>
FieldOutput eval_field(const FieldParamsT<T>& params, std::span<const T> x_enc,
                       std::span<const T> d_enc, std::span<const T> n_enc);

// Both networks plus their configuration, as written by the trainer.
struct Checkpoint {
    FieldParams coarse;
    FieldParams fine;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace nrf
