#include "nrf/neural_field.hpp"

#include "nrf/kernels.hpp"
#include "nrf/rng.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace nrf {

void EncodingConfig::validate() const {
    if (l_pos < 1 || l_dir < 1 || l_normal < 1)
        throw std::invalid_argument("encoding: octave counts must be >= 1");
}

void FieldArch::validate() const {
    if (trunk_layers < 1 || trunk_width < 1)
        throw std::invalid_argument("field arch: trunk must have >= 1 layer and >= 1 channel");
}

template <typename T>
void fourier_encode(std::span<const T> v, int octaves, std::span<T> out) {
    const std::size_t k = v.size();
    if (out.size() != 2 * static_cast<std::size_t>(octaves) * k)
        throw std::invalid_argument("fourier_encode: output size must be 2*L*dim");
    T* dst = out.data();
    T freq = T(1);
    for (int o = 0; o < octaves; ++o, freq *= T(2)) {
        for (std::size_t i = 0; i < k; ++i) dst[i] = std::sin(freq * v[i]);
        for (std::size_t i = 0; i < k; ++i) dst[k + i] = std::cos(freq * v[i]);
        dst += 2 * k;
    }
}

template <typename T>
void fourier_encode3(const Vec3<T>& v, int octaves, T* out) {
    const T in[3] = {v.x, v.y, v.z};
    fourier_encode<T>(std::span<const T>(in, 3), octaves,
                      std::span<T>(out, static_cast<std::size_t>(6) * octaves));
}

namespace {

template <typename T>
void build_layout(FieldParamsT<T>& p) {
    p.enc.validate();
    p.arch.validate();
    std::size_t off = 0;
    auto add = [&off](int rows, int cols) {
        typename FieldParamsT<T>::Block b;
        b.offset = off;
        b.rows = rows;
        b.cols = cols;
        off += b.total();
        return b;
    };
    p.trunk.clear();
    int in_dim = p.enc.pos_dim();
    for (int l = 0; l < p.arch.trunk_layers; ++l) {
        p.trunk.push_back(add(in_dim, p.arch.trunk_width));
        in_dim = p.arch.trunk_width;
    }
    p.sigma_head = add(p.arch.trunk_width, 1);
    p.inject = add(p.inject_in_dim(), p.arch.trunk_width);
    p.color_head = add(p.arch.trunk_width, 3);
    p.values.assign(off, T(0));
}

template <typename T>
void sigmoid_inplace(T* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] = T(1) / (T(1) + std::exp(-x[i]));
}

}  // namespace

template <typename T>
FieldParamsT<T> init_field(const EncodingConfig& enc, const FieldArch& arch, std::uint64_t seed) {
    FieldParamsT<T> p;
    p.enc = enc;
    p.arch = arch;
    build_layout(p);
    std::uint64_t block_id = 0;
    auto fill = [&](const typename FieldParamsT<T>::Block& b) {
        Rng rng(seed, 0x66696c64ull, block_id++);
        const T scale = T(1) / std::sqrt(static_cast<T>(b.rows));
        T* w = p.w(b);
        for (std::size_t i = 0; i < b.weight_count(); ++i)
            w[i] = static_cast<T>(rng.uniform(-1.0, 1.0)) * scale;
        // biases stay zero
    };
    for (const auto& b : p.trunk) fill(b);
    fill(p.sigma_head);
    fill(p.inject);
    fill(p.color_head);
    return p;
}

template <typename T>
void field_forward(const FieldParamsT<T>& params, const T* x_enc, const T* d_enc, const T* n_enc,
                   int m, T* sigma, T* color, ForwardCache<T>* cache) {
    const int width = params.arch.trunk_width;
    const int dir_dim = params.arch.use_view_dir ? params.enc.dir_dim() : 0;
    const int nrm_dim = params.arch.use_normals ? params.enc.normal_dim() : 0;
    if (dir_dim > 0 && d_enc == nullptr)
        throw std::invalid_argument("field_forward: direction encoding required by architecture");
    if (nrm_dim > 0 && n_enc == nullptr)
        throw std::invalid_argument("field_forward: normal encoding required by architecture");

    ForwardCache<T> local;
    ForwardCache<T>& c = cache ? *cache : local;
    c.m = m;
    c.input = x_enc;
    c.trunk_act.resize(params.trunk.size());

    const T* in = x_enc;
    for (std::size_t l = 0; l < params.trunk.size(); ++l) {
        const auto& b = params.trunk[l];
        c.trunk_act[l].resize(static_cast<std::size_t>(m) * width);
        T* out = c.trunk_act[l].data();
        kern::gemm(in, params.w(b), out, m, b.cols, b.rows, false);
        kern::add_bias_rows(out, params.bias(b), m, b.cols);
        kern::relu(out, static_cast<std::size_t>(m) * b.cols);
        in = out;
    }
    const T* trunk_out = in;

    // Density head (pre-injection by construction).
    c.sigma.resize(m);
    kern::gemm(trunk_out, params.w(params.sigma_head), c.sigma.data(), m, 1, width, false);
    kern::add_bias_rows(c.sigma.data(), params.bias(params.sigma_head), m, 1);
    kern::relu(c.sigma.data(), m);
    std::memcpy(sigma, c.sigma.data(), sizeof(T) * m);

    // Injection layer input: [trunk features | gamma(d) | gamma(n)].
    const int inj_in = params.inject_in_dim();
    c.inject_in.resize(static_cast<std::size_t>(m) * inj_in);
    for (int i = 0; i < m; ++i) {
        T* row = c.inject_in.data() + static_cast<std::size_t>(i) * inj_in;
        std::memcpy(row, trunk_out + static_cast<std::size_t>(i) * width, sizeof(T) * width);
        int off = width;
        if (dir_dim > 0) {
            std::memcpy(row + off, d_enc + static_cast<std::size_t>(i) * dir_dim, sizeof(T) * dir_dim);
            off += dir_dim;
        }
        if (nrm_dim > 0)
            std::memcpy(row + off, n_enc + static_cast<std::size_t>(i) * nrm_dim, sizeof(T) * nrm_dim);
    }

    c.inject_act.resize(static_cast<std::size_t>(m) * width);
    kern::gemm(c.inject_in.data(), params.w(params.inject), c.inject_act.data(), m, width, inj_in, false);
    kern::add_bias_rows(c.inject_act.data(), params.bias(params.inject), m, width);
    kern::relu(c.inject_act.data(), static_cast<std::size_t>(m) * width);

    c.color.resize(static_cast<std::size_t>(m) * 3);
    kern::gemm(c.inject_act.data(), params.w(params.color_head), c.color.data(), m, 3, width, false);
    kern::add_bias_rows(c.color.data(), params.bias(params.color_head), m, 3);
    sigmoid_inplace(c.color.data(), static_cast<std::size_t>(m) * 3);
    std::memcpy(color, c.color.data(), sizeof(T) * m * 3);
}

template <typename T>
void field_forward_density(const FieldParamsT<T>& params, const T* x_enc, int m, T* sigma) {
    const int width = params.arch.trunk_width;
    std::vector<T> a(static_cast<std::size_t>(m) * width), b_buf;
    const T* in = x_enc;
    T* out = a.data();
    std::vector<T> second(static_cast<std::size_t>(m) * width);
    T* other = second.data();
    for (std::size_t l = 0; l < params.trunk.size(); ++l) {
        const auto& b = params.trunk[l];
        kern::gemm(in, params.w(b), out, m, b.cols, b.rows, false);
        kern::add_bias_rows(out, params.bias(b), m, b.cols);
        kern::relu(out, static_cast<std::size_t>(m) * b.cols);
        in = out;
        std::swap(out, other);
    }
    kern::gemm(in, params.w(params.sigma_head), sigma, m, 1, width, false);
    kern::add_bias_rows(sigma, params.bias(params.sigma_head), m, 1);
    kern::relu(sigma, m);
}

template <typename T>
void field_backward(const FieldParamsT<T>& params, const ForwardCache<T>& cache,
                    const T* dsigma, const T* dcolor, T* grad) {
    const int m = cache.m;
    const int width = params.arch.trunk_width;
    const int inj_in = params.inject_in_dim();

    std::vector<T> scratch_t;  // transposed weight/input buffers
    auto gemm_at_b = [&](const T* a, const T* g, T* out, int rows_a, int cols_a, int cols_g,
                         bool accumulate) {
        // out(cols_a x cols_g) += a(rows_a x cols_a)^T * g(rows_a x cols_g)
        scratch_t.resize(static_cast<std::size_t>(rows_a) * cols_a);
        kern::transpose(a, scratch_t.data(), rows_a, cols_a);
        kern::gemm(scratch_t.data(), g, out, cols_a, cols_g, rows_a, accumulate);
    };
    std::vector<T> wt;
    auto gemm_g_wt = [&](const T* g, const typename FieldParamsT<T>::Block& b, T* out, int rows_g) {
        // out(rows_g x b.rows) = g(rows_g x b.cols) * W^T
        wt.resize(b.weight_count());
        kern::transpose(params.w(b), wt.data(), b.rows, b.cols);
        kern::gemm(g, wt.data(), out, rows_g, b.rows, b.cols, false);
    };

    // Color head: color = sigmoid(z).
    std::vector<T> dz_color(static_cast<std::size_t>(m) * 3);
    for (std::size_t i = 0; i < dz_color.size(); ++i) {
        const T cvl = cache.color[i];
        dz_color[i] = dcolor[i] * cvl * (T(1) - cvl);
    }
    gemm_at_b(cache.inject_act.data(), dz_color.data(), grad + params.color_head.offset,
              m, width, 3, true);
    kern::col_sums(dz_color.data(), grad + params.color_head.offset + params.color_head.weight_count(),
                   m, 3, true);

    // Injection layer.
    std::vector<T> dinject(static_cast<std::size_t>(m) * width);
    gemm_g_wt(dz_color.data(), params.color_head, dinject.data(), m);
    kern::relu_mask_backward(dinject.data(), cache.inject_act.data(),
                             static_cast<std::size_t>(m) * width);
    gemm_at_b(cache.inject_in.data(), dinject.data(), grad + params.inject.offset, m, inj_in, width,
              true);
    kern::col_sums(dinject.data(), grad + params.inject.offset + params.inject.weight_count(),
                   m, width, true);
    std::vector<T> dinject_in(static_cast<std::size_t>(m) * inj_in);
    gemm_g_wt(dinject.data(), params.inject, dinject_in.data(), m);

    // Density head: sigma = relu(z).
    std::vector<T> dz_sigma(m);
    std::memcpy(dz_sigma.data(), dsigma, sizeof(T) * m);
    kern::relu_mask_backward(dz_sigma.data(), cache.sigma.data(), m);
    const T* trunk_out = cache.trunk_act.back().data();
    gemm_at_b(trunk_out, dz_sigma.data(), grad + params.sigma_head.offset, m, width, 1, true);
    kern::col_sums(dz_sigma.data(), grad + params.sigma_head.offset + params.sigma_head.weight_count(),
                   m, 1, true);

    // Gradient reaching the last trunk layer: injection slice + density head.
    std::vector<T> dtrunk(static_cast<std::size_t>(m) * width);
    for (int i = 0; i < m; ++i)
        std::memcpy(dtrunk.data() + static_cast<std::size_t>(i) * width,
                    dinject_in.data() + static_cast<std::size_t>(i) * inj_in, sizeof(T) * width);
    {
        wt.resize(params.sigma_head.weight_count());
        kern::transpose(params.w(params.sigma_head), wt.data(), params.sigma_head.rows, 1);
        kern::gemm(dz_sigma.data(), wt.data(), dtrunk.data(), m, width, 1, true);
    }

    // Trunk layers, last to first. Layer 0 consumes the position encoding,
    // which the cache references (the caller keeps it alive until here).
    std::vector<T> dnext;
    for (int l = static_cast<int>(params.trunk.size()) - 1; l >= 0; --l) {
        const auto& b = params.trunk[l];
        kern::relu_mask_backward(dtrunk.data(), cache.trunk_act[l].data(),
                                 static_cast<std::size_t>(m) * width);
        const T* layer_in = (l == 0) ? cache.input : cache.trunk_act[l - 1].data();
        gemm_at_b(layer_in, dtrunk.data(), grad + b.offset, m, b.rows, b.cols, true);
        kern::col_sums(dtrunk.data(), grad + b.offset + b.weight_count(), m, b.cols, true);
        if (l > 0) {
            dnext.resize(static_cast<std::size_t>(m) * b.rows);
            gemm_g_wt(dtrunk.data(), b, dnext.data(), m);
            dtrunk.swap(dnext);
        }
    }
}

template <typename T>
FieldOutput eval_field(const FieldParamsT<T>& params, std::span<const T> x_enc,
                       std::span<const T> d_enc, std::span<const T> n_enc) {
    if (static_cast<int>(x_enc.size()) != params.enc.pos_dim())
        throw std::invalid_argument("eval_field: position encoding dim mismatch");
    if (params.arch.use_view_dir && static_cast<int>(d_enc.size()) != params.enc.dir_dim())
        throw std::invalid_argument("eval_field: direction encoding dim mismatch");
    if (params.arch.use_normals && static_cast<int>(n_enc.size()) != params.enc.normal_dim())
        throw std::invalid_argument("eval_field: normal encoding dim mismatch");
    T sigma;
    T color[3];
    field_forward<T>(params, x_enc.data(), d_enc.data(), n_enc.data(), 1, &sigma, color, nullptr);
    return FieldOutput{static_cast<double>(sigma), Vec3d{color[0], color[1], color[2]}};
}

namespace {

constexpr char kCkptMagic[8] = {'N', 'R', 'F', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCkptVersion = 1;

void write_net(std::ofstream& f, const FieldParams& p) {
    const std::int32_t meta[7] = {p.enc.l_pos, p.enc.l_dir, p.enc.l_normal, p.arch.trunk_layers,
                                  p.arch.trunk_width, p.arch.use_view_dir ? 1 : 0,
                                  p.arch.use_normals ? 1 : 0};
    f.write(reinterpret_cast<const char*>(meta), sizeof(meta));
    const std::uint64_t count = p.values.size();
    f.write(reinterpret_cast<const char*>(&count), sizeof(count));
    f.write(reinterpret_cast<const char*>(p.values.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
}

FieldParams read_net(std::ifstream& f, const std::string& path) {
    std::int32_t meta[7];
    if (!f.read(reinterpret_cast<char*>(meta), sizeof(meta)))
        throw std::runtime_error(path + ": truncated checkpoint header");
    EncodingConfig enc{meta[0], meta[1], meta[2]};
    FieldArch arch{meta[3], meta[4], meta[5] != 0, meta[6] != 0};
    FieldParams p = init_field<float>(enc, arch, 0);
    std::uint64_t count;
    if (!f.read(reinterpret_cast<char*>(&count), sizeof(count)))
        throw std::runtime_error(path + ": truncated checkpoint");
    if (count != p.values.size())
        throw std::runtime_error(path + ": checkpoint weight count does not match architecture");
    if (!f.read(reinterpret_cast<char*>(p.values.data()),
                static_cast<std::streamsize>(count * sizeof(float))))
        throw std::runtime_error(path + ": truncated checkpoint weights");
    return p;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error(path + ": cannot open for writing");
    f.write(kCkptMagic, sizeof(kCkptMagic));
    f.write(reinterpret_cast<const char*>(&kCkptVersion), sizeof(kCkptVersion));
    write_net(f, ckpt.coarse);
    write_net(f, ckpt.fine);
    if (!f) throw std::runtime_error(path + ": write error");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error(path + ": cannot open");
    char magic[8];
    if (!f.read(magic, sizeof(magic)) || std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0)
        throw std::runtime_error(path + ": not a checkpoint file");
    std::uint32_t version;
    if (!f.read(reinterpret_cast<char*>(&version), sizeof(version)) || version != kCkptVersion)
        throw std::runtime_error(path + ": unsupported checkpoint version");
    Checkpoint ckpt;
    ckpt.coarse = read_net(f, path);
    ckpt.fine = read_net(f, path);
    return ckpt;
}

template void fourier_encode<float>(std::span<const float>, int, std::span<float>);
template void fourier_encode<double>(std::span<const double>, int, std::span<double>);
template void fourier_encode3<float>(const Vec3<float>&, int, float*);
template void fourier_encode3<double>(const Vec3<double>&, int, double*);
template FieldParamsT<float> init_field<float>(const EncodingConfig&, const FieldArch&, std::uint64_t);
template FieldParamsT<double> init_field<double>(const EncodingConfig&, const FieldArch&, std::uint64_t);
template void field_forward<float>(const FieldParamsT<float>&, const float*, const float*,
                                   const float*, int, float*, float*, ForwardCache<float>*);
template void field_forward<double>(const FieldParamsT<double>&, const double*, const double*,
                                    const double*, int, double*, double*, ForwardCache<double>*);
template void field_forward_density<float>(const FieldParamsT<float>&, const float*, int, float*);
template void field_forward_density<double>(const FieldParamsT<double>&, const double*, int, double*);
template void field_backward<float>(const FieldParamsT<float>&, const ForwardCache<float>&,
                                    const float*, const float*, float*);
template void field_backward<double>(const FieldParamsT<double>&, const ForwardCache<double>&,
                                     const double*, const double*, double*);
template FieldOutput eval_field<float>(const FieldParamsT<float>&, std::span<const float>,
                                       std::span<const float>, std::span<const float>);
template FieldOutput eval_field<double>(const FieldParamsT<double>&, std::span<const double>,
                                        std::span<const double>, std::span<const double>);

}  // namespace nrf
