#include "nrf/volume_renderer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace nrf {

template <typename T>
void RaySamples<T>::rebuild_deltas() {
    deltas.resize(ts.size());
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) deltas[i] = ts[i + 1] - ts[i];
    if (!ts.empty()) deltas.back() = t_far - ts.back();
}

template <typename T>
RaySamples<T> stratified_sample(T t_near, T t_far, int n, Rng& rng) {
    if (n < 1) throw std::invalid_argument("stratified_sample: n must be >= 1");
    if (t_far < t_near) throw std::invalid_argument("stratified_sample: t_far < t_near");
    RaySamples<T> s;
    s.t_near = t_near;
    s.t_far = t_far;
    s.ts.resize(n);
    const T span = t_far - t_near;
    for (int i = 0; i < n; ++i)
        s.ts[i] = t_near + span * (static_cast<T>(i) + static_cast<T>(rng.uniform())) / static_cast<T>(n);
    s.rebuild_deltas();
    return s;
}

template <typename T>
RenderOutput<T> composite(std::span<const T> sigmas, const T* colors, const RaySamples<T>& samples) {
    const std::size_t n = sigmas.size();
    if (n != samples.ts.size()) throw std::invalid_argument("composite: sigma/sample count mismatch");
    RenderOutput<T> out;
    out.weights.resize(n);
    T trans = T(1);
    for (std::size_t i = 0; i < n; ++i) {
        if (sigmas[i] < 0) throw std::invalid_argument("composite: negative sigma");
        const T e = std::exp(-sigmas[i] * samples.deltas[i]);
        const T alpha = T(1) - e;
        const T w = trans * alpha;
        out.weights[i] = w;
        out.color.x += w * colors[i * 3 + 0];
        out.color.y += w * colors[i * 3 + 1];
        out.color.z += w * colors[i * 3 + 2];
        out.expected_depth += w * samples.ts[i];
        trans *= e;
    }
    out.transmittance = trans;
    return out;
}

template <typename T>
void composite_backward(std::span<const T> sigmas, const T* colors, const RaySamples<T>& samples,
                        const Vec3<T>& dcolor, T* dsigmas, T* dcolors) {
    const std::size_t n = sigmas.size();
    if (n == 0) return;
    std::vector<T> e(n), alpha(n), trans(n);
    T t_run = T(1);
    for (std::size_t i = 0; i < n; ++i) {
        e[i] = std::exp(-sigmas[i] * samples.deltas[i]);
        alpha[i] = T(1) - e[i];
        trans[i] = t_run;
        t_run *= e[i];
    }
    // Suffix accumulator: A_i = sum_{k>i} alpha_k c_k prod_{i<j<k} e_j, so
    // dC/dalpha_i = T_i (c_i - A_i); dalpha_i/dsigma_i = delta_i e_i.
    Vec3<T> acc{};
    for (std::size_t ii = n; ii-- > 0;) {
        const Vec3<T> c{colors[ii * 3 + 0], colors[ii * 3 + 1], colors[ii * 3 + 2]};
        const T w = trans[ii] * alpha[ii];
        dcolors[ii * 3 + 0] = w * dcolor.x;
        dcolors[ii * 3 + 1] = w * dcolor.y;
        dcolors[ii * 3 + 2] = w * dcolor.z;
        const Vec3<T> dalpha_vec = (c - acc) * trans[ii];
        const T dalpha = dalpha_vec.x * dcolor.x + dalpha_vec.y * dcolor.y + dalpha_vec.z * dcolor.z;
        dsigmas[ii] = dalpha * samples.deltas[ii] * e[ii];
        acc = c * alpha[ii] + acc * e[ii];
    }
}

template <typename T>
std::vector<T> hierarchical_resample(std::span<const T> weights, const RaySamples<T>& coarse,
                                     int n_fine, Rng& rng, bool* fell_back) {
    if (n_fine < 1) throw std::invalid_argument("hierarchical_resample: n_fine must be >= 1");
    if (weights.size() != coarse.ts.size())
        throw std::invalid_argument("hierarchical_resample: weight/sample count mismatch");
    if (fell_back) *fell_back = false;

    double total = 0;
    for (T w : weights) total += static_cast<double>(w);
    std::vector<T> out(n_fine);
    if (total <= 0) {
        if (fell_back) *fell_back = true;
        for (int i = 0; i < n_fine; ++i)
            out[i] = coarse.t_near +
                     static_cast<T>(rng.uniform()) * (coarse.t_far - coarse.t_near);
        std::sort(out.begin(), out.end());
        return out;
    }

    // CDF over the coarse bins [ts[i], ts[i] + delta_i].
    std::vector<double> cdf(weights.size() + 1, 0.0);
    for (std::size_t i = 0; i < weights.size(); ++i)
        cdf[i + 1] = cdf[i] + static_cast<double>(weights[i]) / total;
    cdf.back() = 1.0;

    for (int k = 0; k < n_fine; ++k) {
        const double u = rng.uniform();
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        std::size_t bin = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, it - cdf.begin() - 1));
        if (bin >= weights.size()) bin = weights.size() - 1;
        const double mass = cdf[bin + 1] - cdf[bin];
        const double frac = mass > 0 ? (u - cdf[bin]) / mass : 0.5;
        out[k] = coarse.ts[bin] + coarse.deltas[bin] * static_cast<T>(frac);
    }
    std::sort(out.begin(), out.end());
    return out;
}

template <typename T>
RaySamples<T> merge_samples(const RaySamples<T>& coarse, std::span<const T> fine_ts) {
    RaySamples<T> all;
    all.t_near = coarse.t_near;
    all.t_far = coarse.t_far;
    all.ts.resize(coarse.ts.size() + fine_ts.size());
    std::merge(coarse.ts.begin(), coarse.ts.end(), fine_ts.begin(), fine_ts.end(), all.ts.begin());
    all.rebuild_deltas();
    return all;
}

template <typename T>
void encode_positions(const Ray& ray, std::span<const T> ts, int l_pos, T* out_rows) {
    const int dim = 6 * l_pos;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const Vec3d p = ray.at(static_cast<double>(ts[i]));
        fourier_encode3(Vec3<T>{static_cast<T>(p.x), static_cast<T>(p.y), static_cast<T>(p.z)},
                        l_pos, out_rows + i * dim);
    }
}

namespace {

template <typename T>
void broadcast_rows(const T* row, int dim, int m, T* out) {
    for (int i = 0; i < m; ++i) std::memcpy(out + static_cast<std::size_t>(i) * dim, row, sizeof(T) * dim);
}

}  // namespace

template <typename T>
RayRender<T> render_ray(const FieldParamsT<T>& coarse, const FieldParamsT<T>& fine, const Ray& ray,
                        const Vec3d& n_ps_world, const RenderConfig& cfg, Rng& rng) {
    if (coarse.enc != fine.enc)
        throw std::invalid_argument("render_ray: coarse/fine encoding configs differ");
    const int l_pos = coarse.enc.l_pos;
    const int pos_dim = coarse.enc.pos_dim();
    const int dir_dim = coarse.enc.dir_dim();
    const int nrm_dim = coarse.enc.normal_dim();

    std::vector<T> d_row(dir_dim), n_row(nrm_dim);
    fourier_encode3(Vec3<T>{static_cast<T>(ray.direction.x), static_cast<T>(ray.direction.y),
                            static_cast<T>(ray.direction.z)},
                    coarse.enc.l_dir, d_row.data());
    fourier_encode3(Vec3<T>{static_cast<T>(n_ps_world.x), static_cast<T>(n_ps_world.y),
                            static_cast<T>(n_ps_world.z)},
                    coarse.enc.l_normal, n_row.data());

    RayRender<T> rr;

    // Coarse pass.
    RaySamples<T> cs = stratified_sample<T>(static_cast<T>(ray.t_near), static_cast<T>(ray.t_far),
                                            cfg.n_coarse, rng);
    {
        const int m = cfg.n_coarse;
        std::vector<T> x_enc(static_cast<std::size_t>(m) * pos_dim);
        std::vector<T> d_enc(static_cast<std::size_t>(m) * dir_dim);
        std::vector<T> n_enc(static_cast<std::size_t>(m) * nrm_dim);
        encode_positions(ray, std::span<const T>(cs.ts), l_pos, x_enc.data());
        broadcast_rows(d_row.data(), dir_dim, m, d_enc.data());
        broadcast_rows(n_row.data(), nrm_dim, m, n_enc.data());
        std::vector<T> sigma(m), color(static_cast<std::size_t>(m) * 3);
        field_forward<T>(coarse, x_enc.data(), d_enc.data(), n_enc.data(), m, sigma.data(),
                      color.data(), nullptr);
        rr.out_coarse = composite<T>(sigma, color.data(), cs);
        rr.color_coarse = rr.out_coarse.color;
    }

    // Fine pass over the union of samples (coarse-only when n_fine == 0).
    std::vector<T> fine_ts;
    if (cfg.n_fine > 0)
        fine_ts = hierarchical_resample<T>(rr.out_coarse.weights, cs, cfg.n_fine, rng,
                                           &rr.resample_fallback);
    rr.fine_samples = merge_samples<T>(cs, fine_ts);
    {
        const int m = static_cast<int>(rr.fine_samples.ts.size());
        std::vector<T> x_enc(static_cast<std::size_t>(m) * pos_dim);
        std::vector<T> d_enc(static_cast<std::size_t>(m) * dir_dim);
        std::vector<T> n_enc(static_cast<std::size_t>(m) * nrm_dim);
        encode_positions(ray, std::span<const T>(rr.fine_samples.ts), l_pos, x_enc.data());
        broadcast_rows(d_row.data(), dir_dim, m, d_enc.data());
        broadcast_rows(n_row.data(), nrm_dim, m, n_enc.data());
        std::vector<T> sigma(m), color(static_cast<std::size_t>(m) * 3);
        field_forward<T>(fine, x_enc.data(), d_enc.data(), n_enc.data(), m, sigma.data(), color.data(),
                      nullptr);
        rr.out_fine = composite<T>(sigma, color.data(), rr.fine_samples);
        rr.color_fine = rr.out_fine.color;
    }
    return rr;
}

#define NRF_INSTANTIATE_RENDERER(T)                                                              \
    template struct RaySamples<T>;                                                               \
    template RaySamples<T> stratified_sample<T>(T, T, int, Rng&);                                \
    template RenderOutput<T> composite<T>(std::span<const T>, const T*, const RaySamples<T>&);   \
    template void composite_backward<T>(std::span<const T>, const T*, const RaySamples<T>&,      \
                                        const Vec3<T>&, T*, T*);                                 \
    template std::vector<T> hierarchical_resample<T>(std::span<const T>, const RaySamples<T>&,   \
                                                     int, Rng&, bool*);                          \
    template RaySamples<T> merge_samples<T>(const RaySamples<T>&, std::span<const T>);           \
    template void encode_positions<T>(const Ray&, std::span<const T>, int, T*);                  \
    template RayRender<T> render_ray<T>(const FieldParamsT<T>&, const FieldParamsT<T>&,          \
                                        const Ray&, const Vec3d&, const RenderConfig&, Rng&);

NRF_INSTANTIATE_RENDERER(float)
NRF_INSTANTIATE_RENDERER(double)

}  // namespace nrf
