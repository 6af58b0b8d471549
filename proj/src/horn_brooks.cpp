#include "nrf/photometric_stereo.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace nrf {

void write_depth_map(const std::string& path, const DepthMap& dmap) {
    write_pfm(path, dmap.depth);
}

DepthMap integrate_normals_horn_brooks(const NormalMap& nmap, const MaskImage& mask,
                                       int iterations, double tolerance,
                                       double spacing, double min_nz) {
    const int w = nmap.width, h = nmap.height;
    if (mask.size() != static_cast<std::size_t>(w) * h)
        throw std::invalid_argument("integrate_normals: mask dimension mismatch");
    if (iterations < 1 || !(spacing > 0))
        throw std::invalid_argument("integrate_normals: bad iterations or spacing");

    DepthMap out;
    out.width = w;
    out.height = h;
    out.depth = ImageF(w, h, 1);
    out.valid.assign(static_cast<std::size_t>(w) * h, 0);

    std::vector<double> p(static_cast<std::size_t>(w) * h, 0.0);
    std::vector<double> q(p.size(), 0.0);
    std::size_t n_valid = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t pix = static_cast<std::size_t>(y) * w + x;
            if (!mask[pix] || !nmap.valid[pix]) continue;
            const Vec3d n = nmap.at(x, y);
            if (std::abs(n.z) <= min_nz) continue;  // excluded, reported via valid mask
            p[pix] = -n.x / n.z;
            q[pix] = -n.y / n.z;
            out.valid[pix] = 1;
            ++n_valid;
        }
    }
    if (n_valid == 0) return out;

    // Gauss-Seidel with over-relaxation on the discrete integrability system:
    // neighboring depths should differ by the midpoint gradient along the edge.
    std::vector<double> z(p.size(), 0.0);
    const double omega = 1.9;
    for (int it = 0; it < iterations; ++it) {
        double max_change = 0;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t u = static_cast<std::size_t>(y) * w + x;
                if (!out.valid[u]) continue;
                double sum = 0;
                int deg = 0;
                if (x + 1 < w && out.valid[u + 1]) {
                    sum += z[u + 1] - spacing * 0.5 * (p[u] + p[u + 1]);
                    ++deg;
                }
                if (x > 0 && out.valid[u - 1]) {
                    sum += z[u - 1] + spacing * 0.5 * (p[u] + p[u - 1]);
                    ++deg;
                }
                if (y + 1 < h && out.valid[u + w]) {
                    sum += z[u + w] - spacing * 0.5 * (q[u] + q[u + w]);
                    ++deg;
                }
                if (y > 0 && out.valid[u - w]) {
                    sum += z[u - w] + spacing * 0.5 * (q[u] + q[u - w]);
                    ++deg;
                }
                if (deg == 0) continue;
                const double z_new = sum / deg;
                const double change = omega * (z_new - z[u]);
                z[u] += change;
                max_change = std::max(max_change, std::abs(change));
            }
        }
        if (max_change < tolerance) break;
    }

    double mean = 0;
    for (std::size_t i = 0; i < z.size(); ++i)
        if (out.valid[i]) mean += z[i];
    mean /= static_cast<double>(n_valid);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t u = static_cast<std::size_t>(y) * w + x;
            if (out.valid[u]) out.depth.at(x, y, 0) = static_cast<float>(z[u] - mean);
        }
    return out;
}

void rescale_depth_to_unit(DepthMap& dmap) {
    float lo = std::numeric_limits<float>::infinity();
    float hi = -std::numeric_limits<float>::infinity();
    for (std::size_t i = 0; i < dmap.valid.size(); ++i)
        if (dmap.valid[i]) {
            lo = std::min(lo, dmap.depth.data[i]);
            hi = std::max(hi, dmap.depth.data[i]);
        }
    if (!(hi > lo)) {
        for (std::size_t i = 0; i < dmap.valid.size(); ++i)
            if (dmap.valid[i]) dmap.depth.data[i] = 0.0f;
        return;
    }
    const float scale = 2.0f / (hi - lo);
    for (std::size_t i = 0; i < dmap.valid.size(); ++i)
        if (dmap.valid[i]) dmap.depth.data[i] = (dmap.depth.data[i] - lo) * scale - 1.0f;
}

}  // namespace nrf
