#include "nrf/evaluation.hpp"

#include "nrf/parallel.hpp"
#include "nrf/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace nrf {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

ImageF render_view(const Checkpoint& ckpt, const ViewRecord& view, const NormalMap& nmap,
                   const Box3& bounds, const RenderConfig& cfg, std::uint64_t seed) {
    const int w = view.intrinsics.width, h = view.intrinsics.height;
    if (nmap.width != w || nmap.height != h)
        throw std::invalid_argument("render_view: normal map dimension mismatch");
    ImageF img(w, h, 3);
    const double dist = norm(view.pose.translation - bounds.center());
    const double radius = bounds.radius();
    const double t_near = std::max(1e-3, dist - 1.5 * radius);
    const double t_far = dist + 1.5 * radius;

    parallel_chunks(static_cast<std::size_t>(w) * h, 64,
                    [&](std::size_t, std::size_t p0, std::size_t p1) {
        for (std::size_t pix = p0; pix < p1; ++pix) {
            const int x = static_cast<int>(pix % w);
            const int y = static_cast<int>(pix / w);
            const Ray ray = pixel_ray(view.intrinsics, view.pose, {x + 0.5, y + 0.5}, t_near, t_far);
            Vec3d n_world{0, 0, 0};
            if (nmap.valid[pix])
                n_world = camera_normal_to_world(view.pose, normalized(nmap.at(x, y)));
            Rng rng(seed, 0x72656e64ull, pix);
            const RayRender<float> rr =
                render_ray<float>(ckpt.coarse, ckpt.fine, ray, n_world, cfg, rng);
            img.at(x, y, 0) = rr.color_fine.x;
            img.at(x, y, 1) = rr.color_fine.y;
            img.at(x, y, 2) = rr.color_fine.z;
        }
    });
    return img;
}

double psnr(const ImageF& a, const ImageF& b, double peak) {
    if (a.width != b.width || a.height != b.height || a.channels != b.channels)
        throw std::invalid_argument("psnr: image dimension mismatch");
    double mse = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    if (mse == 0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(peak * peak / mse));
}

std::vector<Vec3d> sample_mesh_points(const Mesh& mesh, int n_points, std::uint64_t seed) {
    if (mesh.empty()) throw std::invalid_argument("sample_mesh_points: empty mesh");
    std::vector<double> cum(mesh.triangles.size());
    double total = 0;
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        const Vec3d e1 = mesh.vertices[tri[1]] - mesh.vertices[tri[0]];
        const Vec3d e2 = mesh.vertices[tri[2]] - mesh.vertices[tri[0]];
        total += 0.5 * norm(cross(e1, e2));
        cum[t] = total;
    }
    if (total <= 0) throw std::invalid_argument("sample_mesh_points: zero-area mesh");

    std::vector<Vec3d> pts(n_points);
    Rng rng(seed, 0x6d657368ull);
    for (int i = 0; i < n_points; ++i) {
        const double u = rng.uniform() * total;
        const std::size_t t = std::min<std::size_t>(
            cum.size() - 1, std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
        const auto& tri = mesh.triangles[t];
        // Uniform barycentric draw.
        const double r1 = std::sqrt(rng.uniform());
        const double r2 = rng.uniform();
        const double a = 1.0 - r1, b = r1 * (1.0 - r2), c = r1 * r2;
        pts[i] = mesh.vertices[tri[0]] * a + mesh.vertices[tri[1]] * b + mesh.vertices[tri[2]] * c;
    }
    return pts;
}

namespace {

// Uniform hash grid for nearest-neighbor queries over a fixed point set.
class PointGrid {
public:
    explicit PointGrid(const std::vector<Vec3d>& pts) : pts_(pts) {
        lo_ = hi_ = pts[0];
        for (const Vec3d& p : pts) {
            lo_ = cwise_min(lo_, p);
            hi_ = cwise_max(hi_, p);
        }
        const Vec3d ext = hi_ - lo_;
        // Cap the total cell count near the point count.
        const double max_ext = std::max({ext.x, ext.y, ext.z, 1e-12});
        const int res = std::clamp(static_cast<int>(std::cbrt(static_cast<double>(pts.size()))),
                                   1, 96);
        cell_ = max_ext / res;
        nx_ = dim(ext.x);
        ny_ = dim(ext.y);
        nz_ = dim(ext.z);
        cells_.resize(static_cast<std::size_t>(nx_) * ny_ * nz_);
        for (std::size_t i = 0; i < pts.size(); ++i) cells_[cell_index(pts[i])].push_back(i);
    }

    double nearest_distance(const Vec3d& q) const {
        const int cx = clampi(static_cast<int>((q.x - lo_.x) / cell_), nx_);
        const int cy = clampi(static_cast<int>((q.y - lo_.y) / cell_), ny_);
        const int cz = clampi(static_cast<int>((q.z - lo_.z) / cell_), nz_);
        double best = std::numeric_limits<double>::infinity();
        const int max_ring = std::max({nx_, ny_, nz_});
        for (int ring = 0; ring <= max_ring; ++ring) {
            // Once a hit exists, one extra ring guarantees correctness.
            if (std::isfinite(best) && (ring - 1) * cell_ > std::sqrt(best)) break;
            bool any_cell = false;
            const int x0 = cx - ring, x1 = cx + ring;
            const int y0 = cy - ring, y1 = cy + ring;
            const int z0 = cz - ring, z1 = cz + ring;
            for (int z = z0; z <= z1; ++z) {
                if (z < 0 || z >= nz_) continue;
                for (int y = y0; y <= y1; ++y) {
                    if (y < 0 || y >= ny_) continue;
                    for (int x = x0; x <= x1; ++x) {
                        if (x < 0 || x >= nx_) continue;
                        const bool shell = x == x0 || x == x1 || y == y0 || y == y1 ||
                                           z == z0 || z == z1;
                        if (!shell) continue;
                        any_cell = true;
                        for (std::size_t idx :
                             cells_[(static_cast<std::size_t>(z) * ny_ + y) * nx_ + x]) {
                            const Vec3d d = pts_[idx] - q;
                            best = std::min(best, dot(d, d));
                        }
                    }
                }
            }
            if (!any_cell && std::isfinite(best)) break;
        }
        return std::sqrt(best);
    }

private:
    int dim(double ext) const {
        return std::max(1, std::min(96, static_cast<int>(ext / cell_) + 1));
    }
    static int clampi(int v, int n) { return v < 0 ? 0 : (v >= n ? n - 1 : v); }
    std::size_t cell_index(const Vec3d& p) const {
        const int x = clampi(static_cast<int>((p.x - lo_.x) / cell_), nx_);
        const int y = clampi(static_cast<int>((p.y - lo_.y) / cell_), ny_);
        const int z = clampi(static_cast<int>((p.z - lo_.z) / cell_), nz_);
        return (static_cast<std::size_t>(z) * ny_ + y) * nx_ + x;
    }

    const std::vector<Vec3d>& pts_;
    Vec3d lo_, hi_;
    double cell_;
    int nx_, ny_, nz_;
    std::vector<std::vector<std::size_t>> cells_;
};

double mean_nn(const std::vector<Vec3d>& from, const PointGrid& to) {
    std::vector<double> partial((from.size() + 4095) / 4096, 0.0);
    parallel_chunks(from.size(), 4096, [&](std::size_t ci, std::size_t b, std::size_t e) {
        double s = 0;
        for (std::size_t i = b; i < e; ++i) s += to.nearest_distance(from[i]);
        partial[ci] = s;
    });
    double total = 0;
    for (double s : partial) total += s;
    return total / static_cast<double>(from.size());
}

}  // namespace

double chamfer_l1(const Mesh& a, const Mesh& b, int n_points, std::uint64_t seed) {
    if (a.empty() || b.empty()) throw std::invalid_argument("chamfer_l1: empty mesh");
    const std::vector<Vec3d> pa = sample_mesh_points(a, n_points, seed);
    const std::vector<Vec3d> pb = sample_mesh_points(b, n_points, seed);
    const PointGrid ga(pa), gb(pb);
    return 0.5 * (mean_nn(pa, gb) + mean_nn(pb, ga));
}

DepthMap projected_depth(const Checkpoint& ckpt, const ViewRecord& view, const NormalMap& nmap,
                         const Box3& bounds, const RenderConfig& cfg, std::uint64_t seed) {
    const int w = view.intrinsics.width, h = view.intrinsics.height;
    DepthMap out;
    out.width = w;
    out.height = h;
    out.depth = ImageF(w, h, 1);
    out.valid.assign(static_cast<std::size_t>(w) * h, 1);
    const double dist = norm(view.pose.translation - bounds.center());
    const double radius = bounds.radius();
    const double t_near = std::max(1e-3, dist - 1.5 * radius);
    const double t_far = dist + 1.5 * radius;
    const Vec3d z_axis = view.pose.rotation.col(2);

    parallel_chunks(static_cast<std::size_t>(w) * h, 64,
                    [&](std::size_t, std::size_t p0, std::size_t p1) {
        for (std::size_t pix = p0; pix < p1; ++pix) {
            const int x = static_cast<int>(pix % w);
            const int y = static_cast<int>(pix / w);
            const Ray ray = pixel_ray(view.intrinsics, view.pose, {x + 0.5, y + 0.5}, t_near, t_far);
            Vec3d n_world{0, 0, 0};
            if (nmap.valid[pix]) n_world = camera_normal_to_world(view.pose, normalized(nmap.at(x, y)));
            Rng rng(seed, 0x64657074ull, pix);
            const RayRender<float> rr =
                render_ray<float>(ckpt.coarse, ckpt.fine, ray, n_world, cfg, rng);
            // Expected ray depth -> camera z.
            const double t_exp = rr.out_fine.expected_depth;
            out.depth.at(x, y, 0) = static_cast<float>(t_exp * dot(ray.direction, z_axis));
        }
    });
    return out;
}

namespace {

struct BvhNode {
    Vec3d lo, hi;
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf triangle range
};

class TriangleBvh {
public:
    explicit TriangleBvh(const Mesh& mesh) : mesh_(mesh) {
        order_.resize(mesh.triangles.size());
        std::iota(order_.begin(), order_.end(), 0);
        centroids_.resize(order_.size());
        for (std::size_t t = 0; t < order_.size(); ++t) {
            const auto& tri = mesh.triangles[t];
            centroids_[t] = (mesh.vertices[tri[0]] + mesh.vertices[tri[1]] + mesh.vertices[tri[2]]) / 3.0;
        }
        nodes_.reserve(order_.size() * 2);
        build(0, static_cast<int>(order_.size()));
    }

    // Nearest positive ray-triangle hit distance, or +inf.
    double raycast(const Vec3d& o, const Vec3d& d) const {
        double best = std::numeric_limits<double>::infinity();
        raycast_node(0, o, d, best);
        return best;
    }

private:
    int build(int begin, int end) {
        const int node_id = static_cast<int>(nodes_.size());
        nodes_.push_back({});
        Vec3d lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
        for (int i = begin; i < end; ++i) {
            const auto& tri = mesh_.triangles[order_[i]];
            for (int k = 0; k < 3; ++k) {
                lo = cwise_min(lo, mesh_.vertices[tri[k]]);
                hi = cwise_max(hi, mesh_.vertices[tri[k]]);
            }
        }
        nodes_[node_id].lo = lo;
        nodes_[node_id].hi = hi;
        if (end - begin <= 8) {
            nodes_[node_id].begin = begin;
            nodes_[node_id].end = end;
            return node_id;
        }
        const Vec3d ext = hi - lo;
        const int axis = ext.x > ext.y ? (ext.x > ext.z ? 0 : 2) : (ext.y > ext.z ? 1 : 2);
        const int mid = (begin + end) / 2;
        std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                         [&](std::uint32_t a, std::uint32_t b) {
                             return centroids_[a][axis] < centroids_[b][axis];
                         });
        const int l = build(begin, mid);
        const int r = build(mid, end);
        nodes_[node_id].left = l;
        nodes_[node_id].right = r;
        return node_id;
    }

    static bool hit_box(const BvhNode& n, const Vec3d& o, const Vec3d& inv_d, double t_best) {
        double t0 = 0, t1 = t_best;
        for (int a = 0; a < 3; ++a) {
            double near = (n.lo[a] - o[a]) * inv_d[a];
            double far = (n.hi[a] - o[a]) * inv_d[a];
            if (near > far) std::swap(near, far);
            t0 = std::max(t0, near);
            t1 = std::min(t1, far);
        }
        return t0 <= t1;
    }

    void raycast_node(int id, const Vec3d& o, const Vec3d& d, double& best) const {
        const Vec3d inv_d{1.0 / d.x, 1.0 / d.y, 1.0 / d.z};
        const BvhNode& n = nodes_[id];
        if (!hit_box(n, o, inv_d, best)) return;
        if (n.left < 0) {
            for (int i = n.begin; i < n.end; ++i) {
                const auto& tri = mesh_.triangles[order_[i]];
                const double t = intersect_tri(o, d, mesh_.vertices[tri[0]],
                                               mesh_.vertices[tri[1]], mesh_.vertices[tri[2]]);
                if (t > 0 && t < best) best = t;
            }
            return;
        }
        raycast_node(n.left, o, d, best);
        raycast_node(n.right, o, d, best);
    }

    static double intersect_tri(const Vec3d& o, const Vec3d& d, const Vec3d& v0, const Vec3d& v1,
                                const Vec3d& v2) {
        const Vec3d e1 = v1 - v0, e2 = v2 - v0;
        const Vec3d p = cross(d, e2);
        const double det = dot(e1, p);
        if (std::abs(det) < 1e-15) return -1;
        const double inv = 1.0 / det;
        const Vec3d s = o - v0;
        const double u = dot(s, p) * inv;
        if (u < 0 || u > 1) return -1;
        const Vec3d q = cross(s, e1);
        const double v = dot(d, q) * inv;
        if (v < 0 || u + v > 1) return -1;
        return dot(e2, q) * inv;
    }

    const Mesh& mesh_;
    std::vector<std::uint32_t> order_;
    std::vector<Vec3d> centroids_;
    std::vector<BvhNode> nodes_;
};

}  // namespace

DepthMap projected_depth(const Mesh& mesh, const ViewRecord& view) {
    if (mesh.empty()) throw std::invalid_argument("projected_depth: empty mesh");
    const TriangleBvh bvh(mesh);
    const int w = view.intrinsics.width, h = view.intrinsics.height;
    DepthMap out;
    out.width = w;
    out.height = h;
    out.depth = ImageF(w, h, 1);
    out.valid.assign(static_cast<std::size_t>(w) * h, 0);
    const Vec3d z_axis = view.pose.rotation.col(2);

    parallel_chunks(static_cast<std::size_t>(w) * h, 256,
                    [&](std::size_t, std::size_t p0, std::size_t p1) {
        for (std::size_t pix = p0; pix < p1; ++pix) {
            const int x = static_cast<int>(pix % w);
            const int y = static_cast<int>(pix / w);
            const Ray ray = pixel_ray(view.intrinsics, view.pose, {x + 0.5, y + 0.5}, 0, 1e9);
            const double t = bvh.raycast(ray.origin, ray.direction);
            if (std::isfinite(t)) {
                out.depth.at(x, y, 0) = static_cast<float>(t * dot(ray.direction, z_axis));
                out.valid[pix] = 1;
            }
        }
    });
    return out;
}

double depth_l1(const DepthMap& pred, const DepthMap& gt, const MaskImage& mask) {
    if (pred.width != gt.width || pred.height != gt.height)
        throw std::invalid_argument("depth_l1: dimension mismatch");
    if (mask.size() != pred.valid.size())
        throw std::invalid_argument("depth_l1: mask dimension mismatch");

    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i] && pred.valid[i] && gt.valid[i] && std::isfinite(pred.depth.data[i]) &&
            std::isfinite(gt.depth.data[i]))
            idx.push_back(i);
    if (idx.empty()) throw std::invalid_argument("depth_l1: empty mask");

    auto rescaled = [&](const DepthMap& d) {
        float lo = std::numeric_limits<float>::infinity(), hi = -lo;
        for (std::size_t i : idx) {
            lo = std::min(lo, d.depth.data[i]);
            hi = std::max(hi, d.depth.data[i]);
        }
        std::vector<double> out(idx.size());
        const double scale = hi > lo ? 2.0 / (hi - lo) : 0.0;
        for (std::size_t k = 0; k < idx.size(); ++k)
            out[k] = scale != 0 ? (d.depth.data[idx[k]] - lo) * scale - 1.0 : 0.0;
        return out;
    };
    const std::vector<double> a = rescaled(pred), b = rescaled(gt);
    double sum = 0;
    for (std::size_t k = 0; k < a.size(); ++k) sum += std::abs(a[k] - b[k]);
    return sum / static_cast<double>(a.size());
}

AngularErrorStats angular_error(const NormalMap& pred, const NormalMap& gt) {
    if (pred.width != gt.width || pred.height != gt.height)
        throw std::invalid_argument("angular_error: dimension mismatch");
    std::vector<double> errs;
    for (int y = 0; y < pred.height; ++y)
        for (int x = 0; x < pred.width; ++x) {
            const std::size_t pix = static_cast<std::size_t>(y) * pred.width + x;
            if (!pred.valid[pix] || !gt.valid[pix]) continue;
            const double c = std::clamp(dot(normalized(pred.at(x, y)), normalized(gt.at(x, y))),
                                        -1.0, 1.0);
            errs.push_back(std::acos(c) * 180.0 / kPi);
        }
    if (errs.empty()) throw std::invalid_argument("angular_error: no jointly valid pixels");
    AngularErrorStats stats;
    stats.count = errs.size();
    stats.mean_deg = std::accumulate(errs.begin(), errs.end(), 0.0) / errs.size();
    std::nth_element(errs.begin(), errs.begin() + errs.size() / 2, errs.end());
    stats.median_deg = errs[errs.size() / 2];
    return stats;
}

void write_angular_error_csv(const std::string& path, const NormalMap& pred, const NormalMap& gt) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error(path + ": cannot open for writing");
    f << "x,y,error_degrees\n";
    char buf[96];
    for (int y = 0; y < pred.height; ++y)
        for (int x = 0; x < pred.width; ++x) {
            const std::size_t pix = static_cast<std::size_t>(y) * pred.width + x;
            if (!pred.valid[pix] || !gt.valid[pix]) continue;
            const double c = std::clamp(dot(normalized(pred.at(x, y)), normalized(gt.at(x, y))),
                                        -1.0, 1.0);
            std::snprintf(buf, sizeof(buf), "%d,%d,%.17g\n", x, y, std::acos(c) * 180.0 / kPi);
            f << buf;
        }
}

void write_report_json(const std::string& path, const std::map<std::string, double>& metrics) {
    nlohmann::json j;
    for (const auto& [k, v] : metrics) j[k] = v;
    std::ofstream f(path);
    if (!f) throw std::runtime_error(path + ": cannot open for writing");
    f << j.dump(2) << "\n";
}

void write_per_view_csv(const std::string& path, const std::string& metric,
                        const std::vector<double>& values) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error(path + ": cannot open for writing");
    f << "view," << metric << "\n";
    char buf[64];
    for (std::size_t v = 0; v < values.size(); ++v) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", v, values[v]);
        f << buf;
    }
}

}  // namespace nrf
