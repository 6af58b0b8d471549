#include "nrf/surface_extraction.hpp"

#include "nrf/neural_field.hpp"
#include "nrf/parallel.hpp"

#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <unordered_map>

namespace nrf {

namespace {

// Cube corner c sits at ((c&1), ((c>>1)&1), ((c>>2)&1)).
constexpr int kEdgeCorners[12][2] = {
    {0, 1}, {2, 3}, {4, 5}, {6, 7},   // x edges, id = y + 2z
    {0, 2}, {1, 3}, {4, 6}, {5, 7},   // y edges, id = 4 + x + 2z
    {0, 4}, {1, 5}, {2, 6}, {3, 7},   // z edges, id = 8 + x + 2y
};

Vec3d corner_offset(int c) {
    return {static_cast<double>(c & 1), static_cast<double>((c >> 1) & 1),
            static_cast<double>((c >> 2) & 1)};
}

struct Face {
    std::array<int, 4> corners;  // cyclic boundary walk
    std::array<int, 4> edges;    // edges[i] joins corners[i], corners[i+1]
};

std::array<Face, 6> build_faces() {
    // Map corner pair -> edge id.
    int edge_of[8][8];
    for (auto& row : edge_of)
        for (int& v : row) v = -1;
    for (int e = 0; e < 12; ++e) {
        edge_of[kEdgeCorners[e][0]][kEdgeCorners[e][1]] = e;
        edge_of[kEdgeCorners[e][1]][kEdgeCorners[e][0]] = e;
    }

    std::array<Face, 6> faces;
    int fi = 0;
    for (int axis = 0; axis < 3; ++axis) {
        for (int side = 0; side < 2; ++side) {
            std::array<int, 4> cs{};
            int n = 0;
            for (int c = 0; c < 8; ++c)
                if (((c >> axis) & 1) == side) cs[n++] = c;
            // Order the 4 corners into a boundary walk (consecutive corners
            // differ in exactly one bit).
            std::array<int, 4> walk{cs[0], -1, -1, -1};
            bool used[4] = {true, false, false, false};
            for (int step = 1; step < 4; ++step) {
                for (int t = 0; t < 4; ++t) {
                    if (used[t]) continue;
                    if (edge_of[walk[step - 1]][cs[t]] >= 0) {
                        walk[step] = cs[t];
                        used[t] = true;
                        break;
                    }
                }
            }
            Face f;
            f.corners = walk;
            for (int i = 0; i < 4; ++i) f.edges[i] = edge_of[walk[i]][walk[(i + 1) % 4]];
            faces[fi++] = f;
        }
    }
    return faces;
}

struct CaseTable {
    // Per case: triangles as triples of cube-edge ids.
    std::vector<std::array<std::int8_t, 3>> tris[256];
};

// Builds the full 256-case table from face-consistent isoline segments.
// Ambiguous faces (4 cut edges) always separate the inside corners; the rule
// depends only on the face's own corner signs, so neighboring cells agree on
// shared faces. Interior saddle cases keep the straightforward (decider-free)
// patch topology.
CaseTable build_case_table() {
    const auto faces = build_faces();
    CaseTable table;

    for (int mask = 0; mask < 256; ++mask) {
        bool inside[8];
        for (int c = 0; c < 8; ++c) inside[c] = (mask >> c) & 1;
        bool cut[12];
        for (int e = 0; e < 12; ++e)
            cut[e] = inside[kEdgeCorners[e][0]] != inside[kEdgeCorners[e][1]];

        // Each cut edge gets exactly one segment partner per adjacent face.
        std::array<std::array<int, 2>, 12> link;
        std::array<int, 12> n_links{};
        auto add_link = [&](int a, int b) {
            link[a][n_links[a]++] = b;
            link[b][n_links[b]++] = a;
        };
        for (const Face& f : faces) {
            int cut_idx[4], nc = 0;
            for (int i = 0; i < 4; ++i)
                if (cut[f.edges[i]]) cut_idx[nc++] = i;
            if (nc == 2) {
                add_link(f.edges[cut_idx[0]], f.edges[cut_idx[1]]);
            } else if (nc == 4) {
                for (int i = 0; i < 4; ++i)
                    if (inside[f.corners[i]])
                        add_link(f.edges[(i + 3) % 4], f.edges[i]);
            }
        }

        bool visited[12] = {};
        for (int start = 0; start < 12; ++start) {
            if (!cut[start] || visited[start]) continue;
            // Walk the loop.
            std::vector<int> loop;
            int prev = -1, cur = start;
            do {
                loop.push_back(cur);
                visited[cur] = true;
                const int nxt = (link[cur][0] == prev) ? link[cur][1] : link[cur][0];
                prev = cur;
                cur = nxt;
            } while (cur != start);

            // Orient so triangle normals point away from the inside corners.
            std::vector<Vec3d> pts(loop.size());
            Vec3d in_centroid{}, out_centroid{};
            for (std::size_t i = 0; i < loop.size(); ++i) {
                const int a = kEdgeCorners[loop[i]][0];
                const int b = kEdgeCorners[loop[i]][1];
                pts[i] = (corner_offset(a) + corner_offset(b)) * 0.5;
                in_centroid += corner_offset(inside[a] ? a : b);
                out_centroid += corner_offset(inside[a] ? b : a);
            }
            Vec3d newell{};
            for (std::size_t i = 0; i < loop.size(); ++i)
                newell += cross(pts[i], pts[(i + 1) % loop.size()]);
            const Vec3d ref = out_centroid - in_centroid;
            if (dot(newell, ref) < 0) std::reverse(loop.begin(), loop.end());

            for (std::size_t i = 1; i + 1 < loop.size(); ++i)
                table.tris[mask].push_back({static_cast<std::int8_t>(loop[0]),
                                            static_cast<std::int8_t>(loop[i]),
                                            static_cast<std::int8_t>(loop[i + 1])});
        }
    }
    return table;
}

const CaseTable& case_table() {
    static const CaseTable table = build_case_table();
    return table;
}

}  // namespace

DensityGrid make_grid(const Box3& bbox, int res, const std::function<double(const Vec3d&)>& f) {
    if (res < 2) throw std::invalid_argument("make_grid: res must be >= 2");
    if (bbox.degenerate()) throw std::invalid_argument("make_grid: degenerate bbox");
    DensityGrid grid;
    grid.res = res;
    grid.bbox = bbox;
    grid.values.resize(static_cast<std::size_t>(res) * res * res);
    parallel_chunks(res, 1, [&](std::size_t, std::size_t k0, std::size_t k1) {
        for (std::size_t k = k0; k < k1; ++k)
            for (int j = 0; j < res; ++j)
                for (int i = 0; i < res; ++i)
                    grid.values[(k * res + j) * res + i] =
                        static_cast<float>(f(grid.point(i, j, static_cast<int>(k))));
    });
    return grid;
}

DensityGrid sample_density_grid(const FieldParams& fine, const Box3& bbox, int res) {
    if (res < 2) throw std::invalid_argument("sample_density_grid: res must be >= 2");
    if (bbox.degenerate()) throw std::invalid_argument("sample_density_grid: degenerate bbox");
    DensityGrid grid;
    grid.res = res;
    grid.bbox = bbox;
    grid.values.resize(static_cast<std::size_t>(res) * res * res);

    const int pos_dim = fine.enc.pos_dim();
    const std::size_t chunk_pts = 8192;
    const std::size_t total = grid.values.size();
    parallel_chunks(total, chunk_pts, [&](std::size_t, std::size_t p0, std::size_t p1) {
        const int m = static_cast<int>(p1 - p0);
        std::vector<float> enc(static_cast<std::size_t>(m) * pos_dim);
        std::vector<float> sigma(m);
        for (int r = 0; r < m; ++r) {
            const std::size_t idx = p0 + r;
            const int i = static_cast<int>(idx % res);
            const int j = static_cast<int>((idx / res) % res);
            const int k = static_cast<int>(idx / (static_cast<std::size_t>(res) * res));
            const Vec3d p = grid.point(i, j, k);
            fourier_encode3(Vec3f{static_cast<float>(p.x), static_cast<float>(p.y),
                                  static_cast<float>(p.z)},
                            fine.enc.l_pos, enc.data() + static_cast<std::size_t>(r) * pos_dim);
        }
        field_forward_density(fine, enc.data(), m, sigma.data());
        std::copy(sigma.begin(), sigma.end(), grid.values.begin() + p0);
    });
    return grid;
}

Mesh marching_cubes(const DensityGrid& grid, double iso) {
    if (!std::isfinite(iso)) throw std::invalid_argument("marching_cubes: iso must be finite");
    if (grid.res < 2) throw std::invalid_argument("marching_cubes: grid res must be >= 2");
    const int res = grid.res;
    const int cells = res - 1;
    const auto& table = case_table();

    const Vec3d cell_size{grid.bbox.extent().x / res, grid.bbox.extent().y / res,
                          grid.bbox.extent().z / res};

    struct SlabOut {
        std::vector<std::pair<std::uint64_t, Vec3d>> verts;
        std::vector<std::array<std::uint64_t, 3>> tris;
    };
    std::vector<SlabOut> slabs(cells);

    auto edge_key = [res](int axis, int lx, int ly, int lz) -> std::uint64_t {
        return ((static_cast<std::uint64_t>(axis) * res + lz) * res + ly) * res + lx;
    };

    parallel_chunks(cells, 1, [&](std::size_t, std::size_t k0, std::size_t k1) {
        for (std::size_t kk = k0; kk < k1; ++kk) {
            const int k = static_cast<int>(kk);
            SlabOut& out = slabs[kk];
            for (int j = 0; j < cells; ++j) {
                for (int i = 0; i < cells; ++i) {
                    float v[8];
                    int mask = 0;
                    for (int c = 0; c < 8; ++c) {
                        v[c] = grid.at(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
                        if (v[c] > iso) mask |= 1 << c;
                    }
                    const auto& tris = table.tris[mask];
                    if (tris.empty()) continue;

                    std::uint64_t keys[12];
                    Vec3d pos[12];
                    bool have[12] = {};
                    auto cut_vertex = [&](int e) {
                        if (have[e]) return;
                        have[e] = true;
                        const int ca = kEdgeCorners[e][0], cb = kEdgeCorners[e][1];
                        const double va = v[ca], vb = v[cb];
                        double t = 0.5;  // tie rule: both endpoints at iso -> midpoint
                        if (std::abs(vb - va) > 0) {
                            t = (iso - va) / (vb - va);
                            t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
                        }
                        const Vec3d oa = corner_offset(ca), ob = corner_offset(cb);
                        const Vec3d local = oa + (ob - oa) * t;
                        pos[e] = {grid.bbox.min.x + (i + 0.5 + local.x) * cell_size.x,
                                  grid.bbox.min.y + (j + 0.5 + local.y) * cell_size.y,
                                  grid.bbox.min.z + (k + 0.5 + local.z) * cell_size.z};
                        const int ax = e < 4 ? 0 : (e < 8 ? 1 : 2);
                        const int ox = static_cast<int>(oa.x), oy = static_cast<int>(oa.y),
                                  oz = static_cast<int>(oa.z);
                        keys[e] = edge_key(ax, i + ox, j + oy, k + oz);
                    };

                    for (const auto& tri : tris) {
                        cut_vertex(tri[0]);
                        cut_vertex(tri[1]);
                        cut_vertex(tri[2]);
                        out.tris.push_back({keys[tri[0]], keys[tri[1]], keys[tri[2]]});
                        for (int e : {tri[0], tri[1], tri[2]})
                            out.verts.emplace_back(keys[e], pos[e]);
                    }
                }
            }
        }
    });

    // Merge slabs in index order: deterministic vertex numbering regardless
    // of worker count.
    Mesh mesh;
    std::unordered_map<std::uint64_t, std::uint32_t> index;
    for (auto& slab : slabs) {
        for (const auto& [key, p] : slab.verts) {
            if (index.emplace(key, static_cast<std::uint32_t>(mesh.vertices.size())).second)
                mesh.vertices.push_back(p);
        }
        for (const auto& tri : slab.tris) {
            const std::uint32_t a = index[tri[0]], b = index[tri[1]], c = index[tri[2]];
            if (a == b || b == c || a == c) continue;
            const Vec3d n = cross(mesh.vertices[b] - mesh.vertices[a], mesh.vertices[c] - mesh.vertices[a]);
            if (dot(n, n) == 0.0) continue;
            mesh.triangles.push_back({a, b, c});
        }
    }
    return mesh;
}

}  // namespace nrf
