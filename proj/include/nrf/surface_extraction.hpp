#pragma once

#include "nrf/geometry.hpp"
#include "nrf/mesh.hpp"

#include <functional>
#include <vector>

namespace nrf {

template <typename T> struct FieldParamsT;
using FieldParams = FieldParamsT<float>;

// Regular scalar samples at the cell-center lattice of `bbox`: point (i,j,k)
// sits at bbox.min + ((i,j,k) + 0.5) * extent / res.
struct DensityGrid {
    int res = 0;
    Box3 bbox;
    std::vector<float> values;  // res^3, x fastest

    float at(int i, int j, int k) const {
        return values[(static_cast<std::size_t>(k) * res + j) * res + i];
    }
    Vec3d point(int i, int j, int k) const {
        const Vec3d cell{bbox.extent().x / res, bbox.extent().y / res, bbox.extent().z / res};
        return {bbox.min.x + (i + 0.5) * cell.x, bbox.min.y + (j + 0.5) * cell.y,
                bbox.min.z + (k + 0.5) * cell.z};
    }
};

// Fills a grid from an arbitrary scalar function (used for analytic tests and
// signed-distance reference meshes).
DensityGrid make_grid(const Box3& bbox, int res, const std::function<double(const Vec3d&)>& f);

// Evaluates the fine network's density head over the lattice. Direction and
// normal inputs do not reach the density head, so none are needed here.
DensityGrid sample_density_grid(const FieldParams& fine, const Box3& bbox, int res);

// Isosurface extraction with the 256-case cube table and linear edge
// interpolation. Triangles wind so normals point toward decreasing values.
// A grid entirely on one side of iso yields an empty mesh.
Mesh marching_cubes(const DensityGrid& grid, double iso);

}  // namespace nrf
