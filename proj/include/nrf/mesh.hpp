#pragma once

#include "nrf/vec.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace nrf {

struct Mesh {
    std::vector<Vec3d> vertices;
    std::vector<std::array<std::uint32_t, 3>> triangles;
    std::vector<Vec3d> normals;  // optional, per vertex; empty when absent

    bool empty() const { return vertices.empty() || triangles.empty(); }
    void validate() const;  // throws on out-of-range indices
};

// Binary little-endian PLY, float32 positions/normals, int32 face indices.
void write_ply(const std::string& path, const Mesh& mesh);
Mesh read_ply(const std::string& path);

}  // namespace nrf
