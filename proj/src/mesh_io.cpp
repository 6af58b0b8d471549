#include "nrf/mesh.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace nrf {

namespace {
[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw std::runtime_error(path + ": " + what);
}
}  // namespace

void Mesh::validate() const {
    for (const auto& t : triangles)
        for (std::uint32_t idx : t)
            if (idx >= vertices.size()) throw std::runtime_error("mesh: triangle index out of range");
}

void write_ply(const std::string& path, const Mesh& mesh) {
    std::ofstream f(path, std::ios::binary);
    if (!f) fail(path, "cannot open for writing");
    const bool with_normals = mesh.normals.size() == mesh.vertices.size() && !mesh.normals.empty();
    f << "ply\nformat binary_little_endian 1.0\n";
    f << "element vertex " << mesh.vertices.size() << "\n";
    f << "property float x\nproperty float y\nproperty float z\n";
    if (with_normals) f << "property float nx\nproperty float ny\nproperty float nz\n";
    f << "element face " << mesh.triangles.size() << "\n";
    f << "property list uchar int vertex_indices\nend_header\n";
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        float v[6] = {static_cast<float>(mesh.vertices[i].x), static_cast<float>(mesh.vertices[i].y),
                      static_cast<float>(mesh.vertices[i].z), 0.0f, 0.0f, 0.0f};
        int n = 3;
        if (with_normals) {
            v[3] = static_cast<float>(mesh.normals[i].x);
            v[4] = static_cast<float>(mesh.normals[i].y);
            v[5] = static_cast<float>(mesh.normals[i].z);
            n = 6;
        }
        f.write(reinterpret_cast<const char*>(v), n * sizeof(float));
    }
    for (const auto& t : mesh.triangles) {
        const std::uint8_t count = 3;
        const std::int32_t idx[3] = {static_cast<std::int32_t>(t[0]), static_cast<std::int32_t>(t[1]),
                                     static_cast<std::int32_t>(t[2])};
        f.write(reinterpret_cast<const char*>(&count), 1);
        f.write(reinterpret_cast<const char*>(idx), sizeof(idx));
    }
    if (!f) fail(path, "write error");
}

Mesh read_ply(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(path, "cannot open");
    std::string line;
    if (!std::getline(f, line) || line != "ply") fail(path, "not a PLY file");

    std::size_t n_vertices = 0, n_faces = 0;
    int vertex_floats = 0;
    bool has_normals = false;
    bool binary_le = false;
    std::string element;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ss(line);
        std::string tok;
        ss >> tok;
        if (tok == "format") {
            std::string fmt;
            ss >> fmt;
            binary_le = (fmt == "binary_little_endian");
            if (!binary_le) fail(path, "only binary little-endian PLY is supported");
        } else if (tok == "element") {
            std::size_t count;
            ss >> element >> count;
            if (element == "vertex") n_vertices = count;
            else if (element == "face") n_faces = count;
            else fail(path, "unsupported PLY element: " + element);
        } else if (tok == "property" && element == "vertex") {
            std::string type, name;
            ss >> type >> name;
            if (type != "float") fail(path, "unsupported vertex property type: " + type);
            ++vertex_floats;
            if (name == "nx") has_normals = true;
        } else if (tok == "property" && element == "face") {
            std::string list, ctype, itype, name;
            ss >> list >> ctype >> itype >> name;
            if (list != "list" || ctype != "uchar" || (itype != "int" && itype != "int32" && itype != "uint"))
                fail(path, "unsupported face property layout");
        } else if (tok == "end_header") {
            break;
        } else if (tok == "comment" || tok == "obj_info") {
            continue;
        } else if (!tok.empty()) {
            fail(path, "unsupported PLY header line: " + line);
        }
    }
    if (vertex_floats < 3) fail(path, "vertex element lacks xyz");

    Mesh mesh;
    mesh.vertices.resize(n_vertices);
    if (has_normals) mesh.normals.resize(n_vertices);
    std::vector<float> buf(vertex_floats);
    for (std::size_t i = 0; i < n_vertices; ++i) {
        if (!f.read(reinterpret_cast<char*>(buf.data()), vertex_floats * sizeof(float)))
            fail(path, "truncated vertex data");
        mesh.vertices[i] = {buf[0], buf[1], buf[2]};
        if (has_normals && vertex_floats >= 6) mesh.normals[i] = {buf[3], buf[4], buf[5]};
    }
    mesh.triangles.reserve(n_faces);
    for (std::size_t i = 0; i < n_faces; ++i) {
        std::uint8_t count;
        if (!f.read(reinterpret_cast<char*>(&count), 1)) fail(path, "truncated face data");
        std::vector<std::int32_t> idx(count);
        if (!f.read(reinterpret_cast<char*>(idx.data()), count * sizeof(std::int32_t)))
            fail(path, "truncated face data");
        // Fan-triangulate polygons; our own writer only emits triangles.
        for (int k = 2; k < count; ++k)
            mesh.triangles.push_back({static_cast<std::uint32_t>(idx[0]),
                                      static_cast<std::uint32_t>(idx[k - 1]),
                                      static_cast<std::uint32_t>(idx[k])});
    }
    mesh.validate();
    return mesh;
}

}  // namespace nrf
