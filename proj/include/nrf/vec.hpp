#pragma once

#include <cmath>
#include <cstddef>

namespace nrf {

template <typename T>
struct Vec3 {
    T x = 0, y = 0, z = 0;

    constexpr Vec3() = default;
    constexpr Vec3(T x_, T y_, T z_) : x(x_), y(y_), z(z_) {}

    T& operator[](int i) { return (&x)[i]; }
    const T& operator[](int i) const { return (&x)[i]; }

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(T s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(T s) const { return {x / s, y / s, z / s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    Vec3& operator*=(T s) { x *= s; y *= s; z *= s; return *this; }
    bool operator==(const Vec3& o) const { return x == o.x && y == o.y && z == o.z; }
};

template <typename T> Vec3<T> operator*(T s, const Vec3<T>& v) { return v * s; }

template <typename T> T dot(const Vec3<T>& a, const Vec3<T>& b) {
    return a.x * b.x + a.y * b.y + a.z * b.z;
}

template <typename T> Vec3<T> cross(const Vec3<T>& a, const Vec3<T>& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

template <typename T> T norm(const Vec3<T>& v) { return std::sqrt(dot(v, v)); }

template <typename T> Vec3<T> normalized(const Vec3<T>& v) {
    const T n = norm(v);
    return n > T(0) ? v / n : Vec3<T>{};
}

template <typename T> Vec3<T> cwise_min(const Vec3<T>& a, const Vec3<T>& b) {
    return {std::min(a.x, b.x), std::min(a.y, b.y), std::min(a.z, b.z)};
}

template <typename T> Vec3<T> cwise_max(const Vec3<T>& a, const Vec3<T>& b) {
    return {std::max(a.x, b.x), std::max(a.y, b.y), std::max(a.z, b.z)};
}

using Vec3d = Vec3<double>;
using Vec3f = Vec3<float>;

// Row-major 3x3 matrix.
struct Mat3 {
    double m[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Mat3 identity() { return {}; }

    static Mat3 from_rows(const Vec3d& r0, const Vec3d& r1, const Vec3d& r2) {
        return {{r0.x, r0.y, r0.z, r1.x, r1.y, r1.z, r2.x, r2.y, r2.z}};
    }

    static Mat3 from_cols(const Vec3d& c0, const Vec3d& c1, const Vec3d& c2) {
        return {{c0.x, c1.x, c2.x, c0.y, c1.y, c2.y, c0.z, c1.z, c2.z}};
    }

    double operator()(int r, int c) const { return m[r * 3 + c]; }
    double& operator()(int r, int c) { return m[r * 3 + c]; }

    Vec3d row(int r) const { return {m[r * 3], m[r * 3 + 1], m[r * 3 + 2]}; }
    Vec3d col(int c) const { return {m[c], m[3 + c], m[6 + c]}; }

    Vec3d operator*(const Vec3d& v) const {
        return {dot(row(0), v), dot(row(1), v), dot(row(2), v)};
    }

    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                r(i, j) = m[i * 3] * o(0, j) + m[i * 3 + 1] * o(1, j) + m[i * 3 + 2] * o(2, j);
        return r;
    }

    Mat3 transposed() const {
        return {{m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}};
    }

    double det() const {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }
};

// Rotation about z by angle (radians).
inline Mat3 rot_z(double a) {
    const double c = std::cos(a), s = std::sin(a);
    return {{c, -s, 0, s, c, 0, 0, 0, 1}};
}

}  // namespace nrf
