// Small fixed-size vector/matrix types for world-space math.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace cpm {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
    constexpr double &operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }

    constexpr Vec3 &operator+=(const Vec3 &o) { x += o.x; y += o.y; z += o.z; return *this; }
    constexpr Vec3 &operator-=(const Vec3 &o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    constexpr Vec3 &operator*=(double s) { x *= s; y *= s; z *= s; return *this; }

    friend constexpr Vec3 operator+(Vec3 a, const Vec3 &b) { return a += b; }
    friend constexpr Vec3 operator-(Vec3 a, const Vec3 &b) { return a -= b; }
    friend constexpr Vec3 operator-(const Vec3 &a) { return {-a.x, -a.y, -a.z}; }
    friend constexpr Vec3 operator*(Vec3 a, double s) { return a *= s; }
    friend constexpr Vec3 operator*(double s, Vec3 a) { return a *= s; }
    friend constexpr Vec3 operator/(Vec3 a, double s) { return {a.x / s, a.y / s, a.z / s}; }
    friend constexpr bool operator==(const Vec3 &, const Vec3 &) = default;

    double dot(const Vec3 &o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline double distance(const Vec3 &a, const Vec3 &b) { return (a - b).norm(); }

struct Dims {
    int64_t x = 0;
    int64_t y = 0;
    int64_t z = 0;

    constexpr int64_t operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
    constexpr int64_t count() const { return x * y * z; }
    friend constexpr bool operator==(const Dims &, const Dims &) = default;
};

// Column-major 3x3: cols[c] is column c.
struct Mat3 {
    std::array<Vec3, 3> cols{Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}};

    static constexpr Mat3 identity() { return {}; }

    double at(int r, int c) const { return cols[c][r]; }

    Vec3 operator*(const Vec3 &v) const { return cols[0] * v.x + cols[1] * v.y + cols[2] * v.z; }

    Vec3 transpose_times(const Vec3 &v) const { return {cols[0].dot(v), cols[1].dot(v), cols[2].dot(v)}; }

    friend bool operator==(const Mat3 &, const Mat3 &) = default;
};

// Axis-aligned world box.
struct Box {
    Vec3 lo;
    Vec3 hi;

    bool contains(const Vec3 &p, double margin = 0.0) const {
        return p.x >= lo.x - margin && p.x <= hi.x + margin && p.y >= lo.y - margin && p.y <= hi.y + margin &&
               p.z >= lo.z - margin && p.z <= hi.z + margin;
    }
};

} // namespace cpm
