#pragma once

#include <array>
#include <cmath>

#include "swm/tensor.hpp"

namespace swm::geo {

using Vec3 = std::array<real, 3>;
using Quat = std::array<real, 4>;  // w, x, y, z
using Mat3 = std::array<real, 9>;  // row-major

inline Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 add(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 scale(const Vec3& a, real s) { return {a[0] * s, a[1] * s, a[2] * s}; }
inline real dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline real norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalize(const Vec3& a) { return scale(a, real(1) / norm(a)); }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

inline Vec3 mat_apply(const Mat3& m, const Vec3& v) {
    return {m[0] * v[0] + m[1] * v[1] + m[2] * v[2], m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
            m[6] * v[0] + m[7] * v[1] + m[8] * v[2]};
}

inline Mat3 mat_transpose(const Mat3& m) {
    return {m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]};
}

inline Mat3 mat_mul(const Mat3& a, const Mat3& b) {
    Mat3 r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) r[3 * i + j] += a[3 * i + k] * b[3 * k + j];
    return r;
}

inline Mat3 quat_to_mat(const Quat& q) {
    const real w = q[0], x = q[1], y = q[2], z = q[3];
    return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
            2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
            2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
}

// Shepperd's method, normalized output with w >= 0.
inline Quat mat_to_quat(const Mat3& m) {
    const real tr = m[0] + m[4] + m[8];
    Quat q{};
    if (tr > 0) {
        real s = std::sqrt(tr + 1) * 2;
        q = {s / 4, (m[7] - m[5]) / s, (m[2] - m[6]) / s, (m[3] - m[1]) / s};
    } else if (m[0] >= m[4] && m[0] >= m[8]) {
        real s = std::sqrt(1 + m[0] - m[4] - m[8]) * 2;
        q = {(m[7] - m[5]) / s, s / 4, (m[1] + m[3]) / s, (m[2] + m[6]) / s};
    } else if (m[4] >= m[8]) {
        real s = std::sqrt(1 + m[4] - m[0] - m[8]) * 2;
        q = {(m[2] - m[6]) / s, (m[1] + m[3]) / s, s / 4, (m[5] + m[7]) / s};
    } else {
        real s = std::sqrt(1 + m[8] - m[0] - m[4]) * 2;
        q = {(m[3] - m[1]) / s, (m[2] + m[6]) / s, (m[5] + m[7]) / s, s / 4};
    }
    real n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    for (auto& c : q) c /= n;
    if (q[0] < 0)
        for (auto& c : q) c = -c;
    return q;
}

inline Quat tensor_to_quat(const Tensor& t) { return {t[0], t[1], t[2], t[3]}; }
inline Vec3 tensor_to_vec3(const Tensor& t) { return {t[0], t[1], t[2]}; }
inline Tensor quat_tensor(const Quat& q) { return Tensor::from_data({4}, {q[0], q[1], q[2], q[3]}); }
inline Tensor vec3_tensor(const Vec3& v) { return Tensor::from_data({3}, {v[0], v[1], v[2]}); }

}  // namespace swm::geo
