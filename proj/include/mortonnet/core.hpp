#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mortonnet {

struct Point3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    double operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }

    Point3 operator+(const Point3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Point3 operator-(const Point3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Point3 operator*(double s) const { return {x * s, y * s, z * s}; }

    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }

    double squared_norm() const { return x * x + y * y + z * z; }
    double norm() const { return std::sqrt(squared_norm()); }
};

inline double squared_distance(const Point3& a, const Point3& b) {
    return (a - b).squared_norm();
}

/// Unstructured 3D point cloud. `labels` is either empty (unlabeled) or
/// holds one integer part label per point.
struct PointCloud {
    std::vector<Point3> points;
    std::vector<int> labels;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    bool has_labels() const { return !labels.empty(); }

    void check_consistent() const {
        if (!labels.empty() && labels.size() != points.size())
            throw std::invalid_argument("point cloud: label count does not match point count");
    }
};

inline void require_finite(const PointCloud& cloud) {
    for (std::size_t i = 0; i < cloud.points.size(); ++i)
        if (!cloud.points[i].finite())
            throw std::invalid_argument("point cloud: non-finite coordinate at index " + std::to_string(i));
}

}  // namespace mortonnet
