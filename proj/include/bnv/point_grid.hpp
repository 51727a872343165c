#pragma once

#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace bnv {

// Uniform hash grid over a fixed point set for radius queries. Exact: every
// point within `radius <= cell` of the query is returned (cells are scanned
// with a one-ring neighborhood).
class PointGrid {
 public:
  PointGrid(const std::vector<Eigen::Vector3d>& points, double cell)
      : points_(points), cell_(cell) {
    cells_.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) cells_[key(points[i])].push_back(i);
  }

  // Indices of points with |p - center| <= radius. radius must be <= cell.
  void neighbors_within(const Eigen::Vector3d& center, double radius,
                        std::vector<std::size_t>& out) const {
    out.clear();
    const double r2 = radius * radius;
    const Key c = key(center);
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const auto it = cells_.find(Key{c.x + dx, c.y + dy, c.z + dz});
          if (it == cells_.end()) continue;
          for (std::size_t i : it->second)
            if ((points_[i] - center).squaredNorm() <= r2) out.push_back(i);
        }
  }

  // True when any stored point lies within radius of center.
  bool any_within(const Eigen::Vector3d& center, double radius) const {
    const double r2 = radius * radius;
    const Key c = key(center);
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const auto it = cells_.find(Key{c.x + dx, c.y + dy, c.z + dz});
          if (it == cells_.end()) continue;
          for (std::size_t i : it->second)
            if ((points_[i] - center).squaredNorm() <= r2) return true;
        }
    return false;
  }

 private:
  struct Key {
    std::int32_t x, y, z;
    bool operator==(const Key& o) const { return x == o.x && y == o.y && z == o.z; }
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      return static_cast<std::size_t>(static_cast<std::uint32_t>(k.x) * 73856093u ^
                                      static_cast<std::uint32_t>(k.y) * 19349669u ^
                                      static_cast<std::uint32_t>(k.z) * 83492791u);
    }
  };

  Key key(const Eigen::Vector3d& p) const {
    return {static_cast<std::int32_t>(std::floor(p.x() / cell_)),
            static_cast<std::int32_t>(std::floor(p.y() / cell_)),
            static_cast<std::int32_t>(std::floor(p.z() / cell_))};
  }

  const std::vector<Eigen::Vector3d>& points_;
  double cell_;
  std::unordered_map<Key, std::vector<std::size_t>, KeyHash> cells_;
};

}  // namespace bnv
