#pragma once

#include <Eigen/Dense>

#include "drmpc/errors.hpp"

namespace drmpc {

/// Axis-aligned box { x : lower <= x <= upper }.
struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Box() = default;
  Box(Eigen::VectorXd lo, Eigen::VectorXd up)
      : lower(std::move(lo)), upper(std::move(up)) {
    if (lower.size() != upper.size()) {
      throw DimensionError("box bounds differ in length");
    }
    if ((lower.array() > upper.array()).any()) {
      throw ValueError("box has lower > upper");
    }
  }

  /// Box [-limit, limit]^n.
  static Box symmetric(int n, double limit) {
    if (limit < 0) throw ValueError("box limit must be >= 0");
    return Box(Eigen::VectorXd::Constant(n, -limit),
               Eigen::VectorXd::Constant(n, limit));
  }

  int dim() const { return static_cast<int>(lower.size()); }

  bool contains(const Eigen::VectorXd& v, double tol = 0.0) const {
    if (v.size() != lower.size()) {
      throw DimensionError("point/box dimension mismatch");
    }
    return (v.array() >= lower.array() - tol).all() &&
           (v.array() <= upper.array() + tol).all();
  }
};

}  // namespace drmpc
