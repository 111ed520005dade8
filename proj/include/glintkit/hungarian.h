#pragma once

#include <Eigen/Core>
#include <vector>

namespace glintkit {

/// Minimum-cost assignment (Kuhn-Munkres with potentials, O(n^2 m)) for a
/// rows x cols cost matrix. Every row is matched when rows <= cols and every
/// column otherwise. Returns the matched column per row, -1 if unmatched.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

}  // namespace glintkit
