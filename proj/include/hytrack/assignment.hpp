#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace hytrack {

// cols[i] is the column assigned to row i, or -1 when the matrix has more
// rows than columns and row i is left out.
struct Assignment {
  std::vector<int> cols;
  double cost = 0.0;
};

// Minimum-cost assignment covering min(rows, cols) pairs. Entries may be +inf
// (forbidden). Returns nullopt when no assignment avoids forbidden entries.
std::optional<Assignment> solve_assignment(const Eigen::MatrixXd& cost);

// The k cheapest assignments in ascending cost, ties ordered by the
// assignment vector.
std::vector<Assignment> murty_kbest(const Eigen::MatrixXd& cost, int k);

}  // namespace hytrack
