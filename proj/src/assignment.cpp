#include "hytrack/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "hytrack/errors.hpp"

namespace hytrack {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Shortest augmenting path with potentials; requires rows <= cols.
std::optional<std::vector<int>> hungarian_wide(const Eigen::MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(a.cols());
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  std::vector<char> used(m + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = -1;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double c = a(i0 - 1, j - 1);
        if (c != kInf) {
          const double cur = c - u[i0] - v[j];
          if (cur < minv[j]) {
            minv[j] = cur;
            way[j] = j0;
          }
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      if (j1 < 0) return std::nullopt;
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else if (minv[j] != kInf) {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> cols(n, -1);
  for (int j = 1; j <= m; ++j)
    if (p[j]) cols[p[j] - 1] = j - 1;
  return cols;
}

void check(const Eigen::MatrixXd& c) {
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    const double v = c.data()[i];
    if (std::isnan(v) || v == -kInf) throw InvalidInput("assignment: cost entries must be finite or +inf");
  }
}

double total(const Eigen::MatrixXd& c, const std::vector<int>& cols) {
  double s = 0.0;
  for (std::size_t i = 0; i < cols.size(); ++i)
    if (cols[i] >= 0) s += c(static_cast<Eigen::Index>(i), cols[i]);
  return s;
}

std::optional<std::vector<int>> solve_cols(const Eigen::MatrixXd& c) {
  if (c.rows() <= c.cols()) return hungarian_wide(c);
  auto t = hungarian_wide(c.transpose());
  if (!t) return std::nullopt;
  std::vector<int> cols(c.rows(), -1);
  for (std::size_t j = 0; j < t->size(); ++j) cols[(*t)[j]] = static_cast<int>(j);
  return cols;
}

struct Node {
  Eigen::MatrixXd cost;  // constrained copy
  std::vector<int> cols;
  double value;
};

struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    if (a.value != b.value) return a.value > b.value;
    return a.cols > b.cols;
  }
};

}  // namespace

std::optional<Assignment> solve_assignment(const Eigen::MatrixXd& cost) {
  check(cost);
  if (cost.rows() == 0 || cost.cols() == 0) return Assignment{std::vector<int>(cost.rows(), -1), 0.0};
  auto cols = solve_cols(cost);
  if (!cols) return std::nullopt;
  return Assignment{*cols, total(cost, *cols)};
}

namespace {

std::vector<Assignment> murty_wide(const Eigen::MatrixXd& cost, int k) {
  std::vector<Assignment> out;
  auto first = hungarian_wide(cost);
  if (!first) return out;

  std::priority_queue<Node, std::vector<Node>, NodeOrder> pq;
  pq.push({cost, *first, total(cost, *first)});
  const int n = static_cast<int>(cost.rows());
  // Keep going past k while costs tie with the k-th; the caller sorts and cuts.
  auto tied = [](double a, double b) { return a - b <= 1e-12 * std::max(1.0, std::abs(b)); };
  while (!pq.empty()) {
    if (static_cast<int>(out.size()) >= k && !tied(pq.top().value, out[k - 1].cost)) break;
    Node node = pq.top();
    pq.pop();
    out.push_back({node.cols, node.value});

    // Child t keeps rows < t at their current columns and bans row t's column.
    Eigen::MatrixXd c = node.cost;
    for (int t = 0; t < n; ++t) {
      const int jt = node.cols[t];
      Eigen::MatrixXd child = c;
      child(t, jt) = kInf;
      if (auto sol = hungarian_wide(child)) pq.push({child, *sol, total(cost, *sol)});
      for (int j = 0; j < c.cols(); ++j)
        if (j != jt) c(t, j) = kInf;
      for (int i = 0; i < n; ++i)
        if (i != t) c(i, jt) = kInf;
    }
  }
  return out;
}

}  // namespace

std::vector<Assignment> murty_kbest(const Eigen::MatrixXd& cost, int k) {
  if (k < 1) throw InvalidInput("murty_kbest: k must be >= 1");
  check(cost);
  if (cost.rows() == 0 || cost.cols() == 0)
    return {Assignment{std::vector<int>(cost.rows(), -1), 0.0}};
  std::vector<Assignment> out;
  if (cost.rows() <= cost.cols()) {
    out = murty_wide(cost, k);
  } else {
    for (const auto& a : murty_wide(cost.transpose(), k)) {
      std::vector<int> cols(cost.rows(), -1);
      for (std::size_t j = 0; j < a.cols.size(); ++j) cols[a.cols[j]] = static_cast<int>(j);
      out.push_back({cols, total(cost, cols)});
    }
  }
  std::sort(out.begin(), out.end(), [](const Assignment& a, const Assignment& b) {
    if (a.cost != b.cost) return a.cost < b.cost;
    return a.cols < b.cols;
  });
  if (static_cast<int>(out.size()) > k) out.resize(k);
  return out;
}

}  // namespace hytrack
