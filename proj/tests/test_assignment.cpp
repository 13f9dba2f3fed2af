#include <cmath>
#include <limits>

#include "doctest.h"
#include "gen.hpp"
#include "hytrack/assignment.hpp"
#include "hytrack/errors.hpp"
#include "oracles.hpp"

using namespace hytrack;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

TEST_CASE("Murty on a 2x2 matrix") {
  Eigen::MatrixXd c(2, 2);
  c << 1, 2, 2, 1;
  const auto r = murty_kbest(c, 2);
  REQUIRE(r.size() == 2);
  CHECK(r[0].cost == 2.0);
  CHECK(r[0].cols == std::vector<int>{0, 1});
  CHECK(r[1].cost == 4.0);
  CHECK(r[1].cols == std::vector<int>{1, 0});
}

TEST_CASE("Murty on a 1x1 matrix returns only one assignment") {
  Eigen::MatrixXd c(1, 1);
  c << 7;
  const auto r = murty_kbest(c, 3);
  REQUIRE(r.size() == 1);
  CHECK(r[0].cost == 7.0);
}

TEST_CASE("all-forbidden rows give no assignment") {
  Eigen::MatrixXd c(2, 2);
  c << kInf, kInf, 1, 2;
  CHECK_FALSE(solve_assignment(c).has_value());
  CHECK(murty_kbest(c, 5).empty());
}

TEST_CASE("forbidden entries are avoided") {
  Eigen::MatrixXd c(3, 3);
  c << 1, kInf, 5, kInf, 1, 5, 1, 1, kInf;
  const auto a = solve_assignment(c);
  REQUIRE(a.has_value());
  const auto o = oracle::all_assignments(c);
  CHECK(a->cost == doctest::Approx(o.front().cost));
  CHECK(murty_kbest(c, 100).size() == o.size());
}

TEST_CASE("k < 1 is rejected") {
  CHECK_THROWS_AS(murty_kbest(Eigen::MatrixXd::Ones(2, 2), 0), InvalidInput);
}

TEST_CASE("property: Murty matches exhaustive enumeration on 4x4") {
  testgen::Gen g(41);
  for (int t = 0; t < 40; ++t) {
    Eigen::MatrixXd c = g.matrix(4, 4, -5, 20);
    if (g.coin(0.3)) c(g.integer(0, 3), g.integer(0, 3)) = kInf;
    // Integer costs produce ties; the tie rule has to hold too.
    if (g.coin(0.5)) c = c.array().round().matrix();
    const auto o = oracle::all_assignments(c);
    const auto r = murty_kbest(c, 24);
    REQUIRE(r.size() == o.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
      CHECK(std::abs(r[i].cost - o[i].cost) < 1e-9);
      CHECK(r[i].cols == o[i].cols);
    }
  }
}

TEST_CASE("property: rectangular matrices match enumeration") {
  testgen::Gen g(42);
  for (int t = 0; t < 40; ++t) {
    const int n = g.integer(1, 5), m = g.integer(1, 5);
    const Eigen::MatrixXd c = g.matrix(n, m, 0, 10).array().round().matrix();
    const auto o = oracle::all_assignments(c);
    const int k = g.integer(1, 30);
    const auto r = murty_kbest(c, k);
    REQUIRE(r.size() == std::min<std::size_t>(k, o.size()));
    for (std::size_t i = 0; i < r.size(); ++i) {
      CHECK(std::abs(r[i].cost - o[i].cost) < 1e-9);
      CHECK(r[i].cols == o[i].cols);
    }
    const auto best = solve_assignment(c);
    REQUIRE(best.has_value());
    CHECK(std::abs(best->cost - o.front().cost) < 1e-9);
  }
}
