#include <catch2/catch_amalgamated.hpp>

#include "lbopt/stats.hpp"

using namespace lbopt::stats;

TEST_CASE("wilson interval basics") {
  auto iv = wilson(0, 10000);
  REQUIRE(iv.lo == 0.0);
  REQUIRE(iv.hi < 0.001);

  auto half = wilson(5000, 10000);
  REQUIRE(half.lo < 0.5);
  REQUIRE(half.hi > 0.5);
  REQUIRE(half.hi - half.lo < 0.03);

  REQUIRE_THROWS(wilson(0, 0));
}

TEST_CASE("chi2 survival function spot values") {
  // chi2_{0.95, df=3} = 7.8147279033  (frozen via high-precision gamma)
  REQUIRE(std::fabs(chi2_sf(7.8147279033, 3) - 0.05) < 1e-9);
  // frozen: Q(19; df=19) = 0.45683612559196238
  REQUIRE(std::fabs(chi2_sf(19.0, 19) - 0.45683612559196238) < 1e-10);
  REQUIRE(chi2_sf(0.0, 5) == 1.0);
  REQUIRE(chi2_sf(1e4, 5) < 1e-12);
}

TEST_CASE("welford accumulator") {
  Accumulator acc;
  for (double v : {1.0, 2.0, 3.0, 4.0}) acc.add(v);
  REQUIRE(acc.mean == 2.5);
  REQUIRE(std::fabs(acc.variance() - 5.0 / 3.0) < 1e-14);
}
