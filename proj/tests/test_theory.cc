#include <doctest.h>

#include "savetag/theory.h"

using namespace savetag;

TEST_CASE("isolation checks pass") {
  const auto a = check_isolation(20, 1);
  CHECK(a.passed);
  CHECK(a.failures == 0);
  CHECK(a.worst <= 1e-12);
  CHECK(check_isolation(5, 2, 0.5).passed);
  CHECK(check_gcn_isolation(5, 3).passed);
}

TEST_CASE("contraction holds and the negative control breaks it") {
  CHECK(check_contraction(200, 4).passed);
  ContractionOptions big;
  big.anchor_scale = 100.0;
  CHECK(check_contraction(100, 5, big).passed);
  ContractionOptions bad;
  bad.normalized_beta = false;
  const auto r = check_contraction(200, 6, bad);
  CHECK_FALSE(r.passed);
  CHECK(r.failures > 0);
}

TEST_CASE("margin sets: the corrected floor holds, the stated bound does not") {
  CHECK(check_margin_sets(200, 7, false).passed);
  const auto stated = check_margin_sets(200, 7, true);
  CHECK_FALSE(stated.passed);
  CHECK(stated.failures > 0);
  CHECK(check_margin_corner(100, 8).passed);
}

TEST_CASE("gradient checks") {
  CHECK(check_gradients(false, 3, 9).passed);
  CHECK(check_gradients(true, 3, 10).passed);
}
