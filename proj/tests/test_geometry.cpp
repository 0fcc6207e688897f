#include <doctest.h>

#include "limbfit/geometry.hpp"
#include "limbfit/rng.hpp"

using namespace limbfit;

TEST_SUITE("geometry") {

TEST_CASE("cylindrical coordinates on a unit limb") {
  const Vec3 ya(0, 0, 0), yb(1, 0, 0);
  const LimbCoords c = cylindrical_coords(Vec3(1, 1, 0), ya, yb);
  CHECK(c.z == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(c.r == doctest::Approx(1.0).epsilon(1e-12));

  const LimbCoords mid = cylindrical_coords(Vec3(0.5, 0, 2), ya, yb);
  CHECK(mid.z == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(mid.r == doctest::Approx(2.0).epsilon(1e-12));

  const LimbCoords behind = cylindrical_coords(Vec3(-0.25, 0, 0), ya, yb);
  CHECK(behind.z == doctest::Approx(-0.25).epsilon(1e-12));
  CHECK(behind.r == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("cylindrical coordinates reject degenerate limbs") {
  CHECK_THROWS_AS(cylindrical_coords(Vec3(1, 0, 0), Vec3(0, 0, 0), Vec3(0, 0, 0)),
                  DegenerateLimb);
  CHECK_THROWS_AS(cylindrical_coords_jet(Vec3(1, 0, 0), Vec3(2, 2, 2), Vec3(2, 2, 2)),
                  DegenerateLimb);
}

TEST_CASE("point to segment distance") {
  const Vec3 ya(0, 0, 0), yb(1, 0, 0);
  CHECK(point_segment_distance(Vec3(0.5, 0.2, 0), ya, yb) == doctest::Approx(0.2));
  CHECK(point_segment_distance(Vec3(2, 0, 0), ya, yb) == doctest::Approx(1.0));
  CHECK(point_segment_distance(Vec3(-3, 4, 0), ya, yb) == doctest::Approx(5.0));
  CHECK(point_segment_distance(Vec3(0.7, 0, 0), ya, yb) == doctest::Approx(0.0));
  // degenerate segment behaves like a point
  CHECK(point_segment_distance(Vec3(3, 4, 0), ya, ya) == doctest::Approx(5.0));
}

TEST_CASE("gaussian kernel values") {
  CHECK(gaussian_kernel(0.0, 0.0, 1.0) == doctest::Approx(1.0));
  CHECK(gaussian_kernel(1.0, 0.0, 1.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(gaussian_kernel(2.0, 0.0, 1.0) == doctest::Approx(std::exp(-4.0)).epsilon(1e-12));
  CHECK(gaussian_kernel(0.2, 0.1, 0.1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK_THROWS_AS(gaussian_kernel(0.0, 0.0, 0.0), InvalidBandwidth);
  CHECK_THROWS_AS(gaussian_kernel(0.0, 0.0, -1.0), InvalidBandwidth);
}

TEST_CASE("cylindrical jet matches finite differences") {
  Rng rng(41);
  const double step = 1e-6;
  for (int trial = 0; trial < 25; ++trial) {
    const Vec3 ya(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    Vec3 yb = ya;
    while ((yb - ya).norm() < 0.3)
      yb = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    Vec3 p(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    if (cylindrical_coords(p, ya, yb).r < 0.05) continue;

    const LimbCoordJet jet = cylindrical_coords_jet(p, ya, yb);
    for (int c = 0; c < 3; ++c) {
      Vec3 e = Vec3::Zero();
      e[c] = step;
      const LimbCoords zp = cylindrical_coords(p, ya + e, yb);
      const LimbCoords zm = cylindrical_coords(p, ya - e, yb);
      CHECK(jet.dz_dya[c] == doctest::Approx((zp.z - zm.z) / (2 * step)).epsilon(1e-5));
      CHECK(jet.dr_dya[c] == doctest::Approx((zp.r - zm.r) / (2 * step)).epsilon(1e-5));
      const LimbCoords wp = cylindrical_coords(p, ya, yb + e);
      const LimbCoords wm = cylindrical_coords(p, ya, yb - e);
      CHECK(jet.dz_dyb[c] == doctest::Approx((wp.z - wm.z) / (2 * step)).epsilon(1e-5));
      CHECK(jet.dr_dyb[c] == doctest::Approx((wp.r - wm.r) / (2 * step)).epsilon(1e-5));
    }
  }
}

TEST_CASE("segment distance jet matches finite differences") {
  Rng rng(42);
  const double step = 1e-6;
  for (int trial = 0; trial < 25; ++trial) {
    const Vec3 ya(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    Vec3 yb = ya;
    while ((yb - ya).norm() < 0.3)
      yb = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const Vec3 p(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    // skip samples near the region boundaries where the distance kinks
    const LimbCoords c0 = cylindrical_coords(p, ya, yb);
    const double len = (yb - ya).norm();
    if (c0.r < 0.05 || std::abs(c0.z) < 0.05 || std::abs(c0.z - len) < 0.05) continue;

    const SegDistJet jet = point_segment_distance_jet(p, ya, yb);
    CHECK(jet.d == doctest::Approx(point_segment_distance(p, ya, yb)).epsilon(1e-12));
    for (int c = 0; c < 3; ++c) {
      Vec3 e = Vec3::Zero();
      e[c] = step;
      const double da = (point_segment_distance(p, ya + e, yb) -
                         point_segment_distance(p, ya - e, yb)) /
                        (2 * step);
      const double db = (point_segment_distance(p, ya, yb + e) -
                         point_segment_distance(p, ya, yb - e)) /
                        (2 * step);
      CHECK(jet.dd_dya[c] == doctest::Approx(da).epsilon(1e-5));
      CHECK(jet.dd_dyb[c] == doctest::Approx(db).epsilon(1e-5));
    }
  }
}

TEST_CASE("on-axis points use the zero radial subgradient") {
  const Vec3 ya(0, 0, 0), yb(0, 0, 1);
  const LimbCoordJet jet = cylindrical_coords_jet(Vec3(0, 0, 0.5), ya, yb);
  CHECK(jet.r == doctest::Approx(0.0));
  CHECK(jet.dr_dya.norm() == doctest::Approx(0.0));
  CHECK(jet.dr_dyb.norm() == doctest::Approx(0.0));
  // the axial derivative stays well defined
  CHECK(jet.dz_dya.norm() > 0.0);
}

TEST_CASE("euler rotation convention") {
  const Mat3 rz = euler_deg_to_matrix(Vec3(0, 0, 90));
  CHECK((rz * Vec3(1, 0, 0) - Vec3(0, 1, 0)).norm() == doctest::Approx(0.0).epsilon(1e-12));
  const Mat3 ry = euler_deg_to_matrix(Vec3(0, 90, 0));
  CHECK((ry * Vec3(1, 0, 0) - Vec3(0, 0, -1)).norm() == doctest::Approx(0.0).epsilon(1e-12));
  const Mat3 rx = euler_deg_to_matrix(Vec3(90, 0, 0));
  CHECK((rx * Vec3(0, 1, 0) - Vec3(0, 0, 1)).norm() == doctest::Approx(0.0).epsilon(1e-12));

  // intrinsic Z-Y-X composes as Rz * Ry * Rx
  const Mat3 all = euler_deg_to_matrix(Vec3(10, 20, 30));
  const Mat3 composed = euler_deg_to_matrix(Vec3(0, 0, 30)) *
                        euler_deg_to_matrix(Vec3(0, 20, 0)) *
                        euler_deg_to_matrix(Vec3(10, 0, 0));
  CHECK((all - composed).norm() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK((all * all.transpose() - Mat3::Identity()).norm() ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("rigid transform inverse and compose") {
  RigidTransform g;
  g.rotation = euler_deg_to_matrix(Vec3(15, -40, 75));
  g.translation = Vec3(0.3, -1.2, 2.5);
  const Vec3 p(0.7, 0.1, -0.4);
  CHECK((g.inverse().apply(g.apply(p)) - p).norm() == doctest::Approx(0.0).epsilon(1e-12));

  RigidTransform h;
  h.rotation = euler_deg_to_matrix(Vec3(-5, 30, 10));
  h.translation = Vec3(1, 2, 3);
  CHECK((g.compose(h).apply(p) - g.apply(h.apply(p))).norm() ==
        doctest::Approx(0.0).epsilon(1e-12));
}

}  // TEST_SUITE
