#include "limbfit/geometry.hpp"

#include <cmath>

namespace limbfit {

LimbCoords cylindrical_coords(const Vec3& p, const Vec3& ya, const Vec3& yb, double eps_len) {
  const Vec3 u = yb - ya;
  const double len = u.norm();
  if (len <= eps_len) throw DegenerateLimb("cylindrical_coords: |yb - ya| <= eps_len");
  const Vec3 d = u / len;
  const Vec3 q = p - ya;
  LimbCoords c;
  c.z = q.dot(d);
  c.r = (q - c.z * d).norm();
  return c;
}

double point_segment_distance(const Vec3& p, const Vec3& ya, const Vec3& yb) {
  const Vec3 u = yb - ya;
  const double len2 = u.squaredNorm();
  if (len2 <= 0.0) return (p - ya).norm();
  double t = (p - ya).dot(u) / len2;
  t = std::clamp(t, 0.0, 1.0);
  return (p - (ya + t * u)).norm();
}

double gaussian_kernel(double x, double y, double h) {
  if (!(h > 0.0)) throw InvalidBandwidth("gaussian_kernel: h must be positive");
  const double s = (x - y) / h;
  return std::exp(-s * s);
}

LimbCoordJet cylindrical_coords_jet(const Vec3& p, const Vec3& ya, const Vec3& yb,
                                    double eps_len) {
  const Vec3 u = yb - ya;
  const double len = u.norm();
  if (len <= eps_len) throw DegenerateLimb("cylindrical_coords_jet: |yb - ya| <= eps_len");
  LimbCoordJet jet;
  jet.len = len;
  jet.axis = u / len;
  const Vec3 q = p - ya;
  jet.z = q.dot(jet.axis);
  jet.perp = q - jet.z * jet.axis;
  jet.r = jet.perp.norm();

  const Vec3 e_over_len = jet.perp / len;
  jet.dz_dya = -jet.axis - e_over_len;
  jet.dz_dyb = e_over_len;

  if (jet.r > 0.0) {
    const Vec3 rdir = jet.perp / jet.r;
    const double zl = jet.z / len;
    jet.dr_dya = (zl - 1.0) * rdir;
    jet.dr_dyb = -zl * rdir;
  }
  return jet;
}

SegDistJet point_segment_distance_jet(const Vec3& p, const Vec3& ya, const Vec3& yb,
                                      double eps_len) {
  SegDistJet out;
  const Vec3 u = yb - ya;
  const double len = u.norm();
  if (len <= eps_len) {
    // point distance to ya; the full subgradient is assigned to ya
    out.d = (p - ya).norm();
    if (out.d > 0.0) out.dd_dya = (ya - p) / out.d;
    return out;
  }
  const double t = (p - ya).dot(u) / (len * len);
  if (t < 0.0) {
    out.d = (p - ya).norm();
    if (out.d > 0.0) out.dd_dya = (ya - p) / out.d;
  } else if (t > 1.0) {
    out.d = (p - yb).norm();
    if (out.d > 0.0) out.dd_dyb = (yb - p) / out.d;
  } else {
    const LimbCoordJet jet = cylindrical_coords_jet(p, ya, yb, eps_len);
    out.d = jet.r;
    out.dd_dya = jet.dr_dya;
    out.dd_dyb = jet.dr_dyb;
  }
  return out;
}

Mat3 euler_deg_to_matrix(const Vec3& angles_deg) {
  const double deg = M_PI / 180.0;
  const double ax = angles_deg.x() * deg;
  const double ay = angles_deg.y() * deg;
  const double az = angles_deg.z() * deg;
  Mat3 rx, ry, rz;
  rx << 1, 0, 0, 0, std::cos(ax), -std::sin(ax), 0, std::sin(ax), std::cos(ax);
  ry << std::cos(ay), 0, std::sin(ay), 0, 1, 0, -std::sin(ay), 0, std::cos(ay);
  rz << std::cos(az), -std::sin(az), 0, std::sin(az), std::cos(az), 0, 0, 0, 1;
  return rz * ry * rx;
}

}  // namespace limbfit
