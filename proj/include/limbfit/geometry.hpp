#pragma once

#include "limbfit/types.hpp"

namespace limbfit {

inline constexpr double kDefaultEpsLen = 1e-9;

// Per-limb cylindrical coordinates of a point. For limb (ya, yb) with axis
// direction d = (yb-ya)/|yb-ya|:
//   z = (p-ya) . d          signed axial coordinate, negative behind ya
//   r = |p - ya - z d|      radial distance from the infinite limb line
struct LimbCoords {
  double z = 0.0;
  double r = 0.0;
};

LimbCoords cylindrical_coords(const Vec3& p, const Vec3& ya, const Vec3& yb,
                              double eps_len = kDefaultEpsLen);

// Euclidean distance from p to segment [ya, yb]. Degenerate segments are
// treated as a point.
double point_segment_distance(const Vec3& p, const Vec3& ya, const Vec3& yb);

// K_h(x, y) = exp(-((x-y)/h)^2). Throws InvalidBandwidth for h <= 0.
double gaussian_kernel(double x, double y, double h);

// Cylindrical coordinates together with first derivatives w.r.t. the limb
// endpoints. Writing q = p - ya, L = |yb - ya|, d = (yb - ya)/L and
// e = q - z d (the perpendicular component, |e| = r):
//   dz/dya = -d - e/L        dz/dyb = e/L
//   dr/dya = (z/L - 1) e/r   dr/dyb = -(z/L) e/r
// At r = 0 the radial direction is undefined; the zero subgradient is used.
struct LimbCoordJet {
  double z = 0.0;
  double r = 0.0;
  double len = 0.0;
  Vec3 axis = Vec3::Zero();  // d
  Vec3 perp = Vec3::Zero();  // e
  Vec3 dz_dya = Vec3::Zero();
  Vec3 dz_dyb = Vec3::Zero();
  Vec3 dr_dya = Vec3::Zero();
  Vec3 dr_dyb = Vec3::Zero();
};

LimbCoordJet cylindrical_coords_jet(const Vec3& p, const Vec3& ya, const Vec3& yb,
                                    double eps_len = kDefaultEpsLen);

// Segment distance with derivatives w.r.t. the endpoints. The perpendicular
// region (0 <= z <= L, boundary included) uses the radial formula; outside it
// the distance reduces to a point distance to the nearer endpoint.
struct SegDistJet {
  double d = 0.0;
  Vec3 dd_dya = Vec3::Zero();
  Vec3 dd_dyb = Vec3::Zero();
};

SegDistJet point_segment_distance_jet(const Vec3& p, const Vec3& ya, const Vec3& yb,
                                      double eps_len = kDefaultEpsLen);

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return rotation * x + translation; }
  RigidTransform inverse() const {
    RigidTransform inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
  }
  RigidTransform compose(const RigidTransform& then_inner) const {
    // (*this) o then_inner
    RigidTransform out;
    out.rotation = rotation * then_inner.rotation;
    out.translation = rotation * then_inner.translation + translation;
    return out;
  }
};

// Intrinsic Z-Y-X Euler rotation from degrees.
Mat3 euler_deg_to_matrix(const Vec3& angles_deg);

}  // namespace limbfit
