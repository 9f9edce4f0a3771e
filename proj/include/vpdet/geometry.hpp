#pragma once

// Projective-plane primitives: homogeneous points and lines, total least
// squares line fitting, and the RMS consistency between an edge and a
// vanishing point hypothesis.

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "vpdet/errors.hpp"

namespace vpdet {

template <typename Scalar>
using Point2 = Eigen::Matrix<Scalar, 2, 1>;

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;

template <typename Scalar>
using PointList = std::vector<Point2<Scalar>>;

// A homogeneous point whose |w| falls below this fraction of its norm is
// treated as a point at infinity.
template <typename Scalar>
inline constexpr Scalar kIdealEpsilon = Scalar(1e-8);

namespace internal {

// Flips the sign so that the first of the leading components that is
// nonzero is positive.
template <typename Scalar>
Vector3<Scalar> canonical_sign(Vector3<Scalar> v, int leading) {
  for (int i = 0; i < leading; ++i) {
    if (v[i] > Scalar(0)) return v;
    if (v[i] < Scalar(0)) return -v;
  }
  return v;
}

// Angle of the major axis of the 2x2 symmetric matrix [[a, b], [b, c]].
template <typename Scalar>
Scalar major_axis_angle(Scalar a, Scalar b, Scalar c) {
  using std::atan2;
  return Scalar(0.5) * atan2(Scalar(2) * b, a - c);
}

}  // namespace internal

/// Point of the projective plane. Finite points are stored with w = 1;
/// points at infinity are stored unit-norm with w = 0 and a canonical sign.
template <typename Scalar>
class HPoint {
 public:
  explicit HPoint(const Vector3<Scalar>& coords) {
    const Scalar norm = coords.norm();
    if (!(norm > Scalar(0))) throw DegenerateInput("homogeneous point is the zero vector");
    using std::abs;
    if (abs(coords.z()) > kIdealEpsilon<Scalar> * norm) {
      coords_ = coords / coords.z();
      ideal_ = false;
    } else {
      Vector3<Scalar> dir(coords.x(), coords.y(), Scalar(0));
      coords_ = internal::canonical_sign<Scalar>(dir / dir.norm(), 2);
      ideal_ = true;
    }
  }

  static HPoint finite(Scalar x, Scalar y) { return HPoint(Vector3<Scalar>(x, y, Scalar(1))); }
  static HPoint finite(const Point2<Scalar>& p) { return finite(p.x(), p.y()); }
  static HPoint at_infinity(Scalar dx, Scalar dy) { return HPoint(Vector3<Scalar>(dx, dy, Scalar(0))); }

  const Vector3<Scalar>& coords() const { return coords_; }
  bool is_ideal() const { return ideal_; }

  // Pixel location; only meaningful for finite points.
  Point2<Scalar> euclidean() const { return coords_.template head<2>(); }

  // Unit direction; for finite points this is the direction from the origin.
  Point2<Scalar> direction() const { return coords_.template head<2>().normalized(); }

  template <typename Other>
  HPoint<Other> cast() const {
    return HPoint<Other>(coords_.template cast<Other>());
  }

 private:
  Vector3<Scalar> coords_;
  bool ideal_ = false;
};

/// Line a*x + b*y + c*w = 0 stored with (a, b) unit length, so c is the
/// signed distance of the origin, and the first nonzero of (a, b) positive.
template <typename Scalar>
class HLine {
 public:
  explicit HLine(const Vector3<Scalar>& coords) {
    const Scalar normal = coords.template head<2>().norm();
    if (!(normal > Scalar(0))) throw DegenerateInput("line has a zero normal");
    coords_ = internal::canonical_sign<Scalar>(coords / normal, 2);
  }

  static HLine through(const Point2<Scalar>& p, const Point2<Scalar>& q) {
    return HLine(Vector3<Scalar>(p.x(), p.y(), Scalar(1)).cross(Vector3<Scalar>(q.x(), q.y(), Scalar(1))));
  }

  const Vector3<Scalar>& coords() const { return coords_; }
  Point2<Scalar> normal() const { return coords_.template head<2>(); }
  Scalar offset() const { return coords_.z(); }

  // Signed distance; positive on the side the normal points to.
  Scalar signed_distance(const Point2<Scalar>& p) const {
    return coords_.x() * p.x() + coords_.y() * p.y() + coords_.z();
  }

 private:
  Vector3<Scalar> coords_;
};

template <typename Scalar>
Scalar point_line_distance(const Point2<Scalar>& p, const HLine<Scalar>& line) {
  using std::abs;
  return abs(line.signed_distance(p));
}

template <typename Scalar>
Scalar arc_length(const PointList<Scalar>& points) {
  Scalar total(0);
  for (std::size_t i = 1; i < points.size(); ++i) total += (points[i] - points[i - 1]).norm();
  return total;
}

/// Line minimizing the sum of squared perpendicular distances.
/// Throws DegenerateInput for fewer than two distinct points.
template <typename Scalar>
HLine<Scalar> fit_line_tls(const PointList<Scalar>& points) {
  if (points.size() < 2) throw DegenerateInput("line fit needs at least two points");
  Point2<Scalar> centroid = Point2<Scalar>::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= Scalar(points.size());

  Scalar sxx(0), sxy(0), syy(0);
  for (const auto& p : points) {
    const Point2<Scalar> d = p - centroid;
    sxx += d.x() * d.x();
    sxy += d.x() * d.y();
    syy += d.y() * d.y();
  }
  if (!(sxx + syy > Scalar(0))) throw DegenerateInput("all points coincide");

  using std::cos;
  using std::sin;
  const Scalar theta = internal::major_axis_angle(sxx, sxy, syy);
  const Point2<Scalar> n(-sin(theta), cos(theta));
  return HLine<Scalar>(Vector3<Scalar>(n.x(), n.y(), -n.dot(centroid)));
}

/// Meet of two lines. Parallel lines give a point at infinity; identical
/// lines throw IdenticalLines.
template <typename Scalar>
HPoint<Scalar> intersect(const HLine<Scalar>& l1, const HLine<Scalar>& l2) {
  const Vector3<Scalar> u = l1.coords().normalized();
  const Vector3<Scalar> v = l2.coords().normalized();
  const Vector3<Scalar> x = u.cross(v);
  if (!(x.norm() > kIdealEpsilon<Scalar>)) throw IdenticalLines("lines coincide");
  return HPoint<Scalar>(x);
}

/// Root mean square distance from `points` to the best line through `vp`.
///
/// For a finite vp this is sqrt(lambda_min(S) / N) with S the scatter of the
/// points about vp. The minimizing normal is evaluated directly rather than
/// through the eigenvalue formula, which loses all precision once the edge
/// lies far from the vp. For a vp at infinity the pencil degenerates to a
/// family of parallel lines and the result is the standard deviation of the
/// points across that direction.
template <typename Scalar>
Scalar d_rms(const PointList<Scalar>& points, const HPoint<Scalar>& vp) {
  using std::sqrt;
  if (points.empty()) return Scalar(0);
  const Scalar n = Scalar(points.size());

  if (vp.is_ideal()) {
    const Point2<Scalar> d = vp.direction();
    const Point2<Scalar> normal(-d.y(), d.x());
    Scalar mean(0);
    for (const auto& p : points) mean += normal.dot(p);
    mean /= n;
    Scalar ss(0);
    for (const auto& p : points) {
      const Scalar r = normal.dot(p) - mean;
      ss += r * r;
    }
    return sqrt(ss / n);
  }

  const Point2<Scalar> v = vp.euclidean();
  Scalar sxx(0), sxy(0), syy(0);
  for (const auto& p : points) {
    const Point2<Scalar> d = p - v;
    sxx += d.x() * d.x();
    sxy += d.x() * d.y();
    syy += d.y() * d.y();
  }
  if (!(sxx + syy > Scalar(0))) return Scalar(0);

  using std::cos;
  using std::sin;
  const Scalar theta = internal::major_axis_angle(sxx, sxy, syy);
  const Point2<Scalar> normal(-sin(theta), cos(theta));
  Scalar ss(0);
  for (const auto& p : points) {
    const Scalar r = normal.dot(p - v);
    ss += r * r;
  }
  return sqrt(ss / n);
}

/// Approximately straight pixel chain with its fitted line and arc length.
template <typename Scalar>
class BasicEdge {
 public:
  explicit BasicEdge(PointList<Scalar> points)
      : points_(std::move(points)), line_(fit_line_tls(points_)), length_(arc_length(points_)) {}

  const PointList<Scalar>& points() const { return points_; }
  const HLine<Scalar>& fitted_line() const { return line_; }
  Scalar length() const { return length_; }
  std::size_t size() const { return points_.size(); }

 private:
  PointList<Scalar> points_;
  HLine<Scalar> line_;
  Scalar length_;
};

template <typename Scalar>
Scalar d_rms(const BasicEdge<Scalar>& edge, const HPoint<Scalar>& vp) {
  return d_rms(edge.points(), vp);
}

using HPointd = HPoint<double>;
using HLined = HLine<double>;
using Point2d = Point2<double>;
using Points2d = PointList<double>;
using Edge = BasicEdge<double>;

}  // namespace vpdet
