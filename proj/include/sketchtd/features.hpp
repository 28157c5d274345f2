#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "sketchtd/errors.hpp"
#include "sketchtd/rng.hpp"
#include "sketchtd/types.hpp"

namespace sketchtd::features {

struct StateBounds {
  std::vector<std::pair<double, double>> ranges;

  int dims() const { return static_cast<int>(ranges.size()); }
  double low(int i) const { return ranges[i].first; }
  double high(int i) const { return ranges[i].second; }
  double range(int i) const { return ranges[i].second - ranges[i].first; }

  void validate() const {
    if (ranges.empty()) throw InvalidSpec("StateBounds: no dimensions");
    for (const auto& [lo, hi] : ranges)
      if (!(lo < hi)) throw InvalidSpec("StateBounds: low must be < high");
  }

  Vector clip(Vector state) const {
    if (state.size() != dims()) throw DimensionMismatch("StateBounds::clip: wrong dims");
    for (int i = 0; i < dims(); ++i)
      state(i) = std::clamp(state(i), low(i), high(i));
    return state;
  }
};

struct RbfGridSpec {
  int centers_per_dim = 1;
  double width = 1.0;
  // When set, the kernel is exp(-sum_i ((x_i - c_i) / (width * r_i))^2) with
  // r_i the range of dimension i (no factor 2); otherwise the isotropic
  // exp(-||x - c||^2 / (2 width^2)).
  bool normalize_per_dim = false;

  bool operator==(const RbfGridSpec&) const = default;
};

struct TileCodingSpec {
  int tilings = 1;
  int tiles_per_dim = 1;
  int memory_size = 1;

  bool operator==(const TileCodingSpec&) const = default;
};

struct SplineGridSpec {
  int centers_per_dim = 1;
  double width = 1.0;

  bool operator==(const SplineGridSpec&) const = default;
};

// Offset grids of RBF centers, one grid per tiling. Like tile coding's
// shifted tilings, offset grids may overhang the low boundary by a fraction
// of a cell.
struct TiledRbfSpec {
  int tilings = 1;
  int grid_per_dim = 1;
  double width = 1.0;

  bool operator==(const TiledRbfSpec&) const = default;
};

using FeatureSpec = std::variant<RbfGridSpec, TileCodingSpec, SplineGridSpec, TiledRbfSpec>;

struct FeatureVector {
  int dim = 0;
  SparseEntries entries;

  static FeatureVector zero(int dim) { return FeatureVector{dim, {}}; }

  int nnz() const { return static_cast<int>(entries.size()); }

  double dot(const Vector& w) const {
    if (w.size() != dim) throw DimensionMismatch("FeatureVector::dot: wrong length");
    double acc = 0.0;
    for (const auto& [i, v] : entries) acc += v * w(i);
    return acc;
  }

  void add_scaled_to(Vector& acc, double scale) const {
    if (acc.size() != dim) throw DimensionMismatch("FeatureVector::add_scaled_to");
    for (const auto& [i, v] : entries) acc(i) += scale * v;
  }

  Vector dense() const {
    Vector x = Vector::Zero(dim);
    for (const auto& [i, v] : entries) x(i) += v;
    return x;
  }

  double l1_norm() const {
    double acc = 0.0;
    for (const auto& [i, v] : entries) acc += std::abs(v);
    return acc;
  }
};

namespace detail {

// Uniform grid with centers at cell midpoints of [low, high] per dimension,
// enumerated row-major over dimensions.
inline Matrix grid_centers(const StateBounds& bounds, int per_dim, const Vector& shift) {
  const int sd = bounds.dims();
  int total = 1;
  for (int i = 0; i < sd; ++i) total *= per_dim;
  Matrix centers(total, sd);
  std::vector<int> idx(sd, 0);
  for (int c = 0; c < total; ++c) {
    for (int i = 0; i < sd; ++i) {
      const double cell = bounds.range(i) / per_dim;
      centers(c, i) = bounds.low(i) + (idx[i] + 0.5) * cell - shift(i) * cell;
    }
    for (int i = sd - 1; i >= 0; --i) {
      if (++idx[i] < per_dim) break;
      idx[i] = 0;
    }
  }
  return centers;
}

struct RbfImpl {
  Matrix centers;      // d x state_dims
  Vector inv_width_sq; // per state dim: 1/(width*r_i)^2 or 1/(2 width^2)
  bool per_dim = false;
};

struct TileImpl {
  int tilings = 0;
  int tiles_per_dim = 0;
  int memory_size = 0;
  int cells_per_dim = 0;  // tiles_per_dim + 1 (halo for shifted grids)
  bool hashed = false;
  std::uint64_t hash_seed = 0;
};

struct SplineImpl {
  Matrix centers;
  double width = 0.0;
};

struct TiledRbfImpl {
  std::vector<Matrix> centers;  // one grid per tiling
  double inv_two_sigma_sq = 0.0;
};

}  // namespace detail

class FeatureMap {
 public:
  using Impl =
      std::variant<detail::RbfImpl, detail::TileImpl, detail::SplineImpl, detail::TiledRbfImpl>;

  FeatureMap(FeatureSpec spec, StateBounds bounds, int dim, Impl impl)
      : spec_(spec), bounds_(std::move(bounds)), dim_(dim), impl_(std::move(impl)) {}

  int dim() const { return dim_; }
  const StateBounds& bounds() const { return bounds_; }
  const FeatureSpec& spec() const { return spec_; }

  FeatureVector featurize(const Vector& state) const {
    Vector s = bounds_.clip(state);
    return std::visit([&](const auto& impl) { return featurize_impl(impl, s); }, impl_);
  }

  bool is_tile_coding() const { return std::holds_alternative<detail::TileImpl>(impl_); }
  int tilings() const {
    if (const auto* t = std::get_if<detail::TileImpl>(&impl_)) return t->tilings;
    if (const auto* t = std::get_if<detail::TiledRbfImpl>(&impl_))
      return static_cast<int>(t->centers.size());
    return 1;
  }

 private:
  FeatureVector featurize_impl(const detail::RbfImpl& impl, const Vector& s) const {
    FeatureVector out = FeatureVector::zero(dim_);
    out.entries.reserve(impl.centers.rows());
    for (Eigen::Index c = 0; c < impl.centers.rows(); ++c) {
      double expo = 0.0;
      for (int i = 0; i < bounds_.dims(); ++i) {
        const double diff = s(i) - impl.centers(c, i);
        expo += diff * diff * impl.inv_width_sq(i);
      }
      out.entries.emplace_back(static_cast<int>(c), std::exp(-expo));
    }
    return out;
  }

  FeatureVector featurize_impl(const detail::TileImpl& impl, const Vector& s) const {
    FeatureVector out = FeatureVector::zero(dim_);
    out.entries.reserve(impl.tilings);
    const int sd = bounds_.dims();
    std::vector<int> cell(sd);
    std::vector<int> raw;
    raw.reserve(impl.tilings);
    for (int t = 0; t < impl.tilings; ++t) {
      for (int i = 0; i < sd; ++i) {
        const double w = bounds_.range(i) / impl.tiles_per_dim;
        const double shift = w * t / impl.tilings;
        int c = static_cast<int>(std::floor((s(i) - bounds_.low(i) + shift) / w));
        cell[i] = std::clamp(c, 0, impl.cells_per_dim - 1);
      }
      int index;
      if (!impl.hashed) {
        int flat = 0;
        for (int i = 0; i < sd; ++i) flat = flat * impl.cells_per_dim + cell[i];
        int per_tiling = 1;
        for (int i = 0; i < sd; ++i) per_tiling *= impl.cells_per_dim;
        index = t * per_tiling + flat;
      } else {
        std::uint64_t h = splitmix64(impl.hash_seed ^ static_cast<std::uint64_t>(t + 1));
        for (int i = 0; i < sd; ++i)
          h = splitmix64(h ^ static_cast<std::uint64_t>(cell[i] + 0x51ull));
        index = static_cast<int>(h % static_cast<std::uint64_t>(impl.memory_size));
      }
      raw.push_back(index);
    }
    // Always exactly `tilings` unit entries. Hash collisions repeat an index;
    // sparse consumers accumulate, so a collision acts as a weight-2 feature.
    std::sort(raw.begin(), raw.end());
    for (int index : raw) out.entries.emplace_back(index, 1.0);
    return out;
  }

  FeatureVector featurize_impl(const detail::SplineImpl& impl, const Vector& s) const {
    FeatureVector out = FeatureVector::zero(dim_);
    for (Eigen::Index c = 0; c < impl.centers.rows(); ++c) {
      const double dist = (s - impl.centers.row(c).transpose()).norm();
      if (dist < impl.width) out.entries.emplace_back(static_cast<int>(c), 1.0);
    }
    return out;
  }

  FeatureVector featurize_impl(const detail::TiledRbfImpl& impl, const Vector& s) const {
    FeatureVector out = FeatureVector::zero(dim_);
    int offset = 0;
    for (const Matrix& centers : impl.centers) {
      for (Eigen::Index c = 0; c < centers.rows(); ++c) {
        const double sq = (s - centers.row(c).transpose()).squaredNorm();
        out.entries.emplace_back(offset + static_cast<int>(c),
                                 std::exp(-sq * impl.inv_two_sigma_sq));
      }
      offset += static_cast<int>(centers.rows());
    }
    return out;
  }

  FeatureSpec spec_;
  StateBounds bounds_;
  int dim_;
  Impl impl_;
};

namespace detail {

inline int pow_int(int base, int exp) {
  int r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

}  // namespace detail

// Builds a deterministic encoder. The seed only feeds the tile-coding hash;
// all center layouts are deterministic functions of spec and bounds.
inline FeatureMap build_feature_map(const FeatureSpec& spec, const StateBounds& bounds,
                                    std::uint64_t seed) {
  bounds.validate();
  const int sd = bounds.dims();
  if (const auto* rbf = std::get_if<RbfGridSpec>(&spec)) {
    if (rbf->centers_per_dim < 1 || !(rbf->width > 0.0))
      throw InvalidSpec("RbfGrid: counts >= 1 and width > 0 required");
    detail::RbfImpl impl;
    impl.centers = detail::grid_centers(bounds, rbf->centers_per_dim, Vector::Zero(sd));
    impl.per_dim = rbf->normalize_per_dim;
    impl.inv_width_sq = Vector(sd);
    for (int i = 0; i < sd; ++i) {
      if (rbf->normalize_per_dim) {
        const double w = rbf->width * bounds.range(i);
        impl.inv_width_sq(i) = 1.0 / (w * w);
      } else {
        impl.inv_width_sq(i) = 1.0 / (2.0 * rbf->width * rbf->width);
      }
    }
    const int d = detail::pow_int(rbf->centers_per_dim, sd);
    return FeatureMap(spec, bounds, d, std::move(impl));
  }
  if (const auto* tile = std::get_if<TileCodingSpec>(&spec)) {
    if (tile->tilings < 1 || tile->tiles_per_dim < 1 || tile->memory_size < 1)
      throw InvalidSpec("TileCoding: all counts must be >= 1");
    detail::TileImpl impl;
    impl.tilings = tile->tilings;
    impl.tiles_per_dim = tile->tiles_per_dim;
    impl.memory_size = tile->memory_size;
    impl.cells_per_dim = tile->tiles_per_dim + 1;
    const long total =
        static_cast<long>(tile->tilings) * detail::pow_int(impl.cells_per_dim, sd);
    impl.hashed = total > tile->memory_size;
    impl.hash_seed = derive_seed(seed, Stream::features);
    return FeatureMap(spec, bounds, tile->memory_size, std::move(impl));
  }
  if (const auto* spline = std::get_if<SplineGridSpec>(&spec)) {
    if (spline->centers_per_dim < 1 || !(spline->width > 0.0))
      throw InvalidSpec("SplineGrid: counts >= 1 and width > 0 required");
    detail::SplineImpl impl;
    impl.centers = detail::grid_centers(bounds, spline->centers_per_dim, Vector::Zero(sd));
    impl.width = spline->width;
    const int d = detail::pow_int(spline->centers_per_dim, sd);
    return FeatureMap(spec, bounds, d, std::move(impl));
  }
  const auto& tiled = std::get<TiledRbfSpec>(spec);
  if (tiled.tilings < 1 || tiled.grid_per_dim < 1 || !(tiled.width > 0.0))
    throw InvalidSpec("TiledRbf: counts >= 1 and width > 0 required");
  detail::TiledRbfImpl impl;
  impl.inv_two_sigma_sq = 1.0 / (2.0 * tiled.width * tiled.width);
  for (int t = 0; t < tiled.tilings; ++t) {
    Vector shift = Vector::Constant(sd, static_cast<double>(t) / tiled.tilings);
    impl.centers.push_back(detail::grid_centers(bounds, tiled.grid_per_dim, shift));
  }
  const int d = tiled.tilings * detail::pow_int(tiled.grid_per_dim, sd);
  return FeatureMap(spec, bounds, d, std::move(impl));
}

// Max l1 norm over probe states; for tile coding this is exactly `tilings`
// and the probes may be empty.
inline double feature_l1_norm(const FeatureMap& map, const std::vector<Vector>& probes) {
  if (map.is_tile_coding()) return static_cast<double>(map.tilings());
  if (probes.empty()) throw InvalidSpec("feature_l1_norm: need probe states");
  double best = 0.0;
  for (const Vector& s : probes) best = std::max(best, map.featurize(s).l1_norm());
  return best;
}

// Finds a width whose max probe l1 norm is approximately `target` by
// bisection; the norm is weakly increasing in the width for RBF and spline
// maps. Returns the calibrated width.
template <class SpecT>
inline double calibrate_width_for_l1(SpecT spec, const StateBounds& bounds,
                                     const std::vector<Vector>& probes, double target,
                                     std::uint64_t seed = 0) {
  static_assert(std::is_same_v<SpecT, RbfGridSpec> || std::is_same_v<SpecT, SplineGridSpec>,
                "width calibration applies to RBF and spline grids");
  if (probes.empty() || !(target > 0.0))
    throw InvalidSpec("calibrate_width_for_l1: need probes and positive target");
  double max_range = 0.0;
  for (int i = 0; i < bounds.dims(); ++i) max_range = std::max(max_range, bounds.range(i));
  double lo = 1e-5 * max_range, hi = 4.0 * max_range;
  auto norm_at = [&](double w) {
    spec.width = w;
    return feature_l1_norm(build_feature_map(FeatureSpec(spec), bounds, seed), probes);
  };
  if (norm_at(hi) < target) return hi;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (norm_at(mid) < target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace sketchtd::features
