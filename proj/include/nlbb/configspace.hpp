#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "nlbb/common.hpp"

namespace nlbb {

using Index = std::int64_t;

// add_point / remove_point result for moves that leave the truncated state set.
inline constexpr Index kBoundary = -1;

inline constexpr Index kDefaultStateCap = 2'000'000;

// Axis-aligned box of lattice cells with side length `cell_side`.
// Cells are indexed row-major (last axis fastest) relative to `origin`,
// which is given in units of cell_side.
struct LatticeWindow {
  int dim = 1;
  std::vector<int> cells_per_axis;
  double cell_side = 1.0;
  std::vector<int> origin;  // empty means all zeros

  int cell_count() const;
  double cell_volume() const;  // cell_side^dim
  double volume() const;       // cell_count * cell_volume
  std::vector<int> cell_coords(int cell) const;         // local coords
  std::vector<int> global_coords(int cell) const;       // origin + local
  int cell_at(std::span<const int> global) const;       // -1 if outside
  bool disjoint_from(const LatticeWindow& other) const;
  bool contains(const LatticeWindow& sub) const;
  bool operator==(const LatticeWindow& other) const;

  void validate() const;  // throws ConfigError
};

// Returns, for each cell of `sub`, the index of the same cell in `super`.
// Throws WindowError unless super contains sub and the side lengths match.
std::vector<int> cell_embedding(const LatticeWindow& sub, const LatticeWindow& super);

// Enumerated occupancy vectors n in N_0^m with sum(n) <= n_max, in graded
// lexicographic order (sorted by total occupancy, then lexicographically).
// Immutable after construction; holds the truncated Poisson reference.
class ConfigSpace {
 public:
  struct Edge {
    Index from;  // state index of n
    int site;    // j
    Index to;    // state index of n + e_j
  };

  const LatticeWindow& window() const { return window_; }
  int n_max() const { return n_max_; }
  int sites() const { return m_; }
  Index size() const { return static_cast<Index>(totals_.size()); }
  const std::vector<double>& site_volumes() const { return vol_; }
  double total_volume() const { return window_.volume(); }

  std::span<const int> state(Index i) const {
    return {occ_.data() + static_cast<std::size_t>(i) * m_, static_cast<std::size_t>(m_)};
  }
  int total(Index i) const { return totals_[static_cast<std::size_t>(i)]; }
  // kBoundary when occ is not in the truncated set.
  Index index_of(std::span<const int> occ) const;

  Index add_point(Index i, int site) const { return up_[static_cast<std::size_t>(i) * m_ + site]; }
  Index remove_point(Index i, int site) const { return down_[static_cast<std::size_t>(i) * m_ + site]; }

  // Normalized truncated Poisson weights; detailed balance
  //   pi(n) * v_j = pi(n + e_j) * (n_j + 1)
  // holds on every edge.
  const std::vector<double>& reference_weights() const { return pi_; }
  // Mass the untruncated product Poisson law places outside the state set.
  double truncation_mass() const { return truncation_mass_; }

  // All (n, j) pairs with n + e_j inside the set, ordered by (state, site).
  const std::vector<Edge>& edges() const { return edges_; }

  friend std::shared_ptr<const ConfigSpace> build_space(const LatticeWindow&, int,
                                                        std::vector<double>, Index);

 private:
  LatticeWindow window_;
  int n_max_ = 0;
  int m_ = 0;
  std::vector<double> vol_;
  std::vector<int> occ_;      // flat, size S*m
  std::vector<int> totals_;   // size S
  std::vector<Index> grade_offsets_;  // size n_max+2; states of total k in [off[k], off[k+1])
  std::vector<Index> up_;     // flat, size S*m
  std::vector<Index> down_;   // flat, size S*m
  std::vector<double> pi_;
  double truncation_mass_ = 0.0;
  std::vector<Edge> edges_;
};

using SpacePtr = std::shared_ptr<const ConfigSpace>;

// Number of states of a space with m sites truncated at n_max, saturating at
// cap + 1 to keep the arithmetic safe for large inputs.
Index state_count(int m, int n_max, Index cap = kDefaultStateCap);

// site_volumes: one entry per cell, or empty for the uniform default h^d.
// Throws SizingError when the state count exceeds state_cap.
SpacePtr build_space(const LatticeWindow& window, int n_max,
                     std::vector<double> site_volumes = {},
                     Index state_cap = kDefaultStateCap);

// True when measures over the two spaces may be combined: identical window
// geometry, truncation, and site volumes.
bool compatible(const ConfigSpace& a, const ConfigSpace& b);

// View of the reference measure as a standalone object.
struct ReferenceMeasure {
  SpacePtr space;
  const std::vector<double>& weights() const { return space->reference_weights(); }
  double truncation_mass() const { return space->truncation_mass(); }
};

ReferenceMeasure reference_measure(SpacePtr space);

// Probability law P = rho * pi on a ConfigSpace.
struct DensityMeasure {
  SpacePtr space;
  std::vector<double> rho;

  double mass() const;  // sum of rho * pi
  // P(n): rho[i] * pi[i]
  double prob(Index i) const { return rho[static_cast<std::size_t>(i)] * space->reference_weights()[static_cast<std::size_t>(i)]; }
  bool valid(double tol = 1e-12) const;
  void renormalize();
};

DensityMeasure uniform_density(SpacePtr space);                  // the reference itself
DensityMeasure pointmass(SpacePtr space, Index i);
DensityMeasure poisson_density(SpacePtr space, double c);        // truncated Poi with intensity c*v_j
DensityMeasure mixture(const std::vector<double>& weights, const std::vector<DensityMeasure>& parts);

// Seeded strictly positive density: rho(n) proportional to E_n^{1/concentration}
// with E_n unit exponentials from SplitMix64(seed). concentration = 1 draws the
// probability-shape uniformly tilted by pi; larger values flatten toward the
// reference, smaller values spike. Output is identical on every platform.
DensityMeasure random_density(SpacePtr space, std::uint64_t seed, double concentration = 1.0);

// Marginal law on a sub-window (same n_max, site volumes inherited).
// Exact marginal of the truncated law; coincides with integrating the density
// against the complement Poisson reference up to the constant that makes the
// result a probability.
DensityMeasure restrict_measure(const DensityMeasure& P, const LatticeWindow& sub);

// Law of independent components on the disjoint union of two windows. The
// union must again be a box. States whose total exceeds n_max are clipped;
// the clipped mass is reported in *clip_defect and the result renormalized.
DensityMeasure product_measure(const DensityMeasure& P, const DensityMeasure& Q,
                               double* clip_defect = nullptr);

// Relocates the window by z (lattice units); state enumeration is unchanged.
DensityMeasure shift_measure(const DensityMeasure& P, std::span<const int> z);

// Cyclic shift on a fixed window (torus identification). Site volumes must be
// invariant under the rotation.
DensityMeasure shift_torus(const DensityMeasure& P, std::span<const int> z);

// Cell permutation of a torus shift: new_cell = sigma[old_cell].
std::vector<int> torus_permutation(const LatticeWindow& w, std::span<const int> z);

}  // namespace nlbb
