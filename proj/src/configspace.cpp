#include "nlbb/configspace.hpp"

#include "nlbb/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <numeric>

namespace nlbb {

namespace {

long double accumulate_ld(const std::vector<double>& x) {
  long double s = 0;
  for (double v : x) s += v;
  return s;
}

}  // namespace

int LatticeWindow::cell_count() const {
  int m = 1;
  for (int c : cells_per_axis) m *= c;
  return m;
}

double LatticeWindow::cell_volume() const { return std::pow(cell_side, dim); }

double LatticeWindow::volume() const { return cell_count() * cell_volume(); }

std::vector<int> LatticeWindow::cell_coords(int cell) const {
  std::vector<int> c(dim);
  for (int a = dim - 1; a >= 0; --a) {
    c[a] = cell % cells_per_axis[a];
    cell /= cells_per_axis[a];
  }
  return c;
}

std::vector<int> LatticeWindow::global_coords(int cell) const {
  auto c = cell_coords(cell);
  for (int a = 0; a < dim; ++a) c[a] += origin.empty() ? 0 : origin[a];
  return c;
}

int LatticeWindow::cell_at(std::span<const int> g) const {
  int idx = 0;
  for (int a = 0; a < dim; ++a) {
    const int local = g[a] - (origin.empty() ? 0 : origin[a]);
    if (local < 0 || local >= cells_per_axis[a]) return -1;
    idx = idx * cells_per_axis[a] + local;
  }
  return idx;
}

bool LatticeWindow::disjoint_from(const LatticeWindow& o) const {
  if (dim != o.dim) throw WindowError("windows of different dimension");
  for (int a = 0; a < dim; ++a) {
    const int lo1 = origin.empty() ? 0 : origin[a];
    const int lo2 = o.origin.empty() ? 0 : o.origin[a];
    const int hi1 = lo1 + cells_per_axis[a];
    const int hi2 = lo2 + o.cells_per_axis[a];
    if (hi1 <= lo2 || hi2 <= lo1) return true;  // separated along this axis
  }
  return false;
}

bool LatticeWindow::contains(const LatticeWindow& sub) const {
  if (dim != sub.dim || cell_side != sub.cell_side) return false;
  for (int a = 0; a < dim; ++a) {
    const int lo = origin.empty() ? 0 : origin[a];
    const int slo = sub.origin.empty() ? 0 : sub.origin[a];
    if (slo < lo) return false;
    if (slo + sub.cells_per_axis[a] > lo + cells_per_axis[a]) return false;
  }
  return true;
}

bool LatticeWindow::operator==(const LatticeWindow& o) const {
  if (dim != o.dim || cell_side != o.cell_side || cells_per_axis != o.cells_per_axis)
    return false;
  for (int a = 0; a < dim; ++a) {
    const int x = origin.empty() ? 0 : origin[a];
    const int y = o.origin.empty() ? 0 : o.origin[a];
    if (x != y) return false;
  }
  return true;
}

void LatticeWindow::validate() const {
  if (dim < 1) throw ConfigError("window dim must be >= 1");
  if (static_cast<int>(cells_per_axis.size()) != dim)
    throw ConfigError("cells_per_axis must have dim entries");
  for (int c : cells_per_axis)
    if (c < 1) throw ConfigError("cells_per_axis entries must be >= 1");
  if (!(cell_side > 0)) throw ConfigError("cell_side must be positive");
  if (!origin.empty() && static_cast<int>(origin.size()) != dim)
    throw ConfigError("origin must be empty or have dim entries");
}

std::vector<int> cell_embedding(const LatticeWindow& sub, const LatticeWindow& super) {
  if (!super.contains(sub)) throw WindowError("sub-window not contained in window");
  std::vector<int> map(sub.cell_count());
  for (int c = 0; c < sub.cell_count(); ++c) {
    const auto g = sub.global_coords(c);
    map[c] = super.cell_at(g);
  }
  return map;
}

Index state_count(int m, int n_max, Index cap) {
  // sum_{k<=n_max} C(m+k-1, k) via the ratio recurrence, saturating early.
  unsigned long long count = 0, term = 1;  // term = C(m+k-1, k)
  for (int k = 0; k <= n_max; ++k) {
    count += term;
    if (count > static_cast<unsigned long long>(cap)) return cap + 1;
    const unsigned __int128 next = static_cast<unsigned __int128>(term) * (m + k) / (k + 1);
    if (next > static_cast<unsigned __int128>(cap) + 1)
      term = static_cast<unsigned long long>(cap) + 1;
    else
      term = static_cast<unsigned long long>(next);
  }
  return static_cast<Index>(count);
}

Index ConfigSpace::index_of(std::span<const int> occ) const {
  int k = 0;
  for (int x : occ) {
    if (x < 0) return kBoundary;
    k += x;
  }
  if (k > n_max_) return kBoundary;
  // binary search within the grade block; states are lex-sorted inside it
  Index lo = grade_offsets_[k], hi = grade_offsets_[k + 1];
  while (lo < hi) {
    const Index mid = lo + (hi - lo) / 2;
    const int* s = occ_.data() + static_cast<std::size_t>(mid) * m_;
    bool less = std::lexicographical_compare(s, s + m_, occ.data(), occ.data() + m_);
    if (less)
      lo = mid + 1;
    else
      hi = mid;
  }
  if (lo >= grade_offsets_[k + 1]) return kBoundary;
  const int* s = occ_.data() + static_cast<std::size_t>(lo) * m_;
  return std::equal(s, s + m_, occ.data()) ? lo : kBoundary;
}

SpacePtr build_space(const LatticeWindow& window, int n_max,
                     std::vector<double> site_volumes, Index state_cap) {
  LatticeWindow w = window;
  w.validate();
  if (w.origin.empty()) w.origin.assign(w.dim, 0);
  if (n_max < 1) throw ConfigError("n_max must be >= 1");
  const int m = w.cell_count();
  if (site_volumes.empty()) site_volumes.assign(m, w.cell_volume());
  if (static_cast<int>(site_volumes.size()) != m)
    throw ConfigError("site_volumes must have one entry per cell");
  for (double v : site_volumes)
    if (!(v > 0)) throw ConfigError("site volumes must be positive");

  const Index S = state_count(m, n_max, state_cap);
  if (S > state_cap)
    throw SizingError("state count exceeds cap (" + std::to_string(state_cap) + " states)");

  auto sp = std::make_shared<ConfigSpace>();
  sp->window_ = std::move(w);
  sp->n_max_ = n_max;
  sp->m_ = m;
  sp->vol_ = std::move(site_volumes);

  // graded lexicographic enumeration
  sp->occ_.reserve(static_cast<std::size_t>(S) * m);
  sp->totals_.reserve(static_cast<std::size_t>(S));
  sp->grade_offsets_.assign(n_max + 2, 0);
  std::vector<int> cur(m, 0);
  std::function<void(int, int)> fill = [&](int pos, int remaining) {
    if (pos == m - 1) {
      cur[pos] = remaining;
      sp->occ_.insert(sp->occ_.end(), cur.begin(), cur.end());
      return;
    }
    for (int t = 0; t <= remaining; ++t) {
      cur[pos] = t;
      fill(pos + 1, remaining - t);
    }
  };
  for (int k = 0; k <= n_max; ++k) {
    sp->grade_offsets_[k] = static_cast<Index>(sp->occ_.size()) / m;
    fill(0, k);
    const Index upto = static_cast<Index>(sp->occ_.size()) / m;
    for (Index i = sp->grade_offsets_[k]; i < upto; ++i) sp->totals_.push_back(k);
  }
  sp->grade_offsets_[n_max + 1] = static_cast<Index>(sp->totals_.size());

  // neighbor tables
  const std::size_t SM = static_cast<std::size_t>(S) * m;
  sp->up_.assign(SM, kBoundary);
  sp->down_.assign(SM, kBoundary);
  std::vector<int> probe(m);
  for (Index i = 0; i < S; ++i) {
    const auto st = sp->state(i);
    for (int j = 0; j < m; ++j) {
      std::copy(st.begin(), st.end(), probe.begin());
      probe[j] += 1;
      sp->up_[static_cast<std::size_t>(i) * m + j] = sp->index_of(probe);
      probe[j] -= 2;
      sp->down_[static_cast<std::size_t>(i) * m + j] =
          probe[j] >= 0 ? sp->index_of(probe) : kBoundary;
    }
  }

  // unnormalized weights u(n) = prod_j v_j^{n_j} / n_j! by recurrence down the
  // first occupied site; exact detailed balance u(n) v_j = u(n+e_j)(n_j+1)
  std::vector<double> u(static_cast<std::size_t>(S));
  u[0] = 1.0;
  for (Index i = 1; i < S; ++i) {
    const auto st = sp->state(i);
    int j = 0;
    while (st[j] == 0) ++j;
    const Index d = sp->down_[static_cast<std::size_t>(i) * m + j];
    u[static_cast<std::size_t>(i)] = u[static_cast<std::size_t>(d)] * sp->vol_[j] / st[j];
  }
  const long double Z = accumulate_ld(u);
  sp->pi_.resize(static_cast<std::size_t>(S));
  for (Index i = 0; i < S; ++i)
    sp->pi_[static_cast<std::size_t>(i)] = static_cast<double>(u[static_cast<std::size_t>(i)] / Z);
  const long double total_vol = accumulate_ld(sp->vol_);
  sp->truncation_mass_ = static_cast<double>(1.0L - Z * std::exp(-total_vol));
  if (sp->truncation_mass_ < 0) sp->truncation_mass_ = 0;  // rounding guard

  for (Index i = 0; i < S; ++i)
    for (int j = 0; j < m; ++j) {
      const Index up = sp->up_[static_cast<std::size_t>(i) * m + j];
      if (up != kBoundary) sp->edges_.push_back({i, j, up});
    }

  return sp;
}

bool compatible(const ConfigSpace& a, const ConfigSpace& b) {
  return a.window() == b.window() && a.n_max() == b.n_max() &&
         a.site_volumes() == b.site_volumes();
}

ReferenceMeasure reference_measure(SpacePtr space) { return ReferenceMeasure{std::move(space)}; }

double DensityMeasure::mass() const {
  const auto& pi = space->reference_weights();
  long double s = 0;
  for (std::size_t i = 0; i < rho.size(); ++i) s += static_cast<long double>(rho[i]) * pi[i];
  return static_cast<double>(s);
}

bool DensityMeasure::valid(double tol) const {
  if (static_cast<Index>(rho.size()) != space->size()) return false;
  for (double r : rho)
    if (!(r >= 0) || !std::isfinite(r)) return false;
  return std::abs(mass() - 1.0) <= tol;
}

void DensityMeasure::renormalize() {
  const double z = mass();
  if (!(z > 0)) throw ConfigError("cannot renormalize a measure with nonpositive mass");
  for (double& r : rho) r /= z;
}

DensityMeasure uniform_density(SpacePtr space) {
  DensityMeasure P{std::move(space), {}};
  P.rho.assign(static_cast<std::size_t>(P.space->size()), 1.0);
  return P;
}

DensityMeasure pointmass(SpacePtr space, Index i) {
  if (i < 0 || i >= space->size()) throw ConfigError("pointmass state out of range");
  DensityMeasure P{std::move(space), {}};
  P.rho.assign(static_cast<std::size_t>(P.space->size()), 0.0);
  P.rho[static_cast<std::size_t>(i)] = 1.0 / P.space->reference_weights()[static_cast<std::size_t>(i)];
  return P;
}

DensityMeasure poisson_density(SpacePtr space, double c) {
  if (!(c > 0)) throw ConfigError("poisson intensity must be positive");
  const auto& pi = space->reference_weights();
  const Index S = space->size();
  long double Z = 0;
  std::vector<double> scale(static_cast<std::size_t>(S));
  for (Index i = 0; i < S; ++i) {
    scale[static_cast<std::size_t>(i)] = std::pow(c, space->total(i));
    Z += static_cast<long double>(scale[static_cast<std::size_t>(i)]) * pi[static_cast<std::size_t>(i)];
  }
  DensityMeasure P{std::move(space), std::move(scale)};
  for (double& r : P.rho) r = static_cast<double>(r / Z);
  return P;
}

DensityMeasure mixture(const std::vector<double>& weights, const std::vector<DensityMeasure>& parts) {
  if (weights.size() != parts.size() || parts.empty())
    throw ConfigError("mixture needs matching nonempty weights and parts");
  long double wsum = 0;
  for (double w : weights) {
    if (!(w >= 0)) throw ConfigError("mixture weights must be nonnegative");
    wsum += w;
  }
  if (!(wsum > 0)) throw ConfigError("mixture weights must not all vanish");
  for (std::size_t p = 1; p < parts.size(); ++p)
    if (!compatible(*parts[0].space, *parts[p].space))
      throw ConfigError("mixture parts live on incompatible spaces");
  DensityMeasure out{parts[0].space, std::vector<double>(parts[0].rho.size(), 0.0)};
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const double w = static_cast<double>(weights[p] / wsum);
    for (std::size_t i = 0; i < out.rho.size(); ++i) out.rho[i] += w * parts[p].rho[i];
  }
  return out;
}

DensityMeasure random_density(SpacePtr space, std::uint64_t seed, double concentration) {
  if (!(concentration > 0)) throw ConfigError("concentration must be positive");
  SplitMix64 gen(seed);
  const auto& pi = space->reference_weights();
  std::vector<double> rho(static_cast<std::size_t>(space->size()));
  long double Z = 0;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    const double e = -std::log1p(-gen.uniform01()) + 1e-12;
    rho[i] = std::pow(e, 1.0 / concentration);
    Z += static_cast<long double>(rho[i]) * pi[i];
  }
  for (double& r : rho) r = static_cast<double>(r / Z);
  return DensityMeasure{std::move(space), std::move(rho)};
}

DensityMeasure restrict_measure(const DensityMeasure& P, const LatticeWindow& sub) {
  const ConfigSpace& sp = *P.space;
  const auto embed = cell_embedding(sub, sp.window());
  std::vector<double> vols(embed.size());
  for (std::size_t t = 0; t < embed.size(); ++t) vols[t] = sp.site_volumes()[embed[t]];
  auto subspace = build_space(sub, sp.n_max(), std::move(vols));

  const int msub = subspace->sites();
  std::vector<double> mass(static_cast<std::size_t>(subspace->size()), 0.0);
  std::vector<int> ns(msub);
  for (Index i = 0; i < sp.size(); ++i) {
    const auto st = sp.state(i);
    for (int t = 0; t < msub; ++t) ns[t] = st[embed[t]];
    const Index k = subspace->index_of(ns);
    mass[static_cast<std::size_t>(k)] += P.prob(i);
  }
  const auto& pis = subspace->reference_weights();
  for (std::size_t i = 0; i < mass.size(); ++i) mass[i] /= pis[i];
  return DensityMeasure{std::move(subspace), std::move(mass)};
}

DensityMeasure product_measure(const DensityMeasure& P, const DensityMeasure& Q,
                               double* clip_defect) {
  const ConfigSpace& A = *P.space;
  const ConfigSpace& B = *Q.space;
  if (A.n_max() != B.n_max()) throw ConfigError("product factors must share n_max");
  const LatticeWindow& wa = A.window();
  const LatticeWindow& wb = B.window();
  if (wa.dim != wb.dim || wa.cell_side != wb.cell_side)
    throw WindowError("product windows must share dimension and cell side");
  if (!wa.disjoint_from(wb)) throw WindowError("product windows must be disjoint");

  LatticeWindow uw;
  uw.dim = wa.dim;
  uw.cell_side = wa.cell_side;
  uw.origin.resize(uw.dim);
  uw.cells_per_axis.resize(uw.dim);
  for (int a = 0; a < uw.dim; ++a) {
    const int lo = std::min(wa.origin[a], wb.origin[a]);
    const int hi = std::max(wa.origin[a] + wa.cells_per_axis[a],
                            wb.origin[a] + wb.cells_per_axis[a]);
    uw.origin[a] = lo;
    uw.cells_per_axis[a] = hi - lo;
  }
  if (uw.cell_count() != A.sites() + B.sites())
    throw WindowError("union of product windows must be a box");

  const auto ea = cell_embedding(wa, uw);
  const auto eb = cell_embedding(wb, uw);
  std::vector<double> vols(static_cast<std::size_t>(uw.cell_count()), 0.0);
  for (std::size_t t = 0; t < ea.size(); ++t) vols[ea[t]] = A.site_volumes()[t];
  for (std::size_t t = 0; t < eb.size(); ++t) vols[eb[t]] = B.site_volumes()[t];
  auto uspace = build_space(uw, A.n_max(), std::move(vols));

  std::vector<double> mass(static_cast<std::size_t>(uspace->size()), 0.0);
  std::vector<int> na(A.sites()), nb(B.sites());
  long double kept = 0;
  for (Index i = 0; i < uspace->size(); ++i) {
    const auto st = uspace->state(i);
    for (int t = 0; t < A.sites(); ++t) na[t] = st[ea[t]];
    for (int t = 0; t < B.sites(); ++t) nb[t] = st[eb[t]];
    const Index ia = A.index_of(na);
    const Index ib = B.index_of(nb);
    const double p = P.prob(ia) * Q.prob(ib);
    mass[static_cast<std::size_t>(i)] = p;
    kept += p;
  }
  const double defect = static_cast<double>(1.0L - kept);
  if (clip_defect) *clip_defect = defect;
  if (!(kept > 0)) throw ConfigError("product clipped away all mass");
  const auto& piu = uspace->reference_weights();
  for (std::size_t i = 0; i < mass.size(); ++i)
    mass[i] = static_cast<double>(mass[i] / (piu[i] * kept));
  return DensityMeasure{std::move(uspace), std::move(mass)};
}

DensityMeasure shift_measure(const DensityMeasure& P, std::span<const int> z) {
  const ConfigSpace& sp = *P.space;
  if (static_cast<int>(z.size()) != sp.window().dim)
    throw ConfigError("shift vector must have dim entries");
  LatticeWindow w = sp.window();
  for (int a = 0; a < w.dim; ++a) w.origin[a] += z[a];
  auto moved = build_space(w, sp.n_max(), sp.site_volumes());
  return DensityMeasure{std::move(moved), P.rho};
}

std::vector<int> torus_permutation(const LatticeWindow& w, std::span<const int> z) {
  if (static_cast<int>(z.size()) != w.dim)
    throw ConfigError("shift vector must have dim entries");
  std::vector<int> sigma(w.cell_count());
  for (int c = 0; c < w.cell_count(); ++c) {
    auto coords = w.cell_coords(c);
    for (int a = 0; a < w.dim; ++a) {
      const int n = w.cells_per_axis[a];
      coords[a] = ((coords[a] + z[a]) % n + n) % n;
    }
    int idx = 0;
    for (int a = 0; a < w.dim; ++a) idx = idx * w.cells_per_axis[a] + coords[a];
    sigma[c] = idx;
  }
  return sigma;
}

DensityMeasure shift_torus(const DensityMeasure& P, std::span<const int> z) {
  const ConfigSpace& sp = *P.space;
  const auto sigma = torus_permutation(sp.window(), z);
  const auto& v = sp.site_volumes();
  for (std::size_t j = 0; j < sigma.size(); ++j)
    if (v[sigma[j]] != v[j])
      throw ConfigError("torus shift requires shift-invariant site volumes");

  const int m = sp.sites();
  std::vector<double> out(P.rho.size(), 0.0);
  std::vector<int> perm(m);
  for (Index i = 0; i < sp.size(); ++i) {
    const auto st = sp.state(i);
    for (int j = 0; j < m; ++j) perm[sigma[j]] = st[j];
    const Index k = sp.index_of(perm);
    out[static_cast<std::size_t>(k)] = P.rho[static_cast<std::size_t>(i)];
  }
  return DensityMeasure{P.space, std::move(out)};
}

}  // namespace nlbb
