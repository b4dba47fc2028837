#include "nlbb/mobility.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nlbb {

bool VelocityDensity::structurally_valid() const {
  const ConfigSpace& sp = *space;
  if (w.size() != static_cast<std::size_t>(sp.size()) * sp.sites()) return false;
  for (Index i = 0; i < sp.size(); ++i)
    for (int j = 0; j < sp.sites(); ++j) {
      const double wij = at(i, j);
      if (!std::isfinite(wij)) return false;
      if (sp.add_point(i, j) == kBoundary && wij != 0.0) return false;
    }
  return true;
}

VelocityDensity zero_velocity(SpacePtr space) {
  const std::size_t n = static_cast<std::size_t>(space->size()) * space->sites();
  return VelocityDensity{std::move(space), std::vector<double>(n, 0.0)};
}

void CEPath::validate(double mass_tol) const {
  if (!space) throw ConfigError("path has no space");
  if (knots.size() < 2) throw ConfigError("path needs at least two knots");
  if (knots.front() != 0.0 || knots.back() != 1.0)
    throw ConfigError("path knots must start at 0 and end at 1");
  for (std::size_t k = 1; k < knots.size(); ++k)
    if (!(knots[k] > knots[k - 1])) throw ConfigError("path knots must increase");
  if (densities.size() != knots.size())
    throw ConfigError("path needs one density per knot");
  if (velocities.size() + 1 != knots.size())
    throw ConfigError("path needs one velocity per interval");
  for (const auto& d : densities) {
    if (d.space.get() != space.get() && !compatible(*d.space, *space))
      throw ConfigError("path density on a different space");
    if (!d.valid(mass_tol)) throw ConfigError("path density is not a probability density");
  }
  for (const auto& v : velocities) {
    if (v.space.get() != space.get() && !compatible(*v.space, *space))
      throw ConfigError("path velocity on a different space");
    if (!v.structurally_valid()) throw ConfigError("path velocity violates edge structure");
  }
}

std::vector<double> uniform_knots(int intervals) {
  if (intervals < 1) throw ConfigError("need at least one interval");
  std::vector<double> t(static_cast<std::size_t>(intervals) + 1);
  for (int k = 0; k <= intervals; ++k) t[static_cast<std::size_t>(k)] = double(k) / intervals;
  t.back() = 1.0;
  return t;
}

double log_mean(double x, double y) {
  if (x < 0 || y < 0) throw DomainError("log_mean needs nonnegative arguments");
  if (x == 0.0 || y == 0.0) return 0.0;
  if (x == y) return x;
  const double r = y / x;
  const double d = r - 1.0;
  if (std::abs(d) < 1e-5) {
    // (r-1)/log r = 1 + d/2 - d^2/12 + O(d^3), cancellation-free near the diagonal
    return x * (1.0 + d * 0.5 - d * d / 12.0);
  }
  return (y - x) / std::log(r);
}

double mobility_alpha(double x, double y, double w) {
  if (w == 0.0) return 0.0;
  const double theta = log_mean(x, y);
  if (theta == 0.0) return std::numeric_limits<double>::infinity();
  return w * w / theta;
}

double lagrangian(const DensityMeasure& P, const VelocityDensity& V) {
  if (P.space.get() != V.space.get() && !compatible(*P.space, *V.space))
    throw ConfigError("lagrangian needs a density and velocity on one space");
  const ConfigSpace& sp = *P.space;
  const auto& pi = sp.reference_weights();
  const auto& vol = sp.site_volumes();
  long double acc = 0;
  for (const auto& e : sp.edges()) {
    const double a = mobility_alpha(P.rho[static_cast<std::size_t>(e.from)],
                                    P.rho[static_cast<std::size_t>(e.to)],
                                    V.at(e.from, e.site));
    if (std::isinf(a)) return std::numeric_limits<double>::infinity();
    acc += static_cast<long double>(a) * pi[static_cast<std::size_t>(e.from)] *
           vol[static_cast<std::size_t>(e.site)];
  }
  return static_cast<double>(acc);
}

double action(const CEPath& path) {
  path.validate();
  long double acc = 0;
  for (int k = 0; k < path.intervals(); ++k) {
    const double dt = path.knots[static_cast<std::size_t>(k) + 1] - path.knots[static_cast<std::size_t>(k)];
    DensityMeasure mid{path.space, path.densities[static_cast<std::size_t>(k)].rho};
    const auto& next = path.densities[static_cast<std::size_t>(k) + 1].rho;
    for (std::size_t i = 0; i < mid.rho.size(); ++i) mid.rho[i] = 0.5 * (mid.rho[i] + next[i]);
    const double lag = lagrangian(mid, path.velocities[static_cast<std::size_t>(k)]);
    if (std::isinf(lag)) return std::numeric_limits<double>::infinity();
    acc += static_cast<long double>(dt) * lag;
  }
  return static_cast<double>(acc);
}

VelocityDensity restrict_velocity(const VelocityDensity& V, const LatticeWindow& sub) {
  const ConfigSpace& sp = *V.space;
  const auto embed = cell_embedding(sub, sp.window());
  std::vector<double> vols(embed.size());
  for (std::size_t t = 0; t < embed.size(); ++t) vols[t] = sp.site_volumes()[embed[t]];
  auto subspace = build_space(sub, sp.n_max(), std::move(vols));

  const int msub = subspace->sites();
  const auto& pi = sp.reference_weights();
  const auto& pisub = subspace->reference_weights();
  std::vector<long double> acc(static_cast<std::size_t>(subspace->size()) * msub, 0.0L);
  std::vector<int> ns(msub);
  for (Index i = 0; i < sp.size(); ++i) {
    const auto st = sp.state(i);
    for (int t = 0; t < msub; ++t) ns[t] = st[embed[t]];
    const Index isub = subspace->index_of(ns);
    for (int t = 0; t < msub; ++t) {
      const double wij = V.at(i, embed[t]);
      if (wij != 0.0)
        acc[static_cast<std::size_t>(isub) * msub + t] +=
            static_cast<long double>(wij) * pi[static_cast<std::size_t>(i)];
    }
  }
  VelocityDensity out = zero_velocity(subspace);
  for (Index i = 0; i < subspace->size(); ++i)
    for (int t = 0; t < msub; ++t) {
      const long double num = acc[static_cast<std::size_t>(i) * msub + t];
      if (num != 0.0L)
        out.at(i, t) = static_cast<double>(num / pisub[static_cast<std::size_t>(i)]);
    }
  return out;
}

VelocityDensity product_velocity(const DensityMeasure& P, const VelocityDensity& VP,
                                 const DensityMeasure& Q, const VelocityDensity& VQ) {
  if (P.space.get() != VP.space.get() || Q.space.get() != VQ.space.get())
    throw ConfigError("product_velocity needs matching density/velocity spaces");
  const auto joint = product_measure(P, Q).space;
  const ConfigSpace& A = *P.space;
  const ConfigSpace& B = *Q.space;
  const auto ea = cell_embedding(A.window(), joint->window());
  const auto eb = cell_embedding(B.window(), joint->window());

  // pi_A(n1) pi_B(n2) / pi_joint(n1, n2) is one constant on the whole space
  const double zratio = ((1.0 - joint->truncation_mass()) /
                         ((1.0 - A.truncation_mass()) * (1.0 - B.truncation_mass())));

  VelocityDensity out = zero_velocity(joint);
  std::vector<int> na(A.sites()), nb(B.sites());
  for (Index u = 0; u < joint->size(); ++u) {
    const auto st = joint->state(u);
    for (int t = 0; t < A.sites(); ++t) na[t] = st[ea[t]];
    for (int t = 0; t < B.sites(); ++t) nb[t] = st[eb[t]];
    const Index ia = A.index_of(na);
    const Index ib = B.index_of(nb);
    for (int t = 0; t < A.sites(); ++t) {
      if (joint->add_point(u, ea[t]) == kBoundary) continue;
      out.at(u, ea[t]) = zratio * VP.at(ia, t) * Q.rho[static_cast<std::size_t>(ib)];
    }
    for (int t = 0; t < B.sites(); ++t) {
      if (joint->add_point(u, eb[t]) == kBoundary) continue;
      out.at(u, eb[t]) = zratio * VQ.at(ib, t) * P.rho[static_cast<std::size_t>(ia)];
    }
  }
  return out;
}

VelocityDensity shift_torus_velocity(const VelocityDensity& V, std::span<const int> z) {
  const ConfigSpace& sp = *V.space;
  const auto sigma = torus_permutation(sp.window(), z);
  for (std::size_t c = 0; c < sigma.size(); ++c)
    if (sp.site_volumes()[c] != sp.site_volumes()[static_cast<std::size_t>(sigma[c])])
      throw ConfigError("torus shift must preserve site volumes");
  VelocityDensity out = zero_velocity(V.space);
  const int m = sp.sites();
  std::vector<int> moved(static_cast<std::size_t>(m));
  for (Index i = 0; i < sp.size(); ++i) {
    const auto st = sp.state(i);
    for (int j = 0; j < m; ++j) moved[static_cast<std::size_t>(sigma[static_cast<std::size_t>(j)])] = st[j];
    const Index target = sp.index_of(moved);
    for (int j = 0; j < m; ++j)
      out.at(target, sigma[static_cast<std::size_t>(j)]) = V.at(i, j);
  }
  return out;
}

SpecificAction specific_action(const std::vector<CEPath>& paths, double marginal_tol) {
  if (paths.empty()) throw ConfigError("specific_action needs at least one path");
  for (const auto& p : paths) p.validate();

  // endpoint marginal consistency across nested windows
  for (std::size_t a = 0; a < paths.size(); ++a)
    for (std::size_t b = 0; b < paths.size(); ++b) {
      if (a == b) continue;
      const auto& big = paths[a];
      const auto& small = paths[b];
      if (!big.space->window().contains(small.space->window())) continue;
      if (big.space->n_max() != small.space->n_max()) continue;
      for (std::size_t end : {std::size_t{0}, big.densities.size() - 1}) {
        const auto marg = restrict_measure(big.densities[end], small.space->window());
        const auto& own = small.densities[end == 0 ? 0 : small.densities.size() - 1];
        const auto& pis = small.space->reference_weights();
        double dev = 0;
        for (std::size_t i = 0; i < own.rho.size(); ++i)
          dev += std::abs(marg.rho[i] - own.rho[i]) * pis[i];
        if (dev > marginal_tol)
          throw ConfigError("family endpoints are not restrictions of one law");
      }
    }

  SpecificAction out;
  out.per_volume.reserve(paths.size());
  for (const auto& p : paths)
    out.per_volume.push_back(action(p) / p.space->total_volume());
  out.sup = *std::max_element(out.per_volume.begin(), out.per_volume.end());
  return out;
}

}  // namespace nlbb
