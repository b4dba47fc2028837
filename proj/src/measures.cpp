#include "nlbb/measures.hpp"

#include <cmath>

namespace nlbb {

double CampbellTable::total_mass() const {
  long double s = 0;
  for (double v : values) s += v;
  return static_cast<double>(s);
}

double entropy(const DensityMeasure& P) {
  const auto& pi = P.space->reference_weights();
  long double acc = 0;
  for (std::size_t i = 0; i < P.rho.size(); ++i) {
    const double r = P.rho[i];
    if (r > 0) acc += static_cast<long double>(r) * std::log(r) * pi[i];
  }
  double out = static_cast<double>(acc);
  // Jensen bounds the exact value below by mass*log(mass); anything more
  // negative than validity roundoff would be a bug upstream.
  if (out < 0 && out > -1e-10) out = 0;
  return out;
}

FisherInfo fisher(const DensityMeasure& P, double sentinel) {
  const ConfigSpace& sp = *P.space;
  const auto& pi = sp.reference_weights();
  const auto& vol = sp.site_volumes();
  long double acc = 0;
  for (const auto& e : sp.edges()) {
    const double x = P.rho[static_cast<std::size_t>(e.from)];
    const double y = P.rho[static_cast<std::size_t>(e.to)];
    if (x == 0 && y == 0) continue;
    if (x == 0 || y == 0) return {sentinel, false};
    acc += static_cast<long double>(y - x) * (std::log(y) - std::log(x)) *
           pi[static_cast<std::size_t>(e.from)] * vol[static_cast<std::size_t>(e.site)];
  }
  return {static_cast<double>(acc), true};
}

double laplace(const DensityMeasure& P, std::span<const double> f) {
  const ConfigSpace& sp = *P.space;
  if (static_cast<int>(f.size()) != sp.sites())
    throw ConfigError("laplace test vector needs one entry per site");
  const auto& pi = sp.reference_weights();
  long double acc = 0;
  for (Index i = 0; i < sp.size(); ++i) {
    const auto st = sp.state(i);
    double dot = 0;
    for (int j = 0; j < sp.sites(); ++j) dot += f[static_cast<std::size_t>(j)] * st[j];
    acc += static_cast<long double>(P.rho[static_cast<std::size_t>(i)]) *
           pi[static_cast<std::size_t>(i)] * std::exp(-dot);
  }
  return static_cast<double>(acc);
}

std::vector<double> intensity(const DensityMeasure& P) {
  const ConfigSpace& sp = *P.space;
  const auto& pi = sp.reference_weights();
  std::vector<long double> acc(static_cast<std::size_t>(sp.sites()), 0.0L);
  for (Index i = 0; i < sp.size(); ++i) {
    const auto st = sp.state(i);
    const long double p = static_cast<long double>(P.rho[static_cast<std::size_t>(i)]) *
                          pi[static_cast<std::size_t>(i)];
    for (int j = 0; j < sp.sites(); ++j)
      if (st[j] != 0) acc[static_cast<std::size_t>(j)] += st[j] * p;
  }
  return std::vector<double>(acc.begin(), acc.end());
}

CampbellTable campbell(const DensityMeasure& P) {
  const ConfigSpace& sp = *P.space;
  const auto& pi = sp.reference_weights();
  CampbellTable table{P.space,
                      std::vector<double>(static_cast<std::size_t>(sp.size()) * sp.sites(), 0.0)};
  for (const auto& e : sp.edges()) {
    const int nj = sp.state(e.from)[e.site];
    table.values[static_cast<std::size_t>(e.from) * sp.sites() + e.site] =
        P.rho[static_cast<std::size_t>(e.to)] * pi[static_cast<std::size_t>(e.to)] * (nj + 1);
  }
  return table;
}

CampbellTable campbell_mecke(const DensityMeasure& P) {
  const ConfigSpace& sp = *P.space;
  const auto& pi = sp.reference_weights();
  const auto& vol = sp.site_volumes();
  CampbellTable table{P.space,
                      std::vector<double>(static_cast<std::size_t>(sp.size()) * sp.sites(), 0.0)};
  for (const auto& e : sp.edges()) {
    table.values[static_cast<std::size_t>(e.from) * sp.sites() + e.site] =
        P.rho[static_cast<std::size_t>(e.to)] * pi[static_cast<std::size_t>(e.from)] *
        vol[static_cast<std::size_t>(e.site)];
  }
  return table;
}

double tv_distance(const DensityMeasure& P, const DensityMeasure& Q) {
  if (!compatible(*P.space, *Q.space))
    throw ConfigError("total variation needs measures on compatible spaces");
  const auto& pi = P.space->reference_weights();
  long double acc = 0;
  for (std::size_t i = 0; i < P.rho.size(); ++i)
    acc += std::abs(static_cast<long double>(P.rho[i]) - Q.rho[i]) * pi[i];
  return static_cast<double>(acc / 2);
}

}  // namespace nlbb
