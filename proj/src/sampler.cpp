// Copyright 2026 The qent Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "qent/sampler.hpp"

#include <cmath>

#include "qent/error.hpp"

namespace qent {

std::string_view group_name(StateGroup g) {
  switch (g) {
    case StateGroup::kSep: return "sep";
    case StateGroup::kGeneralEnt: return "general-ent";
    case StateGroup::kWernerEnt: return "werner-ent";
    case StateGroup::kMaxEnt: return "max-ent";
    case StateGroup::kHorodeckiBound: return "horodecki-bound";
    case StateGroup::kHorodeckiEnt: return "horodecki-ent";
  }
  return "unknown";
}

StateGroup parse_group(std::string_view name) {
  for (StateGroup g : kAllGroups) {
    if (group_name(g) == name) return g;
  }
  throw ConfigError("unknown group '" + std::string(name) + "'");
}

bool group_allowed(StateGroup g, BipartiteDims dims) {
  switch (g) {
    case StateGroup::kSep:
    case StateGroup::kGeneralEnt: return true;
    case StateGroup::kWernerEnt:
    case StateGroup::kMaxEnt: return dims.d1 == dims.d2;
    case StateGroup::kHorodeckiBound:
    case StateGroup::kHorodeckiEnt: return dims.d1 == 3 && dims.d2 == 3;
  }
  return false;
}

std::vector<StateGroup> allowed_groups(BipartiteDims dims) {
  std::vector<StateGroup> out;
  for (StateGroup g : kAllGroups) {
    if (group_allowed(g, dims)) out.push_back(g);
  }
  return out;
}

ComplexMatrix sample_ginibre(std::size_t n, SeededRng& rng) {
  ComplexMatrix g(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      g.re(i, j) = rng.normal();
      g.im(i, j) = rng.normal();
    }
  }
  return g;
}

PureState sample_haar_vector(std::size_t dim, SeededRng& rng) {
  std::vector<Complex> v(dim);
  for (auto& z : v) {
    const double re = rng.normal();
    const double im = rng.normal();
    z = {re, im};
  }
  return PureState::normalized(std::move(v));
}

StateRecord sample_pure_separable(BipartiteDims dims, SeededRng& rng) {
  const PureState phi1 = sample_haar_vector(dims.d1, rng);
  const PureState phi2 = sample_haar_vector(dims.d2, rng);
  const auto psi = kron(phi1.amplitudes, phi2.amplitudes);
  return {DensityMatrix{ComplexMatrix::outer(psi), dims}, StateGroup::kSep, 0, std::nullopt, rng.seed()};
}

namespace {

// (1/sqrt(d)) Σ_i |ii>
std::vector<Complex> max_entangled_vector(std::size_t d) {
  std::vector<Complex> psi(d * d, 0.0);
  const double amp = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t i = 0; i < d; ++i) psi[i * d + i] = amp;
  return psi;
}

}  // namespace

DensityMatrix werner_state(std::size_t d, double p) {
  if (d < 2) throw ConfigError("werner_state: d must be >= 2");
  ComplexMatrix rho = (1.0 - p) * ComplexMatrix::outer(max_entangled_vector(d));
  rho += (p / static_cast<double>(d * d)) * ComplexMatrix::identity(d * d);
  return {std::move(rho), {d, d}};
}

StateRecord sample_werner(std::size_t d, SeededRng& rng) {
  const double p_max = static_cast<double>(d) / static_cast<double>(d + 1);
  const double p = rng.uniform_open() * p_max;
  return {werner_state(d, p), StateGroup::kWernerEnt, 1, p, rng.seed()};
}

StateRecord sample_general_entangled(BipartiteDims dims, SeededRng& rng, int max_attempts) {
  if (max_attempts < 1) throw ConfigError("sample_general_entangled: max_attempts must be >= 1");
  const std::size_t n = dims.total();
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    const ComplexMatrix g = sample_ginibre(n, rng);
    ComplexMatrix w = matmul(g, dagger(g));
    const double tr = w.trace().real();
    w *= 1.0 / tr;
    // GG† is Hermitian up to rounding; enforce it exactly.
    w = 0.5 * (w + dagger(w));
    DensityMatrix rho{std::move(w), dims};
    if (is_npt(rho)) {
      return {std::move(rho), StateGroup::kGeneralEnt, 1, std::nullopt, rng.seed()};
    }
  }
  throw RejectionBudgetExceeded("sample_general_entangled: no NPT state after " +
                                std::to_string(max_attempts) + " attempts");
}

DensityMatrix max_entangled_from_unitary(const ComplexMatrix& u) {
  const std::size_t d = u.n();
  std::vector<Complex> psi(d * d);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  // Column-major vec: psi[col * d + row] = U[row, col].
  for (std::size_t col = 0; col < d; ++col) {
    for (std::size_t row = 0; row < d; ++row) psi[col * d + row] = u(row, col) * scale;
  }
  return {ComplexMatrix::outer(psi), {d, d}};
}

StateRecord sample_max_entangled(std::size_t d, SeededRng& rng) {
  const ComplexMatrix u = qr_unitary(sample_ginibre(d, rng));
  return {max_entangled_from_unitary(u), StateGroup::kMaxEnt, 1, std::nullopt, rng.seed()};
}

DensityMatrix horodecki_state(double alpha) {
  if (!(alpha >= 2.0 && alpha <= 5.0)) {
    throw AlphaOutOfRange("horodecki_state: alpha must lie in [2, 5], got " + std::to_string(alpha));
  }
  constexpr std::size_t d = 3;
  ComplexMatrix rho = (2.0 / 7.0) * ComplexMatrix::outer(max_entangled_vector(d));
  auto basis = [](std::size_t i, std::size_t j) { return i * d + j; };
  const double plus = alpha / 21.0;           // (alpha/7) * (1/3)
  const double minus = (5.0 - alpha) / 21.0;  // ((5-alpha)/7) * (1/3)
  for (std::size_t i = 0; i < d; ++i) {
    rho.re(basis(i, (i + 1) % d), basis(i, (i + 1) % d)) += plus;   // |01>, |12>, |20>
    rho.re(basis((i + 1) % d, i), basis((i + 1) % d, i)) += minus;  // |10>, |21>, |02>
  }
  return {std::move(rho), {d, d}};
}

StateRecord sample_horodecki(HorodeckiRegime regime, SeededRng& rng) {
  // (lo, lo + 1]: 1 - uniform() lies in (0, 1].
  const double lo = regime == HorodeckiRegime::kBound ? 3.0 : 4.0;
  const double alpha = lo + (1.0 - rng.uniform());
  const StateGroup group =
      regime == HorodeckiRegime::kBound ? StateGroup::kHorodeckiBound : StateGroup::kHorodeckiEnt;
  return {horodecki_state(alpha), group, 1, alpha, rng.seed()};
}

StateRecord sample_group(StateGroup group, BipartiteDims dims, SeededRng& rng, int max_attempts) {
  if (!group_allowed(group, dims)) {
    throw ConfigError("group '" + std::string(group_name(group)) + "' is not available for dims " +
                      dims.to_string());
  }
  switch (group) {
    case StateGroup::kSep: return sample_pure_separable(dims, rng);
    case StateGroup::kGeneralEnt: return sample_general_entangled(dims, rng, max_attempts);
    case StateGroup::kWernerEnt: return sample_werner(dims.d1, rng);
    case StateGroup::kMaxEnt: return sample_max_entangled(dims.d1, rng);
    case StateGroup::kHorodeckiBound: return sample_horodecki(HorodeckiRegime::kBound, rng);
    case StateGroup::kHorodeckiEnt: return sample_horodecki(HorodeckiRegime::kFree, rng);
  }
  throw ConfigError("unreachable group");
}

}  // namespace qent
