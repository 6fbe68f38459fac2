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

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qent/quantum.hpp"
#include "qent/rng.hpp"

namespace qent {

/// Generative family of a state. The label is derived from the family, never
/// from the PPT test.
enum class StateGroup : std::uint8_t {
  kSep = 0,
  kGeneralEnt = 1,
  kWernerEnt = 2,
  kMaxEnt = 3,
  kHorodeckiBound = 4,
  kHorodeckiEnt = 5,
};

inline constexpr std::array<StateGroup, 6> kAllGroups = {
    StateGroup::kSep,    StateGroup::kGeneralEnt,     StateGroup::kWernerEnt,
    StateGroup::kMaxEnt, StateGroup::kHorodeckiBound, StateGroup::kHorodeckiEnt};

/// Table names: sep, general-ent, werner-ent, max-ent, horodecki-bound, horodecki-ent.
std::string_view group_name(StateGroup g);
/// Inverse of group_name; throws ConfigError naming the unknown group.
StateGroup parse_group(std::string_view name);
/// 0 = separable, 1 = entangled.
inline std::uint8_t group_label(StateGroup g) { return g == StateGroup::kSep ? 0 : 1; }

/// Groups that can be generated for the given dims: Werner and maximally
/// entangled need d1 == d2, the Horodecki family exists only for 3x3.
std::vector<StateGroup> allowed_groups(BipartiteDims dims);
bool group_allowed(StateGroup g, BipartiteDims dims);

struct StateRecord {
  DensityMatrix rho;
  StateGroup group = StateGroup::kSep;
  std::uint8_t label = 0;
  std::optional<double> param;  // p for Werner, alpha for Horodecki
  std::uint64_t seed = 0;

  friend bool operator==(const StateRecord& a, const StateRecord& b) {
    return a.rho.mat == b.rho.mat && a.rho.dims == b.rho.dims && a.group == b.group &&
           a.label == b.label && a.param == b.param && a.seed == b.seed;
  }
};

inline constexpr int kDefaultMaxAttempts = 1000;

/// n x n matrix of independent standard complex-normal entries
/// (real part then imaginary part, row-major).
ComplexMatrix sample_ginibre(std::size_t n, SeededRng& rng);
/// Haar-random unit vector in C^dim.
PureState sample_haar_vector(std::size_t dim, SeededRng& rng);

StateRecord sample_pure_separable(BipartiteDims dims, SeededRng& rng);
StateRecord sample_werner(std::size_t d, SeededRng& rng);
/// Werner state for an explicit p.
DensityMatrix werner_state(std::size_t d, double p);
StateRecord sample_general_entangled(BipartiteDims dims, SeededRng& rng,
                                     int max_attempts = kDefaultMaxAttempts);
StateRecord sample_max_entangled(std::size_t d, SeededRng& rng);
/// |psi> = vec(U)/sqrt(d) with column-major vec, as a projector.
DensityMatrix max_entangled_from_unitary(const ComplexMatrix& u);
/// Horodecki 3x3 family; throws AlphaOutOfRange outside [2, 5].
DensityMatrix horodecki_state(double alpha);

enum class HorodeckiRegime { kBound, kFree };
StateRecord sample_horodecki(HorodeckiRegime regime, SeededRng& rng);

/// Draws one record of the given group; dims must allow the group.
StateRecord sample_group(StateGroup group, BipartiteDims dims, SeededRng& rng,
                         int max_attempts = kDefaultMaxAttempts);

}  // namespace qent
