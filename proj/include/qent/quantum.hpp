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

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qent/complex_matrix.hpp"
#include "qent/tolerances.hpp"

namespace qent {

/// Local dimensions of a bipartite system C^d1 ⊗ C^d2.
struct BipartiteDims {
  std::size_t d1 = 2;
  std::size_t d2 = 2;

  std::size_t total() const noexcept { return d1 * d2; }
  std::string to_string() const;
  /// Parses "2x3"; throws ConfigError on malformed text or d < 2.
  static BipartiteDims parse(const std::string& text);

  friend bool operator==(const BipartiteDims&, const BipartiteDims&) = default;
};

struct DensityMatrix {
  ComplexMatrix mat;
  BipartiteDims dims;
};

/// Normalised state vector.
struct PureState {
  std::vector<Complex> amplitudes;

  std::size_t dim() const noexcept { return amplitudes.size(); }
  /// Rescales v to unit norm; throws DegenerateInput for the zero vector.
  static PureState normalized(std::vector<Complex> v);
  ComplexMatrix projector() const { return ComplexMatrix::outer(amplitudes); }
};

/// Returns a description of the first violated density-matrix invariant, or
/// nothing when rho is Hermitian, unit trace and PSD within `tolerance`.
std::optional<std::string> check_density_matrix(const DensityMatrix& rho,
                                                double tolerance = tol::kDensity);

enum class Subsystem { kA, kB };

/// Transposes the indices of one subsystem. For row (i,k) and column (j,l):
/// B maps ((i,k),(j,l)) -> ((i,l),(j,k)); A maps it to ((j,k),(i,l)).
ComplexMatrix partial_transpose(const ComplexMatrix& mat, BipartiteDims dims,
                                Subsystem subsystem = Subsystem::kB);
ComplexMatrix partial_transpose(const DensityMatrix& rho, Subsystem subsystem = Subsystem::kB);

/// Eigenvalues of a Hermitian matrix in ascending order (cyclic complex
/// Jacobi). Throws NonHermitianInput or NoConvergence.
std::vector<double> hermitian_eigenvalues(const ComplexMatrix& a,
                                          double hermitian_tolerance = tol::kEigenInput,
                                          int max_sweeps = tol::kJacobiMaxSweeps);

struct PptResult {
  bool npt = false;
  double min_eigenvalue = 0.0;
};

/// Peres-Horodecki test on the partial transpose over B.
PptResult ppt_test(const DensityMatrix& rho, double tolerance = tol::kPpt);
inline bool is_npt(const DensityMatrix& rho, double tolerance = tol::kPpt) {
  return ppt_test(rho, tolerance).npt;
}

/// Householder QR of g followed by the phase fix U = Q diag(R_ii/|R_ii|).
/// Throws DegenerateInput when some |R_ii| < `degenerate_threshold`.
ComplexMatrix qr_unitary(const ComplexMatrix& g, double degenerate_threshold = tol::kQrDegenerate);

/// h = (1/b) Σ_k sqrt(|A_k - A_k†|_F). Throws EmptyBatch.
double hermitian_distance(std::span<const ComplexMatrix> batch);

}  // namespace qent
