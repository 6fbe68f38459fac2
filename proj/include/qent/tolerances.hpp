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

namespace qent::tol {

// Numerical thresholds shared by the library. Every function that uses one
// also accepts an explicit override.

/// Density-matrix invariants (Hermiticity, trace, PSD).
inline constexpr double kDensity = 1e-10;
/// Pure-state normalisation.
inline constexpr double kPureNorm = 1e-12;
/// Minimum partial-transpose eigenvalue below -kPpt means NPT.
inline constexpr double kPpt = 1e-10;
/// Accepted Hermiticity defect of eigensolver input.
inline constexpr double kEigenInput = 1e-8;
/// Jacobi stops when the off-diagonal norm falls below kJacobi * |A|_F.
inline constexpr double kJacobi = 1e-12;
inline constexpr int kJacobiMaxSweeps = 100;
/// |R_ii| below this makes a QR-based unitary undefined.
inline constexpr double kQrDegenerate = 1e-300;

}  // namespace qent::tol
