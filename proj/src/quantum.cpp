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

#include "qent/quantum.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qent/error.hpp"

namespace qent {

std::string BipartiteDims::to_string() const {
  return std::to_string(d1) + "x" + std::to_string(d2);
}

BipartiteDims BipartiteDims::parse(const std::string& text) {
  const auto x = text.find('x');
  if (x == std::string::npos || x == 0 || x + 1 >= text.size()) {
    throw ConfigError("dims must look like 2x3, got '" + text + "'");
  }
  auto parse_side = [&](const std::string& part) -> std::size_t {
    if (part.find_first_not_of("0123456789") != std::string::npos || part.size() > 4) {
      throw ConfigError("dims must look like 2x3, got '" + text + "'");
    }
    const auto v = static_cast<std::size_t>(std::stoul(part));
    if (v < 2) throw ConfigError("each local dimension must be >= 2, got '" + text + "'");
    return v;
  };
  return {parse_side(text.substr(0, x)), parse_side(text.substr(x + 1))};
}

PureState PureState::normalized(std::vector<Complex> v) {
  double norm2 = 0.0;
  for (const auto& z : v) norm2 += std::norm(z);
  if (!(norm2 > 0.0) || !std::isfinite(norm2)) throw DegenerateInput("cannot normalise a zero vector");
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& z : v) z *= inv;
  return PureState{std::move(v)};
}

std::optional<std::string> check_density_matrix(const DensityMatrix& rho, double tolerance) {
  const auto& m = rho.mat;
  if (m.n() != rho.dims.total()) return "side does not match dims " + rho.dims.to_string();
  if (!m.all_finite()) return "non-finite entry";
  std::ostringstream msg;
  const double herm = frobenius_norm(m - dagger(m));
  if (herm > tolerance) {
    msg << "not Hermitian: |rho - rho^dagger|_F = " << herm;
    return msg.str();
  }
  const double tr_err = std::abs(m.trace() - 1.0);
  if (tr_err > tolerance) {
    msg << "trace deviates from 1 by " << tr_err;
    return msg.str();
  }
  const double min_ev = hermitian_eigenvalues(m).front();
  if (min_ev < -tolerance) {
    msg << "not positive semidefinite: min eigenvalue " << min_ev;
    return msg.str();
  }
  return std::nullopt;
}

ComplexMatrix partial_transpose(const ComplexMatrix& mat, BipartiteDims dims, Subsystem subsystem) {
  const std::size_t d1 = dims.d1;
  const std::size_t d2 = dims.d2;
  if (mat.n() != d1 * d2) {
    throw DimensionMismatch("partial_transpose: side " + std::to_string(mat.n()) +
                            " does not match dims " + dims.to_string());
  }
  ComplexMatrix out(mat.n());
  for (std::size_t i = 0; i < d1; ++i) {
    for (std::size_t k = 0; k < d2; ++k) {
      for (std::size_t j = 0; j < d1; ++j) {
        for (std::size_t l = 0; l < d2; ++l) {
          const std::size_t row = i * d2 + k;
          const std::size_t col = j * d2 + l;
          if (subsystem == Subsystem::kB) {
            out.set(i * d2 + l, j * d2 + k, mat(row, col));
          } else {
            out.set(j * d2 + k, i * d2 + l, mat(row, col));
          }
        }
      }
    }
  }
  return out;
}

ComplexMatrix partial_transpose(const DensityMatrix& rho, Subsystem subsystem) {
  return partial_transpose(rho.mat, rho.dims, subsystem);
}

namespace {

double off_diagonal_norm(const ComplexMatrix& a) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.n(); ++i) {
    for (std::size_t j = 0; j < a.n(); ++j) {
      if (i != j) sum += std::norm(a(i, j));
    }
  }
  return std::sqrt(sum);
}

// Zeroes a(p,q) of a Hermitian matrix: a phase on index q makes the pivot
// real, then a real Jacobi rotation annihilates it.
void jacobi_rotate(ComplexMatrix& a, std::size_t p, std::size_t q) {
  const Complex apq = a(p, q);
  const double mag = std::abs(apq);
  if (mag == 0.0) return;
  const std::size_t n = a.n();

  // A <- Φ† A Φ with Φ_qq = conj(apq)/|apq|.
  const Complex phase = std::conj(apq) / mag;
  for (std::size_t k = 0; k < n; ++k) {
    a.set(k, q, a(k, q) * phase);
  }
  for (std::size_t k = 0; k < n; ++k) {
    a.set(q, k, std::conj(phase) * a(q, k));
  }

  const double app = a.re(p, p);
  const double aqq = a.re(q, q);
  const double theta = (aqq - app) / (2.0 * mag);
  const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
  const double c = 1.0 / std::sqrt(t * t + 1.0);
  const double s = t * c;

  for (std::size_t k = 0; k < n; ++k) {
    const Complex akp = a(k, p);
    const Complex akq = a(k, q);
    a.set(k, p, c * akp - s * akq);
    a.set(k, q, s * akp + c * akq);
  }
  for (std::size_t k = 0; k < n; ++k) {
    const Complex apk = a(p, k);
    const Complex aqk = a(q, k);
    a.set(p, k, c * apk - s * aqk);
    a.set(q, k, s * apk + c * aqk);
  }
  a.set(p, q, 0.0);
  a.set(q, p, 0.0);
  a.im(p, p) = 0.0;
  a.im(q, q) = 0.0;
}

}  // namespace

std::vector<double> hermitian_eigenvalues(const ComplexMatrix& input, double hermitian_tolerance,
                                          int max_sweeps) {
  const double defect = frobenius_norm(input - dagger(input));
  if (!(defect <= hermitian_tolerance)) {
    std::ostringstream msg;
    msg << "hermitian_eigenvalues: |A - A^dagger|_F = " << defect << " exceeds " << hermitian_tolerance;
    throw NonHermitianInput(msg.str());
  }
  // Symmetrise so that rounding noise in the input cannot accumulate.
  ComplexMatrix a = 0.5 * (input + dagger(input));
  const std::size_t n = a.n();
  const double target = tol::kJacobi * frobenius_norm(a);

  int sweep = 0;
  while (off_diagonal_norm(a) > target) {
    if (sweep++ >= max_sweeps) {
      throw NoConvergence("hermitian_eigenvalues: no convergence after " + std::to_string(max_sweeps) +
                          " sweeps");
    }
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) jacobi_rotate(a, p, q);
    }
  }

  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = a.re(i, i);
  std::sort(values.begin(), values.end());
  return values;
}

PptResult ppt_test(const DensityMatrix& rho, double tolerance) {
  const auto spectrum = hermitian_eigenvalues(partial_transpose(rho, Subsystem::kB));
  return {spectrum.front() < -tolerance, spectrum.front()};
}

ComplexMatrix qr_unitary(const ComplexMatrix& g, double degenerate_threshold) {
  if (!g.all_finite()) throw DegenerateInput("qr_unitary: non-finite input");
  const std::size_t n = g.n();
  ComplexMatrix r = g;
  ComplexMatrix q = ComplexMatrix::identity(n);
  std::vector<Complex> v(n);

  for (std::size_t k = 0; k < n; ++k) {
    double norm2 = 0.0;
    for (std::size_t i = k; i < n; ++i) norm2 += std::norm(r(i, k));
    const double norm = std::sqrt(norm2);
    double below = 0.0;
    for (std::size_t i = k + 1; i < n; ++i) below += std::norm(r(i, k));
    if (below == 0.0) continue;  // column already upper triangular

    const Complex x0 = r(k, k);
    const Complex unit = std::abs(x0) > 0.0 ? x0 / std::abs(x0) : Complex(1.0);
    const Complex alpha = -unit * norm;

    // v = x - alpha e_k; H = I - 2 v v† / (v† v).
    double vnorm2 = 0.0;
    for (std::size_t i = k; i < n; ++i) {
      v[i] = r(i, k) - (i == k ? alpha : Complex(0.0));
      vnorm2 += std::norm(v[i]);
    }
    const double beta = 2.0 / vnorm2;

    // R <- H R
    for (std::size_t j = k; j < n; ++j) {
      Complex dot = 0.0;
      for (std::size_t i = k; i < n; ++i) dot += std::conj(v[i]) * r(i, j);
      dot *= beta;
      for (std::size_t i = k; i < n; ++i) r.set(i, j, r(i, j) - v[i] * dot);
    }
    // Q <- Q H
    for (std::size_t i = 0; i < n; ++i) {
      Complex dot = 0.0;
      for (std::size_t l = k; l < n; ++l) dot += q(i, l) * v[l];
      dot *= beta;
      for (std::size_t l = k; l < n; ++l) q.set(i, l, q(i, l) - dot * std::conj(v[l]));
    }
    r.set(k, k, alpha);
    for (std::size_t i = k + 1; i < n; ++i) r.set(i, k, 0.0);
  }

  for (std::size_t j = 0; j < n; ++j) {
    const Complex rjj = r(j, j);
    const double mag = std::abs(rjj);
    if (!(mag >= degenerate_threshold)) {
      throw DegenerateInput("qr_unitary: |R_" + std::to_string(j) + std::to_string(j) +
                            "| below degeneracy threshold");
    }
    const Complex phase = rjj / mag;
    for (std::size_t i = 0; i < n; ++i) q.set(i, j, q(i, j) * phase);
  }
  return q;
}

double hermitian_distance(std::span<const ComplexMatrix> batch) {
  if (batch.empty()) throw EmptyBatch("hermitian_distance: empty batch");
  double sum = 0.0;
  for (const auto& a : batch) sum += std::sqrt(frobenius_norm(a - dagger(a)));
  return sum / static_cast<double>(batch.size());
}

}  // namespace qent
