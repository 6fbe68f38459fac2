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

#include "qent/complex_matrix.hpp"

#include <cmath>

#include "qent/error.hpp"

namespace qent {

ComplexMatrix ComplexMatrix::identity(std::size_t n) {
  ComplexMatrix m(n);
  for (std::size_t i = 0; i < n; ++i) m.re(i, i) = 1.0;
  return m;
}

ComplexMatrix ComplexMatrix::diagonal(std::span<const double> values) {
  ComplexMatrix m(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) m.re(i, i) = values[i];
  return m;
}

ComplexMatrix ComplexMatrix::outer(std::span<const Complex> v) {
  ComplexMatrix m(v.size());
  // Fill one triangle and mirror it so the result is Hermitian bit for bit,
  // whatever the compiler does with fused multiply-adds.
  for (std::size_t i = 0; i < v.size(); ++i) {
    m.set(i, i, std::norm(v[i]));
    for (std::size_t j = i + 1; j < v.size(); ++j) {
      const Complex z = v[i] * std::conj(v[j]);
      m.set(i, j, z);
      m.set(j, i, std::conj(z));
    }
  }
  return m;
}

Complex ComplexMatrix::trace() const {
  Complex t = 0.0;
  for (std::size_t i = 0; i < n_; ++i) t += (*this)(i, i);
  return t;
}

bool ComplexMatrix::all_finite() const {
  for (std::size_t k = 0; k < re_.size(); ++k) {
    if (!std::isfinite(re_[k]) || !std::isfinite(im_[k])) return false;
  }
  return true;
}

ComplexMatrix& ComplexMatrix::operator+=(const ComplexMatrix& other) {
  if (other.n_ != n_) throw DimensionMismatch("matrix sum: side mismatch");
  for (std::size_t k = 0; k < re_.size(); ++k) {
    re_[k] += other.re_[k];
    im_[k] += other.im_[k];
  }
  return *this;
}

ComplexMatrix& ComplexMatrix::operator-=(const ComplexMatrix& other) {
  if (other.n_ != n_) throw DimensionMismatch("matrix difference: side mismatch");
  for (std::size_t k = 0; k < re_.size(); ++k) {
    re_[k] -= other.re_[k];
    im_[k] -= other.im_[k];
  }
  return *this;
}

ComplexMatrix& ComplexMatrix::operator*=(double s) {
  for (std::size_t k = 0; k < re_.size(); ++k) {
    re_[k] *= s;
    im_[k] *= s;
  }
  return *this;
}

ComplexMatrix operator+(ComplexMatrix a, const ComplexMatrix& b) { return a += b; }
ComplexMatrix operator-(ComplexMatrix a, const ComplexMatrix& b) { return a -= b; }
ComplexMatrix operator*(ComplexMatrix a, double s) { return a *= s; }
ComplexMatrix operator*(double s, ComplexMatrix a) { return a *= s; }

ComplexMatrix matmul(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.n() != b.n()) throw DimensionMismatch("matmul: side mismatch");
  const std::size_t n = a.n();
  ComplexMatrix c(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      const double ar = a.re(i, k);
      const double ai = a.im(i, k);
      for (std::size_t j = 0; j < n; ++j) {
        c.re(i, j) += ar * b.re(k, j) - ai * b.im(k, j);
        c.im(i, j) += ar * b.im(k, j) + ai * b.re(k, j);
      }
    }
  }
  return c;
}

ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  const std::size_t na = a.n();
  const std::size_t nb = b.n();
  ComplexMatrix c(na * nb);
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < na; ++j) {
      const Complex aij = a(i, j);
      for (std::size_t k = 0; k < nb; ++k) {
        for (std::size_t l = 0; l < nb; ++l) c.set(i * nb + k, j * nb + l, aij * b(k, l));
      }
    }
  }
  return c;
}

std::vector<Complex> kron(std::span<const Complex> a, std::span<const Complex> b) {
  std::vector<Complex> out;
  out.reserve(a.size() * b.size());
  for (const Complex& x : a) {
    for (const Complex& y : b) out.push_back(x * y);
  }
  return out;
}

ComplexMatrix dagger(const ComplexMatrix& a) {
  const std::size_t n = a.n();
  ComplexMatrix d(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      d.re(i, j) = a.re(j, i);
      d.im(i, j) = -a.im(j, i);
    }
  }
  return d;
}

double frobenius_norm(const ComplexMatrix& a) {
  double sum = 0.0;
  const auto re = a.re_data();
  const auto im = a.im_data();
  for (std::size_t k = 0; k < re.size(); ++k) sum += re[k] * re[k] + im[k] * im[k];
  return std::sqrt(sum);
}

}  // namespace qent
