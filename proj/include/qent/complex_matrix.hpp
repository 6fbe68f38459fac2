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

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace qent {

using Complex = std::complex<double>;

/// Dense square complex matrix stored as separate row-major real and
/// imaginary grids.
class ComplexMatrix {
 public:
  ComplexMatrix() = default;
  explicit ComplexMatrix(std::size_t n) : n_(n), re_(n * n, 0.0), im_(n * n, 0.0) {}

  static ComplexMatrix zero(std::size_t n) { return ComplexMatrix(n); }
  static ComplexMatrix identity(std::size_t n);
  static ComplexMatrix diagonal(std::span<const double> values);
  /// Rank-one projector |v><v|.
  static ComplexMatrix outer(std::span<const Complex> v);

  std::size_t n() const noexcept { return n_; }
  std::size_t size() const noexcept { return n_ * n_; }

  double& re(std::size_t i, std::size_t j) { return re_[i * n_ + j]; }
  double& im(std::size_t i, std::size_t j) { return im_[i * n_ + j]; }
  double re(std::size_t i, std::size_t j) const { return re_[i * n_ + j]; }
  double im(std::size_t i, std::size_t j) const { return im_[i * n_ + j]; }

  Complex operator()(std::size_t i, std::size_t j) const {
    return {re_[i * n_ + j], im_[i * n_ + j]};
  }
  void set(std::size_t i, std::size_t j, Complex z) {
    re_[i * n_ + j] = z.real();
    im_[i * n_ + j] = z.imag();
  }

  std::span<const double> re_data() const noexcept { return re_; }
  std::span<const double> im_data() const noexcept { return im_; }

  Complex trace() const;
  bool all_finite() const;

  ComplexMatrix& operator+=(const ComplexMatrix& other);
  ComplexMatrix& operator-=(const ComplexMatrix& other);
  ComplexMatrix& operator*=(double s);

  friend bool operator==(const ComplexMatrix&, const ComplexMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> re_;
  std::vector<double> im_;
};

ComplexMatrix operator+(ComplexMatrix a, const ComplexMatrix& b);
ComplexMatrix operator-(ComplexMatrix a, const ComplexMatrix& b);
ComplexMatrix operator*(ComplexMatrix a, double s);
ComplexMatrix operator*(double s, ComplexMatrix a);
ComplexMatrix matmul(const ComplexMatrix& a, const ComplexMatrix& b);

/// a ⊗ b with result[(i*nb+k),(j*nb+l)] = a[i,j] * b[k,l].
ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b);
std::vector<Complex> kron(std::span<const Complex> a, std::span<const Complex> b);
/// Conjugate transpose.
ComplexMatrix dagger(const ComplexMatrix& a);
double frobenius_norm(const ComplexMatrix& a);

}  // namespace qent
