// Copyright 2026 The lstcl Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "lstcl/common.hpp"
#include "lstcl/rng.hpp"

namespace lstcl {

// Dense row-major tensor with value semantics. Rank is arbitrary but most of
// the code treats tensors as matrices (rows x cols); higher-rank shapes are
// carried through reshape without moving data.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> dims)
      : dims_(std::move(dims)), data_(checked_numel(dims_), Real(0)) {}
  Tensor(std::vector<int> dims, std::vector<Real> data)
      : dims_(std::move(dims)), data_(std::move(data)) {
    if (static_cast<int64_t>(data_.size()) != checked_numel(dims_))
      throw ShapeError("tensor data size does not match dims");
  }

  static Tensor zeros(std::vector<int> dims) { return Tensor(std::move(dims)); }
  static Tensor full(std::vector<int> dims, Real v) {
    Tensor t(std::move(dims));
    for (auto& x : t.data_) x = v;
    return t;
  }
  static Tensor randn(std::vector<int> dims, Rng& rng, Real stddev = Real(1)) {
    Tensor t(std::move(dims));
    for (auto& x : t.data_) x = static_cast<Real>(rng.normal()) * stddev;
    return t;
  }

  const std::vector<int>& dims() const { return dims_; }
  int ndim() const { return static_cast<int>(dims_.size()); }
  int dim(int i) const { return dims_[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }

  int rows() const {
    if (dims_.size() == 1) return 1;
    if (dims_.size() != 2) throw ShapeError("rows(): tensor is not 2-D");
    return dims_[0];
  }
  int cols() const {
    if (dims_.size() == 1) return dims_[0];
    if (dims_.size() != 2) throw ShapeError("cols(): tensor is not 2-D");
    return dims_[1];
  }

  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }
  Real& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  Real operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }
  Real& at2(int r, int c) {
    return data_[static_cast<size_t>(r) * cols() + c];
  }
  Real at2(int r, int c) const {
    return data_[static_cast<size_t>(r) * cols() + c];
  }

  Tensor reshaped(std::vector<int> dims) const {
    if (checked_numel(dims) != numel())
      throw ShapeError("reshape changes element count");
    Tensor t = *this;
    t.dims_ = std::move(dims);
    return t;
  }

  bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }

  bool all_finite() const {
    for (Real v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  std::string shape_str() const {
    std::string s = "(";
    for (size_t i = 0; i < dims_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(dims_[i]);
    }
    return s + ")";
  }

 private:
  static int64_t checked_numel(const std::vector<int>& dims) {
    int64_t n = 1;
    for (int d : dims) {
      if (d < 0) throw ShapeError("negative dimension");
      n *= d;
    }
    return n;
  }

  std::vector<int> dims_;
  std::vector<Real> data_;
};

}  // namespace lstcl
