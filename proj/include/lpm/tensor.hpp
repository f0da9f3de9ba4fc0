// Copyright 2026 The LPM Authors. All Rights Reserved.
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

#include <Eigen/Dense>

#if defined(__SSE__) || defined(_M_X64)
#include <pmmintrin.h>
#include <xmmintrin.h>
#define LPM_HAS_MXCSR 1
#endif

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace lpm {

/// Dense row-major matrix. Rows are points (or samples), columns are features.
template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

/// n x 3 coordinates in double precision; the I/O and metric currency.
using Points = Matrix<double>;

/// Per-point part ids. 0 is padding, 1..k are parts.
using Labels = std::vector<int>;

using Index = Eigen::Index;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidLabelError : public Error {
 public:
  using Error::Error;
};

class TapeStateError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class AbsentPartError : public Error {
 public:
  using Error::Error;
};

inline std::string shape_str(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

enum class PoolingKind { kMax, kMean };

inline const char* to_string(PoolingKind kind) {
  return kind == PoolingKind::kMax ? "max" : "mean";
}

inline PoolingKind pooling_from_string(const std::string& s) {
  if (s == "max") return PoolingKind::kMax;
  if (s == "mean") return PoolingKind::kMean;
  throw Error("unknown pooling kind '" + s + "' (expected max|mean)");
}

/// Flushes subnormal floats to zero for the lifetime of the guard on the
/// calling thread. Late in training, gradients and moment estimates drift
/// into the subnormal range, which is several times slower on x86.
class ScopedFlushDenormals {
 public:
  ScopedFlushDenormals() {
#ifdef LPM_HAS_MXCSR
    saved_ = _mm_getcsr();
    _MM_SET_FLUSH_ZERO_MODE(_MM_FLUSH_ZERO_ON);
    _MM_SET_DENORMALS_ZERO_MODE(_MM_DENORMALS_ZERO_ON);
#endif
  }
  ~ScopedFlushDenormals() {
#ifdef LPM_HAS_MXCSR
    _mm_setcsr(saved_);
#endif
  }
  ScopedFlushDenormals(const ScopedFlushDenormals&) = delete;
  ScopedFlushDenormals& operator=(const ScopedFlushDenormals&) = delete;

 private:
  unsigned int saved_ = 0;
};

}  // namespace lpm
