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

#include <optional>
#include <vector>

#include "lstcl/autograd.hpp"
#include "lstcl/params.hpp"

// Clip -> embedded token sequence. Canonical token order is t-major, then
// patch row, then patch column; the (N, D) token matrix in that order IS the
// flat serialization of the grid.

namespace lstcl::tokenizer {

// (T,H,W,C) -> (T, H/P, W/P, P*P*C); each patch vector is the row-major
// flattening of one P x P x C patch. Exact inverse via unpatchify.
Tensor patchify(const Tensor& clip, int patch);
Tensor unpatchify(const Tensor& patches, int patch, int channels);

inline int token_row(int t, int h, int w, int hp, int wp) {
  return (t * hp + h) * wp + w;
}
inline void token_coords(int row, int hp, int wp, int& t, int& h, int& w) {
  w = row % wp;
  h = (row / wp) % hp;
  t = row / (wp * hp);
}

// Embedded tokens on a tape plus the grid geometry they carry.
struct TokenGridVars {
  ag::Var tokens;               // (T*Hp*Wp, D)
  std::optional<ag::Var> cls;   // (1, D) when configured
  int t = 0, hp = 0, wp = 0, dim = 0;
  // Relative-position bias tables (one per head) ride with the grid for the
  // windowed backbone; absolute-table grids leave this empty.
  std::vector<ag::Var> relbias;
};

struct EmbedVars {
  ag::Var w;                    // (D, P*P*C)
  std::optional<ag::Var> pos;   // (T*Hp*Wp + 1, D), row 0 = class slot
  std::optional<ag::Var> cls;   // (1, D)
  std::vector<ag::Var> relbias;
};

// token(i,t) = W * patch(i,t) + e(i,t); class token prepended when `cls`
// is bound. The relative-bias variant adds no absolute term and instead
// forwards the bias tables in the grid metadata.
TokenGridVars embed(ag::Tape& tape, ag::Var patches_flat, const EmbedVars& ev,
                    int t, int hp, int wp, int dim);

}  // namespace lstcl::tokenizer
