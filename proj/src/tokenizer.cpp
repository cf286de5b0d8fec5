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

#include "lstcl/tokenizer.hpp"

namespace lstcl::tokenizer {

Tensor patchify(const Tensor& clip, int patch) {
  if (clip.ndim() != 4) throw ShapeError("patchify: clip must be (T,H,W,C)");
  const int t = clip.dim(0), h = clip.dim(1), w = clip.dim(2), c = clip.dim(3);
  if (patch < 1 || h % patch != 0 || w % patch != 0)
    throw ShapeError("patchify: patch side must divide H and W");
  const int hp = h / patch, wp = w / patch;
  const int plen = patch * patch * c;
  Tensor out({t, hp, wp, plen});
  for (int f = 0; f < t; ++f)
    for (int ph = 0; ph < hp; ++ph)
      for (int pw = 0; pw < wp; ++pw) {
        Real* dst = out.data() +
                    ((static_cast<int64_t>(f) * hp + ph) * wp + pw) * plen;
        int k = 0;
        for (int r = 0; r < patch; ++r)
          for (int col = 0; col < patch; ++col)
            for (int ch = 0; ch < c; ++ch)
              dst[k++] = clip[((static_cast<int64_t>(f) * h + ph * patch + r) *
                                   w + pw * patch + col) * c + ch];
      }
  return out;
}

Tensor unpatchify(const Tensor& patches, int patch, int channels) {
  if (patches.ndim() != 4)
    throw ShapeError("unpatchify: patches must be (T,Hp,Wp,P*P*C)");
  const int t = patches.dim(0), hp = patches.dim(1), wp = patches.dim(2);
  const int plen = patches.dim(3);
  if (plen != patch * patch * channels)
    throw ShapeError("unpatchify: patch vector length mismatch");
  const int h = hp * patch, w = wp * patch;
  Tensor clip({t, h, w, channels});
  for (int f = 0; f < t; ++f)
    for (int ph = 0; ph < hp; ++ph)
      for (int pw = 0; pw < wp; ++pw) {
        const Real* src = patches.data() +
                          ((static_cast<int64_t>(f) * hp + ph) * wp + pw) * plen;
        int k = 0;
        for (int r = 0; r < patch; ++r)
          for (int col = 0; col < patch; ++col)
            for (int ch = 0; ch < channels; ++ch)
              clip[((static_cast<int64_t>(f) * h + ph * patch + r) * w +
                    pw * patch + col) * channels + ch] = src[k++];
      }
  return clip;
}

TokenGridVars embed(ag::Tape& tape, ag::Var patches_flat, const EmbedVars& ev,
                    int t, int hp, int wp, int dim) {
  const int n = t * hp * wp;
  const Tensor& pv = tape.val(patches_flat);
  if (pv.rows() != n)
    throw ShapeError("embed: patch count does not match grid geometry");
  if (tape.val(ev.w).rows() != dim ||
      tape.val(ev.w).cols() != pv.cols())
    throw ShapeError("embed: W_embed shape mismatch");

  ag::Var tokens = ag::matmul_nt(tape, patches_flat, ev.w);  // (N, D)
  TokenGridVars grid;
  grid.t = t;
  grid.hp = hp;
  grid.wp = wp;
  grid.dim = dim;
  grid.relbias = ev.relbias;

  if (ev.pos) {
    const Tensor& pos = tape.val(*ev.pos);
    if (pos.rows() != n + 1 || pos.cols() != dim)
      throw ShapeError("embed: positional table must be (N+1, D)");
    tokens = ag::add(tape, tokens, ag::slice_rows(tape, *ev.pos, 1, n));
    if (ev.cls)
      grid.cls = ag::add(tape, *ev.cls, ag::slice_rows(tape, *ev.pos, 0, 1));
  } else if (ev.cls) {
    grid.cls = *ev.cls;
  }
  grid.tokens = tokens;
  return grid;
}

}  // namespace lstcl::tokenizer
