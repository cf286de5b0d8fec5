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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "lstcl/backbone.hpp"
#include "support/dense_oracle.hpp"
#include "support/gradcheck.hpp"

using namespace lstcl;
using namespace lstcl::backbone;
namespace a = lstcl::ag;
using test::grad_check;
using test::GradCheckOpts;

namespace {

const double kGradTol = GradCheckOpts{}.rtol;
constexpr double kOracleTol = 1e-6;

void expect_tensor_close(const Tensor& x, const Tensor& y, double tol) {
  REQUIRE(x.numel() == y.numel());
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double d = std::fabs(static_cast<double>(x[i]) -
                               static_cast<double>(y[i]));
    CHECK(d <= tol * std::max(1.0, std::fabs(static_cast<double>(x[i]))));
  }
}

struct AttnTensors {
  Tensor wq, wk, wv, wo;
  int heads;
};
AttnTensors random_attn(int dim, int heads, Rng& rng) {
  return {Tensor::randn({dim, dim}, rng, Real(0.3)),
          Tensor::randn({dim, dim}, rng, Real(0.3)),
          Tensor::randn({dim, dim}, rng, Real(0.3)),
          Tensor::randn({dim, dim}, rng, Real(0.3)), heads};
}

AttnVars bind_attn_consts(a::Tape& t, const AttnTensors& p) {
  return AttnVars{t.constant(p.wq), t.constant(p.wk), t.constant(p.wv),
                  t.constant(p.wo), p.heads};
}

struct BlockTensors {
  Tensor ln_time_g, ln_time_b, ln_space_g, ln_space_b, ln_mlp_g, ln_mlp_b;
  AttnTensors time, space;
  Tensor w1, b1, w2, b2;
};

BlockTensors random_block(int dim, int heads, Rng& rng) {
  BlockTensors b{Tensor::randn({dim}, rng, Real(0.1)),
                 Tensor::randn({dim}, rng, Real(0.1)),
                 Tensor::randn({dim}, rng, Real(0.1)),
                 Tensor::randn({dim}, rng, Real(0.1)),
                 Tensor::randn({dim}, rng, Real(0.1)),
                 Tensor::randn({dim}, rng, Real(0.1)),
                 random_attn(dim, heads, rng),
                 random_attn(dim, heads, rng),
                 Tensor::randn({dim, 4 * dim}, rng, Real(0.3)),
                 Tensor::randn({4 * dim}, rng, Real(0.1)),
                 Tensor::randn({4 * dim, dim}, rng, Real(0.3)),
                 Tensor::randn({dim}, rng, Real(0.1))};
  for (int64_t i = 0; i < b.ln_time_g.numel(); ++i) {
    b.ln_time_g[i] += Real(1);
    b.ln_space_g[i] += Real(1);
    b.ln_mlp_g[i] += Real(1);
  }
  return b;
}

DividedBlockVars bind_block_consts(a::Tape& t, const BlockTensors& b) {
  DividedBlockVars v;
  v.ln_time = {t.constant(b.ln_time_g), t.constant(b.ln_time_b)};
  v.time = bind_attn_consts(t, b.time);
  v.ln_space = {t.constant(b.ln_space_g), t.constant(b.ln_space_b)};
  v.space = bind_attn_consts(t, b.space);
  v.ln_mlp = {t.constant(b.ln_mlp_g), t.constant(b.ln_mlp_b)};
  v.mlp = {t.constant(b.w1), t.constant(b.b1), t.constant(b.w2),
           t.constant(b.b2)};
  return v;
}

// Independent reference for the divided block: masked attention over the
// full (1+N) sequence with explicit temporal/spatial masks, class-token row
// copied through the temporal stage.
Tensor oracle_divided_block(const Tensor& x, const BlockTensors& b, int frames,
                            int hp, int wp) {
  const int s = hp * wp, n = frames * s, total = 1 + n;
  std::vector<uint8_t> mask_t(static_cast<size_t>(total) * total, 0);
  mask_t[0] = 1;  // cls self-link (row discarded below)
  for (int r = 1; r < total; ++r) {
    const int pi = (r - 1) % s;
    for (int c = 1; c < total; ++c)
      if ((c - 1) % s == pi) mask_t[static_cast<size_t>(r) * total + c] = 1;
  }
  Tensor y = test::oracle_layer_norm(x, b.ln_time_g, b.ln_time_b);
  Tensor o = test::oracle_mha(y, b.time.wq, b.time.wk, b.time.wv, b.time.wo,
                              b.time.heads, &mask_t);
  Tensor xt = x;
  for (int r = 1; r < total; ++r)
    for (int c = 0; c < x.cols(); ++c) xt.at2(r, c) += o.at2(r, c);

  std::vector<uint8_t> mask_s(static_cast<size_t>(total) * total, 0);
  for (int c = 0; c < total; ++c) mask_s[static_cast<size_t>(c)] = 1;  // cls row
  for (int r = 1; r < total; ++r) {
    const int fr = (r - 1) / s;
    for (int c = 1; c < total; ++c)
      if ((c - 1) / s == fr) mask_s[static_cast<size_t>(r) * total + c] = 1;
  }
  Tensor y2 = test::oracle_layer_norm(xt, b.ln_space_g, b.ln_space_b);
  Tensor o2 = test::oracle_mha(y2, b.space.wq, b.space.wk, b.space.wv,
                               b.space.wo, b.space.heads, &mask_s);
  Tensor xs = test::oracle_add(xt, o2);
  Tensor y3 = test::oracle_layer_norm(xs, b.ln_mlp_g, b.ln_mlp_b);
  return test::oracle_add(xs, test::oracle_mlp(y3, b.w1, b.b1, b.w2, b.b2));
}

struct SwinTensors {
  Tensor ln_attn_g, ln_attn_b, ln_mlp_g, ln_mlp_b;
  AttnTensors attn;
  Tensor w1, b1, w2, b2;
};

SwinTensors random_swin(int dim, int heads, Rng& rng) {
  SwinTensors b{Tensor::randn({dim}, rng, Real(0.1)),
                Tensor::randn({dim}, rng, Real(0.1)),
                Tensor::randn({dim}, rng, Real(0.1)),
                Tensor::randn({dim}, rng, Real(0.1)),
                random_attn(dim, heads, rng),
                Tensor::randn({dim, 4 * dim}, rng, Real(0.3)),
                Tensor::randn({4 * dim}, rng, Real(0.1)),
                Tensor::randn({4 * dim, dim}, rng, Real(0.3)),
                Tensor::randn({dim}, rng, Real(0.1))};
  for (int64_t i = 0; i < b.ln_attn_g.numel(); ++i) {
    b.ln_attn_g[i] += Real(1);
    b.ln_mlp_g[i] += Real(1);
  }
  return b;
}

SwinBlockVars bind_swin_consts(a::Tape& t, const SwinTensors& b) {
  SwinBlockVars v;
  v.ln_attn = {t.constant(b.ln_attn_g), t.constant(b.ln_attn_b)};
  v.attn = bind_attn_consts(t, b.attn);
  v.ln_mlp = {t.constant(b.ln_mlp_g), t.constant(b.ln_mlp_b)};
  v.mlp = {t.constant(b.w1), t.constant(b.b1), t.constant(b.w2),
           t.constant(b.b2)};
  return v;
}

// Per-window dense reference with explicit bias lookup and shift masks.
Tensor oracle_swin_block(const Tensor& x, const SwinTensors& b, int frames,
                         int hp, int wp, int wh, int ww, int sh, int sw,
                         const std::vector<Tensor>& bias_tables) {
  Tensor y = test::oracle_layer_norm(x, b.ln_attn_g, b.ln_attn_b);
  Tensor x1 = x;
  const int heads = b.attn.heads;
  const int win_tokens = frames * wh * ww;
  auto region = [&](int rolled, int size, int win, int shift) {
    if (rolled < size - win) return 0;
    if (rolled < size - shift) return 1;
    return 2;
  };
  for (int wi = 0; wi < hp / wh; ++wi)
    for (int wj = 0; wj < wp / ww; ++wj) {
      std::vector<int> rows, rid;
      std::vector<std::array<int, 3>> coords;
      for (int f = 0; f < frames; ++f)
        for (int dh = 0; dh < wh; ++dh)
          for (int dw = 0; dw < ww; ++dw) {
            const int hr = wi * wh + dh, wr = wj * ww + dw;
            rows.push_back((f * hp + (hr + sh) % hp) * wp + (wr + sw) % wp);
            rid.push_back(region(hr, hp, wh, sh) * 3 +
                          region(wr, wp, ww, sw));
            coords.push_back({f, dh, dw});
          }
      Tensor sub({win_tokens, x.cols()});
      for (int i = 0; i < win_tokens; ++i)
        for (int c = 0; c < x.cols(); ++c)
          sub.at2(i, c) = y.at2(rows[static_cast<size_t>(i)], c);
      std::vector<Tensor> bias;
      for (int h = 0; h < heads; ++h) {
        Tensor bm({win_tokens, win_tokens});
        for (int i = 0; i < win_tokens; ++i)
          for (int j = 0; j < win_tokens; ++j) {
            const int dt = coords[static_cast<size_t>(i)][0] -
                           coords[static_cast<size_t>(j)][0] + frames - 1;
            const int dhh = coords[static_cast<size_t>(i)][1] -
                            coords[static_cast<size_t>(j)][1] + wh - 1;
            const int dww = coords[static_cast<size_t>(i)][2] -
                            coords[static_cast<size_t>(j)][2] + ww - 1;
            bm.at2(i, j) = bias_tables[static_cast<size_t>(h)]
                [(dt * (2 * wh - 1) + dhh) * (2 * ww - 1) + dww];
          }
        bias.push_back(bm);
      }
      std::vector<uint8_t> mask(static_cast<size_t>(win_tokens) * win_tokens);
      bool any_block = false;
      for (int i = 0; i < win_tokens; ++i)
        for (int j = 0; j < win_tokens; ++j) {
          const bool ok = rid[static_cast<size_t>(i)] ==
                          rid[static_cast<size_t>(j)];
          mask[static_cast<size_t>(i) * win_tokens + j] = ok ? 1 : 0;
          any_block = any_block || !ok;
        }
      const bool use_mask = (sh != 0 || sw != 0) && any_block;
      Tensor o = test::oracle_mha(sub, b.attn.wq, b.attn.wk, b.attn.wv,
                                  b.attn.wo, heads,
                                  use_mask ? &mask : nullptr, &bias);
      for (int i = 0; i < win_tokens; ++i)
        for (int c = 0; c < x.cols(); ++c)
          x1.at2(rows[static_cast<size_t>(i)], c) += o.at2(i, c);
    }
  Tensor y2 = test::oracle_layer_norm(x1, b.ln_mlp_g, b.ln_mlp_b);
  return test::oracle_add(x1, test::oracle_mlp(y2, b.w1, b.b1, b.w2, b.b2));
}

}  // namespace

TEST_CASE("patchify arithmetic at reference geometry") {
  Tensor clip({8, 224, 224, 3});
  Tensor patches = tokenizer::patchify(clip, 16);
  CHECK(patches.dim(1) == 14);
  CHECK(patches.dim(2) == 14);
  CHECK(patches.dim(1) * patches.dim(2) == 196);
  CHECK(patches.dim(0) * patches.dim(1) * patches.dim(2) == 1568);
  CHECK(patches.dim(3) == 768);  // 16*16*3
  CHECK_THROWS_AS((void)tokenizer::patchify(clip, 15), ShapeError);
}

TEST_CASE("patchify/unpatchify is an exact inverse") {
  Rng rng(2);
  Tensor clip = Tensor::randn({3, 8, 12, 2}, rng);
  Tensor patches = tokenizer::patchify(clip, 4);
  Tensor back = tokenizer::unpatchify(patches, 4, 2);
  REQUIRE(back.numel() == clip.numel());
  for (int64_t i = 0; i < clip.numel(); ++i) CHECK(back[i] == clip[i]);
}

TEST_CASE("embed values: zero params and one-hot selection") {
  const int t = 2, hp = 2, wp = 2, dim = 5, plen = 4;
  const int n = t * hp * wp;
  a::Tape tape;
  tokenizer::EmbedVars ev;
  ev.w = tape.constant(Tensor::zeros({dim, plen}));
  ev.pos = tape.constant(Tensor::zeros({n + 1, dim}));
  ev.cls = tape.constant(Tensor::zeros({1, dim}));
  Rng rng(3);
  a::Var patches = tape.constant(Tensor::randn({n, plen}, rng));
  auto grid = tokenizer::embed(tape, patches, ev, t, hp, wp, dim);
  for (int64_t i = 0; i < tape.val(grid.tokens).numel(); ++i)
    CHECK(tape.val(grid.tokens)[i] == Real(0));

  // one-hot patch selects the matching column of W
  a::Tape tape2;
  Tensor w = Tensor::randn({dim, plen}, rng);
  tokenizer::EmbedVars ev2;
  ev2.w = tape2.constant(w);
  ev2.pos = tape2.constant(Tensor::zeros({n + 1, dim}));
  ev2.cls = tape2.constant(Tensor::zeros({1, dim}));
  Tensor onehot = Tensor::zeros({n, plen});
  onehot.at2(0, 2) = Real(1);
  auto grid2 = tokenizer::embed(tape2, tape2.constant(onehot), ev2, t, hp, wp,
                                dim);
  for (int d = 0; d < dim; ++d)
    CHECK(tape2.val(grid2.tokens).at2(0, d) == doctest::Approx(w.at2(d, 2)));
}

TEST_CASE("embed is permutation-equivariant with zero positions") {
  const int t = 2, hp = 2, wp = 2, dim = 6, plen = 4;
  const int n = t * hp * wp;
  Rng rng(5);
  Tensor w = Tensor::randn({dim, plen}, rng);
  Tensor patches = Tensor::randn({n, plen}, rng);
  std::vector<int> perm = {3, 1, 7, 0, 5, 2, 6, 4};
  Tensor permuted({n, plen});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < plen; ++j)
      permuted.at2(i, j) = patches.at2(perm[static_cast<size_t>(i)], j);

  auto run = [&](const Tensor& p) {
    a::Tape tape;
    tokenizer::EmbedVars ev;
    ev.w = tape.constant(w);
    ev.pos = tape.constant(Tensor::zeros({n + 1, dim}));
    ev.cls = tape.constant(Tensor::zeros({1, dim}));
    auto grid = tokenizer::embed(tape, tape.constant(p), ev, t, hp, wp, dim);
    return tape.val(grid.tokens);
  };
  Tensor base = run(patches);
  Tensor permed = run(permuted);
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < dim; ++d)
      CHECK(permed.at2(i, d) ==
            doctest::Approx(base.at2(perm[static_cast<size_t>(i)], d)));
}

TEST_CASE("embed gradient w.r.t. all parameters") {
  const int t = 2, hp = 2, wp = 2, dim = 4, plen = 3;
  const int n = t * hp * wp;
  Rng rng(7);
  Tensor patches = Tensor::randn({n, plen}, rng);
  std::vector<Tensor> params = {Tensor::randn({dim, plen}, rng),
                                Tensor::randn({n + 1, dim}, rng),
                                Tensor::randn({1, dim}, rng)};
  auto build = [&](a::Tape& tp, const std::vector<a::Var>& v) {
    tokenizer::EmbedVars ev;
    ev.w = v[0];
    ev.pos = v[1];
    ev.cls = v[2];
    auto grid = tokenizer::embed(tp, tp.constant(patches), ev, t, hp, wp, dim);
    Rng prng(11);
    Tensor proj_t = Tensor::randn({n, dim}, prng);
    Tensor proj_c = Tensor::randn({1, dim}, prng);
    return a::add(tp, a::dot(tp, grid.tokens, tp.constant(proj_t)),
                  a::dot(tp, *grid.cls, tp.constant(proj_c)));
  };
  auto res = grad_check(build, params);
  INFO(res.worst);
  CHECK(res.ok(kGradTol));
}

TEST_CASE("mha: single token reduces to projected value") {
  const int dim = 6, heads = 2;
  Rng rng(13);
  AttnTensors p = random_attn(dim, heads, rng);
  Tensor x = Tensor::randn({1, dim}, rng);
  a::Tape t;
  a::Var out = mha(t, t.constant(x), bind_attn_consts(t, p));
  Tensor expect = test::oracle_matmul(test::oracle_matmul(x, p.wv), p.wo);
  expect_tensor_close(t.val(out), expect, kOracleTol);
}

TEST_CASE("mha: zero queries give uniform attention") {
  const int n = 5, dim = 4, heads = 2;
  Rng rng(17);
  AttnTensors p = random_attn(dim, heads, rng);
  for (int64_t i = 0; i < p.wq.numel(); ++i) p.wq[i] = Real(0);
  Tensor x = Tensor::randn({n, dim}, rng);
  a::Tape t;
  a::Var out = mha(t, t.constant(x), bind_attn_consts(t, p));
  // uniform attention: every row = mean(V) * Wo
  Tensor v = test::oracle_matmul(x, p.wv);
  Tensor meanv({1, dim});
  for (int c = 0; c < dim; ++c) {
    Real s = 0;
    for (int r = 0; r < n; ++r) s += v.at2(r, c);
    meanv.at2(0, c) = s / static_cast<Real>(n);
  }
  Tensor expect_row = test::oracle_matmul(meanv, p.wo);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < dim; ++c)
      CHECK(t.val(out).at2(r, c) ==
            doctest::Approx(expect_row.at2(0, c)).epsilon(1e-4));
}

TEST_CASE("mha matches dense oracle and differentiates") {
  const int n = 5, dim = 8, heads = 2;
  Rng rng(19);
  AttnTensors p = random_attn(dim, heads, rng);
  Tensor x = Tensor::randn({n, dim}, rng);
  a::Tape t;
  a::Var out = mha(t, t.constant(x), bind_attn_consts(t, p));
  Tensor expect =
      test::oracle_mha(x, p.wq, p.wk, p.wv, p.wo, heads);
  expect_tensor_close(t.val(out), expect, kOracleTol);

  std::vector<Tensor> params = {x, p.wq, p.wk, p.wv, p.wo};
  auto build = [&](a::Tape& tp, const std::vector<a::Var>& v) {
    AttnVars av{v[1], v[2], v[3], v[4], heads};
    a::Var o = mha(tp, v[0], av);
    Rng prng(23);
    return a::dot(tp, o, tp.constant(Tensor::randn({n, dim}, prng)));
  };
  auto res = grad_check(build, params);
  INFO(res.worst);
  CHECK(res.ok(kGradTol));
}

TEST_CASE("window partition: counts, bijection, inverse") {
  // 4x4 spatial grid with 2x2 windows -> 4 non-overlapping sections
  WindowSpec spec{2, 2, 0, 0};
  auto part = window_partition(2, 4, 4, spec);
  CHECK(part.windows.size() == 4);
  for (const auto& win : part.windows)
    CHECK(static_cast<int>(win.size()) == 2 * 2 * 2);

  std::set<int> seen;
  for (const auto& win : part.windows)
    for (int r : win) seen.insert(r);
  CHECK(static_cast<int>(seen.size()) == 2 * 4 * 4);  // every token once

  // inverse: back[] maps each grid row to its unique concat slot
  std::set<int> slots(part.back.begin(), part.back.end());
  CHECK(slots.size() == part.back.size());
  for (size_t k = 0; k < part.windows.size(); ++k)
    for (size_t s = 0; s < part.windows[k].size(); ++s)
      CHECK(part.back[static_cast<size_t>(part.windows[k][s])] ==
            static_cast<int>(k * part.windows[k].size() + s));

  CHECK_THROWS_AS((void)window_partition(2, 4, 4, WindowSpec{3, 2, 0, 0}),
                  ShapeError);
  CHECK_THROWS_AS((void)window_partition(2, 4, 4, WindowSpec{2, 2, 2, 0}),
                  ConfigError);
}

TEST_CASE("shifted windows add cross-window connections") {
  const int t = 1, hp = 4, wp = 4;
  auto attend_pairs = [&](const WindowSpec& spec) {
    auto part = window_partition(t, hp, wp, spec);
    std::set<std::pair<int, int>> pairs;
    for (size_t k = 0; k < part.windows.size(); ++k) {
      const auto& win = part.windows[k];
      const auto& mask = part.masks[k];
      const int nw = static_cast<int>(win.size());
      for (int i = 0; i < nw; ++i)
        for (int j = 0; j < nw; ++j) {
          if (!mask.empty() && !mask[static_cast<size_t>(i) * nw + j]) continue;
          pairs.emplace(win[static_cast<size_t>(i)], win[static_cast<size_t>(j)]);
        }
    }
    return pairs;
  };
  auto uniform = attend_pairs(WindowSpec{2, 2, 0, 0});
  auto shifted = attend_pairs(WindowSpec{2, 2, 1, 1});
  std::set<std::pair<int, int>> uni;
  uni.insert(uniform.begin(), uniform.end());
  uni.insert(shifted.begin(), shifted.end());
  CHECK(uni.size() > uniform.size());  // strictly more connectivity
  // masks keep previously non-adjacent tokens apart: shifted pairs across
  // the wrap boundary must not appear
  for (const auto& [i, j] : shifted) {
    int ti, hi, wi, tj, hj, wj;
    tokenizer::token_coords(i, hp, wp, ti, hi, wi);
    tokenizer::token_coords(j, hp, wp, tj, hj, wj);
    // tokens from opposite edges (distance > 2 both axes) were never adjacent
    const bool far = std::abs(hi - hj) > 2 || std::abs(wi - wj) > 2;
    CHECK_FALSE(far);
  }
}

TEST_CASE("relative bias index: swapped pair hits negated offset") {
  const int t = 3, wh = 2, ww = 2;
  auto idx = relbias_index(t, wh, ww);
  const int n = t * wh * ww;
  auto offset_of = [&](int row) {
    const int dww = row % (2 * ww - 1);
    const int dhh = (row / (2 * ww - 1)) % (2 * wh - 1);
    const int dtt = row / ((2 * ww - 1) * (2 * wh - 1));
    return std::array<int, 3>{dtt - (t - 1), dhh - (wh - 1), dww - (ww - 1)};
  };
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      auto o_ij = offset_of(idx[static_cast<size_t>(i) * n + j]);
      auto o_ji = offset_of(idx[static_cast<size_t>(j) * n + i]);
      CHECK(o_ij[0] == -o_ji[0]);
      CHECK(o_ij[1] == -o_ji[1]);
      CHECK(o_ij[2] == -o_ji[2]);
    }
  // the index map is total
  const int rows = relbias_rows(t, wh, ww);
  for (int v : idx) {
    CHECK(v >= 0);
    CHECK(v < rows);
  }
}

TEST_CASE("divided block matches masked dense oracle") {
  for (auto [frames, side] : std::vector<std::pair<int, int>>{
           {1, 2}, {2, 2}, {3, 3}, {2, 3}}) {
    const int dim = 8, heads = 2;
    Rng rng(100 + frames * 10 + side);
    BlockTensors b = random_block(dim, heads, rng);
    const int n = frames * side * side;
    Tensor x = Tensor::randn({1 + n, dim}, rng);

    a::Tape t;
    tokenizer::TokenGridVars grid;
    grid.cls = t.constant(x.reshaped({1 + n, dim})).id >= 0
                   ? a::slice_rows(t, t.constant(x), 0, 1)
                   : a::Var{};
    a::Var full = t.constant(x);
    grid.cls = a::slice_rows(t, full, 0, 1);
    grid.tokens = a::slice_rows(t, full, 1, n);
    grid.t = frames;
    grid.hp = side;
    grid.wp = side;
    grid.dim = dim;
    auto out = divided_st_block(t, grid, bind_block_consts(t, b));

    Tensor expect = oracle_divided_block(x, b, frames, side, side);
    expect_tensor_close(t.val(*out.cls),
                        Tensor({1, dim}, std::vector<Real>(
                                             expect.data(),
                                             expect.data() + dim)),
                        kOracleTol);
    Tensor expect_tokens({n, dim});
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < dim; ++c)
        expect_tokens.at2(r, c) = expect.at2(r + 1, c);
    expect_tensor_close(t.val(out.tokens), expect_tokens, kOracleTol);
  }
}

TEST_CASE("divided block with T=1: temporal stage is a single-key softmax") {
  const int dim = 6, heads = 2, side = 2;
  Rng rng(31);
  BlockTensors b = random_block(dim, heads, rng);
  // silence the spatial and MLP stages so the temporal result is exposed
  for (auto* w : {&b.space.wo, &b.w2})
    for (int64_t i = 0; i < w->numel(); ++i) (*w)[i] = Real(0);
  for (int64_t i = 0; i < b.b2.numel(); ++i) b.b2[i] = Real(0);

  const int n = side * side;
  Tensor x = Tensor::randn({1 + n, dim}, rng);
  a::Tape t;
  tokenizer::TokenGridVars grid;
  a::Var full = t.constant(x);
  grid.cls = a::slice_rows(t, full, 0, 1);
  grid.tokens = a::slice_rows(t, full, 1, n);
  grid.t = 1;
  grid.hp = side;
  grid.wp = side;
  grid.dim = dim;
  auto out = divided_st_block(t, grid, bind_block_consts(t, b));

  // each token attends only to itself: z_t = Wo * (V of that token) + z
  Tensor y = test::oracle_layer_norm(x, b.ln_time_g, b.ln_time_b);
  Tensor v = test::oracle_matmul(y, b.time.wv);
  Tensor self = test::oracle_matmul(v, b.time.wo);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < dim; ++c)
      CHECK(t.val(out.tokens).at2(r, c) ==
            doctest::Approx(x.at2(r + 1, c) + self.at2(r + 1, c))
                .epsilon(1e-4));
}

TEST_CASE("divided block is frame-permutation equivariant") {
  const int frames = 3, side = 2, dim = 6, heads = 2;
  const int s = side * side, n = frames * s;
  Rng rng(37);
  BlockTensors b = random_block(dim, heads, rng);
  Tensor x = Tensor::randn({1 + n, dim}, rng);
  const std::vector<int> fperm = {2, 0, 1};

  auto run = [&](const Tensor& input) {
    a::Tape t;
    tokenizer::TokenGridVars grid;
    a::Var full = t.constant(input);
    grid.cls = a::slice_rows(t, full, 0, 1);
    grid.tokens = a::slice_rows(t, full, 1, n);
    grid.t = frames;
    grid.hp = side;
    grid.wp = side;
    grid.dim = dim;
    auto out = divided_st_block(t, grid, bind_block_consts(t, b));
    Tensor cls = t.val(*out.cls);
    Tensor toks = t.val(out.tokens);
    return std::make_pair(cls, toks);
  };

  Tensor xp = x;
  for (int f = 0; f < frames; ++f)
    for (int j = 0; j < s; ++j)
      for (int c = 0; c < dim; ++c)
        xp.at2(1 + f * s + j, c) =
            x.at2(1 + fperm[static_cast<size_t>(f)] * s + j, c);

  auto [cls_a, tok_a] = run(x);
  auto [cls_b, tok_b] = run(xp);
  expect_tensor_close(cls_a, cls_b, 1e-5);
  for (int f = 0; f < frames; ++f)
    for (int j = 0; j < s; ++j)
      for (int c = 0; c < dim; ++c)
        CHECK(tok_b.at2(f * s + j, c) ==
              doctest::Approx(tok_a.at2(fperm[static_cast<size_t>(f)] * s + j, c))
                  .epsilon(1e-4));
}

TEST_CASE("divided block gradients") {
  const int frames = 2, side = 2, dim = 8, heads = 2;
  const int n = frames * side * side;
  Rng rng(41);
  BlockTensors b = random_block(dim, heads, rng);
  Tensor x = Tensor::randn({1 + n, dim}, rng);
  std::vector<Tensor> params = {x,        b.ln_time_g, b.time.wq, b.time.wv,
                                b.space.wq, b.space.wo, b.w1,      b.b2};
  auto build = [&](a::Tape& tp, const std::vector<a::Var>& v) {
    DividedBlockVars dv;
    dv.ln_time = {v[1], tp.constant(b.ln_time_b)};
    dv.time = {v[2], tp.constant(b.time.wk), v[3], tp.constant(b.time.wo),
               heads};
    dv.ln_space = {tp.constant(b.ln_space_g), tp.constant(b.ln_space_b)};
    dv.space = {v[4], tp.constant(b.space.wk), tp.constant(b.space.wv), v[5],
                heads};
    dv.ln_mlp = {tp.constant(b.ln_mlp_g), tp.constant(b.ln_mlp_b)};
    dv.mlp = {v[6], tp.constant(b.b1), tp.constant(b.w2), v[7]};
    tokenizer::TokenGridVars grid;
    grid.cls = a::slice_rows(tp, v[0], 0, 1);
    grid.tokens = a::slice_rows(tp, v[0], 1, n);
    grid.t = frames;
    grid.hp = side;
    grid.wp = side;
    grid.dim = dim;
    auto out = divided_st_block(tp, grid, dv);
    Rng prng(43);
    return a::add(
        tp, a::dot(tp, out.tokens, tp.constant(Tensor::randn({n, dim}, prng))),
        a::dot(tp, *out.cls, tp.constant(Tensor::randn({1, dim}, prng))));
  };
  auto res = grad_check(build, params);
  INFO(res.worst);
  CHECK(res.ok(kGradTol));
}

TEST_CASE("swin stage matches per-window dense oracle") {
  const int frames = 2, hp = 4, wp = 4, dim = 8, heads = 2;
  const int n = frames * hp * wp;
  Rng rng(47);
  SwinTensors ub = random_swin(dim, heads, rng);
  SwinTensors sb = random_swin(dim, heads, rng);
  std::vector<Tensor> tables;
  const int rows = relbias_rows(frames, 2, 2);
  for (int h = 0; h < heads; ++h)
    tables.push_back(Tensor::randn({rows, 1}, rng, Real(0.2)));
  Tensor x = Tensor::randn({n, dim}, rng);

  a::Tape t;
  tokenizer::TokenGridVars grid;
  grid.tokens = t.constant(x);
  grid.t = frames;
  grid.hp = hp;
  grid.wp = wp;
  grid.dim = dim;
  for (const auto& tb : tables) grid.relbias.push_back(t.constant(tb));
  auto out = st_swin_stage(t, grid, bind_swin_consts(t, ub),
                           bind_swin_consts(t, sb), WindowSpec{2, 2, 0, 0});

  Tensor mid = oracle_swin_block(x, ub, frames, hp, wp, 2, 2, 0, 0, tables);
  Tensor expect = oracle_swin_block(mid, sb, frames, hp, wp, 2, 2, 1, 1, tables);
  expect_tensor_close(t.val(out.tokens), expect, kOracleTol);
}

TEST_CASE("whole-grid window with zero bias equals full attention blocks") {
  const int frames = 2, hp = 2, wp = 2, dim = 6, heads = 2;
  const int n = frames * hp * wp;
  Rng rng(53);
  SwinTensors b = random_swin(dim, heads, rng);
  std::vector<Tensor> zero_tables(
      static_cast<size_t>(heads),
      Tensor::zeros({relbias_rows(frames, hp, wp), 1}));
  Tensor x = Tensor::randn({n, dim}, rng);

  a::Tape t;
  tokenizer::TokenGridVars grid;
  grid.tokens = t.constant(x);
  grid.t = frames;
  grid.hp = hp;
  grid.wp = wp;
  grid.dim = dim;
  for (const auto& tb : zero_tables) grid.relbias.push_back(t.constant(tb));
  auto out = swin_block(t, grid, bind_swin_consts(t, b),
                        WindowSpec{hp, wp, 0, 0});

  // plain pre-norm attention block over the full sequence
  Tensor y = test::oracle_layer_norm(x, b.ln_attn_g, b.ln_attn_b);
  Tensor x1 = test::oracle_add(
      x, test::oracle_mha(y, b.attn.wq, b.attn.wk, b.attn.wv, b.attn.wo, heads));
  Tensor y2 = test::oracle_layer_norm(x1, b.ln_mlp_g, b.ln_mlp_b);
  Tensor expect =
      test::oracle_add(x1, test::oracle_mlp(y2, b.w1, b.b1, b.w2, b.b2));
  expect_tensor_close(t.val(out.tokens), expect, kOracleTol);
}

TEST_CASE("window attention is in-window permutation equivariant with zero bias") {
  const int frames = 2, hp = 2, wp = 2, dim = 6, heads = 2;
  const int n = frames * hp * wp;
  Rng rng(59);
  SwinTensors b = random_swin(dim, heads, rng);
  Tensor x = Tensor::randn({n, dim}, rng);
  std::vector<int> perm = {5, 2, 7, 1, 0, 3, 6, 4};

  auto run = [&](const Tensor& input) {
    a::Tape t;
    tokenizer::TokenGridVars grid;
    grid.tokens = t.constant(input);
    grid.t = frames;
    grid.hp = hp;
    grid.wp = wp;
    grid.dim = dim;
    for (int h = 0; h < heads; ++h)
      grid.relbias.push_back(
          t.constant(Tensor::zeros({relbias_rows(frames, hp, wp), 1})));
    auto out = swin_block(t, grid, bind_swin_consts(t, b),
                          WindowSpec{hp, wp, 0, 0});
    return t.val(out.tokens);
  };
  Tensor xp({n, dim});
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < dim; ++c)
      xp.at2(i, c) = x.at2(perm[static_cast<size_t>(i)], c);
  Tensor base = run(x);
  Tensor permuted = run(xp);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < dim; ++c)
      CHECK(permuted.at2(i, c) ==
            doctest::Approx(base.at2(perm[static_cast<size_t>(i)], c))
                .epsilon(1e-4));
}

TEST_CASE("swin stage gradients including bias tables") {
  const int frames = 2, hp = 2, wp = 2, dim = 4, heads = 2;
  const int n = frames * hp * wp;
  Rng rng(61);
  SwinTensors ub = random_swin(dim, heads, rng);
  SwinTensors sb = random_swin(dim, heads, rng);
  const int rows = relbias_rows(frames, 2, 2);
  Tensor x = Tensor::randn({n, dim}, rng);
  std::vector<Tensor> params = {x,
                                Tensor::randn({rows, 1}, rng, Real(0.2)),
                                Tensor::randn({rows, 1}, rng, Real(0.2)),
                                ub.attn.wq,
                                sb.attn.wo,
                                ub.w1};
  auto build = [&](a::Tape& tp, const std::vector<a::Var>& v) {
    tokenizer::TokenGridVars grid;
    grid.tokens = v[0];
    grid.t = frames;
    grid.hp = hp;
    grid.wp = wp;
    grid.dim = dim;
    grid.relbias = {v[1], v[2]};
    SwinBlockVars uv = bind_swin_consts(tp, ub);
    uv.attn.wq = v[3];
    uv.mlp.w1 = v[5];
    SwinBlockVars sv = bind_swin_consts(tp, sb);
    sv.attn.wo = v[4];
    auto out = st_swin_stage(tp, grid, uv, sv, WindowSpec{2, 2, 0, 0});
    Rng prng(67);
    return a::dot(tp, out.tokens, tp.constant(Tensor::randn({n, dim}, prng)));
  };
  auto res = grad_check(build, params);
  INFO(res.worst);
  CHECK(res.ok(kGradTol));
}

TEST_CASE("patch_merge halves spatial dims, keeps T, differentiates") {
  const int frames = 8, hp = 4, wp = 4, dim = 4;
  const int n = frames * hp * wp;
  Rng rng(71);
  Tensor x = Tensor::randn({n, dim}, rng);
  Tensor mw = Tensor::randn({2 * dim, 4 * dim}, rng, Real(0.3));

  a::Tape t;
  tokenizer::TokenGridVars grid;
  grid.tokens = t.constant(x);
  grid.t = frames;
  grid.hp = hp;
  grid.wp = wp;
  grid.dim = dim;
  auto out = patch_merge(t, grid, t.constant(mw));
  CHECK(out.hp == 2);
  CHECK(out.wp == 2);
  CHECK(out.t == 8);
  CHECK(out.dim == 2 * dim);
  CHECK(t.val(out.tokens).rows() == frames * 2 * 2);

  // constant tokens stay constant under any merge matrix
  Tensor cx({n, dim});
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < dim; ++c) cx.at2(i, c) = Real(0.5) + Real(c);
  a::Tape t2;
  tokenizer::TokenGridVars cgrid = grid;
  cgrid.tokens = t2.constant(cx);
  auto cout = patch_merge(t2, cgrid, t2.constant(mw));
  const Tensor& cv = t2.val(cout.tokens);
  for (int r = 1; r < cv.rows(); ++r)
    for (int c = 0; c < cv.cols(); ++c)
      CHECK(cv.at2(r, c) == doctest::Approx(cv.at2(0, c)));

  // odd dims rejected
  a::Tape t3;
  tokenizer::TokenGridVars odd;
  odd.tokens = t3.constant(Tensor::randn({2 * 3 * 4, dim}, rng));
  odd.t = 2;
  odd.hp = 3;
  odd.wp = 4;
  odd.dim = dim;
  CHECK_THROWS_AS((void)patch_merge(t3, odd, t3.constant(mw)), ShapeError);

  std::vector<Tensor> params = {x, mw};
  auto build = [&](a::Tape& tp, const std::vector<a::Var>& v) {
    tokenizer::TokenGridVars g;
    g.tokens = v[0];
    g.t = frames;
    g.hp = hp;
    g.wp = wp;
    g.dim = dim;
    auto o = patch_merge(tp, g, v[1]);
    Rng prng(73);
    return a::dot(tp, o.tokens,
                  tp.constant(Tensor::randn({frames * 4, 2 * dim}, prng)));
  };
  auto res = grad_check(build, params);
  INFO(res.worst);
  CHECK(res.ok(kGradTol));
}

TEST_CASE("full forward: config validation, determinism, gradients") {
  ModelConfig bad;
  bad.depth = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  ModelConfig cfg;
  cfg.variant = Variant::DividedST;
  cfg.t = 2;
  cfg.h = 8;
  cfg.w = 8;
  cfg.c = 1;
  cfg.patch = 2;  // 4x4 patch grid
  cfg.dim = 16;
  cfg.heads = 2;
  cfg.depth = 2;
  cfg.validate();

  ParamStore store;
  Rng rng(79);
  init_backbone_params(store, cfg, rng);
  Rng crng(83);
  Tensor clip = Tensor::randn({cfg.t, cfg.h, cfg.w, cfg.c}, crng, Real(0.3));

  auto run = [&]() {
    a::Tape t;
    Binder bind(t, store, false);
    auto vars = bind_backbone(t, bind, cfg);
    return t.val(forward_clip(t, vars, clip));
  };
  Tensor f1 = run();
  Tensor f2 = run();
  CHECK(f1.numel() == cfg.feature_dim());
  for (int64_t i = 0; i < f1.numel(); ++i) CHECK(f1[i] == f2[i]);

  // gradient through the whole backbone w.r.t. a spread of parameters
  std::vector<std::string> names = {"backbone.embed.w",
                                    "backbone.embed.cls",
                                    "backbone.block0.time.wq",
                                    "backbone.block1.space.wo",
                                    "backbone.block1.mlp.w2",
                                    "backbone.block0.ln_space.g"};
  std::vector<Tensor> params;
  for (const auto& nm : names) params.push_back(store.at(nm));
  auto build = [&](a::Tape& tp, const std::vector<a::Var>& v) {
    ParamStore local = store;
    VarMap index;
    Binder bind(tp, local, false, &index);
    auto vars = bind_backbone(tp, bind, cfg);
    // rebind the checked parameters as the supplied leaves
    auto patch_var = [&](const std::string& nm, a::Var nv) {
      if (nm == "backbone.embed.w") vars.embed.w = nv;
      if (nm == "backbone.embed.cls") vars.embed.cls = nv;
      if (nm == "backbone.block0.time.wq") vars.divided[0].time.wq = nv;
      if (nm == "backbone.block1.space.wo") vars.divided[1].space.wo = nv;
      if (nm == "backbone.block1.mlp.w2") vars.divided[1].mlp.w2 = nv;
      if (nm == "backbone.block0.ln_space.g") vars.divided[0].ln_space.g = nv;
    };
    for (size_t i = 0; i < names.size(); ++i) patch_var(names[i], v[i]);
    a::Var f = forward_clip(tp, vars, clip);
    Rng prng(89);
    return a::dot(tp, f, tp.constant(Tensor::randn({1, cfg.feature_dim()}, prng)));
  };
  auto res = grad_check(build, params);
  INFO(res.worst);
  CHECK(res.ok(kGradTol));
}

TEST_CASE("st-swin forward end to end with gradients") {
  ModelConfig cfg;
  cfg.variant = Variant::STSwin;
  cfg.t = 2;
  cfg.h = 8;
  cfg.w = 8;
  cfg.c = 1;
  cfg.patch = 2;  // 4x4 grid, two stages: 4x4 -> merge -> 2x2
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.swin_stages = 2;
  cfg.window = 2;
  cfg.validate();
  CHECK(cfg.feature_dim() == 16);

  ParamStore store;
  Rng rng(97);
  init_backbone_params(store, cfg, rng);
  Rng crng(101);
  Tensor clip = Tensor::randn({cfg.t, cfg.h, cfg.w, cfg.c}, crng, Real(0.3));

  a::Tape t;
  Binder bind(t, store, false);
  auto vars = bind_backbone(t, bind, cfg);
  const Tensor feat = t.val(forward_clip(t, vars, clip));
  CHECK(feat.numel() == 16);
  CHECK(feat.all_finite());

  std::vector<std::string> names = {"backbone.embed.w",
                                    "backbone.embed.relbias.h0",
                                    "backbone.stage0.uniform.attn.wq",
                                    "backbone.stage1.shifted.mlp.w1",
                                    "backbone.merge0.w"};
  std::vector<Tensor> params;
  for (const auto& nm : names) params.push_back(store.at(nm));
  auto build = [&](a::Tape& tp, const std::vector<a::Var>& v) {
    ParamStore local = store;
    Binder b2(tp, local, false);
    auto vars2 = bind_backbone(tp, b2, cfg);
    vars2.embed.w = v[0];
    vars2.embed.relbias[0] = v[1];
    vars2.swin_uniform[0].attn.wq = v[2];
    vars2.swin_shifted[1].mlp.w1 = v[3];
    vars2.merges[0] = v[4];
    a::Var f = forward_clip(tp, vars2, clip);
    Rng prng(103);
    return a::dot(tp, f, tp.constant(Tensor::randn({1, 16}, prng)));
  };
  auto res = grad_check(build, params);
  INFO(res.worst);
  CHECK(res.ok(kGradTol));
}
