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

#include "lstcl/backbone.hpp"

#include <cmath>

namespace lstcl::backbone {

using tokenizer::TokenGridVars;
namespace a = lstcl::ag;

const char* variant_name(Variant v) {
  return v == Variant::DividedST ? "divided" : "st_swin";
}

Variant variant_from_name(const std::string& name) {
  if (name == "divided") return Variant::DividedST;
  if (name == "st_swin") return Variant::STSwin;
  throw ConfigError("unknown backbone variant: " + name);
}

int ModelConfig::feature_dim() const {
  if (variant == Variant::DividedST) return dim;
  return dim << (swin_stages - 1);
}

void ModelConfig::validate() const {
  if (t < 1 || h < 1 || w < 1 || c < 1) throw ConfigError("model: bad clip dims");
  if (patch < 1 || h % patch != 0 || w % patch != 0)
    throw ConfigError("model: patch side must divide H and W");
  if (dim < 1 || heads < 1 || dim % heads != 0)
    throw ConfigError("model: heads must divide dim");
  if (mlp_ratio < 1 || proj_dim < 1) throw ConfigError("model: bad head sizes");
  if (variant == Variant::DividedST) {
    if (depth < 1) throw ConfigError("model: depth must be >= 1");
  } else {
    if (swin_stages < 1) throw ConfigError("model: swin_stages must be >= 1");
    if (window < 1) throw ConfigError("model: window must be >= 1");
    for (int s = 0; s < swin_stages; ++s) {
      const int hs = hp() >> s, ws = wp() >> s;
      if (hs < window || ws < window || hs % window != 0 || ws % window != 0)
        throw ConfigError("model: windows must tile every stage grid");
      if (s + 1 < swin_stages && (hs % 2 != 0 || ws % 2 != 0))
        throw ConfigError("model: patch merge needs even spatial dims");
    }
  }
}

namespace {

a::Var single_query_attention(a::Tape& t, a::Var y, int row,
                              const AttnVars& p) {
  const int dim = t.val(y).cols();
  const int dh = dim / p.heads;
  const Real sc = Real(1) / std::sqrt(static_cast<Real>(dh));
  a::Var q = a::matmul(t, a::slice_rows(t, y, row, 1), p.wq);
  a::Var k = a::matmul(t, y, p.wk);
  a::Var v = a::matmul(t, y, p.wv);
  std::vector<a::Var> outs;
  for (int hi = 0; hi < p.heads; ++hi) {
    a::Var qh = a::slice_cols(t, q, hi * dh, dh);
    a::Var kh = a::slice_cols(t, k, hi * dh, dh);
    a::Var vh = a::slice_cols(t, v, hi * dh, dh);
    a::Var logits = a::scale(t, a::matmul_nt(t, qh, kh), sc);
    a::Var prob = a::softmax_rows(t, logits);
    outs.push_back(a::matmul(t, prob, vh));
  }
  return a::matmul(t, a::concat_cols(t, outs), p.wo);
}

a::Var mlp_residual(a::Tape& t, a::Var x, const LnVars& ln, const MlpVars& m) {
  a::Var y = a::layer_norm(t, x, ln.g, ln.b);
  a::Var h = a::gelu(t, a::add_rowvec(t, a::matmul(t, y, m.w1), m.b1));
  return a::add(t, x, a::add_rowvec(t, a::matmul(t, h, m.w2), m.b2));
}

Tensor normal_init(std::vector<int> dims, Rng& rng) {
  return Tensor::randn(std::move(dims), rng, Real(0.02));
}

void init_attn(ParamStore& s, const std::string& p, int dim, Rng& rng) {
  s.emplace(p + ".wq", normal_init({dim, dim}, rng));
  s.emplace(p + ".wk", normal_init({dim, dim}, rng));
  s.emplace(p + ".wv", normal_init({dim, dim}, rng));
  s.emplace(p + ".wo", normal_init({dim, dim}, rng));
}

void init_ln(ParamStore& s, const std::string& p, int dim) {
  s.emplace(p + ".g", Tensor::full({dim}, Real(1)));
  s.emplace(p + ".b", Tensor::zeros({dim}));
}

void init_mlp(ParamStore& s, const std::string& p, int dim, int ratio,
              Rng& rng) {
  s.emplace(p + ".w1", normal_init({dim, ratio * dim}, rng));
  s.emplace(p + ".b1", Tensor::zeros({ratio * dim}));
  s.emplace(p + ".w2", normal_init({ratio * dim, dim}, rng));
  s.emplace(p + ".b2", Tensor::zeros({dim}));
}

AttnVars bind_attn(Binder& bind, const std::string& p, int heads) {
  return AttnVars{bind(p + ".wq"), bind(p + ".wk"), bind(p + ".wv"),
                  bind(p + ".wo"), heads};
}
LnVars bind_ln(Binder& bind, const std::string& p) {
  return LnVars{bind(p + ".g"), bind(p + ".b")};
}
MlpVars bind_mlp(Binder& bind, const std::string& p) {
  return MlpVars{bind(p + ".w1"), bind(p + ".b1"), bind(p + ".w2"),
                 bind(p + ".b2")};
}

}  // namespace

a::Var mha(a::Tape& t, a::Var x, const AttnVars& p,
           const std::vector<uint8_t>* mask,
           const std::vector<a::Var>* head_bias) {
  const int n = t.val(x).rows();
  const int dim = t.val(x).cols();
  if (dim != t.val(p.wq).rows()) throw ShapeError("mha: projection mismatch");
  if (p.heads < 1 || dim % p.heads != 0)
    throw ShapeError("mha: heads must divide dim");
  if (head_bias != nullptr &&
      static_cast<int>(head_bias->size()) != p.heads)
    throw ShapeError("mha: one bias per head required");
  const int dh = dim / p.heads;
  const Real sc = Real(1) / std::sqrt(static_cast<Real>(dh));
  a::Var q = a::matmul(t, x, p.wq);
  a::Var k = a::matmul(t, x, p.wk);
  a::Var v = a::matmul(t, x, p.wv);
  std::vector<a::Var> outs;
  outs.reserve(static_cast<size_t>(p.heads));
  for (int hi = 0; hi < p.heads; ++hi) {
    a::Var qh = a::slice_cols(t, q, hi * dh, dh);
    a::Var kh = a::slice_cols(t, k, hi * dh, dh);
    a::Var vh = a::slice_cols(t, v, hi * dh, dh);
    a::Var logits = a::scale(t, a::matmul_nt(t, qh, kh), sc);
    if (head_bias != nullptr) {
      const Tensor& bval = t.val((*head_bias)[static_cast<size_t>(hi)]);
      if (bval.rows() != n || bval.cols() != n)
        throw ShapeError("mha: bias must be (N, N)");
      logits = a::add(t, logits, (*head_bias)[static_cast<size_t>(hi)]);
    }
    a::Var prob = a::softmax_rows(t, logits, mask);
    outs.push_back(a::matmul(t, prob, vh));
  }
  return a::matmul(t, a::concat_cols(t, outs), p.wo);
}

WindowPartition window_partition(int t, int hp, int wp,
                                 const WindowSpec& spec) {
  if (spec.wh < 1 || spec.ww < 1 || spec.wh > hp || spec.ww > wp ||
      hp % spec.wh != 0 || wp % spec.ww != 0)
    throw ShapeError("window_partition: windows must tile the grid");
  if (spec.sh < 0 || spec.sw < 0 || spec.sh >= spec.wh || spec.sw >= spec.ww)
    throw ConfigError("window_partition: shift must be below window size");
  const bool shifted = spec.sh != 0 || spec.sw != 0;
  const int nh = hp / spec.wh, nw = wp / spec.ww;
  const int win_tokens = t * spec.wh * spec.ww;

  // Region ids in rolled coordinates; tokens from different regions were not
  // adjacent before the cyclic shift and must not attend to each other.
  auto region_of = [&](int rolled, int size, int win, int shift) {
    if (rolled < size - win) return 0;
    if (rolled < size - shift) return 1;
    return 2;
  };

  WindowPartition part;
  part.windows.reserve(static_cast<size_t>(nh) * nw);
  part.back.assign(static_cast<size_t>(t) * hp * wp, -1);
  for (int wi = 0; wi < nh; ++wi) {
    for (int wj = 0; wj < nw; ++wj) {
      std::vector<int> rows;
      rows.reserve(static_cast<size_t>(win_tokens));
      std::vector<int> regions;
      regions.reserve(static_cast<size_t>(win_tokens));
      for (int f = 0; f < t; ++f) {
        for (int dh = 0; dh < spec.wh; ++dh) {
          for (int dw = 0; dw < spec.ww; ++dw) {
            const int hr = wi * spec.wh + dh;
            const int wr = wj * spec.ww + dw;
            const int h = (hr + spec.sh) % hp;
            const int w = (wr + spec.sw) % wp;
            rows.push_back(tokenizer::token_row(f, h, w, hp, wp));
            regions.push_back(region_of(hr, hp, spec.wh, spec.sh) * 3 +
                              region_of(wr, wp, spec.ww, spec.sw));
          }
        }
      }
      const int k = static_cast<int>(part.windows.size());
      for (int slot = 0; slot < win_tokens; ++slot)
        part.back[static_cast<size_t>(rows[static_cast<size_t>(slot)])] =
            k * win_tokens + slot;
      std::vector<uint8_t> mask;
      if (shifted) {
        bool uniform_region = true;
        for (int i = 1; i < win_tokens && uniform_region; ++i)
          uniform_region = regions[static_cast<size_t>(i)] == regions[0];
        if (!uniform_region) {
          mask.resize(static_cast<size_t>(win_tokens) * win_tokens);
          for (int i = 0; i < win_tokens; ++i)
            for (int j = 0; j < win_tokens; ++j)
              mask[static_cast<size_t>(i) * win_tokens + j] =
                  regions[static_cast<size_t>(i)] ==
                          regions[static_cast<size_t>(j)]
                      ? 1
                      : 0;
        }
      }
      part.masks.push_back(std::move(mask));
      part.windows.push_back(std::move(rows));
    }
  }
  return part;
}

int relbias_rows(int t, int wh, int ww) {
  return (2 * t - 1) * (2 * wh - 1) * (2 * ww - 1);
}

std::vector<int> relbias_index(int t, int wh, int ww) {
  const int n = t * wh * ww;
  std::vector<int> idx(static_cast<size_t>(n) * n);
  auto coord = [&](int slot, int& f, int& dh, int& dw) {
    dw = slot % ww;
    dh = (slot / ww) % wh;
    f = slot / (ww * wh);
  };
  for (int i = 0; i < n; ++i) {
    int fi, hi, wi;
    coord(i, fi, hi, wi);
    for (int j = 0; j < n; ++j) {
      int fj, hj, wj;
      coord(j, fj, hj, wj);
      const int dt = fi - fj + (t - 1);
      const int dh = hi - hj + (wh - 1);
      const int dw = wi - wj + (ww - 1);
      idx[static_cast<size_t>(i) * n + j] =
          (dt * (2 * wh - 1) + dh) * (2 * ww - 1) + dw;
    }
  }
  return idx;
}

TokenGridVars divided_st_block(a::Tape& t, const TokenGridVars& grid,
                               const DividedBlockVars& p) {
  if (!grid.cls)
    throw ConfigError("divided block requires a class token");
  const int frames = grid.t, s = grid.hp * grid.wp, n = frames * s;
  a::Var x = a::concat_rows(t, *grid.cls, grid.tokens);  // (1+N, D), cls row 0

  // Temporal attention: same spatial location across frames. The class token
  // has no spatial index and passes through untouched.
  a::Var y = a::layer_norm(t, x, p.ln_time.g, p.ln_time.b);
  std::vector<a::Var> groups;
  groups.reserve(static_cast<size_t>(s));
  for (int i = 0; i < s; ++i) {
    std::vector<int> idx(static_cast<size_t>(frames));
    for (int f = 0; f < frames; ++f)
      idx[static_cast<size_t>(f)] = 1 + f * s + i;
    groups.push_back(mha(t, a::gather_rows(t, y, idx), p.time));
  }
  std::vector<int> perm(static_cast<size_t>(n));
  for (int r = 0; r < n; ++r)
    perm[static_cast<size_t>(r)] = (r % s) * frames + r / s;
  a::Var attn_time = a::gather_rows(t, a::concat_rows_list(t, groups), perm);
  a::Var xt_tok = a::add(t, attn_time, a::slice_rows(t, x, 1, n));
  a::Var xt = a::concat_rows(t, a::slice_rows(t, x, 0, 1), xt_tok);

  // Spatial attention within each frame; the class token attends over all
  // tokens of all frames plus itself.
  a::Var y2 = a::layer_norm(t, xt, p.ln_space.g, p.ln_space.b);
  std::vector<a::Var> frames_out;
  frames_out.reserve(static_cast<size_t>(frames));
  for (int f = 0; f < frames; ++f) {
    std::vector<int> idx(static_cast<size_t>(s));
    for (int j = 0; j < s; ++j) idx[static_cast<size_t>(j)] = 1 + f * s + j;
    frames_out.push_back(mha(t, a::gather_rows(t, y2, idx), p.space));
  }
  a::Var attn_space = a::concat_rows_list(t, frames_out);
  a::Var cls_attn = single_query_attention(t, y2, 0, p.space);
  a::Var xs_tok = a::add(t, attn_space, a::slice_rows(t, xt, 1, n));
  a::Var xs_cls = a::add(t, cls_attn, a::slice_rows(t, xt, 0, 1));
  a::Var xs = a::concat_rows(t, xs_cls, xs_tok);

  a::Var out = mlp_residual(t, xs, p.ln_mlp, p.mlp);

  TokenGridVars res = grid;
  res.cls = a::slice_rows(t, out, 0, 1);
  res.tokens = a::slice_rows(t, out, 1, n);
  return res;
}

TokenGridVars swin_block(a::Tape& t, const TokenGridVars& grid,
                         const SwinBlockVars& p, const WindowSpec& spec) {
  if (grid.cls)
    throw ConfigError("windowed block operates on grids without class token");
  const int n = grid.t * grid.hp * grid.wp;
  WindowPartition part = window_partition(grid.t, grid.hp, grid.wp, spec);

  // Per-head (Nw, Nw) bias shared by every window of this block.
  std::vector<a::Var> bias;
  if (!grid.relbias.empty()) {
    const int win_tokens = grid.t * spec.wh * spec.ww;
    const std::vector<int> idx = relbias_index(grid.t, spec.wh, spec.ww);
    bias.reserve(grid.relbias.size());
    for (a::Var table : grid.relbias)
      bias.push_back(a::reshape(t, a::gather_rows(t, table, idx),
                                {win_tokens, win_tokens}));
  }

  a::Var y = a::layer_norm(t, grid.tokens, p.ln_attn.g, p.ln_attn.b);
  std::vector<a::Var> outs;
  outs.reserve(part.windows.size());
  for (size_t k = 0; k < part.windows.size(); ++k) {
    a::Var seq = a::gather_rows(t, y, part.windows[k]);
    const std::vector<uint8_t>* mask =
        part.masks[k].empty() ? nullptr : &part.masks[k];
    outs.push_back(
        mha(t, seq, p.attn, mask, bias.empty() ? nullptr : &bias));
  }
  a::Var attn = a::gather_rows(t, a::concat_rows_list(t, outs), part.back);
  a::Var x1 = a::add(t, grid.tokens, attn);
  (void)n;

  TokenGridVars res = grid;
  res.tokens = mlp_residual(t, x1, p.ln_mlp, p.mlp);
  return res;
}

TokenGridVars st_swin_stage(a::Tape& t, const TokenGridVars& grid,
                            const SwinBlockVars& uniform,
                            const SwinBlockVars& shifted,
                            const WindowSpec& base) {
  WindowSpec u = base;
  u.sh = 0;
  u.sw = 0;
  WindowSpec s = base;
  s.sh = base.sh != 0 ? base.sh : base.wh / 2;
  s.sw = base.sw != 0 ? base.sw : base.ww / 2;
  TokenGridVars mid = swin_block(t, grid, uniform, u);
  return swin_block(t, mid, shifted, s);
}

TokenGridVars patch_merge(a::Tape& t, const TokenGridVars& grid,
                          a::Var merge_w) {
  if (grid.cls) throw ConfigError("patch_merge: grid must not carry a class token");
  if (grid.hp % 2 != 0 || grid.wp % 2 != 0)
    throw ShapeError("patch_merge: spatial dims must be even");
  const int hp2 = grid.hp / 2, wp2 = grid.wp / 2;
  const int n_out = grid.t * hp2 * wp2;
  const Tensor& mw = t.val(merge_w);
  if (mw.cols() != 4 * grid.dim)
    throw ShapeError("patch_merge: merge matrix must be (D_out, 4D)");

  std::vector<int> perm;
  perm.reserve(static_cast<size_t>(n_out) * 4);
  for (int f = 0; f < grid.t; ++f)
    for (int h2 = 0; h2 < hp2; ++h2)
      for (int w2 = 0; w2 < wp2; ++w2)
        for (int dh = 0; dh < 2; ++dh)
          for (int dw = 0; dw < 2; ++dw)
            perm.push_back(tokenizer::token_row(f, 2 * h2 + dh, 2 * w2 + dw,
                                                grid.hp, grid.wp));
  a::Var grouped = a::gather_rows(t, grid.tokens, perm);
  a::Var quads = a::reshape(t, grouped, {n_out, 4 * grid.dim});

  TokenGridVars res;
  res.t = grid.t;
  res.hp = hp2;
  res.wp = wp2;
  res.dim = mw.rows();
  res.relbias = grid.relbias;
  res.tokens = a::matmul_nt(t, quads, merge_w);
  return res;
}

void init_backbone_params(ParamStore& store, const ModelConfig& cfg, Rng& rng,
                          const std::string& prefix) {
  cfg.validate();
  const int n = cfg.t * cfg.hp() * cfg.wp();
  store.emplace(prefix + "embed.w",
                normal_init({cfg.dim, cfg.patch * cfg.patch * cfg.c}, rng));
  if (cfg.variant == Variant::DividedST) {
    store.emplace(prefix + "embed.pos", normal_init({n + 1, cfg.dim}, rng));
    store.emplace(prefix + "embed.cls", normal_init({1, cfg.dim}, rng));
    for (int i = 0; i < cfg.depth; ++i) {
      const std::string b = prefix + "block" + std::to_string(i);
      init_ln(store, b + ".ln_time", cfg.dim);
      init_attn(store, b + ".time", cfg.dim, rng);
      init_ln(store, b + ".ln_space", cfg.dim);
      init_attn(store, b + ".space", cfg.dim, rng);
      init_ln(store, b + ".ln_mlp", cfg.dim);
      init_mlp(store, b + ".mlp", cfg.dim, cfg.mlp_ratio, rng);
    }
  } else {
    const int rows = relbias_rows(cfg.t, cfg.window, cfg.window);
    for (int hd = 0; hd < cfg.heads; ++hd)
      store.emplace(prefix + "embed.relbias.h" + std::to_string(hd),
                    normal_init({rows, 1}, rng));
    for (int si = 0; si < cfg.swin_stages; ++si) {
      const int sdim = cfg.dim << si;
      const std::string base = prefix + "stage" + std::to_string(si);
      for (const char* half : {".uniform", ".shifted"}) {
        const std::string b = base + half;
        init_ln(store, b + ".ln_attn", sdim);
        init_attn(store, b + ".attn", sdim, rng);
        init_ln(store, b + ".ln_mlp", sdim);
        init_mlp(store, b + ".mlp", sdim, cfg.mlp_ratio, rng);
      }
      if (si + 1 < cfg.swin_stages)
        store.emplace(prefix + "merge" + std::to_string(si) + ".w",
                      normal_init({2 * sdim, 4 * sdim}, rng));
    }
  }
}

BackboneVars bind_backbone(a::Tape& tape, Binder& bind, const ModelConfig& cfg,
                           const std::string& prefix) {
  (void)tape;
  cfg.validate();
  BackboneVars v;
  v.cfg = cfg;
  v.embed.w = bind(prefix + "embed.w");
  if (cfg.variant == Variant::DividedST) {
    v.embed.pos = bind(prefix + "embed.pos");
    v.embed.cls = bind(prefix + "embed.cls");
    for (int i = 0; i < cfg.depth; ++i) {
      const std::string b = prefix + "block" + std::to_string(i);
      DividedBlockVars blk;
      blk.ln_time = bind_ln(bind, b + ".ln_time");
      blk.time = bind_attn(bind, b + ".time", cfg.heads);
      blk.ln_space = bind_ln(bind, b + ".ln_space");
      blk.space = bind_attn(bind, b + ".space", cfg.heads);
      blk.ln_mlp = bind_ln(bind, b + ".ln_mlp");
      blk.mlp = bind_mlp(bind, b + ".mlp");
      v.divided.push_back(blk);
    }
  } else {
    for (int hd = 0; hd < cfg.heads; ++hd)
      v.embed.relbias.push_back(
          bind(prefix + "embed.relbias.h" + std::to_string(hd)));
    for (int si = 0; si < cfg.swin_stages; ++si) {
      const std::string base = prefix + "stage" + std::to_string(si);
      SwinBlockVars ub, sb;
      ub.ln_attn = bind_ln(bind, base + ".uniform.ln_attn");
      ub.attn = bind_attn(bind, base + ".uniform.attn", cfg.heads);
      ub.ln_mlp = bind_ln(bind, base + ".uniform.ln_mlp");
      ub.mlp = bind_mlp(bind, base + ".uniform.mlp");
      sb.ln_attn = bind_ln(bind, base + ".shifted.ln_attn");
      sb.attn = bind_attn(bind, base + ".shifted.attn", cfg.heads);
      sb.ln_mlp = bind_ln(bind, base + ".shifted.ln_mlp");
      sb.mlp = bind_mlp(bind, base + ".shifted.mlp");
      v.swin_uniform.push_back(ub);
      v.swin_shifted.push_back(sb);
      if (si + 1 < cfg.swin_stages)
        v.merges.push_back(bind(prefix + "merge" + std::to_string(si) + ".w"));
    }
  }
  return v;
}

TokenGridVars tokenize_clip(a::Tape& tape, const Tensor& clip,
                            const BackboneVars& vars) {
  const ModelConfig& cfg = vars.cfg;
  if (clip.ndim() != 4 || clip.dim(0) != cfg.t || clip.dim(1) != cfg.h ||
      clip.dim(2) != cfg.w || clip.dim(3) != cfg.c)
    throw ConfigError("tokenize_clip: clip shape does not match model config");
  Tensor patches = tokenizer::patchify(clip, cfg.patch);
  const int n = cfg.t * cfg.hp() * cfg.wp();
  a::Var flat = tape.constant(
      patches.reshaped({n, cfg.patch * cfg.patch * cfg.c}));
  return tokenizer::embed(tape, flat, vars.embed, cfg.t, cfg.hp(), cfg.wp(),
                          cfg.dim);
}

a::Var forward_grid(a::Tape& tape, const BackboneVars& vars,
                    TokenGridVars grid) {
  const ModelConfig& cfg = vars.cfg;
  if (cfg.variant == Variant::DividedST) {
    if (!grid.cls)
      throw ConfigError("forward: divided backbone needs a class token");
    for (const auto& blk : vars.divided)
      grid = divided_st_block(tape, grid, blk);
    return *grid.cls;
  }
  if (grid.cls)
    throw ConfigError("forward: windowed backbone takes no class token");
  for (int si = 0; si < cfg.swin_stages; ++si) {
    WindowSpec spec;
    spec.wh = cfg.window;
    spec.ww = cfg.window;
    grid = st_swin_stage(tape, grid, vars.swin_uniform[static_cast<size_t>(si)],
                         vars.swin_shifted[static_cast<size_t>(si)], spec);
    if (si + 1 < cfg.swin_stages)
      grid = patch_merge(tape, grid, vars.merges[static_cast<size_t>(si)]);
  }
  return a::mean_rows(tape, grid.tokens);
}

a::Var forward_clip(a::Tape& tape, const BackboneVars& vars,
                    const Tensor& clip) {
  return forward_grid(tape, vars, tokenize_clip(tape, clip, vars));
}

}  // namespace lstcl::backbone
