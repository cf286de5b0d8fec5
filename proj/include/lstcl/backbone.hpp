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
#include <string>
#include <vector>

#include "lstcl/params.hpp"
#include "lstcl/rng.hpp"
#include "lstcl/tokenizer.hpp"

// Transformer backbones over embedded token grids.
//
// divided space-time: temporal attention over same-spatial-location tokens
// across frames, then spatial attention within each frame; the class token
// joins only the spatial stage, attending over every token plus itself.
//
// windowed space-time: uniform + shifted window attention pairs over
// space-time tubes (windows are spatial, full temporal extent), with a 3D
// relative positional bias and spatial-only patch merging between stages.

namespace lstcl::backbone {

enum class Variant { DividedST, STSwin };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct ModelConfig {
  Variant variant = Variant::DividedST;
  int t = 4;  // clip frames
  int h = 16, w = 16, c = 1;
  int patch = 4;
  int dim = 64;
  int heads = 4;
  int depth = 4;        // divided-attention blocks
  int swin_stages = 2;  // uniform+shifted pairs, patch merge between
  int window = 2;       // spatial window side
  int mlp_ratio = 4;
  int proj_dim = 32;    // projection/prediction head output

  int hp() const { return h / patch; }
  int wp() const { return w / patch; }
  int feature_dim() const;
  void validate() const;
};

struct AttnVars {
  ag::Var wq, wk, wv, wo;  // each (D, D), applied as x * W
  int heads = 1;
};
struct LnVars {
  ag::Var g, b;
};
struct MlpVars {
  ag::Var w1, b1, w2, b2;
};

// softmax(Q K^T / sqrt(D/heads) + bias) V per head, heads concatenated and
// output-projected. mask: rows*rows bytes, nonzero = attend; head_bias: one
// (N, N) var per head added to the logits.
ag::Var mha(ag::Tape& tape, ag::Var x, const AttnVars& p,
            const std::vector<uint8_t>* mask = nullptr,
            const std::vector<ag::Var>* head_bias = nullptr);

struct WindowSpec {
  int wh = 2, ww = 2;  // spatial window; temporal extent is always full T
  int sh = 0, sw = 0;  // cyclic shift applied before partition
};

struct WindowPartition {
  std::vector<std::vector<int>> windows;  // grid row indices per window
  std::vector<int> back;  // grid row -> position in window-major concat
  std::vector<std::vector<uint8_t>> masks;  // per window; empty = dense
};

// Tiles the (T, Hp, Wp) grid into windows of T*wh*ww tokens. Shifted specs
// cyclically shift the grid first and attach masks that keep tokens from
// attending across what used to be non-adjacent regions.
WindowPartition window_partition(int t, int hp, int wp, const WindowSpec& spec);

// Relative-position table row for every in-window slot pair, slots ordered
// (t, dh, dw) lexicographic. Table rows follow offset order
// ((dt+T-1)*(2*wh-1) + (dh+wh-1))*(2*ww-1) + (dw+ww-1).
std::vector<int> relbias_index(int t, int wh, int ww);
int relbias_rows(int t, int wh, int ww);

struct DividedBlockVars {
  LnVars ln_time;
  AttnVars time;
  LnVars ln_space;
  AttnVars space;
  LnVars ln_mlp;
  MlpVars mlp;
};

struct SwinBlockVars {
  LnVars ln_attn;
  AttnVars attn;
  LnVars ln_mlp;
  MlpVars mlp;
};

tokenizer::TokenGridVars divided_st_block(ag::Tape& tape,
                                          const tokenizer::TokenGridVars& grid,
                                          const DividedBlockVars& p);

tokenizer::TokenGridVars swin_block(ag::Tape& tape,
                                    const tokenizer::TokenGridVars& grid,
                                    const SwinBlockVars& p,
                                    const WindowSpec& spec);

// Uniform-partition block then shifted-partition block.
tokenizer::TokenGridVars st_swin_stage(ag::Tape& tape,
                                       const tokenizer::TokenGridVars& grid,
                                       const SwinBlockVars& uniform,
                                       const SwinBlockVars& shifted,
                                       const WindowSpec& base);

// Concatenates each spatial 2x2 token group (same t) and projects with the
// (D_out, 4D) merge matrix; temporal resolution is preserved.
tokenizer::TokenGridVars patch_merge(ag::Tape& tape,
                                     const tokenizer::TokenGridVars& grid,
                                     ag::Var merge_w);

struct BackboneVars {
  ModelConfig cfg;
  tokenizer::EmbedVars embed;
  std::vector<DividedBlockVars> divided;
  std::vector<SwinBlockVars> swin_uniform;
  std::vector<SwinBlockVars> swin_shifted;
  std::vector<ag::Var> merges;
};

// Parameter naming: embed.w / embed.pos / embed.cls / embed.relbias.h{k},
// block{i}.{time,space,mlp,...}, stage{s}.{uniform,shifted}...,
// merge{s}.w. All under the given prefix.
void init_backbone_params(ParamStore& store, const ModelConfig& cfg, Rng& rng,
                          const std::string& prefix = "backbone.");
BackboneVars bind_backbone(ag::Tape& tape, Binder& bind,
                           const ModelConfig& cfg,
                           const std::string& prefix = "backbone.");

tokenizer::TokenGridVars tokenize_clip(ag::Tape& tape, const Tensor& clip,
                                       const BackboneVars& vars);
// Grid -> clip-level feature (1, feature_dim). DividedST reads the class
// token; STSwin mean-pools the final tokens.
ag::Var forward_grid(ag::Tape& tape, const BackboneVars& vars,
                     tokenizer::TokenGridVars grid);
ag::Var forward_clip(ag::Tape& tape, const BackboneVars& vars,
                     const Tensor& clip);

}  // namespace lstcl::backbone
