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

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "lstcl/rng.hpp"
#include "lstcl/tensor.hpp"

// Synthetic labeled video corpora with long-range temporal structure, plus
// the long/short clip pair samplers.
//
// Each video shows one bright rectangle moving over a dark background. Its
// (direction, speed) switches at segment boundaries; the class is the
// identity of the ordered segment pattern. Patterns are built in rotation
// groups, so every single-segment window of motion occurs in at least two
// classes: no short window identifies the class, only the long-range order
// does.

namespace lstcl::videogen {

struct GeneratorConfig {
  int k_classes = 4;
  int t_total = 64;
  int h = 16;
  int w = 16;
  int c = 1;
  int segment_count = 4;
  Real noise_std = Real(0.03);

  void validate() const;  // throws ConfigError
};

struct Video {
  Tensor frames;  // (T,H,W,C), intensities in [0,1]
  int label = 0;
  uint64_t seed = 0;
};

struct ClipSpec {
  int start = 0;
  int stride = 1;
  int length = 1;

  int span() const { return (length - 1) * stride + 1; }
  void validate_for(int t_total) const;  // throws IndexError
};

enum class Strategy { Independent, Included, Disjoint };

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);  // throws ConfigError

// Ordered motion-id pattern per class; deterministic in the config alone.
std::vector<std::vector<int>> class_patterns(const GeneratorConfig& cfg);

// Velocity (dy, dx) in pixels/frame for a motion id.
std::array<Real, 2> motion_velocity(int motion_id);
int motion_count();

// Motion id driving the step out of frame `t`.
int segment_of_frame(const GeneratorConfig& cfg, int t);

Video generate_video(const GeneratorConfig& cfg, int label,
                     uint64_t video_seed);
std::vector<Video> generate_corpus(const GeneratorConfig& cfg, int n_videos,
                                   uint64_t seed);

// Samples (short, long) clip addresses under the given strategy.
std::pair<ClipSpec, ClipSpec> sample_pair(const Video& video, int t_frames,
                                          int tau_short, int tau_long,
                                          Strategy strategy, Rng& rng);
std::pair<ClipSpec, ClipSpec> sample_pair_len(int t_total, int t_frames,
                                              int tau_short, int tau_long,
                                              Strategy strategy, Rng& rng);

Tensor extract_clip(const Video& video, const ClipSpec& spec);

struct AugmentConfig {
  bool crop = true;
  Real crop_min_scale = Real(0.6);
  Real crop_max_scale = Real(1.0);
  Real flip_prob = Real(0.5);
  Real brightness = Real(0.2);

  static AugmentConfig disabled() {
    return AugmentConfig{false, Real(1), Real(1), Real(0), Real(0)};
  }
};

// Temporally coherent: one set of draws applies to every frame of the clip.
// Draw order: crop scale, crop top, crop left, flip, brightness. Disabled
// components draw nothing and leave the data bit-identical.
Tensor augment(const Tensor& clip, Rng& rng, const AugmentConfig& cfg);

// Corpus container + binary file format (magic "LSTCLVID", little-endian,
// float32 frames in (T,H,W,C) C-order).
struct Corpus {
  GeneratorConfig cfg;
  std::vector<Video> videos;
};

void write_corpus(const std::string& path, const Corpus& corpus);
Corpus read_corpus(const std::string& path);

}  // namespace lstcl::videogen
