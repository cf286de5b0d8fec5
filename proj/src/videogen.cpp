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

#include "lstcl/videogen.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

namespace lstcl::videogen {

namespace {

constexpr Real kBackground = Real(0.1);
constexpr Real kForeground = Real(0.9);
constexpr int kDirections = 8;
constexpr int kSpeeds = 2;
constexpr double kSpeedTable[kSpeeds] = {0.55, 1.35};

// Pattern construction is keyed to the config alone so labels mean the same
// thing for every corpus seed.
uint64_t pattern_seed(const GeneratorConfig& cfg) {
  return derive_seed(0x4c53544c43564944ULL, static_cast<uint64_t>(cfg.k_classes),
                     static_cast<uint64_t>(cfg.segment_count));
}

std::vector<int> rotate(const std::vector<int>& v, int r) {
  std::vector<int> out(v.size());
  for (size_t i = 0; i < v.size(); ++i) out[i] = v[(i + r) % v.size()];
  return out;
}

// Base sequence with distinct adjacent motions (wrap included), so every
// rotation is a valid pattern and rotations are pairwise distinct.
std::vector<int> draw_base(int seg, Rng& rng) {
  std::vector<int> base(static_cast<size_t>(seg));
  const int pool = motion_count();
  for (int i = 0; i < seg; ++i) {
    int m;
    do {
      m = static_cast<int>(rng.uniform_int(0, pool - 1));
    } while ((i > 0 && m == base[static_cast<size_t>(i - 1)]) ||
             (i == seg - 1 && m == base[0]));
    base[static_cast<size_t>(i)] = m;
  }
  return base;
}

struct RectState {
  double y, x;    // top-left, continuous
  double rh, rw;  // extent
};

// Interval overlap on a circle of circumference `len`.
double wrapped_overlap(double lo, double extent, double cell_lo, double len) {
  double total = 0;
  for (double shift : {-len, 0.0, len}) {
    const double a = lo + shift;
    total += std::max(0.0, std::min(a + extent, cell_lo + 1.0) -
                               std::max(a, cell_lo));
  }
  return total;
}

void render_frame(const GeneratorConfig& cfg, const RectState& rect, Rng& rng,
                  Real* frame) {
  const int h = cfg.h, w = cfg.w, c = cfg.c;
  for (int r = 0; r < h; ++r) {
    const double oy =
        wrapped_overlap(rect.y, rect.rh, static_cast<double>(r), h);
    for (int col = 0; col < w; ++col) {
      const double ox =
          wrapped_overlap(rect.x, rect.rw, static_cast<double>(col), w);
      const double cov = oy * ox;
      double v = kBackground + (kForeground - kBackground) * cov;
      for (int ch = 0; ch < c; ++ch) {
        double noisy = v;
        if (cfg.noise_std > Real(0))
          noisy += static_cast<double>(cfg.noise_std) * rng.normal();
        noisy = std::clamp(noisy, 0.0, 1.0);
        frame[(static_cast<size_t>(r) * w + col) * c + ch] =
            static_cast<Real>(noisy);
      }
    }
  }
}

// Toroidal frame: positions wrap, so within-segment motion is exactly
// constant.
double wrap_position(double p, double len) {
  p = std::fmod(p, len);
  return p < 0.0 ? p + len : p;
}

void write_u32(std::ofstream& f, uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ofstream& f, uint64_t v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
uint32_t read_u32(std::ifstream& f) {
  uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
uint64_t read_u64(std::ifstream& f) {
  uint64_t v = 0;
  f.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

static_assert(__BYTE_ORDER__ == __ORDER_LITTLE_ENDIAN__,
              "corpus format is little-endian");

}  // namespace

void GeneratorConfig::validate() const {
  if (k_classes < 2) throw ConfigError("generator: k_classes must be >= 2");
  if (segment_count < 2)
    throw ConfigError("generator: segment_count must be >= 2");
  if (t_total < segment_count)
    throw ConfigError("generator: t_total must cover every segment");
  if (h < 4 || w < 4) throw ConfigError("generator: frame size below 4x4");
  if (c < 1) throw ConfigError("generator: channel count must be >= 1");
  if (noise_std < Real(0)) throw ConfigError("generator: negative noise_std");
}

void ClipSpec::validate_for(int t_total) const {
  if (start < 0 || stride < 1 || length < 1)
    throw IndexError("clip spec: start/stride/length out of range");
  if (start + (length - 1) * stride >= t_total)
    throw IndexError("clip spec exceeds video length");
}

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Independent:
      return "Independent";
    case Strategy::Included:
      return "Included";
    case Strategy::Disjoint:
      return "Disjoint";
  }
  return "?";
}

Strategy strategy_from_name(const std::string& name) {
  if (name == "Independent") return Strategy::Independent;
  if (name == "Included") return Strategy::Included;
  if (name == "Disjoint") return Strategy::Disjoint;
  throw ConfigError("unknown sampling strategy: " + name);
}

int motion_count() { return kDirections * kSpeeds; }

std::array<Real, 2> motion_velocity(int motion_id) {
  const int dir = motion_id % kDirections;
  const int sp = motion_id / kDirections;
  const double angle = 2.0 * 3.14159265358979323846 * dir / kDirections;
  const double speed = kSpeedTable[sp];
  return {static_cast<Real>(speed * std::sin(angle)),
          static_cast<Real>(speed * std::cos(angle))};
}

std::vector<std::vector<int>> class_patterns(const GeneratorConfig& cfg) {
  cfg.validate();
  const int k = cfg.k_classes;
  const int seg = cfg.segment_count;
  Rng rng(pattern_seed(cfg));
  std::vector<std::vector<int>> patterns;
  std::set<std::vector<int>> used;
  while (static_cast<int>(patterns.size()) < k) {
    int remaining = k - static_cast<int>(patterns.size());
    int group = std::min(seg, remaining);
    if (remaining - group == 1) group -= 1;  // avoid stranding one class
    if (group >= 2) {
      // Draw a base whose rotations are all fresh patterns.
      std::vector<std::vector<int>> rots;
      for (int attempt = 0; attempt < 1000; ++attempt) {
        std::vector<int> base = draw_base(seg, rng);
        rots.clear();
        bool fresh = true;
        for (int r = 0; r < group && fresh; ++r) {
          auto rot = rotate(base, r);
          if (used.count(rot)) fresh = false;
          for (const auto& prev : rots)
            if (prev == rot) fresh = false;
          rots.push_back(std::move(rot));
        }
        if (fresh) break;
        rots.clear();
      }
      if (rots.empty())
        throw ConfigError("generator: could not build distinct class patterns");
      for (auto& r : rots) {
        used.insert(r);
        patterns.push_back(std::move(r));
      }
    } else {
      // Single class left: constant-motion pattern reusing a motion that
      // already occurs in earlier classes, so its windows stay ambiguous.
      const int reuse = patterns.front().front();
      std::vector<int> pat(static_cast<size_t>(seg), reuse);
      if (used.count(pat))
        throw ConfigError("generator: constant pattern collision");
      used.insert(pat);
      patterns.push_back(std::move(pat));
    }
  }
  return patterns;
}

int segment_of_frame(const GeneratorConfig& cfg, int t) {
  const int seg_len = cfg.t_total / cfg.segment_count;
  return std::min(t / seg_len, cfg.segment_count - 1);
}

Video generate_video(const GeneratorConfig& cfg, int label,
                     uint64_t video_seed) {
  cfg.validate();
  if (label < 0 || label >= cfg.k_classes)
    throw ConfigError("generator: label out of range");
  const auto patterns = class_patterns(cfg);
  const auto& pattern = patterns[static_cast<size_t>(label)];

  Rng rng(video_seed);
  RectState rect;
  rect.rh = std::max(2, cfg.h / 4);
  rect.rw = std::max(2, cfg.w / 4);
  rect.y = rng.uniform(0.0, cfg.h);
  rect.x = rng.uniform(0.0, cfg.w);

  Video video;
  video.label = label;
  video.seed = video_seed;
  video.frames = Tensor({cfg.t_total, cfg.h, cfg.w, cfg.c});
  const size_t frame_elems =
      static_cast<size_t>(cfg.h) * cfg.w * cfg.c;

  for (int t = 0; t < cfg.t_total; ++t) {
    render_frame(cfg, rect, rng, video.frames.data() + t * frame_elems);
    const int motion = pattern[static_cast<size_t>(segment_of_frame(cfg, t))];
    const auto vel = motion_velocity(motion);
    rect.y = wrap_position(rect.y + vel[0], cfg.h);
    rect.x = wrap_position(rect.x + vel[1], cfg.w);
  }
  return video;
}

std::vector<Video> generate_corpus(const GeneratorConfig& cfg, int n_videos,
                                   uint64_t seed) {
  cfg.validate();
  if (n_videos < 1) throw ConfigError("generator: n_videos must be >= 1");
  std::vector<Video> videos;
  videos.reserve(static_cast<size_t>(n_videos));
  for (int i = 0; i < n_videos; ++i) {
    const int label = i % cfg.k_classes;
    videos.push_back(
        generate_video(cfg, label, derive_seed(seed, static_cast<uint64_t>(i))));
  }
  return videos;
}

std::pair<ClipSpec, ClipSpec> sample_pair_len(int t_total, int t_frames,
                                              int tau_short, int tau_long,
                                              Strategy strategy, Rng& rng) {
  if (t_frames < 1 || tau_short < 1 || tau_long < 1)
    throw ConfigError("sample_pair: frames and strides must be positive");
  if (tau_short > tau_long)
    throw ConfigError("sample_pair: short stride exceeds long stride");
  ClipSpec s{0, tau_short, t_frames};
  ClipSpec l{0, tau_long, t_frames};
  const int span_s = s.span();
  const int span_l = l.span();
  if (span_l > t_total || span_s > t_total)
    throw SamplingError(std::string("sample_pair(") + strategy_name(strategy) +
                        "): video shorter than clip span");

  switch (strategy) {
    case Strategy::Independent: {
      s.start = static_cast<int>(rng.uniform_int(0, t_total - span_s));
      l.start = static_cast<int>(rng.uniform_int(0, t_total - span_l));
      break;
    }
    case Strategy::Included: {
      l.start = static_cast<int>(rng.uniform_int(0, t_total - span_l));
      s.start =
          static_cast<int>(rng.uniform_int(l.start, l.start + span_l - span_s));
      break;
    }
    case Strategy::Disjoint: {
      if (span_s + span_l > t_total)
        throw SamplingError(
            "sample_pair(Disjoint): spans cannot both fit without overlap");
      bool found = false;
      for (int attempt = 0; attempt < 1000 && !found; ++attempt) {
        const int cs = static_cast<int>(rng.uniform_int(0, t_total - span_s));
        const int cl = static_cast<int>(rng.uniform_int(0, t_total - span_l));
        if (cs + span_s <= cl || cl + span_l <= cs) {
          s.start = cs;
          l.start = cl;
          found = true;
        }
      }
      if (!found)
        throw SamplingError(
            "sample_pair(Disjoint): rejection sampling exhausted 1000 tries");
      break;
    }
  }
  s.validate_for(t_total);
  l.validate_for(t_total);
  return {s, l};
}

std::pair<ClipSpec, ClipSpec> sample_pair(const Video& video, int t_frames,
                                          int tau_short, int tau_long,
                                          Strategy strategy, Rng& rng) {
  return sample_pair_len(video.frames.dim(0), t_frames, tau_short, tau_long,
                         strategy, rng);
}

Tensor extract_clip(const Video& video, const ClipSpec& spec) {
  const int t_total = video.frames.dim(0);
  spec.validate_for(t_total);
  const int h = video.frames.dim(1), w = video.frames.dim(2),
            c = video.frames.dim(3);
  const size_t frame_elems = static_cast<size_t>(h) * w * c;
  Tensor clip({spec.length, h, w, c});
  for (int i = 0; i < spec.length; ++i) {
    const size_t src =
        static_cast<size_t>(spec.start + i * spec.stride) * frame_elems;
    std::copy(video.frames.data() + src, video.frames.data() + src + frame_elems,
              clip.data() + static_cast<size_t>(i) * frame_elems);
  }
  return clip;
}

Tensor augment(const Tensor& clip, Rng& rng, const AugmentConfig& cfg) {
  if (clip.ndim() != 4) throw ShapeError("augment: clip must be (T,H,W,C)");
  const int t = clip.dim(0), h = clip.dim(1), w = clip.dim(2), c = clip.dim(3);
  Tensor out = clip;

  if (cfg.crop) {
    const double s = rng.uniform(static_cast<double>(cfg.crop_min_scale),
                                 static_cast<double>(cfg.crop_max_scale));
    const int ch = std::max(1, static_cast<int>(std::lround(s * h)));
    const int cw = std::max(1, static_cast<int>(std::lround(s * w)));
    const int top = static_cast<int>(rng.uniform_int(0, h - ch));
    const int left = static_cast<int>(rng.uniform_int(0, w - cw));
    if (ch != h || cw != w || top != 0 || left != 0) {
      Tensor resized({t, h, w, c});
      const double sy = static_cast<double>(ch) / h;
      const double sx = static_cast<double>(cw) / w;
      for (int f = 0; f < t; ++f) {
        for (int r = 0; r < h; ++r) {
          double src_y = (r + 0.5) * sy - 0.5 + top;
          src_y = std::clamp(src_y, static_cast<double>(top),
                             static_cast<double>(top + ch - 1));
          const int y0 = static_cast<int>(std::floor(src_y));
          const int y1 = std::min(y0 + 1, top + ch - 1);
          const double fy = src_y - y0;
          for (int col = 0; col < w; ++col) {
            double src_x = (col + 0.5) * sx - 0.5 + left;
            src_x = std::clamp(src_x, static_cast<double>(left),
                               static_cast<double>(left + cw - 1));
            const int x0 = static_cast<int>(std::floor(src_x));
            const int x1 = std::min(x0 + 1, left + cw - 1);
            const double fx = src_x - x0;
            for (int ch_i = 0; ch_i < c; ++ch_i) {
              auto px = [&](int rr, int cc) {
                return static_cast<double>(
                    out[((static_cast<int64_t>(f) * h + rr) * w + cc) * c +
                        ch_i]);
              };
              const double v = (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x1)) +
                               fy * ((1 - fx) * px(y1, x0) + fx * px(y1, x1));
              resized[((static_cast<int64_t>(f) * h + r) * w + col) * c + ch_i] =
                  static_cast<Real>(std::clamp(v, 0.0, 1.0));
            }
          }
        }
      }
      out = std::move(resized);
    }
  }

  if (cfg.flip_prob > Real(0) && rng.bernoulli(static_cast<double>(cfg.flip_prob))) {
    for (int f = 0; f < t; ++f)
      for (int r = 0; r < h; ++r)
        for (int col = 0; col < w / 2; ++col)
          for (int ch_i = 0; ch_i < c; ++ch_i)
            std::swap(out[((static_cast<int64_t>(f) * h + r) * w + col) * c + ch_i],
                      out[((static_cast<int64_t>(f) * h + r) * w + (w - 1 - col)) *
                              c + ch_i]);
  }

  if (cfg.brightness > Real(0)) {
    const double delta = rng.uniform(-static_cast<double>(cfg.brightness),
                                     static_cast<double>(cfg.brightness));
    for (int64_t i = 0; i < out.numel(); ++i)
      out[i] = static_cast<Real>(
          std::clamp(static_cast<double>(out[i]) + delta, 0.0, 1.0));
  }
  return out;
}

void write_corpus(const std::string& path, const Corpus& corpus) {
  corpus.cfg.validate();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open corpus file for writing: " + path);
  f.write("LSTCLVID", 8);
  write_u32(f, 1);  // version
  write_u32(f, static_cast<uint32_t>(corpus.videos.size()));
  write_u32(f, static_cast<uint32_t>(corpus.cfg.t_total));
  write_u32(f, static_cast<uint32_t>(corpus.cfg.h));
  write_u32(f, static_cast<uint32_t>(corpus.cfg.w));
  write_u32(f, static_cast<uint32_t>(corpus.cfg.c));
  write_u32(f, static_cast<uint32_t>(corpus.cfg.k_classes));
  std::vector<float> buf;
  for (const auto& v : corpus.videos) {
    write_u64(f, v.seed);
    write_u32(f, static_cast<uint32_t>(v.label));
    buf.resize(static_cast<size_t>(v.frames.numel()));
    for (int64_t i = 0; i < v.frames.numel(); ++i)
      buf[static_cast<size_t>(i)] = static_cast<float>(v.frames[i]);
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!f) throw IoError("short write to corpus file: " + path);
}

Corpus read_corpus(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open corpus file: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, "LSTCLVID", 8) != 0)
    throw IoError("bad corpus magic in " + path);
  const uint32_t version = read_u32(f);
  if (version != 1) throw IoError("unsupported corpus version");
  Corpus corpus;
  const uint32_t n = read_u32(f);
  corpus.cfg.t_total = static_cast<int>(read_u32(f));
  corpus.cfg.h = static_cast<int>(read_u32(f));
  corpus.cfg.w = static_cast<int>(read_u32(f));
  corpus.cfg.c = static_cast<int>(read_u32(f));
  corpus.cfg.k_classes = static_cast<int>(read_u32(f));
  const size_t frame_elems = static_cast<size_t>(corpus.cfg.t_total) *
                             corpus.cfg.h * corpus.cfg.w * corpus.cfg.c;
  std::vector<float> buf(frame_elems);
  for (uint32_t i = 0; i < n; ++i) {
    Video v;
    v.seed = read_u64(f);
    v.label = static_cast<int>(read_u32(f));
    f.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!f) throw IoError("truncated corpus file: " + path);
    v.frames = Tensor(
        {corpus.cfg.t_total, corpus.cfg.h, corpus.cfg.w, corpus.cfg.c});
    for (size_t j = 0; j < frame_elems; ++j)
      v.frames[static_cast<int64_t>(j)] = static_cast<Real>(buf[j]);
    corpus.videos.push_back(std::move(v));
  }
  return corpus;
}

}  // namespace lstcl::videogen
