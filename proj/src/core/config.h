#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pagetext {

struct ModelConfig {
  int decoder_layers = 6;
  int d_model = 260;
  int heads = 4;
  int d_ff = 1024;
  double dropout = 0.5;
  int attention_window = 50;  // past positions visible to self-attention
  bool line_number_encoding = false;
  int max_lines = 100;
  int max_decode_len = 1200;
  std::vector<int> encoder_widths = {16, 32, 64, 128};
  std::vector<int> encoder_blocks = {2, 2, 2, 2};
  std::string encoder_norm = "group";  // group | none
  std::vector<std::string> tags;       // defaults to the standard markup tags

  // stem stride 2, then stride 2 at every stage transition
  int encoder_stride() const { return 1 << encoder_widths.size(); }
};

struct TrainConfig {
  double learning_rate = 0.0002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 8;
  int grad_accumulation = 2;
  int64_t updates = 10000;
  int64_t eval_interval = 500;
  int64_t log_interval = 50;
  int keep_last = 3;
  int64_t warmup_steps = 0;
  int canvas_height = 256;
  int canvas_width = 512;
  std::string padding = "corner_max";  // corner_max | zero
  int val_pages = 200;
  double early_stop_cer = 0.0;  // stop when validation CER falls below; 0 = off
};

struct AugmentConfig {
  bool enabled = true;
  double scale_min = 0.8;
  double scale_max = 1.2;
  double rotation_max_deg = 5.0;
  double brightness_delta = 0.2;
  double background_delta = 0.1;
  double contrast_min = 0.8;
  double contrast_max = 1.2;
  double perspective_jitter = 0.02;  // fraction of the shorter side
  double noise_sigma_max = 0.05;
};

struct GenConfig {
  std::string corpus;
  int span_min = 1;
  int span_max = 200;
  int wrap_min = 16;  // wrap width range, characters per line
  int wrap_max = 28;
  double weight_one_column = 1.0;
  double weight_two_column = 0.0;
  double weight_empty = 0.0;
  double weight_stitched = 0.0;
  std::vector<std::string> faces = {"regular", "bold", "slant"};
  std::vector<int> font_scales = {1, 2};
  int margin = 8;         // page margin, pixels (scaled by font scale)
  int gutter_cells = 2;   // two-column gutter, character cells
  int page_max_height = 256;
  int page_max_width = 512;
  int empty_min_size = 32;
  double background_min = 0.75;
  double background_max = 1.0;
  double ink_min = 0.0;
  double ink_max = 0.25;
  int stitch_min_words = 2;
  int stitch_max_words = 4;
  std::string unknown_chars = "map";  // map | drop
  std::string image_format = "png";   // png | pgm
};

struct RunConfig {
  uint64_t seed = 0;
  int threads = 0;  // 0 = hardware default
  ModelConfig model;
  TrainConfig train;
  GenConfig data;
  AugmentConfig augment;

  // Full range/consistency check; throws format_error with the offending key.
  void validate() const;

  // Canonical key=value serialization; parse(to_ini()) round-trips.
  std::string to_ini() const;

  static RunConfig parse_ini(const std::string& text);
  static RunConfig load(const std::string& path);  // parse + validate
};

}  // namespace pagetext
