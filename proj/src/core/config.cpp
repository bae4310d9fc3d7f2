#include "core/config.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "core/errors.h"
#include "core/vocab.h"

namespace pagetext {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cur = trim(cur);
  if (!cur.empty() || !out.empty()) out.push_back(cur);
  return out;
}

struct KvStore {
  // section.key -> value
  std::map<std::string, std::string> kv;
  mutable std::map<std::string, bool> used;

  void set(const std::string& sec, const std::string& key, const std::string& val) {
    kv[sec + "." + key] = val;
  }
  const std::string* get(const std::string& full) const {
    auto it = kv.find(full);
    if (it == kv.end()) return nullptr;
    used[full] = true;
    return &it->second;
  }
  void check_all_used() const {
    for (const auto& [k, v] : kv) {
      if (!used.count(k)) throw format_error("config: unknown key \"" + k + "\"");
    }
  }
};

void read_str(const KvStore& kv, const std::string& key, std::string& out) {
  if (const std::string* v = kv.get(key)) out = *v;
}

void read_bool(const KvStore& kv, const std::string& key, bool& out) {
  if (const std::string* v = kv.get(key)) {
    if (*v == "true" || *v == "1" || *v == "yes") {
      out = true;
    } else if (*v == "false" || *v == "0" || *v == "no") {
      out = false;
    } else {
      throw format_error("config: key \"" + key + "\" expects a boolean, got \"" + *v + "\"");
    }
  }
}

template <typename T>
void read_num(const KvStore& kv, const std::string& key, T& out) {
  if (const std::string* v = kv.get(key)) {
    std::istringstream is(*v);
    T tmp;
    is >> tmp;
    if (is.fail() || !is.eof()) {
      throw format_error("config: key \"" + key + "\" expects a number, got \"" + *v + "\"");
    }
    out = tmp;
  }
}

void read_int_list(const KvStore& kv, const std::string& key, std::vector<int>& out) {
  if (const std::string* v = kv.get(key)) {
    std::vector<int> tmp;
    for (const std::string& item : split_list(*v)) {
      std::istringstream is(item);
      int x;
      is >> x;
      if (is.fail() || !is.eof()) {
        throw format_error("config: key \"" + key + "\" expects integers, got \"" + item + "\"");
      }
      tmp.push_back(x);
    }
    out = std::move(tmp);
  }
}

void read_str_list(const KvStore& kv, const std::string& key, std::vector<std::string>& out) {
  if (const std::string* v = kv.get(key)) out = split_list(*v);
}

template <typename T>
void require(bool cond, const std::string& key, const T& hint) {
  if (!cond) {
    std::ostringstream os;
    os << "config: invalid value for " << key << " (" << hint << ")";
    throw format_error(os.str());
  }
}

std::string join_int_list(const std::vector<int>& v) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::string join_str_list(const std::vector<std::string>& v) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::string fmt_double(double d) {
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

}  // namespace

RunConfig RunConfig::parse_ini(const std::string& text) {
  KvStore kv;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3) {
        throw format_error("config: malformed section header at line " + std::to_string(lineno));
      }
      section = s.substr(1, s.size() - 2);
      continue;
    }
    size_t eq = s.find('=');
    if (eq == std::string::npos) {
      throw format_error("config: expected key = value at line " + std::to_string(lineno));
    }
    std::string key = trim(s.substr(0, eq));
    std::string val = trim(s.substr(eq + 1));
    if (key.empty()) {
      throw format_error("config: empty key at line " + std::to_string(lineno));
    }
    if (section.empty()) {
      throw format_error("config: key outside any section at line " + std::to_string(lineno));
    }
    kv.set(section, key, val);
  }

  RunConfig c;
  c.model.tags = Vocabulary::standard_tags();

  read_num(kv, "run.seed", c.seed);
  read_num(kv, "run.threads", c.threads);

  read_num(kv, "model.decoder_layers", c.model.decoder_layers);
  read_num(kv, "model.d_model", c.model.d_model);
  read_num(kv, "model.heads", c.model.heads);
  read_num(kv, "model.d_ff", c.model.d_ff);
  read_num(kv, "model.dropout", c.model.dropout);
  read_num(kv, "model.attention_window", c.model.attention_window);
  read_bool(kv, "model.line_number_encoding", c.model.line_number_encoding);
  read_num(kv, "model.max_lines", c.model.max_lines);
  read_num(kv, "model.max_decode_len", c.model.max_decode_len);
  read_int_list(kv, "model.encoder_widths", c.model.encoder_widths);
  read_int_list(kv, "model.encoder_blocks", c.model.encoder_blocks);
  read_str(kv, "model.encoder_norm", c.model.encoder_norm);
  read_str_list(kv, "model.tags", c.model.tags);

  read_num(kv, "train.learning_rate", c.train.learning_rate);
  read_num(kv, "train.beta1", c.train.beta1);
  read_num(kv, "train.beta2", c.train.beta2);
  read_num(kv, "train.adam_eps", c.train.adam_eps);
  read_num(kv, "train.batch_size", c.train.batch_size);
  read_num(kv, "train.grad_accumulation", c.train.grad_accumulation);
  read_num(kv, "train.updates", c.train.updates);
  read_num(kv, "train.eval_interval", c.train.eval_interval);
  read_num(kv, "train.log_interval", c.train.log_interval);
  read_num(kv, "train.keep_last", c.train.keep_last);
  read_num(kv, "train.warmup_steps", c.train.warmup_steps);
  read_num(kv, "train.canvas_height", c.train.canvas_height);
  read_num(kv, "train.canvas_width", c.train.canvas_width);
  read_str(kv, "train.padding", c.train.padding);
  read_num(kv, "train.val_pages", c.train.val_pages);
  read_num(kv, "train.early_stop_cer", c.train.early_stop_cer);

  read_str(kv, "data.corpus", c.data.corpus);
  read_num(kv, "data.span_min", c.data.span_min);
  read_num(kv, "data.span_max", c.data.span_max);
  read_num(kv, "data.wrap_min", c.data.wrap_min);
  read_num(kv, "data.wrap_max", c.data.wrap_max);
  read_num(kv, "data.weight_one_column", c.data.weight_one_column);
  read_num(kv, "data.weight_two_column", c.data.weight_two_column);
  read_num(kv, "data.weight_empty", c.data.weight_empty);
  read_num(kv, "data.weight_stitched", c.data.weight_stitched);
  read_str_list(kv, "data.faces", c.data.faces);
  read_int_list(kv, "data.font_scales", c.data.font_scales);
  read_num(kv, "data.margin", c.data.margin);
  read_num(kv, "data.gutter_cells", c.data.gutter_cells);
  read_num(kv, "data.page_max_height", c.data.page_max_height);
  read_num(kv, "data.page_max_width", c.data.page_max_width);
  read_num(kv, "data.empty_min_size", c.data.empty_min_size);
  read_num(kv, "data.background_min", c.data.background_min);
  read_num(kv, "data.background_max", c.data.background_max);
  read_num(kv, "data.ink_min", c.data.ink_min);
  read_num(kv, "data.ink_max", c.data.ink_max);
  read_num(kv, "data.stitch_min_words", c.data.stitch_min_words);
  read_num(kv, "data.stitch_max_words", c.data.stitch_max_words);
  read_str(kv, "data.unknown_chars", c.data.unknown_chars);
  read_str(kv, "data.image_format", c.data.image_format);

  read_bool(kv, "augment.enabled", c.augment.enabled);
  read_num(kv, "augment.scale_min", c.augment.scale_min);
  read_num(kv, "augment.scale_max", c.augment.scale_max);
  read_num(kv, "augment.rotation_max_deg", c.augment.rotation_max_deg);
  read_num(kv, "augment.brightness_delta", c.augment.brightness_delta);
  read_num(kv, "augment.background_delta", c.augment.background_delta);
  read_num(kv, "augment.contrast_min", c.augment.contrast_min);
  read_num(kv, "augment.contrast_max", c.augment.contrast_max);
  read_num(kv, "augment.perspective_jitter", c.augment.perspective_jitter);
  read_num(kv, "augment.noise_sigma_max", c.augment.noise_sigma_max);

  kv.check_all_used();
  return c;
}

void RunConfig::validate() const {
  require(threads >= 0, "run.threads", ">= 0");

  require(model.decoder_layers >= 1, "model.decoder_layers", ">= 1");
  require(model.d_model >= 4, "model.d_model", ">= 4");
  require(model.d_model % 4 == 0, "model.d_model", "divisible by 4");
  require(model.heads >= 1, "model.heads", ">= 1");
  require(model.d_model % model.heads == 0, "model.d_model", "divisible by heads");
  require(model.d_ff >= 1, "model.d_ff", ">= 1");
  require(model.dropout >= 0.0 && model.dropout < 1.0, "model.dropout", "in [0,1)");
  require(model.attention_window >= 1, "model.attention_window", ">= 1");
  require(model.max_lines >= 1, "model.max_lines", ">= 1");
  require(model.max_decode_len >= 1, "model.max_decode_len", ">= 1");
  require(!model.encoder_widths.empty(), "model.encoder_widths", "non-empty");
  require(model.encoder_widths.size() == model.encoder_blocks.size(), "model.encoder_blocks",
          "one entry per stage");
  for (int w : model.encoder_widths) require(w >= 1, "model.encoder_widths", "positive");
  for (int b : model.encoder_blocks) require(b >= 1, "model.encoder_blocks", "positive");
  require(model.encoder_norm == "group" || model.encoder_norm == "none", "model.encoder_norm",
          "group or none");

  require(train.learning_rate >= 0.0, "train.learning_rate", ">= 0");
  require(train.beta1 >= 0.0 && train.beta1 < 1.0, "train.beta1", "in [0,1)");
  require(train.beta2 >= 0.0 && train.beta2 < 1.0, "train.beta2", "in [0,1)");
  require(train.adam_eps > 0.0, "train.adam_eps", "> 0");
  require(train.batch_size >= 1, "train.batch_size", ">= 1");
  require(train.grad_accumulation >= 1, "train.grad_accumulation", ">= 1");
  require(train.updates >= 1, "train.updates", ">= 1");
  require(train.eval_interval >= 1, "train.eval_interval", ">= 1");
  require(train.log_interval >= 1, "train.log_interval", ">= 1");
  require(train.keep_last >= 0, "train.keep_last", ">= 0");
  require(train.warmup_steps >= 0, "train.warmup_steps", ">= 0");
  int stride = model.encoder_stride();
  require(train.canvas_height >= stride && train.canvas_height % stride == 0,
          "train.canvas_height", "positive multiple of the encoder stride");
  require(train.canvas_width >= stride && train.canvas_width % stride == 0,
          "train.canvas_width", "positive multiple of the encoder stride");
  require(train.padding == "corner_max" || train.padding == "zero", "train.padding",
          "corner_max or zero");
  require(train.val_pages >= 1, "train.val_pages", ">= 1");
  require(train.early_stop_cer >= 0.0, "train.early_stop_cer", ">= 0");

  require(data.span_min >= 1, "data.span_min", ">= 1");
  require(data.span_max >= data.span_min, "data.span_max", ">= span_min");
  require(data.wrap_min >= 1, "data.wrap_min", ">= 1");
  require(data.wrap_max >= data.wrap_min, "data.wrap_max", ">= wrap_min");
  double wsum = data.weight_one_column + data.weight_two_column + data.weight_empty +
                data.weight_stitched;
  require(data.weight_one_column >= 0 && data.weight_two_column >= 0 && data.weight_empty >= 0 &&
              data.weight_stitched >= 0,
          "data.weight_*", "non-negative");
  require(wsum > 0.0, "data.weight_*", "at least one positive weight");
  require(!data.faces.empty(), "data.faces", "non-empty");
  require(!data.font_scales.empty(), "data.font_scales", "non-empty");
  for (int s : data.font_scales) require(s >= 1 && s <= 8, "data.font_scales", "in [1,8]");
  require(data.margin >= 0, "data.margin", ">= 0");
  require(data.gutter_cells >= 1, "data.gutter_cells", ">= 1");
  require(data.page_max_height >= 16, "data.page_max_height", ">= 16");
  require(data.page_max_width >= 16, "data.page_max_width", ">= 16");
  require(data.page_max_height <= train.canvas_height, "data.page_max_height", "<= canvas");
  require(data.page_max_width <= train.canvas_width, "data.page_max_width", "<= canvas");
  require(data.empty_min_size >= 1, "data.empty_min_size", ">= 1");
  require(data.background_min >= 0.0 && data.background_max <= 1.0 &&
              data.background_min <= data.background_max,
          "data.background_*", "0 <= min <= max <= 1");
  require(data.ink_min >= 0.0 && data.ink_max <= 1.0 && data.ink_min <= data.ink_max,
          "data.ink_*", "0 <= min <= max <= 1");
  require(data.ink_max < data.background_min, "data.ink_max", "below background_min");
  require(data.stitch_min_words >= 1, "data.stitch_min_words", ">= 1");
  require(data.stitch_max_words >= data.stitch_min_words, "data.stitch_max_words",
          ">= stitch_min_words");
  require(data.unknown_chars == "map" || data.unknown_chars == "drop", "data.unknown_chars",
          "map or drop");
  require(data.image_format == "png" || data.image_format == "pgm", "data.image_format",
          "png or pgm");

  require(augment.scale_min > 0.0 && augment.scale_min <= augment.scale_max, "augment.scale_*",
          "0 < min <= max");
  require(augment.rotation_max_deg >= 0.0 && augment.rotation_max_deg <= 45.0,
          "augment.rotation_max_deg", "in [0,45]");
  require(augment.brightness_delta >= 0.0, "augment.brightness_delta", ">= 0");
  require(augment.background_delta >= 0.0, "augment.background_delta", ">= 0");
  require(augment.contrast_min > 0.0 && augment.contrast_min <= augment.contrast_max,
          "augment.contrast_*", "0 < min <= max");
  require(augment.perspective_jitter >= 0.0 && augment.perspective_jitter <= 0.2,
          "augment.perspective_jitter", "in [0,0.2]");
  require(augment.noise_sigma_max >= 0.0, "augment.noise_sigma_max", ">= 0");

  // tag validity is enforced by the vocabulary builder
  try {
    Vocabulary::build(Vocabulary::base_charset(), model.tags);
  } catch (const contract_error& e) {
    throw format_error(std::string("config: model.tags invalid: ") + e.what());
  }
}

std::string RunConfig::to_ini() const {
  std::ostringstream os;
  os << "[run]\n";
  os << "seed = " << seed << "\n";
  os << "threads = " << threads << "\n";
  os << "\n[model]\n";
  os << "decoder_layers = " << model.decoder_layers << "\n";
  os << "d_model = " << model.d_model << "\n";
  os << "heads = " << model.heads << "\n";
  os << "d_ff = " << model.d_ff << "\n";
  os << "dropout = " << fmt_double(model.dropout) << "\n";
  os << "attention_window = " << model.attention_window << "\n";
  os << "line_number_encoding = " << (model.line_number_encoding ? "true" : "false") << "\n";
  os << "max_lines = " << model.max_lines << "\n";
  os << "max_decode_len = " << model.max_decode_len << "\n";
  os << "encoder_widths = " << join_int_list(model.encoder_widths) << "\n";
  os << "encoder_blocks = " << join_int_list(model.encoder_blocks) << "\n";
  os << "encoder_norm = " << model.encoder_norm << "\n";
  os << "tags = " << join_str_list(model.tags) << "\n";
  os << "\n[train]\n";
  os << "learning_rate = " << fmt_double(train.learning_rate) << "\n";
  os << "beta1 = " << fmt_double(train.beta1) << "\n";
  os << "beta2 = " << fmt_double(train.beta2) << "\n";
  os << "adam_eps = " << fmt_double(train.adam_eps) << "\n";
  os << "batch_size = " << train.batch_size << "\n";
  os << "grad_accumulation = " << train.grad_accumulation << "\n";
  os << "updates = " << train.updates << "\n";
  os << "eval_interval = " << train.eval_interval << "\n";
  os << "log_interval = " << train.log_interval << "\n";
  os << "keep_last = " << train.keep_last << "\n";
  os << "warmup_steps = " << train.warmup_steps << "\n";
  os << "canvas_height = " << train.canvas_height << "\n";
  os << "canvas_width = " << train.canvas_width << "\n";
  os << "padding = " << train.padding << "\n";
  os << "val_pages = " << train.val_pages << "\n";
  os << "early_stop_cer = " << fmt_double(train.early_stop_cer) << "\n";
  os << "\n[data]\n";
  os << "corpus = " << data.corpus << "\n";
  os << "span_min = " << data.span_min << "\n";
  os << "span_max = " << data.span_max << "\n";
  os << "wrap_min = " << data.wrap_min << "\n";
  os << "wrap_max = " << data.wrap_max << "\n";
  os << "weight_one_column = " << fmt_double(data.weight_one_column) << "\n";
  os << "weight_two_column = " << fmt_double(data.weight_two_column) << "\n";
  os << "weight_empty = " << fmt_double(data.weight_empty) << "\n";
  os << "weight_stitched = " << fmt_double(data.weight_stitched) << "\n";
  os << "faces = " << join_str_list(data.faces) << "\n";
  os << "font_scales = " << join_int_list(data.font_scales) << "\n";
  os << "margin = " << data.margin << "\n";
  os << "gutter_cells = " << data.gutter_cells << "\n";
  os << "page_max_height = " << data.page_max_height << "\n";
  os << "page_max_width = " << data.page_max_width << "\n";
  os << "empty_min_size = " << data.empty_min_size << "\n";
  os << "background_min = " << fmt_double(data.background_min) << "\n";
  os << "background_max = " << fmt_double(data.background_max) << "\n";
  os << "ink_min = " << fmt_double(data.ink_min) << "\n";
  os << "ink_max = " << fmt_double(data.ink_max) << "\n";
  os << "stitch_min_words = " << data.stitch_min_words << "\n";
  os << "stitch_max_words = " << data.stitch_max_words << "\n";
  os << "unknown_chars = " << data.unknown_chars << "\n";
  os << "image_format = " << data.image_format << "\n";
  os << "\n[augment]\n";
  os << "enabled = " << (augment.enabled ? "true" : "false") << "\n";
  os << "scale_min = " << fmt_double(augment.scale_min) << "\n";
  os << "scale_max = " << fmt_double(augment.scale_max) << "\n";
  os << "rotation_max_deg = " << fmt_double(augment.rotation_max_deg) << "\n";
  os << "brightness_delta = " << fmt_double(augment.brightness_delta) << "\n";
  os << "background_delta = " << fmt_double(augment.background_delta) << "\n";
  os << "contrast_min = " << fmt_double(augment.contrast_min) << "\n";
  os << "contrast_max = " << fmt_double(augment.contrast_max) << "\n";
  os << "perspective_jitter = " << fmt_double(augment.perspective_jitter) << "\n";
  os << "noise_sigma_max = " << fmt_double(augment.noise_sigma_max) << "\n";
  return os.str();
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot read config file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  RunConfig c = parse_ini(ss.str());
  c.validate();
  return c;
}

}  // namespace pagetext
