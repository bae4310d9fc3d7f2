#include "model/positional.h"

#include <cmath>
#include <limits>

namespace pagetext {

template <typename T>
Tensor<T> positional_encoding_2d(int h, int w, int d_model) {
  if (d_model % 4 != 0) {
    throw contract_error("positional_encoding_2d: d_model must be divisible by 4");
  }
  if (h < 1 || w < 1) throw contract_error("positional_encoding_2d: empty grid");
  auto pe = Tensor<T>::zeros({h * w, d_model});
  T* p = pe.data();
  int half = d_model / 2;
  int quarter = d_model / 4;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      T* row = p + (static_cast<int64_t>(y) * w + x) * d_model;
      for (int i = 0; i < quarter; ++i) {
        double freq = std::pow(10000.0, 2.0 * i / d_model);
        row[2 * i] = static_cast<T>(std::sin(y / freq));
        row[2 * i + 1] = static_cast<T>(std::cos(y / freq));
        row[half + 2 * i] = static_cast<T>(std::sin(x / freq));
        row[half + 2 * i + 1] = static_cast<T>(std::cos(x / freq));
      }
    }
  }
  return pe;
}

template <typename T>
Tensor<T> positional_encoding_1d(int len, int d_model) {
  if (d_model % 2 != 0) {
    throw contract_error("positional_encoding_1d: d_model must be even");
  }
  auto pe = Tensor<T>::zeros({len, d_model});
  T* p = pe.data();
  for (int pos = 0; pos < len; ++pos) {
    T* row = p + static_cast<int64_t>(pos) * d_model;
    for (int i = 0; i < d_model / 2; ++i) {
      double freq = std::pow(10000.0, 2.0 * i / d_model);
      row[2 * i] = static_cast<T>(std::sin(pos / freq));
      row[2 * i + 1] = static_cast<T>(std::cos(pos / freq));
    }
  }
  return pe;
}

double line_number_encoding(int line, int max_lines) {
  if (max_lines < 1) throw contract_error("line_number_encoding: max_lines must be >= 1");
  if (line < 1 || line > max_lines) {
    throw contract_error("line_number_encoding: line index out of [1, max_lines]");
  }
  return static_cast<double>(line) / static_cast<double>(max_lines);
}

std::vector<int> token_line_numbers(const std::vector<int32_t>& ids, int32_t newline_id,
                                    int max_lines) {
  std::vector<int> out(ids.size());
  int line = 1;
  for (size_t i = 0; i < ids.size(); ++i) {
    out[i] = line;
    if (ids[i] == newline_id && line < max_lines) ++line;
  }
  return out;
}

template <typename T>
Tensor<T> causal_window_mask(int len, int window) {
  if (len < 1 || window < 1) throw contract_error("causal_window_mask: need len,window >= 1");
  auto mask = Tensor<T>::zeros({len, len});
  T* m = mask.data();
  T ninf = -std::numeric_limits<T>::infinity();
  for (int t = 0; t < len; ++t) {
    int lo = t - window < 0 ? 0 : t - window;
    for (int s = 0; s < len; ++s) {
      if (s < lo || s > t) m[static_cast<int64_t>(t) * len + s] = ninf;
    }
  }
  return mask;
}

template Tensor<float> positional_encoding_2d<float>(int, int, int);
template Tensor<double> positional_encoding_2d<double>(int, int, int);
template Tensor<float> positional_encoding_1d<float>(int, int);
template Tensor<double> positional_encoding_1d<double>(int, int);
template Tensor<float> causal_window_mask<float>(int, int);
template Tensor<double> causal_window_mask<double>(int, int);

}  // namespace pagetext
