#pragma once

#include "core/tensor.h"

namespace pagetext {

// Fixed 2D sinusoidal grid encoding: channels [0, d/2) encode the row
// coordinate, channels [d/2, d) the column coordinate, each as interleaved
// sin/cos at geometric wavelengths. d must be divisible by 4. Rows are laid
// out y-major: row index = y * w + x.
template <typename T>
Tensor<T> positional_encoding_2d(int h, int w, int d_model);

// Standard 1D sinusoidal position encoding, [len, d].
template <typename T>
Tensor<T> positional_encoding_1d(int len, int d_model);

// lne = l / max_lines with l in [1, max_lines]
double line_number_encoding(int line, int max_lines);

// Per-token text line index, starting at 1, incremented after each newline
// token (the newline belongs to the line it terminates), clamped at
// max_lines.
std::vector<int> token_line_numbers(const std::vector<int32_t>& ids, int32_t newline_id,
                                    int max_lines);

// Positions [max(0, t-window), t] are visible; everything else is -inf.
template <typename T>
Tensor<T> causal_window_mask(int len, int window);

}  // namespace pagetext
