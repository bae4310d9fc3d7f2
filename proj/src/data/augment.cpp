#include "data/augment.h"

#include <algorithm>
#include <cmath>

#include "core/errors.h"

namespace pagetext {

Image resize_bilinear(const Image& img, int out_h, int out_w, float fill) {
  if (out_h < 1 || out_w < 1) throw contract_error("resize_bilinear: bad output size");
  Image out(out_h, out_w);
  double sy = static_cast<double>(img.height) / out_h;
  double sx = static_cast<double>(img.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double v = (y + 0.5) * sy - 0.5;
    for (int x = 0; x < out_w; ++x) {
      double u = (x + 0.5) * sx - 0.5;
      out.at(y, x) = bilinear_at(img, v, u, fill);
    }
  }
  return out;
}

Image rotate_bilinear(const Image& img, double degrees, float fill) {
  double rad = degrees * 3.14159265358979323846 / 180.0;
  double c = std::cos(rad), s = std::sin(rad);
  double cy = (img.height - 1) / 2.0, cx = (img.width - 1) / 2.0;
  Image out(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double dx = x - cx, dy = y - cy;
      double u = c * dx + s * dy + cx;
      double v = -s * dx + c * dy + cy;
      out.at(y, x) = bilinear_at(img, v, u, fill);
    }
  }
  return out;
}

namespace {

// solve A x = b for an 8x8 system, partial pivoting
void solve8(double a[8][8], double b[8], double x[8]) {
  int idx[8];
  for (int i = 0; i < 8; ++i) idx[i] = i;
  for (int col = 0; col < 8; ++col) {
    int piv = col;
    for (int r = col + 1; r < 8; ++r) {
      if (std::fabs(a[idx[r]][col]) > std::fabs(a[idx[piv]][col])) piv = r;
    }
    std::swap(idx[col], idx[piv]);
    double diag = a[idx[col]][col];
    if (std::fabs(diag) < 1e-12) throw runtime_failure("perspective: degenerate corner layout");
    for (int r = col + 1; r < 8; ++r) {
      double f = a[idx[r]][col] / diag;
      if (f == 0.0) continue;
      for (int cc = col; cc < 8; ++cc) a[idx[r]][cc] -= f * a[idx[col]][cc];
      b[idx[r]] -= f * b[idx[col]];
    }
  }
  for (int row = 7; row >= 0; --row) {
    double acc = b[idx[row]];
    for (int cc = row + 1; cc < 8; ++cc) acc -= a[idx[row]][cc] * x[cc];
    x[row] = acc / a[idx[row]][row];
  }
}

}  // namespace

Image perspective_warp(const Image& img, const double (&dx)[4], const double (&dy)[4],
                       float fill) {
  double w = img.width - 1, h = img.height - 1;
  // output corners -> jittered input corners
  double ox[4] = {0, w, w, 0};
  double oy[4] = {0, 0, h, h};
  double ix[4] = {0 + dx[0], w + dx[1], w + dx[2], 0 + dx[3]};
  double iy[4] = {0 + dy[0], 0 + dy[1], h + dy[2], h + dy[3]};
  double a[8][8] = {};
  double b[8] = {};
  for (int i = 0; i < 4; ++i) {
    double X = ox[i], Y = oy[i], U = ix[i], V = iy[i];
    double* r1 = a[2 * i];
    r1[0] = X; r1[1] = Y; r1[2] = 1; r1[6] = -U * X; r1[7] = -U * Y;
    b[2 * i] = U;
    double* r2 = a[2 * i + 1];
    r2[3] = X; r2[4] = Y; r2[5] = 1; r2[6] = -V * X; r2[7] = -V * Y;
    b[2 * i + 1] = V;
  }
  double p[8];
  solve8(a, b, p);
  Image out(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double den = p[6] * x + p[7] * y + 1.0;
      double u = (p[0] * x + p[1] * y + p[2]) / den;
      double v = (p[3] * x + p[4] * y + p[5]) / den;
      out.at(y, x) = bilinear_at(img, v, u, fill);
    }
  }
  return out;
}

void add_gaussian_noise(Image& img, double sigma, Rng& rng) {
  if (sigma <= 0.0) return;
  for (float& v : img.px) v += static_cast<float>(sigma * rng.normal());
}

Image augment(const Image& img, const AugmentConfig& cfg, Rng& rng, AugmentDraw* draw) {
  Image out = img;
  AugmentDraw d;
  d.applied = true;
  float fill = img.corner_max();

  d.scale = rng.uniform(cfg.scale_min, cfg.scale_max);
  if (d.scale != 1.0) {
    int oh = std::max(1, static_cast<int>(std::lround(img.height * d.scale)));
    int ow = std::max(1, static_cast<int>(std::lround(img.width * d.scale)));
    out = resize_bilinear(out, oh, ow, fill);
  }

  d.rotation_deg = rng.uniform(-cfg.rotation_max_deg, cfg.rotation_max_deg);
  if (d.rotation_deg != 0.0) out = rotate_bilinear(out, d.rotation_deg, fill);

  d.perspective = cfg.perspective_jitter;
  if (cfg.perspective_jitter > 0.0) {
    double amp = cfg.perspective_jitter * std::min(out.height, out.width);
    double dx[4], dy[4];
    for (int i = 0; i < 4; ++i) {
      dx[i] = rng.uniform(-amp, amp);
      dy[i] = rng.uniform(-amp, amp);
    }
    out = perspective_warp(out, dx, dy, fill);
  }

  d.brightness = rng.uniform(-cfg.brightness_delta, cfg.brightness_delta);
  if (d.brightness != 0.0) {
    for (float& v : out.px) v += static_cast<float>(d.brightness);
  }

  // shifts the paper level while leaving ink alone
  d.background = rng.uniform(-cfg.background_delta, cfg.background_delta);
  if (d.background != 0.0) {
    for (float& v : out.px) {
      if (v > 0.5f) v += static_cast<float>(d.background);
    }
  }

  d.contrast = rng.uniform(cfg.contrast_min, cfg.contrast_max);
  if (d.contrast != 1.0) {
    for (float& v : out.px) v = (v - 0.5f) * static_cast<float>(d.contrast) + 0.5f;
  }

  d.noise_sigma = rng.uniform(0.0, cfg.noise_sigma_max);
  add_gaussian_noise(out, d.noise_sigma, rng);

  out.clamp01();
  if (draw) *draw = d;
  return out;
}

}  // namespace pagetext
