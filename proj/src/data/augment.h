#pragma once

#include "core/config.h"
#include "core/image.h"
#include "core/rng.h"
#include "data/render.h"

namespace pagetext {

Image resize_bilinear(const Image& img, int out_h, int out_w, float fill);
Image rotate_bilinear(const Image& img, double degrees, float fill);
// corner offsets in pixels: {top-left, top-right, bottom-right, bottom-left} x (dx,dy)
Image perspective_warp(const Image& img, const double (&dx)[4], const double (&dy)[4], float fill);
void add_gaussian_noise(Image& img, double sigma, Rng& rng);

// Applies the enabled transforms with uniformly sampled parameters: scale,
// rotation, perspective, brightness, background level, contrast, Gaussian
// noise. Output clamped to [0,1]. Degenerate ranges leave the image intact.
Image augment(const Image& img, const AugmentConfig& cfg, Rng& rng, AugmentDraw* draw = nullptr);

}  // namespace pagetext
