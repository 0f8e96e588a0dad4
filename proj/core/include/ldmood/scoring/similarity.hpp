#pragma once

#include <cstddef>

#include "ldmood/volume.hpp"

namespace ldmood::scoring {

/// Mean of squared voxel differences.
double mse(const Volume& a, const Volume& b);

/// |a - b| per voxel.
Volume mae_map(const Volume& a, const Volume& b);

struct SsimOptions {
    std::size_t scales = 2;
    double sigma = 1.5;
    std::size_t window = 11;
    double c1 = 0.01 * 0.01;
    double c2 = 0.03 * 0.03;
};

/// Multi-scale structural similarity of two row-major 2D images. Scale weights
/// are the leading entries of the usual five-scale set, renormalized to sum to 1.
double ms_ssim_2d(const float* a, const float* b, std::size_t rows, std::size_t cols, const SsimOptions& options = {});

/// Mean over the three slicing axes of the mean slice-wise (1 - MS-SSIM).
/// Inputs are clamped to [0, 1] first.
double perceptual_proxy(const Volume& a, const Volume& b, const SsimOptions& options = {});

}  // namespace ldmood::scoring
