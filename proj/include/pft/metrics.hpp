#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "pft/image.hpp"
#include "pft/layers.hpp"

namespace pft {

/// Mean absolute error over both views and every element.
template <typename T>
Tensor<T> l1_loss(const ViewPair<T>& pred, const ViewPair<T>& target);

inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// 10 log10(1 / MSE) over all RGB values, peak 1. Identical images give
/// kPsnrIdentical.
double psnr(const Image& a, const Image& b);

inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// Normalized 1-D Gaussian used (as an outer product) for the SSIM window.
std::vector<double> ssim_gaussian();

/// Gaussian-windowed SSIM over every valid 11x11 position of each channel,
/// averaged over positions and channels. No border crop.
double ssim(const Image& a, const Image& b);

struct EvalRow {
    std::string dataset;
    std::size_t scale = 0;
    std::size_t images = 0;
    double psnr_left = 0.0;
    double ssim_left = 0.0;
    double psnr_avg = 0.0;  // mean over both views
    double ssim_avg = 0.0;
};

/// Metrics of sr[i] against gt[i]. Infinite PSNR values (exact matches) are
/// left out of the means unless every value is infinite.
EvalRow evaluate_pairs(const std::vector<StereoPair>& sr, const std::vector<StereoPair>& gt);

struct EvalReport {
    std::vector<EvalRow> rows;

    std::string to_table() const;
    std::string to_csv() const;
};

inline constexpr const char* kEvalCsvHeader = "dataset,scale,images,psnr_left,ssim_left,psnr_avg,ssim_avg";

}  // namespace pft
