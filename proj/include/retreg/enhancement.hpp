#pragma once

// Matched-filter vessel enhancement with a bank of twelve rotated Gaussian
// line templates.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string_view>
#include <variant>
#include <vector>

#include "retreg/error.hpp"
#include "retreg/raster.hpp"

namespace retreg {

/// Numeric values follow the modality codes 1..3 used by the CLI.
enum class Modality { color_retinography = 1, red_free = 2, angiography = 3 };

enum class Polarity { bright_vessel, dark_vessel };

inline std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::color_retinography: return "color-retinography";
    case Modality::red_free: return "red-free";
    case Modality::angiography: return "angiography";
  }
  return "unknown";
}

/// Angiography shows bright vessels; both retinography modalities dark ones.
inline Polarity polarity_for(Modality m) {
  return m == Modality::angiography ? Polarity::bright_vessel : Polarity::dark_vessel;
}

/// Either a single-channel or an RGB raster, as loaded from disk.
using InputImage = std::variant<GrayImage, RgbImage>;

inline GrayImage extract_working_channel(const InputImage& image, Modality modality) {
  if (modality == Modality::color_retinography) {
    const auto* rgb = std::get_if<RgbImage>(&image);
    if (!rgb) throw Error(ErrorCode::input, "color retinography requires a 3-channel image");
    GrayImage out(rgb->dims());
    for (std::size_t i = 0; i < rgb->size(); ++i) out[i] = (*rgb)[i][1];
    return out;
  }
  const auto* gray = std::get_if<GrayImage>(&image);
  if (!gray) throw Error(ErrorCode::input, "red-free and angiography inputs must be single-channel");
  return *gray;
}

struct FilterTap {
  int drow;
  int dcol;
  double weight;
};

struct MatchedKernel {
  double orientation_deg = 0.0;
  /// Template values on the 13x13 window before mean removal; NaN marks
  /// samples outside the template support.
  std::array<double, 169> raw{};
  /// Zero-mean taps over the support, used for correlation.
  std::vector<FilterTap> taps;

  double raw_at(int drow, int dcol) const { return raw[static_cast<std::size_t>((drow + 6) * 13 + (dcol + 6))]; }
  bool in_support(int drow, int dcol) const { return !std::isnan(raw_at(drow, dcol)); }
};

struct FilterBank {
  static constexpr double sigma = 2.0;
  static constexpr int segment_length = 9;
  static constexpr int half_width = 6;
  static constexpr int window = 2 * half_width + 1;
  static constexpr int orientation_count = 12;
  static constexpr double orientation_step_deg = 15.0;

  Polarity polarity = Polarity::bright_vessel;
  std::array<MatchedKernel, orientation_count> kernels{};
};

/// Rotated coordinates of the window offset (drow, dcol) for a template whose
/// vessel axis points at `orientation_deg`: `across` is the distance from the
/// axis, `along` the position along it.
inline std::pair<double, double> rotate_offset(int drow, int dcol, double orientation_deg) {
  const double t = orientation_deg * std::numbers::pi / 180.0;
  const double x = dcol;
  const double y = -drow;
  const double along = x * std::cos(t) + y * std::sin(t);
  const double across = -x * std::sin(t) + y * std::cos(t);
  return {across, along};
}

inline FilterBank build_filter_bank(Polarity polarity) {
  constexpr double eps = 1e-9;
  const double along_limit = FilterBank::segment_length / 2.0;
  FilterBank bank;
  bank.polarity = polarity;
  for (int k = 0; k < FilterBank::orientation_count; ++k) {
    MatchedKernel& kernel = bank.kernels[static_cast<std::size_t>(k)];
    kernel.orientation_deg = k * FilterBank::orientation_step_deg;
    double sum = 0.0;
    int support = 0;
    for (int dr = -FilterBank::half_width; dr <= FilterBank::half_width; ++dr) {
      for (int dc = -FilterBank::half_width; dc <= FilterBank::half_width; ++dc) {
        const auto [across, along] = rotate_offset(dr, dc, kernel.orientation_deg);
        double value = std::numeric_limits<double>::quiet_NaN();
        if (std::fabs(across) <= FilterBank::half_width + eps && std::fabs(along) <= along_limit + eps) {
          const double g = std::exp(-(across * across) / (2.0 * FilterBank::sigma * FilterBank::sigma));
          value = polarity == Polarity::bright_vessel ? g : 1.0 - g;
          sum += value;
          ++support;
        }
        kernel.raw[static_cast<std::size_t>((dr + 6) * 13 + (dc + 6))] = value;
      }
    }
    const double mean = sum / support;
    for (int dr = -FilterBank::half_width; dr <= FilterBank::half_width; ++dr)
      for (int dc = -FilterBank::half_width; dc <= FilterBank::half_width; ++dc)
        if (kernel.in_support(dr, dc)) kernel.taps.push_back({dr, dc, kernel.raw_at(dr, dc) - mean});
  }
  return bank;
}

/// Per-pixel maximum matched-filter response over the bank, before rescaling.
struct FilterResponse {
  RealImage response;
  /// Index into the bank of the winning orientation (first on ties).
  Raster<std::uint8_t> orientation;
};

inline FilterResponse matched_filter_response(const GrayImage& image, const FilterBank& bank) {
  constexpr int pad = FilterBank::half_width;
  if (image.rows() < FilterBank::window || image.cols() < FilterBank::window)
    throw Error(ErrorCode::input, "image smaller than the matched-filter kernel");

  const int prow = image.rows() + 2 * pad;
  const int pcol = image.cols() + 2 * pad;
  std::vector<double> padded(static_cast<std::size_t>(prow) * static_cast<std::size_t>(pcol));
  for (int r = 0; r < prow; ++r) {
    const int sr = std::clamp(r - pad, 0, image.rows() - 1);
    for (int c = 0; c < pcol; ++c) {
      const int sc = std::clamp(c - pad, 0, image.cols() - 1);
      padded[static_cast<std::size_t>(r) * static_cast<std::size_t>(pcol) + static_cast<std::size_t>(c)] = image(sr, sc);
    }
  }

  FilterResponse out{RealImage(image.dims(), -std::numeric_limits<double>::infinity()),
                     Raster<std::uint8_t>(image.dims(), 0)};
  std::vector<double> scratch(static_cast<std::size_t>(image.cols()));
  for (std::size_t k = 0; k < bank.kernels.size(); ++k) {
    const auto& taps = bank.kernels[k].taps;
    for (int r = 0; r < image.rows(); ++r) {
      std::fill(scratch.begin(), scratch.end(), 0.0);
      for (const auto& tap : taps) {
        const double* src = padded.data() + static_cast<std::size_t>(r + pad + tap.drow) * static_cast<std::size_t>(pcol) +
                            static_cast<std::size_t>(pad + tap.dcol);
        const double w = tap.weight;
        for (int c = 0; c < image.cols(); ++c) scratch[static_cast<std::size_t>(c)] += w * src[c];
      }
      for (int c = 0; c < image.cols(); ++c) {
        const double v = scratch[static_cast<std::size_t>(c)];
        if (v > out.response(r, c)) {
          out.response(r, c) = v;
          out.orientation(r, c) = static_cast<std::uint8_t>(k);
        }
      }
    }
  }
  return out;
}

/// Affine min-max map to [0, 255] with round-half-up; a constant map gives 0.
inline GrayImage rescale_to_gray(const RealImage& response) {
  const auto [lo_it, hi_it] = std::minmax_element(response.begin(), response.end());
  const double lo = *lo_it;
  const double span = *hi_it - lo;
  GrayImage out(response.dims(), 0);
  // Spans below this are floating-point noise from the zero-mean kernels.
  if (span <= 1e-9) return out;
  for (std::size_t i = 0; i < response.size(); ++i) {
    const double v = (response[i] - lo) / span * 255.0;
    out[i] = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
  }
  return out;
}

struct EnhancedImage {
  GrayImage image;
  Modality modality = Modality::angiography;
};

inline EnhancedImage enhance(const GrayImage& image, Modality modality) {
  const FilterBank bank = build_filter_bank(polarity_for(modality));
  return {rescale_to_gray(matched_filter_response(image, bank).response), modality};
}

}  // namespace retreg
