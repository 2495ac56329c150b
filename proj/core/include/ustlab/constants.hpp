#pragma once

#include <ratio>

namespace ustlab {

// Exponents of the two-dimensional UST. They are fixed rationals and are
// never fitted inside the checkers.
using GrowthExponent = std::ratio<5, 4>;          // kappa
using FractalDimension = std::ratio<8, 5>;        // d_f = 2 / kappa
using WalkDimension = std::ratio<13, 5>;          // d_w = 1 + d_f

template <class R>
inline constexpr double as_double = static_cast<double>(R::num) / static_cast<double>(R::den);

inline constexpr double kKappa = as_double<GrowthExponent>;
inline constexpr double kFractalDim = as_double<FractalDimension>;
inline constexpr double kWalkDim = as_double<WalkDimension>;

static_assert(std::ratio_equal_v<FractalDimension, std::ratio_divide<std::ratio<2>, GrowthExponent>>);
static_assert(std::ratio_equal_v<WalkDimension, std::ratio_add<std::ratio<1>, FractalDimension>>);

/// d_f / d_w = 8/13, exponent of the averaged on-diagonal decay.
inline constexpr double kSpectralHalf = kFractalDim / kWalkDim;
/// 1 / (kappa d_w) = 4/13, extrinsic displacement exponent.
inline constexpr double kExtrinsicDisplacement = 1.0 / (kKappa * kWalkDim);
/// 1 / d_w = 5/13, intrinsic displacement exponent.
inline constexpr double kIntrinsicDisplacement = 1.0 / kWalkDim;
/// (2 - kappa) / kappa = 3/5, long-path tail exponent.
inline constexpr double kLongTailExponent = (2.0 - kKappa) / kKappa;
/// (d_w - 1) / (kappa d_w - 1) = 32/45.
inline constexpr double kTheta1 = (kWalkDim - 1.0) / (kKappa * kWalkDim - 1.0);

}  // namespace ustlab
