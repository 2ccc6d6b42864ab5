#pragma once

#include "lineage/simd/kernels.hpp"

namespace lineage::simd::detail {

std::uint64_t dot_u8_scalar(const std::uint8_t* a, const std::uint8_t* b, std::size_t n);
Moments moments_u8_scalar(const std::uint8_t* a, std::size_t n);

#if defined(LINEAGE_HAVE_AVX2)
std::uint64_t dot_u8_avx2(const std::uint8_t* a, const std::uint8_t* b, std::size_t n);
Moments moments_u8_avx2(const std::uint8_t* a, std::size_t n);
#endif

#if defined(LINEAGE_HAVE_NEON)
std::uint64_t dot_u8_neon(const std::uint8_t* a, const std::uint8_t* b, std::size_t n);
Moments moments_u8_neon(const std::uint8_t* a, std::size_t n);
#endif

}  // namespace lineage::simd::detail
