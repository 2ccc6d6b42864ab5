// Compiled with -mavx2; only reached after a runtime CPU check.

#include "kernels_impl.hpp"

#include <immintrin.h>

#include <algorithm>

namespace lineage::simd::detail {

namespace {

// Each 32-byte step adds at most 2 * 2 * 255^2 to an int32 lane; flushing
// every 64 KiB keeps lanes far below 2^31.
constexpr std::size_t kFlushBytes = std::size_t{1} << 16;

inline std::uint64_t hsum_u32(__m256i v) {
  const __m256i lo = _mm256_cvtepu32_epi64(_mm256_castsi256_si128(v));
  const __m256i hi = _mm256_cvtepu32_epi64(_mm256_extracti128_si256(v, 1));
  const __m256i s = _mm256_add_epi64(lo, hi);
  alignas(32) std::uint64_t buf[4];
  _mm256_store_si256(reinterpret_cast<__m256i*>(buf), s);
  return buf[0] + buf[1] + buf[2] + buf[3];
}

inline std::uint64_t hsum_u64(__m256i v) {
  alignas(32) std::uint64_t buf[4];
  _mm256_store_si256(reinterpret_cast<__m256i*>(buf), v);
  return buf[0] + buf[1] + buf[2] + buf[3];
}

}  // namespace

std::uint64_t dot_u8_avx2(const std::uint8_t* a, const std::uint8_t* b, std::size_t n) {
  std::uint64_t total = 0;
  while (n >= 16) {
    const std::size_t block = std::min(n, kFlushBytes);
    __m256i acc = _mm256_setzero_si256();
    std::size_t i = 0;
    for (; i + 32 <= block; i += 32) {
      const __m256i va = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(a + i));
      const __m256i vb = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(b + i));
      const __m256i alo = _mm256_cvtepu8_epi16(_mm256_castsi256_si128(va));
      const __m256i ahi = _mm256_cvtepu8_epi16(_mm256_extracti128_si256(va, 1));
      const __m256i blo = _mm256_cvtepu8_epi16(_mm256_castsi256_si128(vb));
      const __m256i bhi = _mm256_cvtepu8_epi16(_mm256_extracti128_si256(vb, 1));
      acc = _mm256_add_epi32(acc, _mm256_madd_epi16(alo, blo));
      acc = _mm256_add_epi32(acc, _mm256_madd_epi16(ahi, bhi));
    }
    if (i + 16 <= block) {
      const __m256i va = _mm256_cvtepu8_epi16(_mm_loadu_si128(reinterpret_cast<const __m128i*>(a + i)));
      const __m256i vb = _mm256_cvtepu8_epi16(_mm_loadu_si128(reinterpret_cast<const __m128i*>(b + i)));
      acc = _mm256_add_epi32(acc, _mm256_madd_epi16(va, vb));
      i += 16;
    }
    total += hsum_u32(acc);
    a += i;
    b += i;
    n -= i;
    if (i < block) break;
  }
  for (std::size_t i = 0; i < n; ++i) total += static_cast<std::uint32_t>(a[i]) * b[i];
  return total;
}

Moments moments_u8_avx2(const std::uint8_t* a, std::size_t n) {
  Moments m;
  const __m256i zero = _mm256_setzero_si256();
  while (n >= 32) {
    const std::size_t block = std::min(n, kFlushBytes) & ~std::size_t{31};
    __m256i sum = _mm256_setzero_si256();
    __m256i sq = _mm256_setzero_si256();
    for (std::size_t i = 0; i < block; i += 32) {
      const __m256i va = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(a + i));
      sum = _mm256_add_epi64(sum, _mm256_sad_epu8(va, zero));
      const __m256i lo = _mm256_cvtepu8_epi16(_mm256_castsi256_si128(va));
      const __m256i hi = _mm256_cvtepu8_epi16(_mm256_extracti128_si256(va, 1));
      sq = _mm256_add_epi32(sq, _mm256_madd_epi16(lo, lo));
      sq = _mm256_add_epi32(sq, _mm256_madd_epi16(hi, hi));
    }
    m.sum += hsum_u64(sum);
    m.sum_sq += hsum_u32(sq);
    a += block;
    n -= block;
  }
  for (std::size_t i = 0; i < n; ++i) {
    m.sum += a[i];
    m.sum_sq += static_cast<std::uint32_t>(a[i]) * a[i];
  }
  return m;
}

}  // namespace lineage::simd::detail
