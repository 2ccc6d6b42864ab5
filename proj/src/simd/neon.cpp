#include "kernels_impl.hpp"

#include <arm_neon.h>

#include <algorithm>

namespace lineage::simd::detail {

namespace {

// vpadalq_u16 adds two products (<= 2 * 255^2) per u32 lane per 8 bytes.
constexpr std::size_t kFlushBytes = std::size_t{1} << 16;

}  // namespace

std::uint64_t dot_u8_neon(const std::uint8_t* a, const std::uint8_t* b, std::size_t n) {
  std::uint64_t total = 0;
  while (n >= 16) {
    const std::size_t block = std::min(n, kFlushBytes) & ~std::size_t{15};
    uint32x4_t acc = vdupq_n_u32(0);
    for (std::size_t i = 0; i < block; i += 16) {
      const uint8x16_t va = vld1q_u8(a + i);
      const uint8x16_t vb = vld1q_u8(b + i);
      acc = vpadalq_u16(acc, vmull_u8(vget_low_u8(va), vget_low_u8(vb)));
      acc = vpadalq_u16(acc, vmull_u8(vget_high_u8(va), vget_high_u8(vb)));
    }
    total += vaddlvq_u32(acc);
    a += block;
    b += block;
    n -= block;
  }
  for (std::size_t i = 0; i < n; ++i) total += static_cast<std::uint32_t>(a[i]) * b[i];
  return total;
}

Moments moments_u8_neon(const std::uint8_t* a, std::size_t n) {
  Moments m;
  while (n >= 16) {
    const std::size_t block = std::min(n, kFlushBytes) & ~std::size_t{15};
    uint32x4_t sum = vdupq_n_u32(0);
    uint32x4_t sq = vdupq_n_u32(0);
    for (std::size_t i = 0; i < block; i += 16) {
      const uint8x16_t va = vld1q_u8(a + i);
      sum = vpadalq_u16(sum, vpaddlq_u8(va));
      sq = vpadalq_u16(sq, vmull_u8(vget_low_u8(va), vget_low_u8(va)));
      sq = vpadalq_u16(sq, vmull_u8(vget_high_u8(va), vget_high_u8(va)));
    }
    m.sum += vaddlvq_u32(sum);
    m.sum_sq += vaddlvq_u32(sq);
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
