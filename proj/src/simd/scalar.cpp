#include "kernels_impl.hpp"

namespace lineage::simd::detail {

std::uint64_t dot_u8_scalar(const std::uint8_t* a, const std::uint8_t* b, std::size_t n) {
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < n; ++i) s += static_cast<std::uint32_t>(a[i]) * b[i];
  return s;
}

Moments moments_u8_scalar(const std::uint8_t* a, std::size_t n) {
  Moments m;
  for (std::size_t i = 0; i < n; ++i) {
    m.sum += a[i];
    m.sum_sq += static_cast<std::uint32_t>(a[i]) * a[i];
  }
  return m;
}

}  // namespace lineage::simd::detail
