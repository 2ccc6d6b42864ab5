#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "kernels_impl.hpp"

namespace lineage::simd {

namespace {

constexpr KernelTable kScalar{Isa::Scalar, detail::dot_u8_scalar, detail::moments_u8_scalar};
#if defined(LINEAGE_HAVE_AVX2)
constexpr KernelTable kAvx2{Isa::Avx2, detail::dot_u8_avx2, detail::moments_u8_avx2};
#endif
#if defined(LINEAGE_HAVE_NEON)
constexpr KernelTable kNeon{Isa::Neon, detail::dot_u8_neon, detail::moments_u8_neon};
#endif

Isa best_isa() {
  if (isa_supported(Isa::Avx2)) return Isa::Avx2;
  if (isa_supported(Isa::Neon)) return Isa::Neon;
  return Isa::Scalar;
}

Isa initial_isa() {
  if (const char* env = std::getenv("LINEAGE_SIMD")) {
    const std::string v(env);
    if (v == "scalar") return Isa::Scalar;
    if (v == "avx2" && isa_supported(Isa::Avx2)) return Isa::Avx2;
    if (v == "neon" && isa_supported(Isa::Neon)) return Isa::Neon;
  }
  return best_isa();
}

std::atomic<const KernelTable*>& active() {
  static std::atomic<const KernelTable*> table{&kernels_for(initial_isa())};
  return table;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
    case Isa::Neon: return "neon";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return true;
    case Isa::Avx2:
#if defined(LINEAGE_HAVE_AVX2)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Isa::Neon:
#if defined(LINEAGE_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& kernels_for(Isa isa) {
  if (!isa_supported(isa)) throw std::runtime_error("SIMD variant not available: " + std::string(isa_name(isa)));
  switch (isa) {
#if defined(LINEAGE_HAVE_AVX2)
    case Isa::Avx2: return kAvx2;
#endif
#if defined(LINEAGE_HAVE_NEON)
    case Isa::Neon: return kNeon;
#endif
    default: return kScalar;
  }
}

const KernelTable& kernels() { return *active().load(std::memory_order_acquire); }

void set_active_isa(Isa isa) { active().store(&kernels_for(isa), std::memory_order_release); }

}  // namespace lineage::simd
