#pragma once

// Integer inner-loop kernels behind a runtime-selected dispatch table.
//
// Every variant computes exact integer sums, so the scalar, AVX2 and NEON
// paths return bit-identical results and callers stay deterministic no
// matter which one the host selects.

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace lineage::simd {

enum class Isa { Scalar, Avx2, Neon };

std::string_view isa_name(Isa isa);

struct Moments {
  std::uint64_t sum = 0;
  std::uint64_t sum_sq = 0;

  friend bool operator==(const Moments&, const Moments&) = default;
};

struct KernelTable {
  Isa isa = Isa::Scalar;
  // sum_i a[i] * b[i]
  std::uint64_t (*dot_u8)(const std::uint8_t* a, const std::uint8_t* b, std::size_t n) = nullptr;
  // sum_i a[i] and sum_i a[i]^2
  Moments (*moments_u8)(const std::uint8_t* a, std::size_t n) = nullptr;
};

/// Compiled in and supported by the running CPU.
bool isa_supported(Isa isa);

/// Best supported table. The LINEAGE_SIMD environment variable
/// (scalar | avx2 | neon) overrides the choice when the ISA is supported.
const KernelTable& kernels();

/// Table for one ISA; throws std::runtime_error when unsupported.
const KernelTable& kernels_for(Isa isa);

/// Pins the table returned by kernels(). Not thread-safe against concurrent
/// kernel lookups; meant for tests and benchmarks.
void set_active_isa(Isa isa);

}  // namespace lineage::simd
