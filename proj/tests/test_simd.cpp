#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>
#include <vector>

#include "lineage/simd/kernels.hpp"

using namespace lineage::simd;

namespace {

std::uint64_t dot_reference(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b, std::size_t off,
                            std::size_t n) {
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < n; ++i) s += std::uint64_t{a[off + i]} * b[off + i];
  return s;
}

std::vector<Isa> supported() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::Scalar, Isa::Avx2, Isa::Neon}) {
    if (isa_supported(isa)) out.push_back(isa);
  }
  return out;
}

}  // namespace

TEST_CASE("scalar kernels are always available") {
  CHECK(isa_supported(Isa::Scalar));
  CHECK(kernels_for(Isa::Scalar).isa == Isa::Scalar);
  CHECK(isa_name(Isa::Avx2) == "avx2");
}

TEST_CASE("unsupported isa is refused") {
  for (Isa isa : {Isa::Avx2, Isa::Neon}) {
    if (!isa_supported(isa)) CHECK_THROWS(kernels_for(isa));
  }
}

TEST_CASE("every supported variant matches the reference sums exactly") {
  std::mt19937 rng(9);
  std::vector<std::size_t> lengths{0, 1, 2, 7, 15, 16, 17, 31, 32, 33, 63, 64, 65, 150, 255, 1000, 70000, 200003};
  for (int k = 0; k < 40; ++k) lengths.push_back(rng() % 5000);
  for (Isa isa : supported()) {
    CAPTURE(isa_name(isa));
    const KernelTable& t = kernels_for(isa);
    for (std::size_t n : lengths) {
      for (std::size_t off : {std::size_t{0}, std::size_t{1}, std::size_t{5}}) {
        std::vector<std::uint8_t> a(n + off), b(n + off);
        // Saturated inputs stress the widest accumulations.
        const bool extreme = n % 3 == 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
          a[i] = extreme ? 255 : static_cast<std::uint8_t>(rng());
          b[i] = extreme ? 255 : static_cast<std::uint8_t>(rng());
        }
        CAPTURE(n);
        CAPTURE(off);
        CHECK(t.dot_u8(a.data() + off, b.data() + off, n) == dot_reference(a, b, off, n));
        Moments ref;
        for (std::size_t i = 0; i < n; ++i) {
          ref.sum += a[off + i];
          ref.sum_sq += std::uint64_t{a[off + i]} * a[off + i];
        }
        CHECK(t.moments_u8(a.data() + off, n) == ref);
      }
    }
  }
}

TEST_CASE("set_active_isa pins the dispatch table") {
  const Isa before = kernels().isa;
  for (Isa isa : supported()) {
    set_active_isa(isa);
    CHECK(kernels().isa == isa);
  }
  set_active_isa(before);
}
