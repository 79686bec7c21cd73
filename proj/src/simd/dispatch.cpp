#include <atomic>
#include <cstdlib>
#include <cstring>

#include "hepar/simd/kernels.hpp"

namespace hepar::simd {

namespace {

bool cpu_has_avx2() noexcept {
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

std::atomic<Isa>& active_slot() noexcept {
    static std::atomic<Isa> slot{detect_isa()};
    return slot;
}

}  // namespace

std::string_view to_string(Isa isa) noexcept {
    switch (isa) {
        case Isa::Scalar: return "scalar";
        case Isa::Avx2: return "avx2";
    }
    return "unknown";
}

bool isa_available(Isa isa) noexcept {
    switch (isa) {
        case Isa::Scalar: return true;
        case Isa::Avx2: return cpu_has_avx2();
    }
    return false;
}

Isa detect_isa() noexcept {
    if (const char* env = std::getenv("HEPAR_SIMD"); env && std::strcmp(env, "scalar") == 0) return Isa::Scalar;
    return cpu_has_avx2() ? Isa::Avx2 : Isa::Scalar;
}

Isa active_isa() noexcept { return active_slot().load(std::memory_order_relaxed); }

bool set_active_isa(Isa isa) noexcept {
    if (!isa_available(isa)) return false;
    active_slot().store(isa, std::memory_order_relaxed);
    return true;
}

const KernelTable& kernels_for(Isa isa) noexcept {
#if defined(__x86_64__) || defined(_M_X64)
    if (isa == Isa::Avx2 && cpu_has_avx2()) return avx2_kernels();
#endif
    (void)isa;
    return scalar_kernels();
}

const KernelTable& active_kernels() noexcept { return kernels_for(active_isa()); }

}  // namespace hepar::simd
