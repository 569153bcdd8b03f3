#include <cstdlib>
#include <string_view>

#include "nsds/kernels.hpp"

namespace nsds::kernels {

#if defined(NSDS_HAVE_AVX2)
const KernelTable& avx2_table();
#endif

const KernelTable* avx2() {
#if defined(NSDS_HAVE_AVX2)
    static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return supported ? &avx2_table() : nullptr;
#else
    return nullptr;
#endif
}

const KernelTable& active() {
    static const KernelTable& selected = [] () -> const KernelTable& {
        const char* env = std::getenv("NSDS_SIMD");
        if (env != nullptr && std::string_view(env) == "scalar") return scalar();
        if (const KernelTable* t = avx2()) return *t;
        return scalar();
    }();
    return selected;
}

}  // namespace nsds::kernels
