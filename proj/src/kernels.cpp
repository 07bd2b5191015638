#include "fleeg/kernels.hpp"

#include <cstdlib>
#include <stdexcept>

namespace fleeg::kernels {

#if defined(__x86_64__) || defined(_M_X64)
const Backend& avx2_backend();
const Backend& avx512_backend();
#endif
#if defined(__aarch64__)
const Backend& neon_backend();
#endif

std::vector<const Backend*> available_backends() {
    std::vector<const Backend*> v;
#if defined(__x86_64__) || defined(_M_X64)
    if (__builtin_cpu_supports("avx512f") && __builtin_cpu_supports("fma"))
        v.push_back(&avx512_backend());
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
        v.push_back(&avx2_backend());
#endif
#if defined(__aarch64__)
    v.push_back(&neon_backend());
#endif
    v.push_back(&scalar_backend());
    return v;
}

namespace {

const Backend* find_backend(const std::string& name) {
    for (const Backend* b : available_backends())
        if (name == b->name) return b;
    return nullptr;
}

const Backend* select_initial() {
    if (const char* env = std::getenv("FLEEG_KERNELS")) {
        if (const Backend* b = find_backend(env)) return b;
        throw std::runtime_error(std::string("FLEEG_KERNELS=") + env +
                                 " is not available on this machine");
    }
    return available_backends().front();
}

const Backend*& active_slot() {
    static const Backend* b = select_initial();
    return b;
}

}  // namespace

const Backend& active() { return *active_slot(); }

void set_backend(const std::string& name) {
    const Backend* b = find_backend(name);
    if (!b) throw std::runtime_error("kernel backend '" + name + "' is not available");
    active_slot() = b;
}

}  // namespace fleeg::kernels
