#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace fleeg::kernels {

// The row primitives every hot loop in the engine reduces to.
//
// All variants of a primitive perform the same floating-point operations in
// the same per-element order, and every multiply-accumulate is fused (scalar
// std::fma rounds identically to vector fmadd), so scalar and SIMD backends
// produce bit-identical results. SIMD variants vectorize across independent
// output elements only -- never with horizontal reductions.
//
//   acc_scaled:     out[i] += c * in[i]
//
//   conv_acc_rows:  out[x] += sum_{r,t} taps[r*taps_stride + t] * in[r*in_stride + x + t]
//     Per output element, rows accumulate into two interleaved partials (even
//     rows and odd rows, natural order within each, t ascending inside a row)
//     folded once at the end; a single row uses one plain chain. The split is
//     part of the contract: it doubles the number of independent FMA chains.
//
//   grad_taps_rows: taps[r*taps_stride + t] += sum_x go[x] * in[r*in_stride + x + t]
//     x ascending per tap element.
//
//   dot8_rows:      out[r] += sum_i a[i] * b[r*b_stride + i]
//   row_sum8:       sum_i a[i]
//     Reductions keep eight interleaved partials (index mod 8) folded in
//     ascending order; the fixed interleave maps exactly onto vector lanes.
struct Backend {
    const char* name;
    void (*acc_scaled)(double* out, const double* in, double c, std::size_t n);
    void (*conv_acc_rows)(double* out, const double* in, std::size_t in_stride,
                          const double* taps, std::size_t taps_stride, std::size_t nrows,
                          std::size_t ntaps, std::size_t n);
    void (*grad_taps_rows)(double* taps, std::size_t taps_stride, const double* in,
                           std::size_t in_stride, const double* go, std::size_t nrows,
                           std::size_t ntaps, std::size_t n_out);
    void (*dot8_rows)(double* out, const double* a, const double* b, std::size_t b_stride,
                      std::size_t nrows, std::size_t n);
    double (*row_sum8)(const double* a, std::size_t n);
};

const Backend& scalar_backend();

// Backends compiled for this target; first entry is the preferred one.
// Runtime CPU detection filters out ISAs the machine cannot execute.
std::vector<const Backend*> available_backends();

// Active backend used by the tensor engine. Selected once at startup: the
// widest supported ISA, unless overridden by set_backend or the FLEEG_KERNELS
// environment variable (scalar | avx2 | avx512 | neon).
const Backend& active();
void set_backend(const std::string& name);

}  // namespace fleeg::kernels
