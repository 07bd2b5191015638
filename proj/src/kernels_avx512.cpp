#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include "fleeg/kernels.hpp"

// AVX-512F variants. Vectorization is across independent output elements with
// one fused multiply-add per tap; ragged edges use masked loads/stores, which
// keeps the per-element operation sequence identical to the scalar backend.
// Tile and row counts are template parameters so the accumulators stay in
// registers across the whole sweep and the FMA latency chains overlap.

namespace fleeg::kernels {

namespace {

inline __mmask8 lanes_mask(std::size_t active) {
    return static_cast<__mmask8>(active >= 8 ? 0xff : (1u << active) - 1);
}

void acc_scaled_avx512(double* out, const double* in, double c, std::size_t n) {
    const __m512d cv = _mm512_set1_pd(c);
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        __m512d a0 = _mm512_fmadd_pd(cv, _mm512_loadu_pd(in + i), _mm512_loadu_pd(out + i));
        __m512d a1 =
            _mm512_fmadd_pd(cv, _mm512_loadu_pd(in + i + 8), _mm512_loadu_pd(out + i + 8));
        _mm512_storeu_pd(out + i, a0);
        _mm512_storeu_pd(out + i + 8, a1);
    }
    for (; i + 8 <= n; i += 8)
        _mm512_storeu_pd(out + i,
                         _mm512_fmadd_pd(cv, _mm512_loadu_pd(in + i), _mm512_loadu_pd(out + i)));
    if (i < n) {
        const __mmask8 m = lanes_mask(n - i);
        __m512d a = _mm512_fmadd_pd(cv, _mm512_maskz_loadu_pd(m, in + i),
                                    _mm512_maskz_loadu_pd(m, out + i));
        _mm512_mask_storeu_pd(out + i, m, a);
    }
}

// One super-block of TILES*8 outputs starting at out+x0; the last tile may be
// partial (mask mlast).
template <int TILES>
void conv_block(double* out, const double* in, std::size_t in_stride, const double* taps,
                std::size_t taps_stride, std::size_t nrows, std::size_t ntaps, __mmask8 mlast) {
    __m512d even[TILES], odd[TILES];
    for (int j = 0; j < TILES; ++j) {
        even[j] = j == TILES - 1 ? _mm512_maskz_loadu_pd(mlast, out + 8 * j)
                                 : _mm512_loadu_pd(out + 8 * j);
        odd[j] = _mm512_setzero_pd();
    }
    for (std::size_t r = 0; r < nrows; ++r) {
        __m512d* acc = (nrows >= 2 && (r & 1)) ? odd : even;
        const double* ip = in + r * in_stride;
        const double* tp = taps + r * taps_stride;
        for (std::size_t t = 0; t < ntaps; ++t) {
            const __m512d k = _mm512_set1_pd(tp[t]);
            for (int j = 0; j < TILES; ++j) {
                const __m512d v = j == TILES - 1 ? _mm512_maskz_loadu_pd(mlast, ip + t + 8 * j)
                                                 : _mm512_loadu_pd(ip + t + 8 * j);
                acc[j] = _mm512_fmadd_pd(k, v, acc[j]);
            }
        }
    }
    for (int j = 0; j < TILES; ++j) {
        const __m512d res = nrows >= 2 ? _mm512_add_pd(even[j], odd[j]) : even[j];
        if (j == TILES - 1)
            _mm512_mask_storeu_pd(out + 8 * j, mlast, res);
        else
            _mm512_storeu_pd(out + 8 * j, res);
    }
}

void conv_acc_rows_avx512(double* out, const double* in, std::size_t in_stride,
                          const double* taps, std::size_t taps_stride, std::size_t nrows,
                          std::size_t ntaps, std::size_t n) {
    for (std::size_t x0 = 0; x0 < n; x0 += 32) {
        const std::size_t active = n - x0 < 32 ? n - x0 : 32;
        const std::size_t tiles = (active + 7) / 8;
        const __mmask8 mlast = lanes_mask(active - 8 * (tiles - 1));
        switch (tiles) {
            case 1:
                conv_block<1>(out + x0, in + x0, in_stride, taps, taps_stride, nrows, ntaps,
                              mlast);
                break;
            case 2:
                conv_block<2>(out + x0, in + x0, in_stride, taps, taps_stride, nrows, ntaps,
                              mlast);
                break;
            case 3:
                conv_block<3>(out + x0, in + x0, in_stride, taps, taps_stride, nrows, ntaps,
                              mlast);
                break;
            default:
                conv_block<4>(out + x0, in + x0, in_stride, taps, taps_stride, nrows, ntaps,
                              mlast);
                break;
        }
    }
}

// R rows' tap tiles held in registers across the x sweep; TILES covers up to
// 24 taps per pass.
template <int R, int TILES>
void grad_block(double* taps, std::size_t taps_stride, const double* in, std::size_t in_stride,
                const double* go, std::size_t ntaps_active, std::size_t n_out) {
    const __mmask8 mlast = lanes_mask(ntaps_active - 8 * (TILES - 1));
    __m512d acc[R][TILES];
    for (int r = 0; r < R; ++r)
        for (int j = 0; j < TILES; ++j)
            acc[r][j] = j == TILES - 1
                            ? _mm512_maskz_loadu_pd(mlast, taps + r * taps_stride + 8 * j)
                            : _mm512_loadu_pd(taps + r * taps_stride + 8 * j);
    for (std::size_t x = 0; x < n_out; ++x) {
        const __m512d c = _mm512_set1_pd(go[x]);
        for (int r = 0; r < R; ++r) {
            const double* p = in + r * in_stride + x;
            for (int j = 0; j < TILES; ++j) {
                const __m512d v = j == TILES - 1 ? _mm512_maskz_loadu_pd(mlast, p + 8 * j)
                                                 : _mm512_loadu_pd(p + 8 * j);
                acc[r][j] = _mm512_fmadd_pd(c, v, acc[r][j]);
            }
        }
    }
    for (int r = 0; r < R; ++r)
        for (int j = 0; j < TILES; ++j)
            if (j == TILES - 1)
                _mm512_mask_storeu_pd(taps + r * taps_stride + 8 * j, mlast, acc[r][j]);
            else
                _mm512_storeu_pd(taps + r * taps_stride + 8 * j, acc[r][j]);
}

template <int TILES>
void grad_rows_dispatch(double* taps, std::size_t taps_stride, const double* in,
                        std::size_t in_stride, const double* go, std::size_t nrows,
                        std::size_t ntaps_active, std::size_t n_out) {
    std::size_t r0 = 0;
    for (; r0 + 4 <= nrows; r0 += 4)
        grad_block<4, TILES>(taps + r0 * taps_stride, taps_stride, in + r0 * in_stride,
                             in_stride, go, ntaps_active, n_out);
    switch (nrows - r0) {
        case 1:
            grad_block<1, TILES>(taps + r0 * taps_stride, taps_stride, in + r0 * in_stride,
                                 in_stride, go, ntaps_active, n_out);
            break;
        case 2:
            grad_block<2, TILES>(taps + r0 * taps_stride, taps_stride, in + r0 * in_stride,
                                 in_stride, go, ntaps_active, n_out);
            break;
        case 3:
            grad_block<3, TILES>(taps + r0 * taps_stride, taps_stride, in + r0 * in_stride,
                                 in_stride, go, ntaps_active, n_out);
            break;
        default:
            break;
    }
}

void grad_taps_rows_avx512(double* taps, std::size_t taps_stride, const double* in,
                           std::size_t in_stride, const double* go, std::size_t nrows,
                           std::size_t ntaps, std::size_t n_out) {
    for (std::size_t t0 = 0; t0 < ntaps; t0 += 24) {
        const std::size_t tcount = ntaps - t0 < 24 ? ntaps - t0 : 24;
        const std::size_t tiles = (tcount + 7) / 8;
        if (tiles == 1)
            grad_rows_dispatch<1>(taps + t0, taps_stride, in + t0, in_stride, go, nrows, tcount,
                                  n_out);
        else if (tiles == 2)
            grad_rows_dispatch<2>(taps + t0, taps_stride, in + t0, in_stride, go, nrows, tcount,
                                  n_out);
        else
            grad_rows_dispatch<3>(taps + t0, taps_stride, in + t0, in_stride, go, nrows, tcount,
                                  n_out);
    }
}

double fold8(const double* s) {
    double r = s[0];
    for (int j = 1; j < 8; ++j) r += s[j];
    return r;
}

template <int R>
void dot_block(double* out, const double* a, const double* b, std::size_t b_stride,
               std::size_t n) {
    __m512d acc[R];
    for (int r = 0; r < R; ++r) acc[r] = _mm512_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m512d va = _mm512_loadu_pd(a + i);
        for (int r = 0; r < R; ++r)
            acc[r] = _mm512_fmadd_pd(va, _mm512_loadu_pd(b + r * b_stride + i), acc[r]);
    }
    if (i < n) {
        const __mmask8 m = lanes_mask(n - i);
        const __m512d va = _mm512_maskz_loadu_pd(m, a + i);
        for (int r = 0; r < R; ++r)
            acc[r] = _mm512_fmadd_pd(va, _mm512_maskz_loadu_pd(m, b + r * b_stride + i), acc[r]);
    }
    double s[8];
    for (int r = 0; r < R; ++r) {
        _mm512_storeu_pd(s, acc[r]);
        out[r] += fold8(s);
    }
}

void dot8_rows_avx512(double* out, const double* a, const double* b, std::size_t b_stride,
                      std::size_t nrows, std::size_t n) {
    std::size_t r0 = 0;
    for (; r0 + 4 <= nrows; r0 += 4) dot_block<4>(out + r0, a, b + r0 * b_stride, b_stride, n);
    switch (nrows - r0) {
        case 1: dot_block<1>(out + r0, a, b + r0 * b_stride, b_stride, n); break;
        case 2: dot_block<2>(out + r0, a, b + r0 * b_stride, b_stride, n); break;
        case 3: dot_block<3>(out + r0, a, b + r0 * b_stride, b_stride, n); break;
        default: break;
    }
}

double row_sum8_avx512(const double* a, std::size_t n) {
    __m512d acc = _mm512_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) acc = _mm512_add_pd(acc, _mm512_loadu_pd(a + i));
    if (i < n) acc = _mm512_add_pd(acc, _mm512_maskz_loadu_pd(lanes_mask(n - i), a + i));
    double s[8];
    _mm512_storeu_pd(s, acc);
    return fold8(s);
}

}  // namespace

const Backend& avx512_backend() {
    static const Backend b{"avx512",
                           acc_scaled_avx512,
                           conv_acc_rows_avx512,
                           grad_taps_rows_avx512,
                           dot8_rows_avx512,
                           row_sum8_avx512};
    return b;
}

}  // namespace fleeg::kernels

#endif  // x86_64
