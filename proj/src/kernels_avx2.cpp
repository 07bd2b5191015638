#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include "fleeg/kernels.hpp"

// AVX2+FMA variants, same structure as the AVX-512 backend with 4-wide vectors
// and maskload/maskstore edges.

namespace fleeg::kernels {

namespace {

inline __m256i lanes_mask(std::size_t active) {
    const __m256i lane = _mm256_setr_epi64x(0, 1, 2, 3);
    return _mm256_cmpgt_epi64(_mm256_set1_epi64x(static_cast<long long>(active)), lane);
}

void acc_scaled_avx2(double* out, const double* in, double c, std::size_t n) {
    const __m256d cv = _mm256_set1_pd(c);
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        __m256d a0 = _mm256_fmadd_pd(cv, _mm256_loadu_pd(in + i), _mm256_loadu_pd(out + i));
        __m256d a1 =
            _mm256_fmadd_pd(cv, _mm256_loadu_pd(in + i + 4), _mm256_loadu_pd(out + i + 4));
        __m256d a2 =
            _mm256_fmadd_pd(cv, _mm256_loadu_pd(in + i + 8), _mm256_loadu_pd(out + i + 8));
        __m256d a3 =
            _mm256_fmadd_pd(cv, _mm256_loadu_pd(in + i + 12), _mm256_loadu_pd(out + i + 12));
        _mm256_storeu_pd(out + i, a0);
        _mm256_storeu_pd(out + i + 4, a1);
        _mm256_storeu_pd(out + i + 8, a2);
        _mm256_storeu_pd(out + i + 12, a3);
    }
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i,
                         _mm256_fmadd_pd(cv, _mm256_loadu_pd(in + i), _mm256_loadu_pd(out + i)));
    if (i < n) {
        const __m256i m = lanes_mask(n - i);
        __m256d a = _mm256_fmadd_pd(cv, _mm256_maskload_pd(in + i, m),
                                    _mm256_maskload_pd(out + i, m));
        _mm256_maskstore_pd(out + i, m, a);
    }
}

void conv_acc_rows_avx2(double* out, const double* in, std::size_t in_stride,
                        const double* taps, std::size_t taps_stride, std::size_t nrows,
                        std::size_t ntaps, std::size_t n) {
    for (std::size_t x0 = 0; x0 < n; x0 += 16) {
        const std::size_t active = n - x0 < 16 ? n - x0 : 16;
        const std::size_t tiles = (active + 3) / 4;
        __m256i mk[4];
        for (std::size_t j = 0; j < tiles; ++j)
            mk[j] = lanes_mask(active - 4 * j >= 4 ? 4 : active - 4 * j);

        __m256d even[4], odd[4];
        for (std::size_t j = 0; j < tiles; ++j) {
            even[j] = _mm256_maskload_pd(out + x0 + 4 * j, mk[j]);
            odd[j] = _mm256_setzero_pd();
        }
        for (std::size_t r = 0; r < nrows; ++r) {
            __m256d* acc = (nrows >= 2 && (r & 1)) ? odd : even;
            const double* ip = in + r * in_stride + x0;
            const double* tp = taps + r * taps_stride;
            for (std::size_t t = 0; t < ntaps; ++t) {
                const __m256d k = _mm256_set1_pd(tp[t]);
                for (std::size_t j = 0; j < tiles; ++j)
                    acc[j] = _mm256_fmadd_pd(k, _mm256_maskload_pd(ip + t + 4 * j, mk[j]),
                                             acc[j]);
            }
        }
        for (std::size_t j = 0; j < tiles; ++j) {
            const __m256d res = nrows >= 2 ? _mm256_add_pd(even[j], odd[j]) : even[j];
            _mm256_maskstore_pd(out + x0 + 4 * j, mk[j], res);
        }
    }
}

void grad_taps_rows_avx2(double* taps, std::size_t taps_stride, const double* in,
                         std::size_t in_stride, const double* go, std::size_t nrows,
                         std::size_t ntaps, std::size_t n_out) {
    for (std::size_t t0 = 0; t0 < ntaps; t0 += 12) {
        const std::size_t tcount = ntaps - t0 < 12 ? ntaps - t0 : 12;
        const std::size_t tiles = (tcount + 3) / 4;
        __m256i mk[3];
        for (std::size_t j = 0; j < tiles; ++j)
            mk[j] = lanes_mask(tcount - 4 * j >= 4 ? 4 : tcount - 4 * j);

        for (std::size_t r0 = 0; r0 < nrows; r0 += 4) {
            const std::size_t rcount = nrows - r0 < 4 ? nrows - r0 : 4;
            __m256d acc[4][3];
            for (std::size_t r = 0; r < rcount; ++r)
                for (std::size_t j = 0; j < tiles; ++j)
                    acc[r][j] =
                        _mm256_maskload_pd(taps + (r0 + r) * taps_stride + t0 + 4 * j, mk[j]);
            for (std::size_t x = 0; x < n_out; ++x) {
                const __m256d c = _mm256_set1_pd(go[x]);
                for (std::size_t r = 0; r < rcount; ++r) {
                    const double* p = in + (r0 + r) * in_stride + x + t0;
                    for (std::size_t j = 0; j < tiles; ++j)
                        acc[r][j] =
                            _mm256_fmadd_pd(c, _mm256_maskload_pd(p + 4 * j, mk[j]), acc[r][j]);
                }
            }
            for (std::size_t r = 0; r < rcount; ++r)
                for (std::size_t j = 0; j < tiles; ++j)
                    _mm256_maskstore_pd(taps + (r0 + r) * taps_stride + t0 + 4 * j, mk[j],
                                        acc[r][j]);
        }
    }
}

double fold8(const double* s) {
    double r = s[0];
    for (int j = 1; j < 8; ++j) r += s[j];
    return r;
}

void dot8_rows_avx2(double* out, const double* a, const double* b, std::size_t b_stride,
                    std::size_t nrows, std::size_t n) {
    for (std::size_t r0 = 0; r0 < nrows; r0 += 4) {
        const std::size_t rcount = nrows - r0 < 4 ? nrows - r0 : 4;
        __m256d lo[4], hi[4];
        for (std::size_t r = 0; r < rcount; ++r) {
            lo[r] = _mm256_setzero_pd();
            hi[r] = _mm256_setzero_pd();
        }
        std::size_t i = 0;
        for (; i + 8 <= n; i += 8) {
            const __m256d va0 = _mm256_loadu_pd(a + i);
            const __m256d va1 = _mm256_loadu_pd(a + i + 4);
            for (std::size_t r = 0; r < rcount; ++r) {
                const double* br = b + (r0 + r) * b_stride + i;
                lo[r] = _mm256_fmadd_pd(va0, _mm256_loadu_pd(br), lo[r]);
                hi[r] = _mm256_fmadd_pd(va1, _mm256_loadu_pd(br + 4), hi[r]);
            }
        }
        if (i < n) {
            const std::size_t rem = n - i;
            const __m256i m0 = lanes_mask(rem < 4 ? rem : 4);
            const __m256d va0 = _mm256_maskload_pd(a + i, m0);
            for (std::size_t r = 0; r < rcount; ++r)
                lo[r] = _mm256_fmadd_pd(va0, _mm256_maskload_pd(b + (r0 + r) * b_stride + i, m0),
                                        lo[r]);
            if (rem > 4) {
                const __m256i m1 = lanes_mask(rem - 4);
                const __m256d va1 = _mm256_maskload_pd(a + i + 4, m1);
                for (std::size_t r = 0; r < rcount; ++r)
                    hi[r] = _mm256_fmadd_pd(
                        va1, _mm256_maskload_pd(b + (r0 + r) * b_stride + i + 4, m1), hi[r]);
            }
        }
        double s[8];
        for (std::size_t r = 0; r < rcount; ++r) {
            _mm256_storeu_pd(s, lo[r]);
            _mm256_storeu_pd(s + 4, hi[r]);
            out[r0 + r] += fold8(s);
        }
    }
}

double row_sum8_avx2(const double* a, std::size_t n) {
    __m256d lo = _mm256_setzero_pd();
    __m256d hi = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        lo = _mm256_add_pd(lo, _mm256_loadu_pd(a + i));
        hi = _mm256_add_pd(hi, _mm256_loadu_pd(a + i + 4));
    }
    if (i < n) {
        const std::size_t rem = n - i;
        lo = _mm256_add_pd(lo, _mm256_maskload_pd(a + i, lanes_mask(rem < 4 ? rem : 4)));
        if (rem > 4) hi = _mm256_add_pd(hi, _mm256_maskload_pd(a + i + 4, lanes_mask(rem - 4)));
    }
    double s[8];
    _mm256_storeu_pd(s, lo);
    _mm256_storeu_pd(s + 4, hi);
    return fold8(s);
}

}  // namespace

const Backend& avx2_backend() {
    static const Backend b{"avx2",
                           acc_scaled_avx2,
                           conv_acc_rows_avx2,
                           grad_taps_rows_avx2,
                           dot8_rows_avx2,
                           row_sum8_avx2};
    return b;
}

}  // namespace fleeg::kernels

#endif  // x86_64
