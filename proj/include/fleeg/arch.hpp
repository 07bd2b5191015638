#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fleeg/common.hpp"
#include "fleeg/nn.hpp"

namespace fleeg {

// Shape of one client's dataset: C_k channels by T_k samples per trial,
// S_k subjects with a fixed number of trials each.
struct DatasetFormat {
    std::string name;
    int channels = 0;
    double sample_rate = 0.0;
    int trial_samples = 0;
    int subjects = 0;
    int trials_per_subject = 0;
};

struct ConvSpec {
    int num_kernels = 0;
    int kh = 1;
    int kw = 1;
};

using PoolSpec = PoolLayer;

// Format-specific encoder: temporal filter, spatial filter, then two
// conv-pool blocks. Kernel counts are fixed (25/25/50/100); only the temporal
// kernel width, the spatial kernel height (= channels) and the pool widths
// vary per dataset. Applied to (B,1,C,T) it must narrow to (B,100,1,w) with
// w in {30,31,32} -- the unified feature window the shared classifier expects.
struct LocalArch {
    int channels = 0;
    ConvSpec temporal;  // (25, 1, k_t)
    ConvSpec spatial;   // (25, C, 1)
    PoolSpec pool1;
    ConvSpec block3;  // (50, 1, k_t)
    PoolSpec pool2;
    ConvSpec block4;  // (100, 1, k_t)
    PoolSpec pool3;
};

// Format-agnostic classifier: one conv-pool block and a conv head feeding the
// two-class softmax. Identical across all clients by construction.
struct GlobalArch {
    ConvSpec features{200, 1, 10};
    PoolSpec pool{1, 3};
    ConvSpec head{2, 1, 7};
};

inline constexpr int kUnifiedWidthMin = 30;
inline constexpr int kUnifiedWidthMax = 32;

// kt4 lets the final block use a narrower kernel than the first three stages
// (one shipped configuration needs it); 0 means "same as kt".
LocalArch make_local_arch(int channels, int kt, int p1, int p2, int p3, int kt4 = 0);

// Width of the unified feature window, or -1 when some stage underflows.
int local_output_width(const LocalArch& arch, int trial_samples);

// The nine shipped dataset configurations.
std::vector<std::string> table_names();
DatasetFormat table_format(const std::string& name);
std::pair<LocalArch, GlobalArch> build_from_table(const std::string& name);

// Bounded search for an encoder matching an unseen format: k_t in [4,24],
// pools in [1,6]^3, minimizing |w - 31| subject to w in {30,31,32}; ties
// prefer smaller total pooling, then smaller k_t, then lexicographic pools.
LocalArch derive_arch(const DatasetFormat& format);

}  // namespace fleeg
