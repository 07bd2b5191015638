#include "fleeg/arch.hpp"

#include <array>

namespace fleeg {

LocalArch make_local_arch(int channels, int kt, int p1, int p2, int p3, int kt4) {
    LocalArch a;
    a.channels = channels;
    a.temporal = {25, 1, kt};
    a.spatial = {25, channels, 1};
    a.pool1 = {1, p1};
    a.block3 = {50, 1, kt};
    a.pool2 = {1, p2};
    a.block4 = {100, 1, kt4 > 0 ? kt4 : kt};
    a.pool3 = {1, p3};
    return a;
}

int local_output_width(const LocalArch& a, int trial_samples) {
    int w = trial_samples - a.temporal.kw + 1;  // temporal conv
    if (w < 1) return -1;                       // spatial conv leaves width alone
    w /= a.pool1.pw;
    w = w - a.block3.kw + 1;
    if (w < 1) return -1;
    w /= a.pool2.pw;
    w = w - a.block4.kw + 1;
    if (w < 1) return -1;
    w /= a.pool3.pw;
    return w >= 1 ? w : -1;
}

namespace {

struct TableRow {
    const char* name;
    int channels;
    double sample_rate;
    int trial_samples;
    int subjects;
    int trials_per_subject;
    int kt, p1, p2, p3;
    int kt4;  // 0: same as kt
};

// Trial windows are chosen so every row reproduces its fixed unified feature
// width exactly (KU/Shin2017 are the post-decimation rates and lengths).
constexpr std::array<TableRow, 9> kTable{{
    {"KU", 62, 250.0, 1000, 54, 400, 10, 3, 3, 3, 0},          // -> (100,1,32)
    {"SHU", 32, 250.0, 1000, 25, 500, 10, 3, 3, 3, 0},         // -> (100,1,32)
    {"Shin2017", 30, 200.0, 2000, 29, 60, 8, 5, 4, 3, 0},      // -> (100,1,30)
    {"BCI-IV-2a", 22, 250.0, 1000, 9, 288, 10, 3, 3, 3, 0},    // -> (100,1,32)
    {"Weibo2014", 60, 200.0, 620, 10, 158, 8, 2, 3, 3, 0},     // -> (100,1,30)
    {"MunichMI", 128, 250.0, 1750, 10, 300, 10, 4, 4, 3, 0},   // -> (100,1,32)
    {"HGD", 128, 500.0, 2000, 14, 482, 20, 6, 3, 3, 10},       // -> (100,1,31)
    {"Cho2017", 64, 512.0, 1536, 52, 190, 22, 4, 3, 3, 0},     // -> (100,1,32)
    {"Murat2018", 22, 200.0, 200, 11, 1593, 6, 1, 2, 3, 0},    // -> (100,1,30)
}};

const TableRow& find_row(const std::string& name) {
    for (const auto& r : kTable)
        if (name == r.name) return r;
    std::string valid;
    for (const auto& r : kTable) {
        if (!valid.empty()) valid += ", ";
        valid += r.name;
    }
    throw ContractError("unknown dataset '" + name + "'; valid names: " + valid);
}

}  // namespace

std::vector<std::string> table_names() {
    std::vector<std::string> v;
    for (const auto& r : kTable) v.emplace_back(r.name);
    return v;
}

DatasetFormat table_format(const std::string& name) {
    const TableRow& r = find_row(name);
    return DatasetFormat{r.name, r.channels, r.sample_rate, r.trial_samples, r.subjects,
                         r.trials_per_subject};
}

std::pair<LocalArch, GlobalArch> build_from_table(const std::string& name) {
    const TableRow& r = find_row(name);
    return {make_local_arch(r.channels, r.kt, r.p1, r.p2, r.p3, r.kt4), GlobalArch{}};
}

LocalArch derive_arch(const DatasetFormat& format) {
    constexpr int kKtMin = 4, kKtMax = 24, kPoolMin = 1, kPoolMax = 6;
    constexpr int kMinSamples = 120;
    const auto fail = [&](const std::string& why) {
        throw ContractError("derive_arch(" + format.name + "): " + why + "; searched k_t in [" +
                            std::to_string(kKtMin) + "," + std::to_string(kKtMax) +
                            "], pools in [" + std::to_string(kPoolMin) + "," +
                            std::to_string(kPoolMax) + "]^3");
    };
    if (format.channels < 1) fail("channels must be >= 1");
    if (format.trial_samples < kMinSamples)
        fail("trial_samples=" + std::to_string(format.trial_samples) +
             " below supported minimum " + std::to_string(kMinSamples) +
             ", no feasible configuration");

    // key: (|w-31|, p1+p2+p3, k_t, (p1,p2,p3))
    bool found = false;
    std::array<int, 7> best{};  // dist, psum, kt, p1, p2, p3, w
    LocalArch cand;
    for (int kt = kKtMin; kt <= kKtMax; ++kt)
        for (int p1 = kPoolMin; p1 <= kPoolMax; ++p1)
            for (int p2 = kPoolMin; p2 <= kPoolMax; ++p2)
                for (int p3 = kPoolMin; p3 <= kPoolMax; ++p3) {
                    cand = make_local_arch(format.channels, kt, p1, p2, p3);
                    const int w = local_output_width(cand, format.trial_samples);
                    if (w < kUnifiedWidthMin || w > kUnifiedWidthMax) continue;
                    const std::array<int, 7> key{std::abs(w - 31), p1 + p2 + p3, kt,
                                                 p1, p2, p3, w};
                    if (!found || key < best) {
                        best = key;
                        found = true;
                    }
                }
    if (!found)
        fail("no configuration reaches unified width in [" + std::to_string(kUnifiedWidthMin) +
             "," + std::to_string(kUnifiedWidthMax) + "] for trial_samples=" +
             std::to_string(format.trial_samples));
    return make_local_arch(format.channels, best[2], best[3], best[4], best[5]);
}

}  // namespace fleeg
