#include "fleeg/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>

#include "fleeg/dsp.hpp"

namespace fleeg {

Tensor4 TrialStore::trial_tensor(std::size_t i) const {
    auto v = trial_view(i);
    return Tensor4(1, 1, format.channels, format.trial_samples,
                   std::vector<double>(v.begin(), v.end()));
}

Tensor4 TrialStore::gather_batch(std::span<const std::size_t> indices) const {
    Tensor4 batch = Tensor4::zeros(static_cast<int>(indices.size()), 1, format.channels,
                                   format.trial_samples);
    const std::size_t len = trial_len();
    for (std::size_t i = 0; i < indices.size(); ++i)
        std::memcpy(batch.data() + i * len, values.data() + indices[i] * len,
                    len * sizeof(double));
    return batch;
}

void TrialStore::validate(const char* what) const {
    if (format.channels < 1 || format.trial_samples < 1)
        throw ContractError(std::string(what) + ": empty trial format");
    if (subject.size() != label.size() || values.size() != subject.size() * trial_len())
        throw ContractError(std::string(what) + ": trial array sizes disagree");
    const int S = format.subjects;
    std::vector<std::uint8_t> seen(static_cast<std::size_t>(S) * 2, 0);
    for (std::size_t i = 0; i < subject.size(); ++i) {
        if (subject[i] < 0 || subject[i] >= S)
            throw ContractError(std::string(what) + ": trial " + std::to_string(i) +
                                " has subject " + std::to_string(subject[i]) +
                                " outside 0.." + std::to_string(S - 1));
        if (label[i] > 1)
            throw ContractError(std::string(what) + ": label outside {0,1}");
        seen[subject[i] * 2 + label[i]] = 1;
    }
    for (int s = 0; s < S; ++s)
        if (!seen[s * 2] || !seen[s * 2 + 1])
            throw ContractError(std::string(what) + ": subject " + std::to_string(s) +
                                " is missing one of the two classes");
}

namespace {

// Voss-McCartney style pink-ish noise: octave layers of uniform noise held
// over 2^j samples, addressed by (seed, subject, trial, channel, layer, t>>j)
// so trials are independent of generation order.
double pink_sample(std::uint64_t base, int t) {
    double acc = 0.0;
    for (int j = 0; j < 6; ++j) {
        Rng r(mix_key(base, {std::uint64_t(j), std::uint64_t(t >> j)}));
        acc += r.uniform(-1.0, 1.0);
    }
    return acc / std::sqrt(2.0);  // six layers of var 1/3 -> unit variance
}

}  // namespace

TrialStore generate(const SynthSpec& spec) {
    const DatasetFormat& f = spec.format;
    for (const auto* set : {&spec.class0_channels, &spec.class1_channels})
        for (int c : *set)
            if (c < 0 || c >= f.channels)
                throw ContractError("generate(" + f.name + "): informative channel " +
                                    std::to_string(c) + " outside 0.." +
                                    std::to_string(f.channels - 1));
    if (spec.erd_depth < 0.0 || spec.noise < 0.0)
        throw ContractError("generate(" + f.name + "): depth and noise must be >= 0");

    TrialStore store;
    store.format = f;
    store.provenance = "synth seed " + std::to_string(spec.seed);
    const std::size_t n = std::size_t(f.subjects) * f.trials_per_subject;
    store.subject.resize(n);
    store.label.resize(n);
    store.values.resize(n * store.trial_len());

    std::vector<std::uint8_t> informative(std::size_t(f.channels) * 2, 0);
    for (int c : spec.class0_channels) informative[c * 2] = 1;
    for (int c : spec.class1_channels) informative[c * 2 + 1] = 1;

    for (int s = 0; s < f.subjects; ++s) {
        Rng subj_rng(mix_key(spec.seed, {0x73756266u, std::uint64_t(s)}));
        const double gain = std::max(0.1, 1.0 + spec.subject_jitter * subj_rng.normal());
        const double subj_phase = subj_rng.uniform(0.0, 2.0 * M_PI);

        for (int k = 0; k < f.trials_per_subject; ++k) {
            const std::size_t idx = std::size_t(s) * f.trials_per_subject + k;
            const int y = k % 2;  // both classes present per subject
            store.subject[idx] = s;
            store.label[idx] = static_cast<std::uint8_t>(y);

            Rng trial_rng(mix_key(spec.seed, {0x7472696cu, std::uint64_t(s), std::uint64_t(k)}));
            const double phase = subj_phase + trial_rng.uniform(0.0, 2.0 * M_PI);
            double* out = store.values.data() + idx * store.trial_len();
            for (int c = 0; c < f.channels; ++c) {
                const double amp =
                    gain * (informative[c * 2 + y] ? 1.0 - spec.erd_depth : 1.0);
                const std::uint64_t noise_key =
                    mix_key(spec.seed, {0x6e6f6973u, std::uint64_t(s), std::uint64_t(k),
                                        std::uint64_t(c)});
                const double w = 2.0 * M_PI * spec.rhythm_hz / f.sample_rate;
                for (int t = 0; t < f.trial_samples; ++t)
                    out[std::size_t(c) * f.trial_samples + t] =
                        amp * std::sin(w * t + phase) +
                        spec.noise * pink_sample(noise_key, t);
            }
        }
    }
    store.validate("generate");
    return store;
}

TrialStore bandpass(const TrialStore& store, double low_hz, double high_hz) {
    // Stop-band acceptance drives the order: with forward-backward application
    // seven sections put a 50 Hz probe well under 5% residual RMS.
    const auto sos = butter_bandpass(7, low_hz, high_hz, store.format.sample_rate);
    TrialStore out = store;
    const int T = store.format.trial_samples;
    for (std::size_t i = 0; i < out.n_trials(); ++i) {
        double* trial = out.values.data() + i * out.trial_len();
        for (int c = 0; c < store.format.channels; ++c) {
            std::span<const double> row(trial + std::size_t(c) * T, std::size_t(T));
            const std::vector<double> filtered = sosfiltfilt(sos, row);
            std::copy(filtered.begin(), filtered.end(), trial + std::size_t(c) * T);
        }
    }
    return out;
}

TrialStore decimate(const TrialStore& store, int factor) {
    if (factor < 1) throw ContractError("decimate: factor must be >= 1");
    if (factor == 1) return store;
    const int T = store.format.trial_samples;
    const int new_t = (T + factor - 1) / factor;
    if (new_t < 120)
        throw ContractError("decimate: factor " + std::to_string(factor) + " leaves only " +
                            std::to_string(new_t) + " samples (< 120)");
    TrialStore out;
    out.format = store.format;
    out.format.trial_samples = new_t;
    out.format.sample_rate = store.format.sample_rate / factor;
    out.subject = store.subject;
    out.label = store.label;
    out.provenance = store.provenance;
    out.values.resize(store.n_trials() * out.trial_len());
    for (std::size_t i = 0; i < store.n_trials(); ++i) {
        const double* src = store.values.data() + i * store.trial_len();
        double* dst = out.values.data() + i * out.trial_len();
        for (int c = 0; c < store.format.channels; ++c)
            for (int t = 0; t < new_t; ++t)
                dst[std::size_t(c) * new_t + t] = src[std::size_t(c) * T + t * factor];
    }
    return out;
}

FoldAssignment plan_fold_for(const TrialStore& store, std::uint64_t seed, int fold,
                             std::size_t client_index) {
    if (store.format.subjects < 2)
        throw ContractError("plan_folds(" + store.format.name +
                            "): need at least 2 subjects for leave-one-out");
    FoldAssignment a;
    a.held_out_subject = fold % store.format.subjects;

    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < store.n_trials(); ++i)
        if (store.subject[i] != a.held_out_subject) pool.push_back(i);
    // fold-keyed shuffle; validation is the last tenth (at least one)
    Rng rng(mix_key(seed, {0x666f6c64u, std::uint64_t(fold), client_index}));
    for (std::size_t i = pool.size(); i > 1; --i)
        std::swap(pool[i - 1], pool[rng.bounded(i)]);
    std::size_t n_val = std::max<std::size_t>(1, pool.size() / 10);
    if (n_val >= pool.size()) n_val = pool.size() - 1;
    a.train_idx.assign(pool.begin(), pool.end() - n_val);
    a.val_idx.assign(pool.end() - n_val, pool.end());
    if (a.train_idx.empty())
        throw ContractError("plan_folds(" + store.format.name + "): empty training partition");
    return a;
}

std::vector<FoldPlan> plan_folds(std::span<const TrialStore> stores, std::uint64_t seed) {
    int folds = 0;
    for (const TrialStore& s : stores) {
        if (s.format.subjects < 2)
            throw ContractError("plan_folds(" + s.format.name +
                                "): need at least 2 subjects for leave-one-out");
        folds = std::max(folds, s.format.subjects);
    }
    std::vector<FoldPlan> plans(folds);
    for (int f = 0; f < folds; ++f) {
        plans[f].fold = f;
        plans[f].clients.resize(stores.size());
        for (std::size_t k = 0; k < stores.size(); ++k)
            plans[f].clients[k] = plan_fold_for(stores[k], seed, f, k);
    }
    return plans;
}

namespace {

constexpr char kTrialMagic[4] = {'F', 'T', 'R', '1'};

struct FileCloser {
    std::FILE* f;
    ~FileCloser() {
        if (f) std::fclose(f);
    }
};

void write_raw(std::FILE* f, const void* p, std::size_t n, const std::string& path) {
    if (std::fwrite(p, 1, n, f) != n) throw Error("save_trials: short write to " + path);
}

void read_raw(std::FILE* f, void* p, std::size_t n, const std::string& path) {
    if (std::fread(p, 1, n, f) != n)
        throw CodecError("load_trials: truncated file " + path);
}

}  // namespace

void save_trials(const TrialStore& store, const std::string& path) {
    store.validate("save_trials");
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw Error("save_trials: cannot open " + path);
    FileCloser closer{f};
    write_raw(f, kTrialMagic, 4, path);
    const std::uint32_t c = store.format.channels, t = store.format.trial_samples;
    const double rate = store.format.sample_rate;
    const std::uint32_t n = static_cast<std::uint32_t>(store.n_trials());
    write_raw(f, &c, 4, path);
    write_raw(f, &t, 4, path);
    write_raw(f, &rate, 8, path);
    write_raw(f, &n, 4, path);
    for (std::size_t i = 0; i < store.n_trials(); ++i) {
        const std::uint32_t subj = static_cast<std::uint32_t>(store.subject[i]);
        write_raw(f, &subj, 4, path);
        write_raw(f, &store.label[i], 1, path);
        write_raw(f, store.values.data() + i * store.trial_len(),
                  store.trial_len() * sizeof(double), path);
    }
}

TrialStore load_trials(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw Error("load_trials: cannot open " + path);
    FileCloser closer{f};
    char magic[4];
    read_raw(f, magic, 4, path);
    if (std::memcmp(magic, kTrialMagic, 4) != 0)
        throw CodecError("load_trials: bad magic in " + path);
    std::uint32_t c, t, n;
    double rate;
    read_raw(f, &c, 4, path);
    read_raw(f, &t, 4, path);
    read_raw(f, &rate, 8, path);
    read_raw(f, &n, 4, path);
    if (c < 1 || t < 1 || c > 4096 || t > (1u << 22))
        throw CodecError("load_trials: implausible header in " + path);

    TrialStore store;
    store.format.name = path;
    store.format.channels = static_cast<int>(c);
    store.format.trial_samples = static_cast<int>(t);
    store.format.sample_rate = rate;
    store.provenance = "file " + path;
    store.subject.resize(n);
    store.label.resize(n);
    store.values.resize(std::size_t(n) * c * t);
    int max_subject = -1;
    for (std::uint32_t i = 0; i < n; ++i) {
        std::uint32_t subj;
        read_raw(f, &subj, 4, path);
        read_raw(f, &store.label[i], 1, path);
        read_raw(f, store.values.data() + std::size_t(i) * c * t, std::size_t(c) * t * 8, path);
        store.subject[i] = static_cast<int>(subj);
        max_subject = std::max(max_subject, store.subject[i]);
        for (std::size_t v = 0; v < std::size_t(c) * t; ++v)
            if (!std::isfinite(store.values[std::size_t(i) * c * t + v]))
                throw CodecError("load_trials: non-finite sample in " + path);
    }
    // anything left over means the header undercounted
    char extra;
    if (std::fread(&extra, 1, 1, f) == 1)
        throw CodecError("load_trials: trailing bytes in " + path);
    store.format.subjects = max_subject + 1;
    store.format.trials_per_subject =
        n > 0 ? static_cast<int>(std::count(store.subject.begin(), store.subject.end(), 0)) : 0;
    store.validate("load_trials");
    return store;
}

}  // namespace fleeg
