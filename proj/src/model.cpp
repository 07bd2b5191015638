#include "fleeg/model.hpp"

#include <cmath>
#include <cstdio>

namespace fleeg {

namespace {

ConvLayer init_conv(const ConvSpec& spec, int in_maps, std::uint64_t key) {
    ConvLayer l;
    l.kernels = Tensor4::zeros(spec.num_kernels, in_maps, spec.kh, spec.kw);
    l.bias.assign(spec.num_kernels, 0.0);
    const double fan_in = double(in_maps) * spec.kh * spec.kw;
    const double fan_out = double(spec.num_kernels) * spec.kh * spec.kw;
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Rng rng(key);
    for (double& v : l.kernels.values()) v = rng.uniform(-limit, limit);
    return l;
}

void append_entries(WeightSet& ws, const std::string& name, const ConvLayer& l) {
    ws.entries.push_back({name + ".weight", l.kernels.dims(), l.kernels.values()});
    ws.entries.push_back({name + ".bias",
                          {static_cast<int>(l.bias.size()), 1, 1, 1},
                          l.bias});
}

struct NamedLayer {
    const char* name;
    ConvLayer* layer;
};

std::array<NamedLayer, 6> layer_list(PersonalizedModel& m) {
    return {{{"local.conv_temporal", &m.conv_temporal},
             {"local.conv_spatial", &m.conv_spatial},
             {"local.conv_block3", &m.conv_block3},
             {"local.conv_block4", &m.conv_block4},
             {"global.conv_features", &m.conv_features},
             {"global.conv_head", &m.conv_head}}};
}

void load_entries(PersonalizedModel& m, const WeightSet& ws, std::size_t first_layer,
                  std::size_t n_layers, const char* what) {
    WeightSet expected;
    auto layers = layer_list(m);
    for (std::size_t i = first_layer; i < first_layer + n_layers; ++i)
        append_entries(expected, layers[i].name, *layers[i].layer);
    expected.require_compatible(ws, what);
    std::size_t e = 0;
    for (std::size_t i = first_layer; i < first_layer + n_layers; ++i) {
        layers[i].layer->kernels.values() = ws.entries[e++].values;
        layers[i].layer->bias = ws.entries[e++].values;
    }
}

}  // namespace

PersonalizedModel build_model(const DatasetFormat& format, const LocalArch& larch,
                              std::uint64_t seed, std::uint32_t fold, std::uint32_t client_id) {
    const int w = local_output_width(larch, format.trial_samples);
    if (w < kUnifiedWidthMin || w > kUnifiedWidthMax)
        throw ShapeError("build_model(" + format.name + "): unified feature width " +
                         std::to_string(w) + " outside [" + std::to_string(kUnifiedWidthMin) +
                         "," + std::to_string(kUnifiedWidthMax) + "]");
    PersonalizedModel m;
    m.format = format;
    m.larch = larch;
    m.garch = GlobalArch{};
    const auto key = [&](std::uint32_t owner, std::uint64_t layer) {
        return mix_key(seed, {fold, owner, layer});
    };
    m.conv_temporal = init_conv(larch.temporal, 1, key(client_id, 0));
    m.conv_spatial = init_conv(larch.spatial, 25, key(client_id, 1));
    m.conv_block3 = init_conv(larch.block3, 25, key(client_id, 2));
    m.conv_block4 = init_conv(larch.block4, 50, key(client_id, 3));
    m.conv_features = init_conv(m.garch.features, 100, key(kServerId, 4));
    m.conv_head = init_conv(m.garch.head, 200, key(kServerId, 5));
    return m;
}

PersonalizedModel build_model(const DatasetFormat& format, std::uint64_t seed,
                              std::uint32_t fold, std::uint32_t client_id) {
    return build_model(format, derive_arch(format), seed, fold, client_id);
}

WeightSet make_global_weightset(std::uint64_t seed, std::uint32_t fold) {
    const GlobalArch g;
    WeightSet ws;
    append_entries(ws, "global.conv_features",
                   init_conv(g.features, 100, mix_key(seed, {fold, kServerId, 4})));
    append_entries(ws, "global.conv_head",
                   init_conv(g.head, 200, mix_key(seed, {fold, kServerId, 5})));
    return ws;
}

Tensor4 forward(const PersonalizedModel& model, const Tensor4& batch, ModelTape* tape) {
    if (batch.maps() != 1 || batch.height() != model.format.channels ||
        batch.width() != model.format.trial_samples)
        throw ShapeError("forward(" + model.format.name + "): batch " + batch.dims_str() +
                         " does not match expected (B,1," +
                         std::to_string(model.format.channels) + "," +
                         std::to_string(model.format.trial_samples) + ") at local.conv_temporal");
    ModelTape local;
    ModelTape& t = tape ? *tape : local;
    t.used = false;

    Tensor4 x = conv2d_forward(batch, model.conv_temporal, &t.c1, "local.conv_temporal");
    x = conv2d_forward(std::move(x), model.conv_spatial, &t.c2, "local.conv_spatial");
    x = elu_forward(std::move(x), &t.e1);
    x = maxpool_forward(x, model.larch.pool1, &t.p1, "local.pool1");
    x = conv2d_forward(std::move(x), model.conv_block3, &t.c3, "local.conv_block3");
    x = elu_forward(std::move(x), &t.e2);
    x = maxpool_forward(x, model.larch.pool2, &t.p2, "local.pool2");
    x = conv2d_forward(std::move(x), model.conv_block4, &t.c4, "local.conv_block4");
    x = elu_forward(std::move(x), &t.e3);
    x = maxpool_forward(x, model.larch.pool3, &t.p3, "local.pool3");
    x = conv2d_forward(std::move(x), model.conv_features, &t.c5, "global.conv_features");
    x = elu_forward(std::move(x), &t.e4);
    x = maxpool_forward(x, model.garch.pool, &t.p4, "global.pool");
    x = conv2d_forward(std::move(x), model.conv_head, &t.c6, "global.conv_head");
    return x;
}

Tensor4 predict_probs(const PersonalizedModel& model, const Tensor4& batch) {
    const Tensor4 logits = forward(model, batch);
    Tensor4 probs = Tensor4::zeros(logits.batch(), 2, 1, 1);
    for (int b = 0; b < logits.batch(); ++b) {
        const double l0 = logits.at(b, 0, 0, 0), l1 = logits.at(b, 1, 0, 0);
        const double m = std::max(l0, l1);
        const double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
        probs.at(b, 0, 0, 0) = e0 / (e0 + e1);
        probs.at(b, 1, 0, 0) = e1 / (e0 + e1);
    }
    return probs;
}

ModelGrads backward(const PersonalizedModel& model, ModelTape& tape, const Tensor4& grad_logits,
                    Tensor4* grad_input) {
    if (tape.used) throw ContractError("model backward: tape already consumed");
    tape.used = true;

    ModelGrads g;
    Tensor4 d;
    g.head = conv2d_backward(model.conv_head, tape.c6, grad_logits, &d, "global.conv_head");
    d = maxpool_backward(model.garch.pool, tape.p4, d, "global.pool");
    d = elu_backward(tape.e4, d);
    g.features = conv2d_backward(model.conv_features, tape.c5, d, &d, "global.conv_features");
    d = maxpool_backward(model.larch.pool3, tape.p3, d, "local.pool3");
    d = elu_backward(tape.e3, d);
    g.block4 = conv2d_backward(model.conv_block4, tape.c4, d, &d, "local.conv_block4");
    d = maxpool_backward(model.larch.pool2, tape.p2, d, "local.pool2");
    d = elu_backward(tape.e2, d);
    g.block3 = conv2d_backward(model.conv_block3, tape.c3, d, &d, "local.conv_block3");
    d = maxpool_backward(model.larch.pool1, tape.p1, d, "local.pool1");
    d = elu_backward(tape.e1, d);
    g.spatial = conv2d_backward(model.conv_spatial, tape.c2, d, &d, "local.conv_spatial");
    g.temporal = conv2d_backward(model.conv_temporal, tape.c1, d, grad_input,
                                 "local.conv_temporal");
    return g;
}

void sgd_apply(PersonalizedModel& model, const ModelGrads& grads, double eta) {
    sgd_step_inplace(model.conv_temporal, grads.temporal, eta);
    sgd_step_inplace(model.conv_spatial, grads.spatial, eta);
    sgd_step_inplace(model.conv_block3, grads.block3, eta);
    sgd_step_inplace(model.conv_block4, grads.block4, eta);
    sgd_step_inplace(model.conv_features, grads.features, eta);
    sgd_step_inplace(model.conv_head, grads.head, eta);
}

WeightSet local_weights(const PersonalizedModel& model) {
    WeightSet ws;
    auto layers = layer_list(const_cast<PersonalizedModel&>(model));
    for (std::size_t i = 0; i < 4; ++i) append_entries(ws, layers[i].name, *layers[i].layer);
    return ws;
}

WeightSet global_weights(const PersonalizedModel& model) {
    WeightSet ws;
    auto layers = layer_list(const_cast<PersonalizedModel&>(model));
    for (std::size_t i = 4; i < 6; ++i) append_entries(ws, layers[i].name, *layers[i].layer);
    return ws;
}

std::pair<WeightSet, WeightSet> split_weights(const PersonalizedModel& model) {
    return {local_weights(model), global_weights(model)};
}

WeightSet all_weights(const PersonalizedModel& model) {
    WeightSet ws = local_weights(model);
    WeightSet g = global_weights(model);
    for (auto& e : g.entries) ws.entries.push_back(std::move(e));
    return ws;
}

void set_global_weights(PersonalizedModel& model, const WeightSet& ws) {
    load_entries(model, ws, 4, 2, "set_global_weights");
}

void set_local_weights(PersonalizedModel& model, const WeightSet& ws) {
    load_entries(model, ws, 0, 4, "set_local_weights");
}

void set_all_weights(PersonalizedModel& model, const WeightSet& ws) {
    load_entries(model, ws, 0, 6, "set_all_weights");
}

std::string arch_summary(const LocalArch& larch, const GlobalArch& garch, int trial_samples) {
    std::string out;
    char line[160];
    int h = larch.channels, w = trial_samples;
    const auto emit = [&](const char* name, const ConvSpec* c, const PoolSpec* p, int maps) {
        std::snprintf(line, sizeof line, "%-22s kernel=%dx(%d,%d) pool=(%d,%d) out=(%d,%d,%d)\n",
                      name, c ? c->num_kernels : 0, c ? c->kh : 0, c ? c->kw : 0,
                      p ? p->ph : 1, p ? p->pw : 1, maps, h, w);
        out += line;
    };
    w = w - larch.temporal.kw + 1;
    emit("local.conv_temporal", &larch.temporal, nullptr, 25);
    h = 1;
    emit("local.conv_spatial", &larch.spatial, nullptr, 25);
    w /= larch.pool1.pw;
    emit("local.pool1", nullptr, &larch.pool1, 25);
    w = w - larch.block3.kw + 1;
    emit("local.conv_block3", &larch.block3, nullptr, 50);
    w /= larch.pool2.pw;
    emit("local.pool2", nullptr, &larch.pool2, 50);
    w = w - larch.block4.kw + 1;
    emit("local.conv_block4", &larch.block4, nullptr, 100);
    w /= larch.pool3.pw;
    emit("local.pool3", nullptr, &larch.pool3, 100);
    w = w - garch.features.kw + 1;
    emit("global.conv_features", &garch.features, nullptr, 200);
    w /= garch.pool.pw;
    emit("global.pool", nullptr, &garch.pool, 200);
    w = w - garch.head.kw + 1;
    emit("global.conv_head", &garch.head, nullptr, 2);
    return out;
}

double finite_diff_check(PersonalizedModel& model, const Tensor4& input,
                         std::span<const int> labels, double epsilon, std::uint64_t seed,
                         std::size_t sample_limit) {
    auto layers = layer_list(model);
    FdProblem p;
    for (auto& nl : layers) {
        auto& vals = nl.layer->kernels.values();
        p.params.emplace_back(vals.data(), vals.size());
        p.params.emplace_back(nl.layer->bias.data(), nl.layer->bias.size());
    }
    p.loss = [&] {
        const Tensor4 logits = forward(model, input);
        return softmax_cross_entropy(logits, labels).loss;
    };
    p.flat_grads = [&] {
        ModelTape tape;
        const Tensor4 logits = forward(model, input, &tape);
        const auto sm = softmax_cross_entropy(logits, labels);
        const ModelGrads g = backward(model, tape, sm.grad_logits);
        std::vector<double> flat;
        for (const ConvGrads* cg : {&g.temporal, &g.spatial, &g.block3, &g.block4,
                                    &g.features, &g.head}) {
            flat.insert(flat.end(), cg->kernels.values().begin(), cg->kernels.values().end());
            flat.insert(flat.end(), cg->bias.begin(), cg->bias.end());
        }
        return flat;
    };
    return finite_diff_check(p, epsilon, seed, sample_limit);
}

}  // namespace fleeg
