#include "seadate/dtf.hpp"

#include <cmath>

#include "seadate/rng.hpp"

namespace seadate {

Var init_param(std::vector<std::size_t> shape, std::size_t fan_in, std::uint64_t seed,
               const std::string& name) {
    Tensor t(std::move(shape));
    CounterRng rng(seed, fnv1a64(name));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
    return Var::leaf(std::move(t), true);
}

FeatureMap::FeatureMap(Var m) : map(std::move(m)) {
    if (map.value().rank() != 3) {
        throw DimensionError("FeatureMap expects {C,H,W}, got " + shape_str(map.value().shape()));
    }
}

Var tokens_from_map(const Var& map) {
    const auto& shape = map.value().shape();
    if (shape.size() != 3) {
        throw DimensionError("tokens_from_map expects {C,H,W}, got " + shape_str(shape));
    }
    return transpose(reshape(map, {shape[0], shape[1] * shape[2]}));
}

Var map_from_tokens(const Var& tokens, std::size_t height, std::size_t width) {
    const Tensor& t = tokens.value();
    if (t.rank() != 2 || t.rows() != height * width) {
        throw DimensionError("map_from_tokens: tokens " + shape_str(t.shape()) +
                             " do not cover " + std::to_string(height) + "x" + std::to_string(width));
    }
    return reshape(transpose(tokens), {t.cols(), height, width});
}

namespace {

FFNParams make_ffn(std::size_t width, int ratio, std::uint64_t seed, const std::string& prefix) {
    const std::size_t hidden = width * static_cast<std::size_t>(ratio);
    FFNParams f;
    f.w1 = init_param({width, hidden}, width, seed, prefix + ".w1");
    f.b1 = init_param({1, hidden}, width, seed, prefix + ".b1");
    f.w2 = init_param({hidden, width}, hidden, seed, prefix + ".w2");
    f.b2 = init_param({1, width}, hidden, seed, prefix + ".b2");
    return f;
}

void visit_ffn(FFNParams& f, const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".w1", f.w1);
    fn(prefix + ".b1", f.b1);
    fn(prefix + ".w2", f.w2);
    fn(prefix + ".b2", f.b2);
}

Var ln_ones(std::size_t width) { return Var::leaf(Tensor::full({1, width}, 1.0), true); }
Var ln_zeros(std::size_t width) { return Var::leaf(Tensor({1, width}), true); }

}  // namespace

SpatialMHAParams make_spatial_params(std::size_t channels, int heads, int ffn_ratio,
                                     std::uint64_t seed, const std::string& prefix) {
    if (heads <= 0 || channels % static_cast<std::size_t>(heads) != 0) {
        throw ConfigError("spatial attention: channel count " + std::to_string(channels) +
                          " not divisible by head count " + std::to_string(heads));
    }
    const std::size_t dk = channels / static_cast<std::size_t>(heads);
    SpatialMHAParams p;
    p.heads = heads;
    for (int i = 0; i < heads; ++i) {
        const std::string h = prefix + ".h" + std::to_string(i);
        p.w_q.push_back(init_param({channels, dk}, channels, seed, h + ".wq"));
        p.w_k.push_back(init_param({channels, dk}, channels, seed, h + ".wk"));
        p.w_v.push_back(init_param({channels, dk}, channels, seed, h + ".wv"));
    }
    p.out_proj = init_param({channels, channels}, channels, seed, prefix + ".proj");
    p.ln1_gamma = ln_ones(channels);
    p.ln1_beta = ln_zeros(channels);
    p.ffn = make_ffn(channels, ffn_ratio, seed, prefix + ".ffn");
    p.ln2_gamma = ln_ones(channels);
    p.ln2_beta = ln_zeros(channels);
    return p;
}

ChannelGroupParams make_channel_params(std::size_t channels, int groups, int ffn_ratio,
                                       std::uint64_t seed, const std::string& prefix) {
    if (groups <= 0 || channels % static_cast<std::size_t>(groups) != 0) {
        throw ConfigError("channel attention: channel count " + std::to_string(channels) +
                          " not divisible by group count " + std::to_string(groups));
    }
    const std::size_t cg = channels / static_cast<std::size_t>(groups);
    ChannelGroupParams p;
    p.groups = groups;
    for (int i = 0; i < groups; ++i) {
        const std::string g = prefix + ".g" + std::to_string(i);
        p.w_q.push_back(init_param({channels, cg}, channels, seed, g + ".wq"));
        p.w_k.push_back(init_param({channels, cg}, channels, seed, g + ".wk"));
        p.w_v.push_back(init_param({channels, cg}, channels, seed, g + ".wv"));
    }
    p.ln1_gamma = ln_ones(channels);
    p.ln1_beta = ln_zeros(channels);
    p.ffn = make_ffn(channels, ffn_ratio, seed, prefix + ".ffn");
    p.ln2_gamma = ln_ones(channels);
    p.ln2_beta = ln_zeros(channels);
    return p;
}

DTFBlock make_dtf_block(std::size_t channels, int heads, int groups, int ffn_ratio,
                        std::uint64_t seed, const std::string& prefix) {
    DTFBlock b;
    b.channels = channels;
    b.spatial = make_spatial_params(channels, heads, ffn_ratio, seed, prefix + ".spatial");
    b.channel = make_channel_params(channels, groups, ffn_ratio, seed, prefix + ".channel");
    return b;
}

void visit_params(SpatialMHAParams& p, const std::string& prefix, const ParamVisitor& fn) {
    for (int i = 0; i < p.heads; ++i) {
        const std::string h = prefix + ".h" + std::to_string(i);
        fn(h + ".wq", p.w_q[i]);
        fn(h + ".wk", p.w_k[i]);
        fn(h + ".wv", p.w_v[i]);
    }
    fn(prefix + ".proj", p.out_proj);
    fn(prefix + ".ln1_gamma", p.ln1_gamma);
    fn(prefix + ".ln1_beta", p.ln1_beta);
    visit_ffn(p.ffn, prefix + ".ffn", fn);
    fn(prefix + ".ln2_gamma", p.ln2_gamma);
    fn(prefix + ".ln2_beta", p.ln2_beta);
}

void visit_params(ChannelGroupParams& p, const std::string& prefix, const ParamVisitor& fn) {
    for (int i = 0; i < p.groups; ++i) {
        const std::string g = prefix + ".g" + std::to_string(i);
        fn(g + ".wq", p.w_q[i]);
        fn(g + ".wk", p.w_k[i]);
        fn(g + ".wv", p.w_v[i]);
    }
    fn(prefix + ".ln1_gamma", p.ln1_gamma);
    fn(prefix + ".ln1_beta", p.ln1_beta);
    visit_ffn(p.ffn, prefix + ".ffn", fn);
    fn(prefix + ".ln2_gamma", p.ln2_gamma);
    fn(prefix + ".ln2_beta", p.ln2_beta);
}

void visit_params(DTFBlock& b, const std::string& prefix, const ParamVisitor& fn) {
    visit_params(b.spatial, prefix + ".spatial", fn);
    visit_params(b.channel, prefix + ".channel", fn);
}

namespace {

Var spatial_mha_impl(const Var& x, const SpatialMHAParams& p, std::vector<Tensor>* weights_out) {
    const std::size_t channels = x.value().cols();
    if (channels % static_cast<std::size_t>(p.heads) != 0) {
        throw ConfigError("spatial attention: token width " + std::to_string(channels) +
                          " not divisible by " + std::to_string(p.heads) + " heads");
    }
    const std::size_t dk = channels / static_cast<std::size_t>(p.heads);
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
    std::vector<Var> heads;
    heads.reserve(p.heads);
    for (int i = 0; i < p.heads; ++i) {
        Var q = matmul(x, p.w_q[i]);
        Var k = matmul(x, p.w_k[i]);
        Var v = matmul(x, p.w_v[i]);
        Tensor weights;
        heads.push_back(scaled_dot_attention(q, k, v, inv_sqrt_dk,
                                             weights_out ? &weights : nullptr));
        if (weights_out) weights_out->push_back(std::move(weights));
    }
    return matmul(concat(heads, 1), p.out_proj);
}

}  // namespace

Var spatial_mha(const Var& x, const SpatialMHAParams& p) {
    return spatial_mha_impl(x, p, nullptr);
}

std::vector<Tensor> spatial_attention_weights(const Var& x, const SpatialMHAParams& p) {
    std::vector<Tensor> weights;
    spatial_mha_impl(x, p, &weights);
    return weights;
}

Var spatial_attention_forward(const Var& x_rgb, const Var& x_ir, const SpatialMHAParams& p) {
    if (!x_rgb.value().same_shape(x_ir.value())) {
        throw DimensionError("spatial attention: modality token shapes differ, " +
                             shape_str(x_rgb.value().shape()) + " vs " +
                             shape_str(x_ir.value().shape()));
    }
    Var x = concat({x_rgb, x_ir}, 0);
    Var s1 = layer_norm(add(x, spatial_mha(x, p)), p.ln1_gamma, p.ln1_beta);
    Var ff = feed_forward(s1, p.ffn.w1, p.ffn.b1, p.ffn.w2, p.ffn.b2);
    return layer_norm(add(s1, ff), p.ln2_gamma, p.ln2_beta);
}

namespace {

Var channel_attention_impl(const Var& y, const ChannelGroupParams& p,
                           std::vector<Tensor>* weights_out) {
    const std::size_t channels = y.value().cols();
    if (channels % static_cast<std::size_t>(p.groups) != 0) {
        throw ConfigError("channel attention: channel count " + std::to_string(channels) +
                          " not divisible by " + std::to_string(p.groups) + " groups");
    }
    const std::size_t cg = channels / static_cast<std::size_t>(p.groups);
    const double inv_sqrt_cg = 1.0 / std::sqrt(static_cast<double>(cg));
    std::vector<Var> groups;
    groups.reserve(p.groups);
    for (int i = 0; i < p.groups; ++i) {
        Var q = matmul(y, p.w_q[i]);  // {HW, Cg}
        Var k = matmul(y, p.w_k[i]);
        Var v = matmul(y, p.w_v[i]);
        // Attention over transposed (channel) tokens: scores are {Cg, Cg} and
        // the group output comes back as {Cg, HW} before the final transpose.
        Tensor weights;
        Var ci = scaled_dot_attention(transpose(q), transpose(k), transpose(v), inv_sqrt_cg,
                                      weights_out ? &weights : nullptr);
        if (weights_out) weights_out->push_back(std::move(weights));
        groups.push_back(transpose(ci));  // back to {HW, Cg}
    }
    return concat(groups, 1);
}

}  // namespace

Var channel_group_attention(const Var& y, const ChannelGroupParams& p) {
    return channel_attention_impl(y, p, nullptr);
}

std::vector<Tensor> channel_attention_weights(const Var& y, const ChannelGroupParams& p) {
    std::vector<Tensor> weights;
    channel_attention_impl(y, p, &weights);
    return weights;
}

Var channel_group_attention_forward(const Var& y, const ChannelGroupParams& p) {
    Var c1 = layer_norm(add(y, channel_group_attention(y, p)), p.ln1_gamma, p.ln1_beta);
    Var ff = feed_forward(c1, p.ffn.w1, p.ffn.b1, p.ffn.w2, p.ffn.b2);
    return layer_norm(add(c1, ff), p.ln2_gamma, p.ln2_beta);
}

std::pair<FeatureMap, FeatureMap> dtf_fuse(const FeatureMap& f_rgb, const FeatureMap& f_ir,
                                           const DTFBlock& block) {
    if (!f_rgb.map.value().same_shape(f_ir.map.value())) {
        throw DimensionError("dtf_fuse: modality shapes differ, " +
                             shape_str(f_rgb.map.value().shape()) + " vs " +
                             shape_str(f_ir.map.value().shape()));
    }
    if (f_rgb.channels() != block.channels) {
        throw DimensionError("dtf_fuse: block built for " + std::to_string(block.channels) +
                             " channels, input has " + std::to_string(f_rgb.channels()));
    }
    const std::size_t h = f_rgb.height(), w = f_rgb.width();
    const std::size_t hw = h * w;

    Var x_rgb = tokens_from_map(f_rgb.map);
    Var x_ir = tokens_from_map(f_ir.map);
    Var s2 = spatial_attention_forward(x_rgb, x_ir, block.spatial);
    auto halves = split(s2, 0, {hw, hw});

    Var y = tokens_from_map(add(f_rgb.map, f_ir.map));
    Var c2 = channel_group_attention_forward(y, block.channel);

    Var out_rgb = add(add(x_rgb, halves[0]), c2);
    Var out_ir = add(add(x_ir, halves[1]), c2);
    return {FeatureMap(map_from_tokens(out_rgb, h, w)),
            FeatureMap(map_from_tokens(out_ir, h, w))};
}

}  // namespace seadate
