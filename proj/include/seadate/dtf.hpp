#pragma once

#include <functional>
#include <string>
#include <vector>

#include "seadate/autograd.hpp"
#include "seadate/errors.hpp"

namespace seadate {

using ParamVisitor = std::function<void(const std::string&, Var&)>;

/// Fresh trainable matrix, entries uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
/// The stream is derived from the parameter name, so equally named parameters
/// are initialized identically across model variants.
Var init_param(std::vector<std::size_t> shape, std::size_t fan_in, std::uint64_t seed,
               const std::string& name);

/// A {C,H,W} feature map living on the autograd tape.
struct FeatureMap {
    Var map;

    FeatureMap() = default;
    explicit FeatureMap(Var m);

    std::size_t channels() const { return map.value().extent(0); }
    std::size_t height() const { return map.value().extent(1); }
    std::size_t width() const { return map.value().extent(2); }
};

/// {C,H,W} -> {HW,C}: row i is the channel vector at spatial position i
/// (row-major scan). Exact inverse of map_from_tokens.
Var tokens_from_map(const Var& map);
Var map_from_tokens(const Var& tokens, std::size_t height, std::size_t width);

struct FFNParams {
    Var w1, b1, w2, b2;
};

/// Spatial multi-head attention stack: per-head projections into C/m-wide
/// subspaces, output projection back to C, then the residual/LN/FFN tail.
struct SpatialMHAParams {
    int heads = 0;
    std::vector<Var> w_q, w_k, w_v;  // per head: {C, C/m}
    Var out_proj;                    // {C, C}
    Var ln1_gamma, ln1_beta;
    FFNParams ffn;
    Var ln2_gamma, ln2_beta;
};

/// Channel group attention stack: per-group projections {C, C_g} with
/// C = groups * C_g, attention over transposed (channel) tokens.
struct ChannelGroupParams {
    int groups = 0;
    std::vector<Var> w_q, w_k, w_v;  // per group: {C, C_g}
    Var ln1_gamma, ln1_beta;
    FFNParams ffn;
    Var ln2_gamma, ln2_beta;
};

struct DTFBlock {
    std::size_t channels = 0;
    SpatialMHAParams spatial;
    ChannelGroupParams channel;
};

SpatialMHAParams make_spatial_params(std::size_t channels, int heads, int ffn_ratio,
                                     std::uint64_t seed, const std::string& prefix);
ChannelGroupParams make_channel_params(std::size_t channels, int groups, int ffn_ratio,
                                       std::uint64_t seed, const std::string& prefix);
DTFBlock make_dtf_block(std::size_t channels, int heads, int groups, int ffn_ratio,
                        std::uint64_t seed, const std::string& prefix);

void visit_params(SpatialMHAParams& p, const std::string& prefix, const ParamVisitor& fn);
void visit_params(ChannelGroupParams& p, const std::string& prefix, const ParamVisitor& fn);
void visit_params(DTFBlock& b, const std::string& prefix, const ParamVisitor& fn);

/// Multi-head attention alone (no residual/LN/FFN): softmax(QK^T/sqrt(d_k))V
/// per head, heads concatenated, projected back to C.
Var spatial_mha(const Var& x, const SpatialMHAParams& p);

/// Softmaxed score matrices, one per head / per group.
std::vector<Tensor> spatial_attention_weights(const Var& x, const SpatialMHAParams& p);
std::vector<Tensor> channel_attention_weights(const Var& y, const ChannelGroupParams& p);

/// Full spatial branch on the concatenated token sentence of both modalities:
/// x = concat(x_rgb, x_ir) over tokens, MHA, then both LN/FFN stages.
Var spatial_attention_forward(const Var& x_rgb, const Var& x_ir, const SpatialMHAParams& p);

/// Channel group attention alone (no residual/LN/FFN): per group
/// softmax(Q^T K / sqrt(C_g)) V^T, transposed back and concatenated over groups.
Var channel_group_attention(const Var& y, const ChannelGroupParams& p);

/// Full channel branch: attention plus both LN/FFN stages.
Var channel_group_attention_forward(const Var& y, const ChannelGroupParams& p);

/// The fusion block: spatial branch on both modalities' tokens, channel branch
/// on their sum, halves and channel output added back to each modality.
std::pair<FeatureMap, FeatureMap> dtf_fuse(const FeatureMap& f_rgb, const FeatureMap& f_ir,
                                           const DTFBlock& block);

}  // namespace seadate
