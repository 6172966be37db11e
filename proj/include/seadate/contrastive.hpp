#pragma once

#include <iosfwd>
#include <utility>
#include <vector>

#include "seadate/dtf.hpp"

namespace seadate {

/// Two-layer projection head mapping pooled backbone features onto the unit
/// sphere: linear(C->C), ReLU, linear(C->d_e), L2 normalization.
struct ProjectionHead {
    Var w1, b1, w2, b2;
    std::size_t embed_dim = 0;
};

ProjectionHead make_projection_head(std::size_t channels, std::size_t embed_dim,
                                    std::uint64_t seed, const std::string& prefix);
void visit_params(ProjectionHead& h, const std::string& prefix, const ParamVisitor& fn);

struct CLConfig {
    double temperature = 0.07;
    std::size_t queue_capacity = 1024;
    std::size_t embed_dim = 128;
};

/// Fixed-capacity FIFO dictionary of detached unit-norm key embeddings.
class KeyQueue {
public:
    KeyQueue() = default;
    KeyQueue(std::size_t capacity, std::size_t dim);

    std::size_t capacity() const { return capacity_; }
    std::size_t dim() const { return dim_; }
    std::size_t size() const { return length_; }
    bool empty() const { return length_ == 0; }

    /// Append one key (shape {1,d} or {d}); evicts the oldest entry at capacity.
    void push(const Tensor& key);
    void push_batch(const std::vector<Tensor>& keys);

    /// Entries oldest to newest as a {size, dim} tensor. Carries no gradient
    /// state by construction.
    Tensor snapshot() const;
    /// k-th oldest entry.
    std::vector<double> entry(std::size_t k) const;

    void save(std::ostream& out) const;
    static KeyQueue load(std::istream& in);

private:
    std::size_t capacity_ = 0;
    std::size_t dim_ = 0;
    std::size_t length_ = 0;
    std::size_t head_ = 0;  // next write slot
    std::vector<double> ring_;
};

/// Global spatial average of a feature map, per channel: {C,H,W} -> {1,C}.
Var spatial_average(const FeatureMap& f);

/// Pool, project, normalize. Output is a unit-norm {1, d_e} embedding.
/// A zero embedding before normalization raises a degenerate-embedding error.
Var pool_and_project(const FeatureMap& f, const ProjectionHead& head);

/// Temperature-scaled InfoNCE against the current queue: the positive pair
/// logit competes with one logit per stored key. Log-sum-exp stabilized,
/// always >= 0. Gradients flow to z_q and z_k only; queue entries are
/// constants.
Var infonce_loss(const Var& z_q, const Var& z_k, const KeyQueue& queue, double temperature);

/// One contrastive step over a batch of (query-modality, key-modality) deep
/// feature pairs: mean InfoNCE against the pre-step queue, then all keys are
/// pushed (a sample never contrasts against its own key).
Var cl_step(const std::vector<std::pair<FeatureMap, FeatureMap>>& batch,
            const ProjectionHead& head_q, const ProjectionHead& head_k,
            KeyQueue& queue, const CLConfig& cfg);

}  // namespace seadate
