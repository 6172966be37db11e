#include "seadate/contrastive.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "json.hpp"

namespace seadate {

ProjectionHead make_projection_head(std::size_t channels, std::size_t embed_dim,
                                    std::uint64_t seed, const std::string& prefix) {
    ProjectionHead h;
    h.embed_dim = embed_dim;
    h.w1 = init_param({channels, channels}, channels, seed, prefix + ".w1");
    h.b1 = init_param({1, channels}, channels, seed, prefix + ".b1");
    h.w2 = init_param({channels, embed_dim}, channels, seed, prefix + ".w2");
    h.b2 = init_param({1, embed_dim}, channels, seed, prefix + ".b2");
    return h;
}

void visit_params(ProjectionHead& h, const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".w1", h.w1);
    fn(prefix + ".b1", h.b1);
    fn(prefix + ".w2", h.w2);
    fn(prefix + ".b2", h.b2);
}

KeyQueue::KeyQueue(std::size_t capacity, std::size_t dim)
    : capacity_(capacity), dim_(dim), ring_(capacity * dim, 0.0) {
    if (capacity == 0 || dim == 0) throw ConfigError("KeyQueue needs positive capacity and dim");
}

void KeyQueue::push(const Tensor& key) {
    if (key.numel() != dim_) {
        throw DimensionError("KeyQueue: key has " + std::to_string(key.numel()) +
                             " values, queue stores dim " + std::to_string(dim_));
    }
    for (std::size_t j = 0; j < dim_; ++j) ring_[head_ * dim_ + j] = key[j];
    head_ = (head_ + 1) % capacity_;
    if (length_ < capacity_) ++length_;
}

void KeyQueue::push_batch(const std::vector<Tensor>& keys) {
    for (const auto& k : keys) push(k);
}

Tensor KeyQueue::snapshot() const {
    Tensor out({std::max<std::size_t>(length_, 1), dim_});
    if (length_ == 0) return Tensor({1, dim_});  // unused; callers check empty()
    const std::size_t start = (head_ + capacity_ - length_) % capacity_;
    for (std::size_t i = 0; i < length_; ++i) {
        const std::size_t slot = (start + i) % capacity_;
        for (std::size_t j = 0; j < dim_; ++j) out[i * dim_ + j] = ring_[slot * dim_ + j];
    }
    return out;
}

std::vector<double> KeyQueue::entry(std::size_t k) const {
    if (k >= length_) throw DimensionError("KeyQueue: entry index out of range");
    const std::size_t start = (head_ + capacity_ - length_) % capacity_;
    const std::size_t slot = (start + k) % capacity_;
    return std::vector<double>(ring_.begin() + slot * dim_, ring_.begin() + (slot + 1) * dim_);
}

void KeyQueue::save(std::ostream& out) const {
    nlohmann::json header = {{"capacity", capacity_},
                             {"dim", dim_},
                             {"length", length_},
                             {"head", head_}};
    const std::string hs = header.dump();
    const std::uint32_t n = static_cast<std::uint32_t>(hs.size());
    out.write(reinterpret_cast<const char*>(&n), 4);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    write_tensor(out, Tensor({std::max<std::size_t>(capacity_, 1), dim_},
                             std::vector<double>(ring_)));
}

KeyQueue KeyQueue::load(std::istream& in) {
    std::uint32_t n = 0;
    in.read(reinterpret_cast<char*>(&n), 4);
    if (!in) throw std::runtime_error("KeyQueue: truncated header");
    std::string hs(n, '\0');
    in.read(hs.data(), n);
    auto header = nlohmann::json::parse(hs);
    KeyQueue q(header.at("capacity").get<std::size_t>(), header.at("dim").get<std::size_t>());
    q.length_ = header.at("length").get<std::size_t>();
    q.head_ = header.at("head").get<std::size_t>();
    Tensor ring = read_tensor(in);
    if (ring.numel() != q.ring_.size()) throw std::runtime_error("KeyQueue: payload size mismatch");
    std::copy(ring.data(), ring.data() + ring.numel(), q.ring_.begin());
    return q;
}

Var spatial_average(const FeatureMap& f) { return mean_rows(tokens_from_map(f.map)); }

Var pool_and_project(const FeatureMap& f, const ProjectionHead& head) {
    if (f.channels() != head.w1.value().rows()) {
        throw DimensionError("pool_and_project: head expects " +
                             std::to_string(head.w1.value().rows()) + " channels, map has " +
                             std::to_string(f.channels()));
    }
    Var pooled = spatial_average(f);
    Var hidden = relu(add_rowvec(matmul(pooled, head.w1), head.b1));
    Var embedding = add_rowvec(matmul(hidden, head.w2), head.b2);
    return l2_normalize_rows(embedding);
}

Var infonce_loss(const Var& z_q, const Var& z_k, const KeyQueue& queue, double temperature) {
    if (temperature <= 0.0) {
        throw ConfigError("infonce_loss: temperature must be positive, got " +
                          std::to_string(temperature));
    }
    Var positive = matmul(z_q, transpose(z_k));  // {1,1}
    Var logits;
    if (queue.empty()) {
        logits = positive;
    } else {
        Var negatives = matmul(z_q, transpose(Var::constant(queue.snapshot())));
        logits = concat({positive, negatives}, 1);
    }
    Var log_probs = log_softmax_rows(scale(logits, 1.0 / temperature));
    Tensor pick({1, log_probs.value().cols()});
    pick[0] = 1.0;
    return negate(sum_all(mul(log_probs, Var::constant(pick))));
}

Var cl_step(const std::vector<std::pair<FeatureMap, FeatureMap>>& batch,
            const ProjectionHead& head_q, const ProjectionHead& head_k,
            KeyQueue& queue, const CLConfig& cfg) {
    if (batch.empty()) throw ConfigError("cl_step: empty batch");
    Var total;
    std::vector<Tensor> new_keys;
    new_keys.reserve(batch.size());
    for (const auto& [f_q, f_k] : batch) {
        Var z_q = pool_and_project(f_q, head_q);
        Var z_k = pool_and_project(f_k, head_k);
        Var loss = infonce_loss(z_q, z_k, queue, cfg.temperature);
        total = total ? add(total, loss) : loss;
        new_keys.push_back(z_k.value());  // detached copy
    }
    queue.push_batch(new_keys);
    return scale(total, 1.0 / static_cast<double>(batch.size()));
}

}  // namespace seadate
