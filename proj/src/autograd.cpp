#include "seadate/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>
#include <utility>

namespace seadate {

namespace {

Var wrap(std::shared_ptr<Node> n) {
    Var v;
    v.node_ = std::move(n);
    return v;
}

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    bool req = false;
    for (const auto& p : parents) {
        if (p && p.node_->requires_grad) req = true;
    }
    n->parents = std::move(parents);
    n->requires_grad = req;
    if (req) n->backprop = std::move(fn);
    return wrap(std::move(n));
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(t.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }
}

double* ensure_grad(Node& n) {
    if (n.grad.empty()) n.grad = Tensor(n.value.shape());
    return n.grad.data();
}

}  // namespace

Var Var::leaf(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return wrap(std::move(n));
}

const Tensor& Var::value() const { return node_->value; }

Tensor& Var::mutable_value() { return node_->value; }

const Tensor& Var::grad() const {
    if (node_->grad.empty()) node_->grad = Tensor(node_->value.shape());
    return node_->grad;
}

bool Var::has_grad() const { return node_ && !node_->grad.empty(); }
bool Var::requires_grad() const { return node_ && node_->requires_grad; }

void Var::zero_grad() {
    if (node_ && !node_->grad.empty()) {
        std::fill(node_->grad.values().begin(), node_->grad.values().end(), 0.0);
    }
}

void Node::accumulate(const Tensor& g) {
    if (grad.empty()) {
        grad = g;
        return;
    }
    for (std::size_t i = 0; i < grad.numel(); ++i) grad[i] += g[i];
}

void backward(const Var& root) {
    backward(root, Tensor::full(root.value().shape(), 1.0));
}

void backward(const Var& root, const Tensor& seed) {
    if (!root) throw std::runtime_error("backward on empty Var");
    require_same_shape(root.value(), seed, "backward seed");
    if (!root.node_->requires_grad) return;

    // Post-order over the requires-grad subgraph, iterative to bound stack use.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.raw(), 0);
    visited.insert(root.raw());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next].raw();
            ++next;
            if (p && p->requires_grad && visited.insert(p).second) {
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    root.raw()->accumulate(seed);
    // Interior state is scratch: once a node has pushed its gradient to its
    // parents, its grad, saved activations (closure captures) and value can be
    // released. This keeps peak memory near the largest single activation and
    // makes the graph single-use; leaves keep their accumulated grads.
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop) {
            if (!n->grad.empty()) n->backprop(*n);
            n->backprop = nullptr;
            n->grad = Tensor();
            if (n != root.raw()) n->value = Tensor();
        }
    }
}

// -- elementwise helpers -------------------------------------------------------

namespace {

template <typename Fwd, typename Bwd>
Var unary_elem(const Var& x, Fwd fwd, Bwd bwd_factor) {
    const Tensor& xv = x.value();
    Tensor y(xv.shape());
    for (std::size_t i = 0; i < xv.numel(); ++i) y[i] = fwd(xv[i]);
    return make_node(std::move(y), {x}, [bwd_factor](Node& self) {
        Node* p = self.parents[0].raw();
        if (!p->requires_grad) return;
        double* pg = ensure_grad(*p);
        const Tensor& xin = p->value;
        for (std::size_t i = 0; i < self.grad.numel(); ++i) {
            pg[i] += self.grad[i] * bwd_factor(xin[i], self.value[i]);
        }
    });
}

}  // namespace

// -- core ops ------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_rank2(av, "matmul");
    require_rank2(bv, "matmul");
    if (av.cols() != bv.rows()) {
        throw DimensionError("matmul: inner dimensions disagree, " + shape_str(av.shape()) +
                             " vs " + shape_str(bv.shape()));
    }
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    Tensor y({m, n});
    detail::mm_nn(m, n, k, av.data(), bv.data(), y.data());
    return make_node(std::move(y), {a, b}, [m, k, n](Node& self) {
        Node* pa = self.parents[0].raw();
        Node* pb = self.parents[1].raw();
        const double* g = self.grad.data();
        if (pa->requires_grad) {
            detail::mm_nt(m, k, n, g, pb->value.data(), ensure_grad(*pa));
        }
        if (pb->requires_grad) {
            detail::mm_tn(k, n, m, pa->value.data(), g, ensure_grad(*pb));
        }
    });
}

Var transpose(const Var& x) {
    const Tensor& xv = x.value();
    require_rank2(xv, "transpose");
    const std::size_t r = xv.rows(), c = xv.cols();
    Tensor y({c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) y[j * r + i] = xv[i * c + j];
    return make_node(std::move(y), {x}, [r, c](Node& self) {
        Node* p = self.parents[0].raw();
        if (!p->requires_grad) return;
        double* pg = ensure_grad(*p);
        const double* g = self.grad.data();
        for (std::size_t j = 0; j < c; ++j)
            for (std::size_t i = 0; i < r; ++i) pg[i * c + j] += g[j * r + i];
    });
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "add");
    Tensor y = a.value();
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] += b.value()[i];
    return make_node(std::move(y), {a, b}, [](Node& self) {
        for (int side = 0; side < 2; ++side) {
            Node* p = self.parents[side].raw();
            if (p->requires_grad) p->accumulate(self.grad);
        }
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "sub");
    Tensor y = a.value();
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] -= b.value()[i];
    return make_node(std::move(y), {a, b}, [](Node& self) {
        Node* pa = self.parents[0].raw();
        Node* pb = self.parents[1].raw();
        if (pa->requires_grad) pa->accumulate(self.grad);
        if (pb->requires_grad) {
            double* pg = ensure_grad(*pb);
            for (std::size_t i = 0; i < self.grad.numel(); ++i) pg[i] -= self.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "mul");
    Tensor y = a.value();
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] *= b.value()[i];
    return make_node(std::move(y), {a, b}, [](Node& self) {
        Node* pa = self.parents[0].raw();
        Node* pb = self.parents[1].raw();
        if (pa->requires_grad) {
            double* pg = ensure_grad(*pa);
            for (std::size_t i = 0; i < self.grad.numel(); ++i)
                pg[i] += self.grad[i] * pb->value[i];
        }
        if (pb->requires_grad) {
            double* pg = ensure_grad(*pb);
            for (std::size_t i = 0; i < self.grad.numel(); ++i)
                pg[i] += self.grad[i] * pa->value[i];
        }
    });
}

Var divide(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "divide");
    Tensor y = a.value();
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] /= b.value()[i];
    return make_node(std::move(y), {a, b}, [](Node& self) {
        Node* pa = self.parents[0].raw();
        Node* pb = self.parents[1].raw();
        if (pa->requires_grad) {
            double* pg = ensure_grad(*pa);
            for (std::size_t i = 0; i < self.grad.numel(); ++i)
                pg[i] += self.grad[i] / pb->value[i];
        }
        if (pb->requires_grad) {
            double* pg = ensure_grad(*pb);
            for (std::size_t i = 0; i < self.grad.numel(); ++i) {
                const double bv = pb->value[i];
                pg[i] -= self.grad[i] * pa->value[i] / (bv * bv);
            }
        }
    });
}

Var scale(const Var& x, double c) {
    Tensor y = x.value();
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] *= c;
    return make_node(std::move(y), {x}, [c](Node& self) {
        Node* p = self.parents[0].raw();
        if (!p->requires_grad) return;
        double* pg = ensure_grad(*p);
        for (std::size_t i = 0; i < self.grad.numel(); ++i) pg[i] += c * self.grad[i];
    });
}

Var add_scalar(const Var& x, double c) {
    Tensor y = x.value();
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] += c;
    return make_node(std::move(y), {x}, [](Node& self) {
        Node* p = self.parents[0].raw();
        if (p->requires_grad) p->accumulate(self.grad);
    });
}

Var negate(const Var& x) { return scale(x, -1.0); }

Var add_rowvec(const Var& x, const Var& v) {
    const Tensor& xv = x.value();
    const Tensor& vv = v.value();
    require_rank2(xv, "add_rowvec");
    if (vv.rank() != 2 || vv.rows() != 1 || vv.cols() != xv.cols()) {
        throw DimensionError("add_rowvec: vector " + shape_str(vv.shape()) +
                             " does not broadcast over " + shape_str(xv.shape()));
    }
    const std::size_t n = xv.rows(), d = xv.cols();
    Tensor y = xv;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < d; ++j) y[r * d + j] += vv[j];
    return make_node(std::move(y), {x, v}, [n, d](Node& self) {
        Node* px = self.parents[0].raw();
        Node* pv = self.parents[1].raw();
        if (px->requires_grad) px->accumulate(self.grad);
        if (pv->requires_grad) {
            double* pg = ensure_grad(*pv);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t j = 0; j < d; ++j) pg[j] += self.grad[r * d + j];
        }
    });
}

Var relu(const Var& x) {
    return unary_elem(
        x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double xin, double) { return xin > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var& x) {
    auto sig = [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
    };
    return unary_elem(x, sig, [](double, double y) { return y * (1.0 - y); });
}

Var exp_elem(const Var& x) {
    return unary_elem(
        x, [](double v) { return std::exp(v); },
        [](double, double y) { return y; });
}

Var elem_min(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "elem_min");
    Tensor y = a.value();
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = std::min(y[i], b.value()[i]);
    return make_node(std::move(y), {a, b}, [](Node& self) {
        Node* pa = self.parents[0].raw();
        Node* pb = self.parents[1].raw();
        double* ga = pa->requires_grad ? ensure_grad(*pa) : nullptr;
        double* gb = pb->requires_grad ? ensure_grad(*pb) : nullptr;
        for (std::size_t i = 0; i < self.grad.numel(); ++i) {
            if (pa->value[i] <= pb->value[i]) {
                if (ga) ga[i] += self.grad[i];
            } else if (gb) {
                gb[i] += self.grad[i];
            }
        }
    });
}

Var elem_max(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "elem_max");
    Tensor y = a.value();
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = std::max(y[i], b.value()[i]);
    return make_node(std::move(y), {a, b}, [](Node& self) {
        Node* pa = self.parents[0].raw();
        Node* pb = self.parents[1].raw();
        double* ga = pa->requires_grad ? ensure_grad(*pa) : nullptr;
        double* gb = pb->requires_grad ? ensure_grad(*pb) : nullptr;
        for (std::size_t i = 0; i < self.grad.numel(); ++i) {
            if (pa->value[i] >= pb->value[i]) {
                if (ga) ga[i] += self.grad[i];
            } else if (gb) {
                gb[i] += self.grad[i];
            }
        }
    });
}

Var softmax_rows(const Var& x) {
    const Tensor& xv = x.value();
    require_rank2(xv, "softmax_rows");
    const std::size_t n = xv.rows(), d = xv.cols();
    Tensor y({n, d});
    for (std::size_t r = 0; r < n; ++r) {
        const double* row = xv.data() + r * d;
        double* out = y.data() + r * d;
        double mx = row[0];
        for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            out[j] = std::exp(row[j] - mx);
            sum += out[j];
        }
        for (std::size_t j = 0; j < d; ++j) out[j] /= sum;
    }
    return make_node(std::move(y), {x}, [n, d](Node& self) {
        Node* p = self.parents[0].raw();
        if (!p->requires_grad) return;
        double* pg = ensure_grad(*p);
        for (std::size_t r = 0; r < n; ++r) {
            const double* g = self.grad.data() + r * d;
            const double* yr = self.value.data() + r * d;
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += g[j] * yr[j];
            for (std::size_t j = 0; j < d; ++j) pg[r * d + j] += yr[j] * (g[j] - dot);
        }
    });
}

Var log_softmax_rows(const Var& x) {
    const Tensor& xv = x.value();
    require_rank2(xv, "log_softmax_rows");
    const std::size_t n = xv.rows(), d = xv.cols();
    Tensor y({n, d});
    for (std::size_t r = 0; r < n; ++r) {
        const double* row = xv.data() + r * d;
        double* out = y.data() + r * d;
        double mx = row[0];
        for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < d; ++j) sum += std::exp(row[j] - mx);
        const double lse = mx + std::log(sum);
        for (std::size_t j = 0; j < d; ++j) out[j] = row[j] - lse;
    }
    return make_node(std::move(y), {x}, [n, d](Node& self) {
        Node* p = self.parents[0].raw();
        if (!p->requires_grad) return;
        double* pg = ensure_grad(*p);
        for (std::size_t r = 0; r < n; ++r) {
            const double* g = self.grad.data() + r * d;
            const double* yr = self.value.data() + r * d;
            double gsum = 0.0;
            for (std::size_t j = 0; j < d; ++j) gsum += g[j];
            for (std::size_t j = 0; j < d; ++j) pg[r * d + j] += g[j] - std::exp(yr[j]) * gsum;
        }
    });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const Tensor& xv = x.value();
    require_rank2(xv, "layer_norm");
    const std::size_t n = xv.rows(), d = xv.cols();
    if (d < 2) throw DimensionError("layer_norm: needs at least 2 features per row");
    if (eps <= 0.0) throw std::invalid_argument("layer_norm: eps must be positive");
    const Tensor& gv = gamma.value();
    const Tensor& bv = beta.value();
    if (gv.rank() != 2 || gv.rows() != 1 || gv.cols() != d || !gv.same_shape(bv)) {
        throw DimensionError("layer_norm: gamma/beta must be {1," + std::to_string(d) + "}, got " +
                             shape_str(gv.shape()) + " and " + shape_str(bv.shape()));
    }
    Tensor y({n, d});
    Tensor xhat({n, d});
    std::vector<double> inv_std(n);
    for (std::size_t r = 0; r < n; ++r) {
        const double* row = xv.data() + r * d;
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += row[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = row[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        for (std::size_t j = 0; j < d; ++j) {
            const double xh = (row[j] - mean) * is;
            xhat[r * d + j] = xh;
            y[r * d + j] = gv[j] * xh + bv[j];
        }
    }
    return make_node(std::move(y), {x, gamma, beta},
                     [n, d, xhat, inv_std](Node& self) {
        Node* px = self.parents[0].raw();
        Node* pgm = self.parents[1].raw();
        Node* pbt = self.parents[2].raw();
        const Tensor& gv = pgm->value;
        if (pgm->requires_grad) {
            double* gg = ensure_grad(*pgm);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t j = 0; j < d; ++j)
                    gg[j] += self.grad[r * d + j] * xhat[r * d + j];
        }
        if (pbt->requires_grad) {
            double* gb = ensure_grad(*pbt);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t j = 0; j < d; ++j) gb[j] += self.grad[r * d + j];
        }
        if (px->requires_grad) {
            double* gx = ensure_grad(*px);
            const double inv_d = 1.0 / static_cast<double>(d);
            for (std::size_t r = 0; r < n; ++r) {
                double m1 = 0.0, m2 = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    const double dxh = self.grad[r * d + j] * gv[j];
                    m1 += dxh;
                    m2 += dxh * xhat[r * d + j];
                }
                m1 *= inv_d;
                m2 *= inv_d;
                for (std::size_t j = 0; j < d; ++j) {
                    const double dxh = self.grad[r * d + j] * gv[j];
                    gx[r * d + j] += inv_std[r] * (dxh - m1 - xhat[r * d + j] * m2);
                }
            }
        }
    });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
    if (parts.empty()) throw DimensionError("concat: no inputs");
    if (axis > 1) throw DimensionError("concat: axis must be 0 or 1");
    const std::size_t other = 1 - axis;
    const std::size_t fixed = parts[0].value().extent(other);
    std::size_t total = 0;
    for (const auto& p : parts) {
        require_rank2(p.value(), "concat");
        if (p.value().extent(other) != fixed) {
            throw DimensionError("concat: mismatched extent on axis " + std::to_string(other) +
                                 ": " + shape_str(parts[0].value().shape()) + " vs " +
                                 shape_str(p.value().shape()));
        }
        total += p.value().extent(axis);
    }
    std::vector<std::size_t> shape(2);
    shape[axis] = total;
    shape[other] = fixed;
    Tensor y(shape);
    std::vector<std::size_t> sizes;
    sizes.reserve(parts.size());
    if (axis == 0) {
        std::size_t row = 0;
        for (const auto& p : parts) {
            const Tensor& pv = p.value();
            std::copy(pv.data(), pv.data() + pv.numel(), y.data() + row * fixed);
            row += pv.rows();
            sizes.push_back(pv.rows());
        }
    } else {
        std::size_t col = 0;
        for (const auto& p : parts) {
            const Tensor& pv = p.value();
            for (std::size_t r = 0; r < fixed; ++r)
                std::copy(pv.data() + r * pv.cols(), pv.data() + (r + 1) * pv.cols(),
                          y.data() + r * total + col);
            col += pv.cols();
            sizes.push_back(pv.cols());
        }
    }
    return make_node(std::move(y), parts, [axis, fixed, total, sizes](Node& self) {
        if (axis == 0) {
            std::size_t row = 0;
            for (std::size_t k = 0; k < self.parents.size(); ++k) {
                Node* p = self.parents[k].raw();
                if (p->requires_grad) {
                    double* pg = ensure_grad(*p);
                    const double* g = self.grad.data() + row * fixed;
                    for (std::size_t i = 0; i < sizes[k] * fixed; ++i) pg[i] += g[i];
                }
                row += sizes[k];
            }
        } else {
            std::size_t col = 0;
            for (std::size_t k = 0; k < self.parents.size(); ++k) {
                Node* p = self.parents[k].raw();
                if (p->requires_grad) {
                    double* pg = ensure_grad(*p);
                    for (std::size_t r = 0; r < fixed; ++r)
                        for (std::size_t j = 0; j < sizes[k]; ++j)
                            pg[r * sizes[k] + j] += self.grad[r * total + col + j];
                }
                col += sizes[k];
            }
        }
    });
}

std::vector<Var> split(const Var& x, std::size_t axis, const std::vector<std::size_t>& sizes) {
    const Tensor& xv = x.value();
    require_rank2(xv, "split");
    if (axis > 1) throw DimensionError("split: axis must be 0 or 1");
    std::size_t total = 0;
    for (std::size_t s : sizes) total += s;
    if (total != xv.extent(axis)) {
        throw DimensionError("split: sizes sum to " + std::to_string(total) +
                             " but axis extent is " + std::to_string(xv.extent(axis)));
    }
    const std::size_t other_n = xv.extent(1 - axis);
    std::vector<Var> out;
    out.reserve(sizes.size());
    std::size_t offset = 0;
    for (std::size_t s : sizes) {
        Tensor piece(axis == 0 ? std::vector<std::size_t>{s, other_n}
                               : std::vector<std::size_t>{other_n, s});
        if (axis == 0) {
            std::copy(xv.data() + offset * other_n, xv.data() + (offset + s) * other_n, piece.data());
        } else {
            for (std::size_t r = 0; r < other_n; ++r)
                std::copy(xv.data() + r * xv.cols() + offset,
                          xv.data() + r * xv.cols() + offset + s, piece.data() + r * s);
        }
        const std::size_t local_off = offset;
        out.push_back(make_node(std::move(piece), {x},
                                [axis, other_n, s, local_off](Node& self) {
            Node* p = self.parents[0].raw();
            if (!p->requires_grad) return;
            double* pg = ensure_grad(*p);
            const std::size_t xcols = p->value.cols();
            if (axis == 0) {
                const double* g = self.grad.data();
                for (std::size_t i = 0; i < s * other_n; ++i)
                    pg[local_off * other_n + i] += g[i];
            } else {
                for (std::size_t r = 0; r < other_n; ++r)
                    for (std::size_t j = 0; j < s; ++j)
                        pg[r * xcols + local_off + j] += self.grad[r * s + j];
            }
        }));
        offset += s;
    }
    return out;
}

Var reshape(const Var& x, std::vector<std::size_t> new_shape) {
    Tensor y = x.value().reshaped(std::move(new_shape));
    return make_node(std::move(y), {x}, [](Node& self) {
        Node* p = self.parents[0].raw();
        if (!p->requires_grad) return;
        double* pg = ensure_grad(*p);
        for (std::size_t i = 0; i < self.grad.numel(); ++i) pg[i] += self.grad[i];
    });
}

Var gather_rows(const Var& x, std::vector<std::size_t> indices) {
    const Tensor& xv = x.value();
    require_rank2(xv, "gather_rows");
    const std::size_t d = xv.cols();
    for (std::size_t idx : indices) {
        if (idx >= xv.rows())
            throw DimensionError("gather_rows: index " + std::to_string(idx) + " out of range");
    }
    Tensor y({indices.size(), d});
    for (std::size_t k = 0; k < indices.size(); ++k)
        std::copy(xv.data() + indices[k] * d, xv.data() + (indices[k] + 1) * d, y.data() + k * d);
    return make_node(std::move(y), {x}, [indices, d](Node& self) {
        Node* p = self.parents[0].raw();
        if (!p->requires_grad) return;
        double* pg = ensure_grad(*p);
        for (std::size_t k = 0; k < indices.size(); ++k)
            for (std::size_t j = 0; j < d; ++j)
                pg[indices[k] * d + j] += self.grad[k * d + j];
    });
}

Var sum_all(const Var& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.value().numel(); ++i) s += x.value()[i];
    return make_node(Tensor::scalar(s), {x}, [](Node& self) {
        Node* p = self.parents[0].raw();
        if (!p->requires_grad) return;
        double* pg = ensure_grad(*p);
        const double g = self.grad[0];
        for (std::size_t i = 0; i < p->value.numel(); ++i) pg[i] += g;
    });
}

Var mean_all(const Var& x) {
    return scale(sum_all(x), 1.0 / static_cast<double>(x.value().numel()));
}

Var mean_rows(const Var& x) {
    const Tensor& xv = x.value();
    require_rank2(xv, "mean_rows");
    const std::size_t n = xv.rows(), d = xv.cols();
    Tensor y({1, d});
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < d; ++j) y[j] += xv[r * d + j];
    for (std::size_t j = 0; j < d; ++j) y[j] /= static_cast<double>(n);
    return make_node(std::move(y), {x}, [n, d](Node& self) {
        Node* p = self.parents[0].raw();
        if (!p->requires_grad) return;
        double* pg = ensure_grad(*p);
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < d; ++j) pg[r * d + j] += self.grad[j] * inv_n;
    });
}

Var l2_normalize_rows(const Var& x) {
    const Tensor& xv = x.value();
    require_rank2(xv, "l2_normalize_rows");
    const std::size_t n = xv.rows(), d = xv.cols();
    Tensor y({n, d});
    std::vector<double> norms(n);
    for (std::size_t r = 0; r < n; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += xv[r * d + j] * xv[r * d + j];
        const double norm = std::sqrt(s);
        if (norm == 0.0) {
            throw std::runtime_error("l2_normalize_rows: zero row " + std::to_string(r) +
                                     " cannot be projected to the unit sphere");
        }
        norms[r] = norm;
        for (std::size_t j = 0; j < d; ++j) y[r * d + j] = xv[r * d + j] / norm;
    }
    return make_node(std::move(y), {x}, [n, d, norms](Node& self) {
        Node* p = self.parents[0].raw();
        if (!p->requires_grad) return;
        double* pg = ensure_grad(*p);
        for (std::size_t r = 0; r < n; ++r) {
            const double* g = self.grad.data() + r * d;
            const double* yr = self.value.data() + r * d;
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += g[j] * yr[j];
            for (std::size_t j = 0; j < d; ++j)
                pg[r * d + j] += (g[j] - yr[j] * dot) / norms[r];
        }
    });
}

Var conv2d_3x3(const Var& x, const Var& w, const Var& b) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    const Tensor& bv = b.value();
    if (xv.rank() != 3) throw DimensionError("conv2d_3x3: input must be {C,H,W}, got " + shape_str(xv.shape()));
    if (wv.rank() != 4 || wv.extent(2) != 3 || wv.extent(3) != 3) {
        throw DimensionError("conv2d_3x3: weight must be {Cout,Cin,3,3}, got " + shape_str(wv.shape()));
    }
    const std::size_t cin = xv.extent(0), h = xv.extent(1), wd = xv.extent(2);
    const std::size_t cout = wv.extent(0);
    if (wv.extent(1) != cin) {
        throw DimensionError("conv2d_3x3: weight expects " + std::to_string(wv.extent(1)) +
                             " input channels, input has " + std::to_string(cin));
    }
    if (bv.rank() != 1 || bv.extent(0) != cout) {
        throw DimensionError("conv2d_3x3: bias must be {Cout}, got " + shape_str(bv.shape()));
    }
    Tensor y({cout, h, wd});
    const std::size_t plane = h * wd;
    for (std::size_t co = 0; co < cout; ++co) {
        double* out = y.data() + co * plane;
        for (std::size_t p = 0; p < plane; ++p) out[p] = bv[co];
        for (std::size_t ci = 0; ci < cin; ++ci) {
            const double* in = xv.data() + ci * plane;
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    const double wt = wv[((co * cin + ci) * 3 + ky) * 3 + kx];
                    if (wt == 0.0) continue;
                    const int dy = ky - 1, dx = kx - 1;
                    const std::size_t i0 = dy < 0 ? 1 : 0;
                    const std::size_t i1 = dy > 0 ? h - 1 : h;
                    const std::size_t j0 = dx < 0 ? 1 : 0;
                    const std::size_t j1 = dx > 0 ? wd - 1 : wd;
                    for (std::size_t i = i0; i < i1; ++i) {
                        const double* src = in + (i + dy) * wd + dx;
                        double* dst = out + i * wd;
                        for (std::size_t j = j0; j < j1; ++j) dst[j] += wt * src[j];
                    }
                }
            }
        }
    }
    return make_node(std::move(y), {x, w, b}, [cin, cout, h, wd, plane](Node& self) {
        Node* px = self.parents[0].raw();
        Node* pw = self.parents[1].raw();
        Node* pb = self.parents[2].raw();
        const Tensor& xv = px->value;
        const Tensor& wv = pw->value;
        const Tensor& g = self.grad;
        if (pb->requires_grad) {
            double* gb = ensure_grad(*pb);
            for (std::size_t co = 0; co < cout; ++co) {
                double s = 0.0;
                const double* gp = g.data() + co * plane;
                for (std::size_t p = 0; p < plane; ++p) s += gp[p];
                gb[co] += s;
            }
        }
        double* gw = pw->requires_grad ? ensure_grad(*pw) : nullptr;
        double* gx = px->requires_grad ? ensure_grad(*px) : nullptr;
        for (std::size_t co = 0; co < cout; ++co) {
            const double* gp = g.data() + co * plane;
            for (std::size_t ci = 0; ci < cin; ++ci) {
                const double* in = xv.data() + ci * plane;
                double* gi = gx ? gx + ci * plane : nullptr;
                for (int ky = 0; ky < 3; ++ky) {
                    for (int kx = 0; kx < 3; ++kx) {
                        const int dy = ky - 1, dx = kx - 1;
                        const std::size_t i0 = dy < 0 ? 1 : 0;
                        const std::size_t i1 = dy > 0 ? h - 1 : h;
                        const std::size_t j0 = dx < 0 ? 1 : 0;
                        const std::size_t j1 = dx > 0 ? wd - 1 : wd;
                        const std::size_t widx = ((co * cin + ci) * 3 + ky) * 3 + kx;
                        if (gw) {
                            double s = 0.0;
                            for (std::size_t i = i0; i < i1; ++i) {
                                const double* src = in + (i + dy) * wd + dx;
                                const double* gr = gp + i * wd;
                                for (std::size_t j = j0; j < j1; ++j) s += gr[j] * src[j];
                            }
                            gw[widx] += s;
                        }
                        if (gi) {
                            const double wt = wv[widx];
                            if (wt != 0.0) {
                                for (std::size_t i = i0; i < i1; ++i) {
                                    double* dst = gi + (i + dy) * wd + dx;
                                    const double* gr = gp + i * wd;
                                    for (std::size_t j = j0; j < j1; ++j) dst[j] += wt * gr[j];
                                }
                            }
                        }
                    }
                }
            }
        }
    });
}

Var avg_pool2(const Var& x) {
    const Tensor& xv = x.value();
    if (xv.rank() != 3) throw DimensionError("avg_pool2: input must be {C,H,W}, got " + shape_str(xv.shape()));
    const std::size_t c = xv.extent(0), h = xv.extent(1), w = xv.extent(2);
    if (h % 2 != 0 || w % 2 != 0) {
        throw DimensionError("avg_pool2: spatial extents must be even, got " + shape_str(xv.shape()));
    }
    const std::size_t oh = h / 2, ow = w / 2;
    Tensor y({c, oh, ow});
    for (std::size_t ci = 0; ci < c; ++ci) {
        const double* in = xv.data() + ci * h * w;
        double* out = y.data() + ci * oh * ow;
        for (std::size_t i = 0; i < oh; ++i)
            for (std::size_t j = 0; j < ow; ++j)
                out[i * ow + j] = 0.25 * (in[(2 * i) * w + 2 * j] + in[(2 * i) * w + 2 * j + 1] +
                                          in[(2 * i + 1) * w + 2 * j] + in[(2 * i + 1) * w + 2 * j + 1]);
    }
    return make_node(std::move(y), {x}, [c, h, w, oh, ow](Node& self) {
        Node* p = self.parents[0].raw();
        if (!p->requires_grad) return;
        double* pg = ensure_grad(*p);
        for (std::size_t ci = 0; ci < c; ++ci) {
            const double* g = self.grad.data() + ci * oh * ow;
            double* out = pg + ci * h * w;
            for (std::size_t i = 0; i < oh; ++i)
                for (std::size_t j = 0; j < ow; ++j) {
                    const double gv = 0.25 * g[i * ow + j];
                    out[(2 * i) * w + 2 * j] += gv;
                    out[(2 * i) * w + 2 * j + 1] += gv;
                    out[(2 * i + 1) * w + 2 * j] += gv;
                    out[(2 * i + 1) * w + 2 * j + 1] += gv;
                }
        }
    });
}

Var bce_with_logits_mean(const Var& x, const Tensor& targets) {
    const Tensor& xv = x.value();
    require_same_shape(xv, targets, "bce_with_logits_mean");
    const std::size_t n = xv.numel();
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = xv[i];
        loss += std::max(v, 0.0) - v * targets[i] + std::log1p(std::exp(-std::abs(v)));
    }
    loss /= static_cast<double>(n);
    Tensor t = targets;
    return make_node(Tensor::scalar(loss), {x}, [n, t](Node& self) {
        Node* p = self.parents[0].raw();
        if (!p->requires_grad) return;
        double* pg = ensure_grad(*p);
        const double g = self.grad[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double v = p->value[i];
            const double sig = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                        : std::exp(v) / (1.0 + std::exp(v));
            pg[i] += g * (sig - t[i]);
        }
    });
}

Var feed_forward(const Var& x, const Var& w1, const Var& b1, const Var& w2, const Var& b2) {
    Var hidden = relu(add_rowvec(matmul(x, w1), b1));
    return add_rowvec(matmul(hidden, w2), b2);
}

Var scaled_dot_attention(const Var& q, const Var& k, const Var& v, double alpha,
                         Tensor* weights_out) {
    const Tensor& qv = q.value();
    const Tensor& kv = k.value();
    const Tensor& vv = v.value();
    require_rank2(qv, "scaled_dot_attention");
    require_rank2(kv, "scaled_dot_attention");
    require_rank2(vv, "scaled_dot_attention");
    if (qv.cols() != kv.cols()) {
        throw DimensionError("scaled_dot_attention: query/key widths disagree, " +
                             shape_str(qv.shape()) + " vs " + shape_str(kv.shape()));
    }
    if (kv.rows() != vv.rows()) {
        throw DimensionError("scaled_dot_attention: key/value counts disagree, " +
                             shape_str(kv.shape()) + " vs " + shape_str(vv.shape()));
    }
    const std::size_t n = qv.rows(), m = kv.rows(), dk = qv.cols(), dv = vv.cols();

    auto transposed = [](const Tensor& t) {
        Tensor out({t.cols(), t.rows()});
        for (std::size_t i = 0; i < t.rows(); ++i)
            for (std::size_t j = 0; j < t.cols(); ++j) out[j * t.rows() + i] = t[i * t.cols() + j];
        return out;
    };

    // weights = softmax(alpha * q k^T), row-stabilized. Keys go through a
    // transposed copy so the score matmul streams contiguously.
    Tensor kt = transposed(kv);
    Tensor weights({n, m});
    detail::mm_nn(n, m, dk, qv.data(), kt.data(), weights.data());
    for (std::size_t r = 0; r < n; ++r) {
        double* row = weights.data() + r * m;
        double mx = row[0];
        for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, row[j]);
        for (std::size_t j = 0; j < m; ++j) row[j] = alpha * (row[j] - mx);
    }
    detail::exp_inplace(weights.data(), weights.numel());
    for (std::size_t r = 0; r < n; ++r) {
        double* row = weights.data() + r * m;
        double sum = 0.0;
        for (std::size_t j = 0; j < m; ++j) sum += row[j];
        for (std::size_t j = 0; j < m; ++j) row[j] /= sum;
    }
    if (weights_out) *weights_out = weights;

    Tensor y({n, dv});
    detail::mm_nn(n, dv, m, weights.data(), vv.data(), y.data());
    return make_node(std::move(y), {q, k, v},
                     [n, m, dk, dv, alpha, p = std::move(weights), transposed](Node& self) {
        Node* pq = self.parents[0].raw();
        Node* pk = self.parents[1].raw();
        Node* pv = self.parents[2].raw();
        const double* g = self.grad.data();
        if (pv->requires_grad) {
            detail::mm_tn(m, dv, n, p.data(), g, ensure_grad(*pv));
        }
        if (!pq->requires_grad && !pk->requires_grad) return;
        // dS = softmax backward of (dout V^T) through the stored weights
        Tensor vt = transposed(pv->value);
        Tensor ds({n, m});
        detail::mm_nn(n, m, dv, g, vt.data(), ds.data());
        for (std::size_t r = 0; r < n; ++r) {
            double* dsr = ds.data() + r * m;
            const double* pr = p.data() + r * m;
            double dot = 0.0;
            for (std::size_t j = 0; j < m; ++j) dot += dsr[j] * pr[j];
            for (std::size_t j = 0; j < m; ++j) dsr[j] = alpha * pr[j] * (dsr[j] - dot);
        }
        if (pq->requires_grad) {
            detail::mm_nn(n, dk, m, ds.data(), pk->value.data(), ensure_grad(*pq));
        }
        if (pk->requires_grad) {
            detail::mm_tn(m, dk, n, ds.data(), pq->value.data(), ensure_grad(*pk));
        }
    });
}

}  // namespace seadate
