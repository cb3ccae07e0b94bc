#include "caselink/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "caselink/error.hpp"

namespace caselink::ad {

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

enum class Broadcast { Same, Row, Scalar };

Broadcast broadcast_kind(const char* op, const Tensor& a, const Tensor& b) {
    if (a.same_shape(b)) return Broadcast::Same;
    if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::Row;
    if (b.rows() == 1 && b.cols() == 1) return Broadcast::Scalar;
    shape_error(op, a, b);
}

std::size_t broadcast_index(Broadcast kind, std::size_t i, std::size_t cols) {
    switch (kind) {
        case Broadcast::Same: return i;
        case Broadcast::Row: return i % cols;
        case Broadcast::Scalar: return 0;
    }
    return 0;
}

/// Reduces an output-shaped gradient onto a broadcast operand.
Tensor reduce_broadcast(const Tensor& g, Broadcast kind, const Tensor& target, double sign) {
    Tensor out(target.rows(), target.cols());
    for (std::size_t i = 0; i < g.size(); ++i) out[broadcast_index(kind, i, g.cols())] += sign * g[i];
    return out;
}

Tensor unary_map(const Tensor& a, auto&& fn) {
    Tensor out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = fn(a[i]);
    return out;
}

double row_norm(std::span<const double> r) {
    double s = 0.0;
    for (double v : r) s += v * v;
    return std::sqrt(s);
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols)
        throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                                    shape_str());
}

std::string Tensor::shape_str() const { return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]"; }

double Tensor::item() const {
    if (size() != 1) throw std::invalid_argument("item() on non-scalar tensor " + shape_str());
    return data_[0];
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------
// Var / Tape

const Tensor& Var::value() const { return tape_->value(*this); }
bool Var::requires_grad() const { return tape_->requires_grad(*this); }

Var Tape::constant(Tensor value) {
    if (!value.all_finite()) throw NumericalError("non-finite constant");
    nodes_.push_back({std::move(value), {}, false, false, {}});
    op_names_.emplace_back("constant");
    return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Tensor value) {
    if (!value.all_finite()) throw NumericalError("non-finite parameter");
    nodes_.push_back({std::move(value), {}, true, false, {}});
    op_names_.emplace_back("parameter");
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
    if (!value.all_finite()) throw NumericalError(std::string("non-finite value produced by ") + op);
    bool needs = std::any_of(inputs.begin(), inputs.end(), [this](const Var& v) { return requires_grad(v); });
    nodes_.push_back({std::move(value), {}, needs, false, needs ? std::move(backward) : BackwardFn{}});
    op_names_.emplace_back(op);
    return Var(this, nodes_.size() - 1);
}

Tensor Tape::grad(const Var& v) const {
    const auto& n = nodes_[v.id_];
    return n.has_grad ? n.grad : Tensor(n.value.rows(), n.value.cols());
}

Tensor& Tape::grad_slot(const Var& v) {
    auto& n = nodes_[v.id_];
    if (!n.has_grad) {
        n.grad = Tensor(n.value.rows(), n.value.cols());
        n.has_grad = true;
    }
    return n.grad;
}

void Tape::accumulate(const Var& v, const Tensor& g) {
    if (!requires_grad(v)) return;
    auto& slot = grad_slot(v);
    if (!slot.same_shape(g)) shape_error("accumulate", slot, g);
    for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i];
}

void Tape::zero_grad() {
    for (auto& n : nodes_) {
        n.grad = Tensor();
        n.has_grad = false;
    }
}

void Tape::backward(const Var& loss) {
    if (value(loss).size() != 1)
        throw std::invalid_argument("backward() needs a scalar loss, got " + value(loss).shape_str());
    zero_grad();
    grad_slot(loss)[0] = 1.0;
    for (std::size_t i = loss.id_ + 1; i-- > 0;) {
        auto& n = nodes_[i];
        if (!n.has_grad || !n.backward) continue;
        n.backward(*this, n.grad);
    }
}

// ---------------------------------------------------------------------------
// Ops

Var matmul(const Var& a, const Var& b) {
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    if (x.cols() != y.rows()) shape_error("matmul", x, y);
    const std::size_t n = x.rows(), k = x.cols(), m = y.cols();
    Tensor out(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        auto orow = out.row(i);
        for (std::size_t p = 0; p < k; ++p) {
            double xv = x(i, p);
            if (xv == 0.0) continue;
            auto yrow = y.row(p);
            for (std::size_t j = 0; j < m; ++j) orow[j] += xv * yrow[j];
        }
    }
    return a.tape().record("matmul", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(a);
        const Tensor& y = t.value(b);
        const std::size_t n = x.rows(), k = x.cols(), m = y.cols();
        if (t.requires_grad(a)) {
            Tensor ga(n, k);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < m; ++j) s += g(i, j) * y(p, j);
                    ga(i, p) = s;
                }
            t.accumulate(a, ga);
        }
        if (t.requires_grad(b)) {
            Tensor gb(k, m);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double xv = x(i, p);
                    if (xv == 0.0) continue;
                    auto grow = g.row(i);
                    auto brow = gb.row(p);
                    for (std::size_t j = 0; j < m; ++j) brow[j] += xv * grow[j];
                }
            t.accumulate(b, gb);
        }
    });
}

Var transpose(const Var& a) {
    const Tensor& x = a.value();
    Tensor out(x.cols(), x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) out(j, i) = x(i, j);
    return a.tape().record("transpose", std::move(out), {a}, [a](Tape& t, const Tensor& g) {
        Tensor ga(g.cols(), g.rows());
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) ga(j, i) = g(i, j);
        t.accumulate(a, ga);
    });
}

namespace {

Var add_sub(const char* op, const Var& a, const Var& b, double sign) {
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    Broadcast kind = broadcast_kind(op, x, y);
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + sign * y[broadcast_index(kind, i, x.cols())];
    return a.tape().record(op, std::move(out), {a, b}, [a, b, kind, sign](Tape& t, const Tensor& g) {
        t.accumulate(a, g);
        if (t.requires_grad(b)) t.accumulate(b, reduce_broadcast(g, kind, t.value(b), sign));
    });
}

}  // namespace

Var add(const Var& a, const Var& b) { return add_sub("add", a, b, 1.0); }
Var sub(const Var& a, const Var& b) { return add_sub("sub", a, b, -1.0); }

Var hadamard(const Var& a, const Var& b) {
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    if (!x.same_shape(y)) shape_error("hadamard", x, y);
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
    return a.tape().record("hadamard", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(a);
        const Tensor& y = t.value(b);
        if (t.requires_grad(a)) {
            Tensor ga(g.rows(), g.cols());
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * y[i];
            t.accumulate(a, ga);
        }
        if (t.requires_grad(b)) {
            Tensor gb(g.rows(), g.cols());
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * x[i];
            t.accumulate(b, gb);
        }
    });
}

Var scale_rows(const Var& a, const Var& w) {
    const Tensor& x = a.value();
    const Tensor& s = w.value();
    if (s.rows() != x.rows() || s.cols() != 1) shape_error("scale_rows", x, s);
    Tensor out(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x(r, c) * s[r];
    return a.tape().record("scale_rows", std::move(out), {a, w}, [a, w](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(a);
        const Tensor& s = t.value(w);
        if (t.requires_grad(a)) {
            Tensor ga(x.rows(), x.cols());
            for (std::size_t r = 0; r < x.rows(); ++r)
                for (std::size_t c = 0; c < x.cols(); ++c) ga(r, c) = g(r, c) * s[r];
            t.accumulate(a, ga);
        }
        if (t.requires_grad(w)) {
            Tensor gw(s.rows(), 1);
            for (std::size_t r = 0; r < x.rows(); ++r) {
                double acc = 0.0;
                for (std::size_t c = 0; c < x.cols(); ++c) acc += g(r, c) * x(r, c);
                gw[r] = acc;
            }
            t.accumulate(w, gw);
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out = unary_map(a.value(), [s](double v) { return v * s; });
    return a.tape().record("scale", std::move(out), {a}, [a, s](Tape& t, const Tensor& g) {
        t.accumulate(a, unary_map(g, [s](double v) { return v * s; }));
    });
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
    const std::size_t cols = parts[0].cols();
    std::size_t rows = 0;
    for (const auto& p : parts) {
        if (p.cols() != cols) shape_error("concat_rows", parts[0].value(), p.value());
        rows += p.rows();
    }
    Tensor out(rows, cols);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        auto src = p.value().data();
        std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset * cols));
        offset += p.rows();
    }
    std::vector<Var> inputs(parts.begin(), parts.end());
    return parts[0].tape().record("concat_rows", std::move(out), inputs, [inputs](Tape& t, const Tensor& g) {
        std::size_t offset = 0;
        for (const auto& p : inputs) {
            const Tensor& v = t.value(p);
            if (t.requires_grad(p)) {
                Tensor gp(v.rows(), v.cols());
                auto src = g.data().subspan(offset * g.cols(), v.size());
                std::copy(src.begin(), src.end(), gp.data().begin());
                t.accumulate(p, gp);
            }
            offset += v.rows();
        }
    });
}

Var concat_cols(const Var& a, const Var& b) {
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    if (x.rows() != y.rows()) shape_error("concat_cols", x, y);
    const std::size_t ca = x.cols(), cb = y.cols();
    Tensor out(x.rows(), ca + cb);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        std::copy(x.row(r).begin(), x.row(r).end(), out.row(r).begin());
        std::copy(y.row(r).begin(), y.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(ca));
    }
    return a.tape().record("concat_cols", std::move(out), {a, b}, [a, b, ca, cb](Tape& t, const Tensor& g) {
        Tensor ga(g.rows(), ca), gb(g.rows(), cb);
        for (std::size_t r = 0; r < g.rows(); ++r) {
            for (std::size_t c = 0; c < ca; ++c) ga(r, c) = g(r, c);
            for (std::size_t c = 0; c < cb; ++c) gb(r, c) = g(r, ca + c);
        }
        t.accumulate(a, ga);
        t.accumulate(b, gb);
    });
}

Var exp(const Var& a) {
    Tensor out = unary_map(a.value(), [](double v) { return std::exp(v); });
    return a.tape().record("exp", std::move(out), {a}, [a](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(a);
        Tensor ga(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.size(); ++i) ga[i] = g[i] * std::exp(x[i]);
        t.accumulate(a, ga);
    });
}

Var log(const Var& a) {
    Tensor out = unary_map(a.value(), [](double v) { return std::log(v); });
    return a.tape().record("log", std::move(out), {a}, [a](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(a);
        Tensor ga(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.size(); ++i) ga[i] = g[i] / x[i];
        t.accumulate(a, ga);
    });
}

Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    return a.tape().record("sum", Tensor::scalar(s), {a}, [a](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(a);
        t.accumulate(a, Tensor(x.rows(), x.cols(), g[0]));
    });
}

Var mean(const Var& a) {
    const auto n = static_cast<double>(a.value().size());
    if (n == 0) throw std::invalid_argument("mean of an empty tensor");
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    return a.tape().record("mean", Tensor::scalar(s / n), {a}, [a, n](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(a);
        t.accumulate(a, Tensor(x.rows(), x.cols(), g[0] / n));
    });
}

Var row_sum(const Var& a) {
    const Tensor& x = a.value();
    Tensor out(x.rows(), 1);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double s = 0.0;
        for (double v : x.row(r)) s += v;
        out[r] = s;
    }
    return a.tape().record("row_sum", std::move(out), {a}, [a](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(a);
        Tensor ga(x.rows(), x.cols());
        for (std::size_t r = 0; r < x.rows(); ++r)
            for (std::size_t c = 0; c < x.cols(); ++c) ga(r, c) = g[r];
        t.accumulate(a, ga);
    });
}

Var leaky_relu(const Var& a, double slope) {
    Tensor out = unary_map(a.value(), [slope](double v) { return v > 0.0 ? v : slope * v; });
    return a.tape().record("leaky_relu", std::move(out), {a}, [a, slope](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(a);
        Tensor ga(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.size(); ++i) ga[i] = x[i] > 0.0 ? g[i] : slope * g[i];
        t.accumulate(a, ga);
    });
}

Var elu(const Var& a, double alpha) {
    Tensor out = unary_map(a.value(), [alpha](double v) { return v > 0.0 ? v : alpha * std::expm1(v); });
    return a.tape().record("elu", std::move(out), {a}, [a, alpha](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(a);
        Tensor ga(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.size(); ++i) ga[i] = x[i] > 0.0 ? g[i] : g[i] * alpha * std::exp(x[i]);
        t.accumulate(a, ga);
    });
}

Var l2_normalize_rows(const Var& a) {
    const Tensor& x = a.value();
    Tensor out(x.rows(), x.cols());
    std::vector<double> norms(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        norms[r] = row_norm(x.row(r));
        if (norms[r] == 0.0) continue;
        for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x(r, c) / norms[r];
    }
    Tensor y = out;
    return a.tape().record("l2_normalize_rows", std::move(out), {a},
                           [a, y = std::move(y), norms = std::move(norms)](Tape& t, const Tensor& g) {
                               Tensor ga(y.rows(), y.cols());
                               for (std::size_t r = 0; r < y.rows(); ++r) {
                                   if (norms[r] == 0.0) continue;
                                   double dot = 0.0;
                                   for (std::size_t c = 0; c < y.cols(); ++c) dot += y(r, c) * g(r, c);
                                   for (std::size_t c = 0; c < y.cols(); ++c)
                                       ga(r, c) = (g(r, c) - y(r, c) * dot) / norms[r];
                               }
                               t.accumulate(a, ga);
                           });
}

Var cosine_rows(const Var& a, const Var& b) {
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    if (!x.same_shape(y)) shape_error("cosine_rows", x, y);
    Tensor out(x.rows(), 1);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double nx = row_norm(x.row(r)), ny = row_norm(y.row(r));
        if (nx == 0.0 || ny == 0.0) continue;
        double dot = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) dot += x(r, c) * y(r, c);
        out[r] = dot / (nx * ny);
    }
    return a.tape().record("cosine_rows", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(a);
        const Tensor& y = t.value(b);
        Tensor ga(x.rows(), x.cols()), gb(y.rows(), y.cols());
        for (std::size_t r = 0; r < x.rows(); ++r) {
            double nx = row_norm(x.row(r)), ny = row_norm(y.row(r));
            if (nx == 0.0 || ny == 0.0) continue;
            double dot = 0.0;
            for (std::size_t c = 0; c < x.cols(); ++c) dot += x(r, c) * y(r, c);
            double cos = dot / (nx * ny);
            for (std::size_t c = 0; c < x.cols(); ++c) {
                ga(r, c) = g[r] * (y(r, c) / (nx * ny) - cos * x(r, c) / (nx * nx));
                gb(r, c) = g[r] * (x(r, c) / (nx * ny) - cos * y(r, c) / (ny * ny));
            }
        }
        t.accumulate(a, ga);
        t.accumulate(b, gb);
    });
}

Var segment_softmax(const Var& values, std::span<const std::size_t> segment_ids, std::size_t num_segments) {
    const Tensor& v = values.value();
    if (v.cols() != 1 || v.rows() != segment_ids.size())
        throw std::invalid_argument("segment_softmax: values must be E×1 with one segment id per row");
    std::vector<double> seg_max(num_segments, -std::numeric_limits<double>::infinity());
    for (std::size_t e = 0; e < v.rows(); ++e) {
        if (segment_ids[e] >= num_segments) throw std::invalid_argument("segment_softmax: segment id out of range");
        seg_max[segment_ids[e]] = std::max(seg_max[segment_ids[e]], v[e]);
    }
    Tensor out(v.rows(), 1);
    std::vector<double> seg_sum(num_segments, 0.0);
    for (std::size_t e = 0; e < v.rows(); ++e) {
        out[e] = std::exp(v[e] - seg_max[segment_ids[e]]);
        seg_sum[segment_ids[e]] += out[e];
    }
    for (std::size_t e = 0; e < v.rows(); ++e) out[e] /= seg_sum[segment_ids[e]];
    Tensor y = out;
    std::vector<std::size_t> ids(segment_ids.begin(), segment_ids.end());
    return values.tape().record(
        "segment_softmax", std::move(out), {values},
        [values, y = std::move(y), ids = std::move(ids), num_segments](Tape& t, const Tensor& g) {
            std::vector<double> dot(num_segments, 0.0);
            for (std::size_t e = 0; e < y.rows(); ++e) dot[ids[e]] += y[e] * g[e];
            Tensor gv(y.rows(), 1);
            for (std::size_t e = 0; e < y.rows(); ++e) gv[e] = y[e] * (g[e] - dot[ids[e]]);
            t.accumulate(values, gv);
        });
}

Var dropout(const Var& a, double p, std::uint64_t seed, bool train) {
    if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout: p must lie in [0, 1), got " + std::to_string(p));
    if (!train || p == 0.0) return a;
    const Tensor& x = a.value();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double keep_scale = 1.0 / (1.0 - p);
    Tensor mask(x.rows(), x.cols());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = unif(rng) >= p ? keep_scale : 0.0;
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * mask[i];
    return a.tape().record("dropout", std::move(out), {a}, [a, mask = std::move(mask)](Tape& t, const Tensor& g) {
        Tensor ga(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * mask[i];
        t.accumulate(a, ga);
    });
}

Var gather_rows(const Var& a, std::span<const std::size_t> index) {
    const Tensor& x = a.value();
    Tensor out(index.size(), x.cols());
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= x.rows()) throw std::invalid_argument("gather_rows: index out of range");
        std::copy(x.row(index[i]).begin(), x.row(index[i]).end(), out.row(i).begin());
    }
    std::vector<std::size_t> idx(index.begin(), index.end());
    return a.tape().record("gather_rows", std::move(out), {a}, [a, idx = std::move(idx)](Tape& t, const Tensor& g) {
        Tensor& slot = t.grad_slot(a);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            auto dst = slot.row(idx[i]);
            auto src = g.row(i);
            for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
        }
    });
}

Var scatter_add_rows(const Var& a, std::span<const std::size_t> index, std::size_t out_rows) {
    const Tensor& x = a.value();
    if (index.size() != x.rows()) throw std::invalid_argument("scatter_add_rows: one index per input row required");
    Tensor out(out_rows, x.cols());
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= out_rows) throw std::invalid_argument("scatter_add_rows: index out of range");
        auto dst = out.row(index[i]);
        auto src = x.row(i);
        for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
    std::vector<std::size_t> idx(index.begin(), index.end());
    return a.tape().record("scatter_add_rows", std::move(out), {a},
                           [a, idx = std::move(idx)](Tape& t, const Tensor& g) {
                               Tensor ga(idx.size(), g.cols());
                               for (std::size_t i = 0; i < idx.size(); ++i)
                                   std::copy(g.row(idx[i]).begin(), g.row(idx[i]).end(), ga.row(i).begin());
                               t.accumulate(a, ga);
                           });
}

// ---------------------------------------------------------------------------

double finite_diff_check(const LossFn& f, const std::vector<Tensor>& params, double eps) {
    auto evaluate = [&](const std::vector<Tensor>& values) {
        Tape tape;
        std::vector<Var> vars;
        vars.reserve(values.size());
        for (const auto& v : values) vars.push_back(tape.constant(v));
        return f(tape, vars).value().item();
    };

    Tape tape;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (const auto& p : params) vars.push_back(tape.parameter(p));
    Var loss = f(tape, vars);
    const double base = loss.value().item();
    tape.backward(loss);

    if (evaluate(params) != base)
        throw NumericalError("finite_diff_check: loss is not deterministic; fix the dropout mask seed");

    double worst = 0.0;
    std::vector<Tensor> probe = params;
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor analytic = tape.grad(vars[p]);
        for (std::size_t i = 0; i < params[p].size(); ++i) {
            probe[p][i] = params[p][i] + eps;
            double up = evaluate(probe);
            probe[p][i] = params[p][i] - eps;
            double down = evaluate(probe);
            probe[p][i] = params[p][i];
            double numeric = (up - down) / (2.0 * eps);
            double a = analytic[i];
            double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace caselink::ad
