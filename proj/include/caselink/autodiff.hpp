#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace caselink::ad {

/// Dense row-major matrix. Vectors are 1×d or d×1, scalars 1×1.
class Tensor {
  public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
    Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor(1, 1, v); }

    [[nodiscard]] std::size_t rows() const { return rows_; }
    [[nodiscard]] std::size_t cols() const { return cols_; }
    [[nodiscard]] std::size_t size() const { return data_.size(); }
    [[nodiscard]] bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    [[nodiscard]] std::string shape_str() const;

    [[nodiscard]] double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    [[nodiscard]] double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    [[nodiscard]] double& operator[](std::size_t i) { return data_[i]; }
    [[nodiscard]] double operator[](std::size_t i) const { return data_[i]; }

    [[nodiscard]] std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    [[nodiscard]] std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    [[nodiscard]] std::span<double> data() { return data_; }
    [[nodiscard]] std::span<const double> data() const { return data_; }
    [[nodiscard]] std::vector<double>& storage() { return data_; }

    [[nodiscard]] double item() const;
    [[nodiscard]] bool all_finite() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
/// lives.
class Var {
  public:
    Var() = default;

    [[nodiscard]] const Tensor& value() const;
    [[nodiscard]] std::size_t rows() const { return value().rows(); }
    [[nodiscard]] std::size_t cols() const { return value().cols(); }
    [[nodiscard]] bool requires_grad() const;
    [[nodiscard]] Tape& tape() const { return *tape_; }
    [[nodiscard]] std::size_t id() const { return id_; }
    [[nodiscard]] bool valid() const { return tape_ != nullptr; }

  private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Records operations in execution order; backward() replays them in reverse.
/// Single-threaded. Independent tapes may run concurrently.
class Tape {
  public:
    /// Receives the gradient of the node's output and accumulates into its
    /// inputs through Tape::accumulate.
    using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    Var parameter(Tensor value);

    /// Appends an op result. When none of `inputs` requires a gradient the
    /// backward rule is dropped. Throws NumericalError on non-finite output.
    Var record(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

    [[nodiscard]] const Tensor& value(const Var& v) const { return nodes_[v.id_].value; }
    [[nodiscard]] bool requires_grad(const Var& v) const { return nodes_[v.id_].requires_grad; }

    /// Gradient of the last backward() target w.r.t. v (zeros if unreachable).
    [[nodiscard]] Tensor grad(const Var& v) const;

    /// Adds `g` into the gradient slot of `v` if it requires one.
    void accumulate(const Var& v, const Tensor& g);
    /// Element-wise accumulation helper for sparse rules.
    Tensor& grad_slot(const Var& v);

    void backward(const Var& loss);
    void zero_grad();

    [[nodiscard]] std::size_t size() const { return nodes_.size(); }
    [[nodiscard]] const std::vector<std::string>& op_names() const { return op_names_; }

  private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        bool has_grad = false;
        BackwardFn backward;
    };

    std::vector<Node> nodes_;
    std::vector<std::string> op_names_;
};

// Core ops. None of them mutates its inputs.

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
/// b may match a's shape, be a 1×cols row (broadcast over rows) or a 1×1 scalar.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
/// Multiplies row r of a (rows×cols) by w(r, 0) with w rows×1.
Var scale_rows(const Var& a, const Var& w);
Var scale(const Var& a, double s);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(const Var& a, const Var& b);
Var exp(const Var& a);
Var log(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);
/// rows×1 vector of per-row sums.
Var row_sum(const Var& a);
Var leaky_relu(const Var& a, double slope = 0.2);
Var elu(const Var& a, double alpha = 1.0);
/// Zero rows stay zero.
Var l2_normalize_rows(const Var& a);
/// rows×1 cosine of matching rows; 0 where either row is zero.
Var cosine_rows(const Var& a, const Var& b);
/// Softmax of an E×1 column within each segment; segment_ids[e] < num_segments.
Var segment_softmax(const Var& values, std::span<const std::size_t> segment_ids, std::size_t num_segments);
/// Inverted dropout: kept entries are scaled by 1/(1-p) during training;
/// identity otherwise. The mask is a pure function of (seed, shape).
Var dropout(const Var& a, double p, std::uint64_t seed, bool train);
Var gather_rows(const Var& a, std::span<const std::size_t> index);
/// out[index[i]] += a[i]; out has `out_rows` rows.
Var scatter_add_rows(const Var& a, std::span<const std::size_t> index, std::size_t out_rows);

/// Builds a scalar loss from parameter handles on the supplied tape.
using LossFn = std::function<Var(Tape&, std::span<const Var>)>;

/// Max over every coordinate of |a - n| / max(1e-8, |a| + |n|) where a is the
/// reverse-mode gradient and n the central difference with step eps.
/// Throws NumericalError if f is not deterministic (e.g. an unfixed dropout mask).
double finite_diff_check(const LossFn& f, const std::vector<Tensor>& params, double eps = 1e-4);

}  // namespace caselink::ad
