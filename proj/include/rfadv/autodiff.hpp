#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rfadv/rng.hpp"

namespace rfadv::nn {

// Dense row-major tensor of doubles. Weights are serialized as f32 in
// checkpoints; all arithmetic runs in f64 so the analytic-identity and
// finite-difference tolerances used by the tests are meaningful.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), v(count(shape), 0.0) {}
    Tensor(std::vector<int> s, std::vector<double> data) : shape(std::move(s)), v(std::move(data)) {}

    static std::size_t count(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int d : s) n *= static_cast<std::size_t>(d);
        return n;
    }
    std::size_t numel() const { return v.size(); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, double value);
    // i.i.d. N(0, stddev^2) entries.
    static Tensor randn(std::vector<int> s, double stddev, Rng& rng);
};

enum class Pad { valid, same };

// Define-by-run computation graph. Node creation order is a topological
// order; backward() walks it once in reverse, accumulating gradients (shared
// subexpressions therefore sum their contributions).
class Graph {
public:
    using Id = int;

    explicit Graph(bool training = false) : training_(training) {}

    bool training() const { return training_; }

    // Leaves. Both copy the tensor; param() marks tensors whose gradient a
    // caller intends to read (no behavioural difference).
    Id input(Tensor t);
    Id param(const Tensor& t);

    // y = x * W^T + b. W: [M, D] (row per output unit), b: [M].
    // x: [N, D] or any [N, ...] whose trailing dims flatten to D.
    Id dense(Id x, Id w, Id b);

    // x: [N, C, H, W] with w: [F, C, KH, KW], b: [F] -> [N, F, OH, OW].
    // Pad::same keeps H, W (extra padding goes to the high side). The
    // two-mode overload pads height and width independently.
    Id conv2d(Id x, Id w, Id b, Pad pad);
    Id conv2d(Id x, Id w, Id b, Pad pad_h, Pad pad_w);

    // Adjoint of conv2d: x: [N, C, H, W] with w: [C, F, KH, KW], b: [F]
    // -> [N, F, OH, OW]. With Pad::same and stride 1 output dims equal input
    // dims; Pad::valid grows each dim by K-1.
    Id transposed_conv2d(Id x, Id w, Id b, Pad pad);

    Id relu(Id x);

    // Inverted dropout: active only when the graph is in training mode,
    // identity otherwise. The mask is drawn at node-creation time.
    Id dropout(Id x, double rate, Rng& rng);

    // Row-wise softmax over the last axis of [N, C].
    Id softmax(Id x);

    // Scalar sum over the batch of -sum_c onehot*log softmax(logits).
    // logits: [N, C]; onehot rows must each sum to 1.
    Id cross_entropy(Id logits, const Tensor& onehot);

    // z = mu + exp(logvar/2) * eps with eps ~ N(0, I) drawn at creation.
    Id gaussian_reparam(Id mu, Id logvar, Rng& rng);

    // Scalar -0.5 * sum(1 + logvar - mu^2 - exp(logvar)).
    Id kl_divergence(Id mu, Id logvar);

    // Scalar sum((x - target)^2).
    Id mse_loss(Id x, const Tensor& target);

    Id add(Id a, Id b);       // elementwise, same shape
    Id scale(Id x, double c); // y = c * x
    Id reshape(Id x, std::vector<int> shape);

    // Seeds d(root)=1 and accumulates gradients into every ancestor.
    // root must be scalar.
    void backward(Id root);

    // Both references live inside the graph's node storage: creating another
    // node may invalidate them, so copy before building further ops.
    const Tensor& value(Id id) const { return nodes_[static_cast<std::size_t>(id)].val; }
    // Zero for nodes no gradient flowed into (allocates the buffer lazily).
    const Tensor& grad(Id id);

private:
    struct ConvSpec {
        int n, ci, h, w;          // input dims
        int co, kh, kw;           // kernel
        int ph_lo, ph_hi, pw_lo, pw_hi;
        int oh, ow;               // output dims
    };

    struct Node {
        int kind;
        Id a = -1, b = -1, c = -1;
        Tensor val;
        Tensor grad;
        Tensor aux;     // mask / saved softmax / eps / target
        double x = 0.0; // op constant
        ConvSpec conv{};
    };

    Id push(Node n);
    Node& at(Id id) { return nodes_[static_cast<std::size_t>(id)]; }
    Tensor& grad_buf(Id id);
    void backward_node(Id id);

    std::vector<Node> nodes_;
    bool training_;
};

// In-place SGD: p -= lr * g.
void sgd_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads, double lr);

// Adam with bias correction; state sized on first step.
struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads);

    int t = 0;
    std::vector<Tensor> m, v;
};

// Checkpoint container: named tensors, serialized as magic "NNAD", version
// 0x01, u32 count, then per tensor u32 name length + name, u32 rank,
// u32 dims, f32 values (little-endian).
struct Checkpoint {
    std::vector<std::pair<std::string, Tensor>> tensors;

    void add(const std::string& name, const Tensor& t) { tensors.emplace_back(name, t); }
    const Tensor* find(const std::string& name) const;
};

void write_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);

} // namespace rfadv::nn
