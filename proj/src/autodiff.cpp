#include "rfadv/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "rfadv/error.hpp"

namespace rfadv::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConst = Eigen::Map<const RowMat>;

enum Kind {
    kLeaf,
    kDense,
    kConv,
    kTConv,
    kRelu,
    kDropout,
    kSoftmax,
    kCrossEntropy,
    kReparam,
    kKl,
    kMse,
    kAdd,
    kScale,
    kReshape,
};

std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

void pad_for(Pad pad, int k, int& lo, int& hi) {
    if (pad == Pad::valid) {
        lo = hi = 0;
    } else {
        lo = (k - 1) / 2;
        hi = (k - 1) - lo;
    }
}

// cols[(ci,kh,kw)][(oh,ow)] = x[ci, oh+kh-ph_lo, ow+kw-pw_lo] (0 outside).
// x is one sample, [Ci, H, W] contiguous.
void im2col(const double* x, const int ci, const int h, const int w, const int kh, const int kw,
            const int ph_lo, const int pw_lo, const int oh, const int ow, double* cols) {
    const int ohw = oh * ow;
    for (int c = 0; c < ci; ++c) {
        const double* xc = x + static_cast<std::ptrdiff_t>(c) * h * w;
        for (int a = 0; a < kh; ++a) {
            for (int b = 0; b < kw; ++b) {
                double* row = cols + (static_cast<std::ptrdiff_t>(c) * kh * kw + a * kw + b) * ohw;
                for (int y = 0; y < oh; ++y) {
                    const int iy = y + a - ph_lo;
                    double* dst = row + static_cast<std::ptrdiff_t>(y) * ow;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst, dst + ow, 0.0);
                        continue;
                    }
                    const double* src = xc + static_cast<std::ptrdiff_t>(iy) * w;
                    for (int z = 0; z < ow; ++z) {
                        const int ix = z + b - pw_lo;
                        dst[z] = (ix < 0 || ix >= w) ? 0.0 : src[ix];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-adds cols back into x.
void col2im(const double* cols, const int ci, const int h, const int w, const int kh, const int kw,
            const int ph_lo, const int pw_lo, const int oh, const int ow, double* x) {
    const int ohw = oh * ow;
    for (int c = 0; c < ci; ++c) {
        double* xc = x + static_cast<std::ptrdiff_t>(c) * h * w;
        for (int a = 0; a < kh; ++a) {
            for (int b = 0; b < kw; ++b) {
                const double* row = cols + (static_cast<std::ptrdiff_t>(c) * kh * kw + a * kw + b) * ohw;
                for (int y = 0; y < oh; ++y) {
                    const int iy = y + a - ph_lo;
                    if (iy < 0 || iy >= h) continue;
                    const double* src = row + static_cast<std::ptrdiff_t>(y) * ow;
                    double* dst = xc + static_cast<std::ptrdiff_t>(iy) * w;
                    for (int z = 0; z < ow; ++z) {
                        const int ix = z + b - pw_lo;
                        if (ix >= 0 && ix < w) dst[ix] += src[z];
                    }
                }
            }
        }
    }
}

} // namespace

Tensor Tensor::full(std::vector<int> s, double value) {
    Tensor t(std::move(s));
    std::fill(t.v.begin(), t.v.end(), value);
    return t;
}

Tensor Tensor::randn(std::vector<int> s, double stddev, Rng& rng) {
    Tensor t(std::move(s));
    for (auto& x : t.v) x = rng.gaussian(0.0, stddev);
    return t;
}

Graph::Id Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
}

Tensor& Graph::grad_buf(Id id) {
    Node& n = at(id);
    if (n.grad.v.empty()) n.grad = Tensor(n.val.shape);
    return n.grad;
}

const Tensor& Graph::grad(Id id) {
    return grad_buf(id); // zeros if nothing flowed back
}

Graph::Id Graph::input(Tensor t) {
    Node n;
    n.kind = kLeaf;
    n.val = std::move(t);
    return push(std::move(n));
}

Graph::Id Graph::param(const Tensor& t) { return input(t); }

Graph::Id Graph::dense(Id x, Id w, Id b) {
    const Tensor& xv = at(x).val;
    const Tensor& wv = at(w).val;
    const Tensor& bv = at(b).val;
    if (xv.shape.size() < 2 || wv.shape.size() != 2 || bv.shape.size() != 1) {
        fail(ErrorCode::dimension, "dense: need x rank>=2, w rank 2, b rank 1");
    }
    const int n = xv.dim(0);
    const int d = static_cast<int>(xv.numel()) / n;
    const int m = wv.dim(0);
    if (wv.dim(1) != d || bv.dim(0) != m) {
        fail(ErrorCode::dimension, "dense: x " + shape_str(xv.shape) + " vs w " +
                                       shape_str(wv.shape) + " vs b " + shape_str(bv.shape));
    }
    Node node;
    node.kind = kDense;
    node.a = x;
    node.b = w;
    node.c = b;
    node.val = Tensor({n, m});
    MapConst xm(xv.v.data(), n, d);
    MapConst wm(wv.v.data(), m, d);
    MapMat ym(node.val.v.data(), n, m);
    ym.noalias() = xm * wm.transpose();
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) ym(i, j) += bv.v[static_cast<std::size_t>(j)];
    }
    return push(std::move(node));
}

Graph::Id Graph::conv2d(Id x, Id w, Id b, Pad pad) { return conv2d(x, w, b, pad, pad); }

Graph::Id Graph::conv2d(Id x, Id w, Id b, Pad pad_h, Pad pad_w) {
    const Tensor& xv = at(x).val;
    const Tensor& wv = at(w).val;
    const Tensor& bv = at(b).val;
    if (xv.shape.size() != 4 || wv.shape.size() != 4 || bv.shape.size() != 1) {
        fail(ErrorCode::dimension, "conv2d: need x rank 4, w rank 4, b rank 1");
    }
    ConvSpec s{};
    s.n = xv.dim(0);
    s.ci = xv.dim(1);
    s.h = xv.dim(2);
    s.w = xv.dim(3);
    s.co = wv.dim(0);
    s.kh = wv.dim(2);
    s.kw = wv.dim(3);
    if (wv.dim(1) != s.ci || bv.dim(0) != s.co) {
        fail(ErrorCode::dimension, "conv2d: x " + shape_str(xv.shape) + " vs w " +
                                       shape_str(wv.shape) + " vs b " + shape_str(bv.shape));
    }
    pad_for(pad_h, s.kh, s.ph_lo, s.ph_hi);
    pad_for(pad_w, s.kw, s.pw_lo, s.pw_hi);
    s.oh = s.h + s.ph_lo + s.ph_hi - s.kh + 1;
    s.ow = s.w + s.pw_lo + s.pw_hi - s.kw + 1;
    if (s.oh <= 0 || s.ow <= 0) {
        fail(ErrorCode::dimension, "conv2d: kernel " + shape_str(wv.shape) + " larger than input " +
                                       shape_str(xv.shape));
    }

    Node node;
    node.kind = kConv;
    node.a = x;
    node.b = w;
    node.c = b;
    node.conv = s;
    node.val = Tensor({s.n, s.co, s.oh, s.ow});
    const int ckk = s.ci * s.kh * s.kw;
    const int ohw = s.oh * s.ow;
    node.aux = Tensor({s.n, ckk, ohw}); // saved im2col buffer
    MapConst wm(wv.v.data(), s.co, ckk);
    for (int i = 0; i < s.n; ++i) {
        double* cols = node.aux.v.data() + static_cast<std::ptrdiff_t>(i) * ckk * ohw;
        im2col(xv.v.data() + static_cast<std::ptrdiff_t>(i) * s.ci * s.h * s.w, s.ci, s.h, s.w,
               s.kh, s.kw, s.ph_lo, s.pw_lo, s.oh, s.ow, cols);
        MapConst cm(cols, ckk, ohw);
        MapMat ym(node.val.v.data() + static_cast<std::ptrdiff_t>(i) * s.co * ohw, s.co, ohw);
        ym.noalias() = wm * cm;
        for (int f = 0; f < s.co; ++f) ym.row(f).array() += bv.v[static_cast<std::size_t>(f)];
    }
    return push(std::move(node));
}

Graph::Id Graph::transposed_conv2d(Id x, Id w, Id b, Pad pad) {
    const Tensor& xv = at(x).val;
    const Tensor& wv = at(w).val;
    const Tensor& bv = at(b).val;
    if (xv.shape.size() != 4 || wv.shape.size() != 4 || bv.shape.size() != 1) {
        fail(ErrorCode::dimension, "transposed_conv2d: need x rank 4, w rank 4, b rank 1");
    }
    // Adjoint bookkeeping: the "virtual" forward conv maps F-space [N,F,OH,OW]
    // to C-space [N,C,H,W]; here x lives in C-space and the output in F-space.
    ConvSpec s{};
    s.n = xv.dim(0);
    s.ci = wv.dim(0);  // C: channels of x
    s.co = wv.dim(1);  // F: output channels
    s.kh = wv.dim(2);
    s.kw = wv.dim(3);
    s.h = xv.dim(2);
    s.w = xv.dim(3);
    if (xv.dim(1) != s.ci || bv.dim(0) != s.co) {
        fail(ErrorCode::dimension, "transposed_conv2d: x " + shape_str(xv.shape) + " vs w " +
                                       shape_str(wv.shape) + " vs b " + shape_str(bv.shape));
    }
    pad_for(pad, s.kh, s.ph_lo, s.ph_hi);
    pad_for(pad, s.kw, s.pw_lo, s.pw_hi);
    s.oh = s.h - s.ph_lo - s.ph_hi + s.kh - 1;
    s.ow = s.w - s.pw_lo - s.pw_hi + s.kw - 1;
    if (s.oh <= 0 || s.ow <= 0) {
        fail(ErrorCode::dimension, "transposed_conv2d: degenerate output for input " +
                                       shape_str(xv.shape));
    }

    Node node;
    node.kind = kTConv;
    node.a = x;
    node.b = w;
    node.c = b;
    node.conv = s;
    node.val = Tensor({s.n, s.co, s.oh, s.ow});
    const int fkk = s.co * s.kh * s.kw;
    const int hw = s.h * s.w;
    MapConst wm(wv.v.data(), s.ci, fkk);
    std::vector<double> dcols(static_cast<std::size_t>(fkk) * hw);
    for (int i = 0; i < s.n; ++i) {
        MapConst xm(xv.v.data() + static_cast<std::ptrdiff_t>(i) * s.ci * hw, s.ci, hw);
        MapMat cm(dcols.data(), fkk, hw);
        cm.noalias() = wm.transpose() * xm;
        double* y = node.val.v.data() + static_cast<std::ptrdiff_t>(i) * s.co * s.oh * s.ow;
        col2im(dcols.data(), s.co, s.oh, s.ow, s.kh, s.kw, s.ph_lo, s.pw_lo, s.h, s.w, y);
        for (int f = 0; f < s.co; ++f) {
            double* yf = y + static_cast<std::ptrdiff_t>(f) * s.oh * s.ow;
            const double bias = bv.v[static_cast<std::size_t>(f)];
            for (int j = 0; j < s.oh * s.ow; ++j) yf[j] += bias;
        }
    }
    return push(std::move(node));
}

Graph::Id Graph::relu(Id x) {
    Node node;
    node.kind = kRelu;
    node.a = x;
    node.val = at(x).val;
    // Clamps only genuine negatives; NaN passes through so a poisoned
    // activation surfaces in the loss instead of being silently zeroed.
    for (auto& v : node.val.v) {
        if (v < 0.0) v = 0.0;
    }
    return push(std::move(node));
}

Graph::Id Graph::dropout(Id x, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) fail(ErrorCode::config, "dropout: rate must be in [0, 1)");
    Node node;
    node.kind = kDropout;
    node.a = x;
    node.val = at(x).val;
    if (training_ && rate > 0.0) {
        node.aux = Tensor(node.val.shape);
        const double keep_scale = 1.0 / (1.0 - rate);
        for (std::size_t i = 0; i < node.val.numel(); ++i) {
            const double m = rng.uniform() >= rate ? keep_scale : 0.0;
            node.aux.v[i] = m;
            node.val.v[i] *= m;
        }
    }
    return push(std::move(node));
}

Graph::Id Graph::softmax(Id x) {
    const Tensor& xv = at(x).val;
    if (xv.shape.size() != 2) fail(ErrorCode::dimension, "softmax: need [N, C]");
    Node node;
    node.kind = kSoftmax;
    node.a = x;
    node.val = xv;
    const int n = xv.dim(0), c = xv.dim(1);
    for (int i = 0; i < n; ++i) {
        double* row = node.val.v.data() + static_cast<std::ptrdiff_t>(i) * c;
        double m = *std::max_element(row, row + c);
        double sum = 0.0;
        for (int j = 0; j < c; ++j) {
            row[j] = std::exp(row[j] - m);
            sum += row[j];
        }
        for (int j = 0; j < c; ++j) row[j] /= sum;
    }
    return push(std::move(node));
}

Graph::Id Graph::cross_entropy(Id logits, const Tensor& onehot) {
    const Tensor& zv = at(logits).val;
    if (zv.shape.size() != 2 || onehot.shape != zv.shape) {
        fail(ErrorCode::dimension, "cross_entropy: logits " + shape_str(zv.shape) + " vs targets " +
                                       shape_str(onehot.shape));
    }
    const int n = zv.dim(0), c = zv.dim(1);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < c; ++j) s += onehot.v[static_cast<std::size_t>(i) * c + j];
        if (std::abs(s - 1.0) > 1e-9) {
            fail(ErrorCode::numeric, "cross_entropy: target row " + std::to_string(i) +
                                         " sums to " + std::to_string(s));
        }
    }
    Node node;
    node.kind = kCrossEntropy;
    node.a = logits;
    node.aux = onehot;
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        const double* row = zv.v.data() + static_cast<std::ptrdiff_t>(i) * c;
        double m = *std::max_element(row, row + c);
        double lse = 0.0;
        for (int j = 0; j < c; ++j) lse += std::exp(row[j] - m);
        lse = m + std::log(lse);
        for (int j = 0; j < c; ++j) {
            double y = onehot.v[static_cast<std::size_t>(i) * c + j];
            if (y != 0.0) loss += y * (lse - row[j]);
        }
    }
    node.val = Tensor({1}, {loss});
    return push(std::move(node));
}

Graph::Id Graph::gaussian_reparam(Id mu, Id logvar, Rng& rng) {
    const Tensor& mv = at(mu).val;
    const Tensor& lv = at(logvar).val;
    if (mv.shape != lv.shape) {
        fail(ErrorCode::dimension, "gaussian_reparam: mu " + shape_str(mv.shape) + " vs logvar " +
                                       shape_str(lv.shape));
    }
    Node node;
    node.kind = kReparam;
    node.a = mu;
    node.b = logvar;
    node.aux = Tensor(mv.shape);
    node.val = Tensor(mv.shape);
    for (std::size_t i = 0; i < mv.numel(); ++i) {
        double eps = rng.gaussian();
        node.aux.v[i] = eps;
        node.val.v[i] = mv.v[i] + std::exp(0.5 * lv.v[i]) * eps;
    }
    return push(std::move(node));
}

Graph::Id Graph::kl_divergence(Id mu, Id logvar) {
    const Tensor& mv = at(mu).val;
    const Tensor& lv = at(logvar).val;
    if (mv.shape != lv.shape) {
        fail(ErrorCode::dimension, "kl_divergence: mu " + shape_str(mv.shape) + " vs logvar " +
                                       shape_str(lv.shape));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < mv.numel(); ++i) {
        acc += 1.0 + lv.v[i] - mv.v[i] * mv.v[i] - std::exp(lv.v[i]);
    }
    Node node;
    node.kind = kKl;
    node.a = mu;
    node.b = logvar;
    node.val = Tensor({1}, {-0.5 * acc});
    return push(std::move(node));
}

Graph::Id Graph::mse_loss(Id x, const Tensor& target) {
    const Tensor& xv = at(x).val;
    if (xv.shape != target.shape) {
        fail(ErrorCode::dimension, "mse_loss: x " + shape_str(xv.shape) + " vs target " +
                                       shape_str(target.shape));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < xv.numel(); ++i) {
        double d = xv.v[i] - target.v[i];
        acc += d * d;
    }
    Node node;
    node.kind = kMse;
    node.a = x;
    node.aux = target;
    node.val = Tensor({1}, {acc});
    return push(std::move(node));
}

Graph::Id Graph::add(Id a, Id b) {
    const Tensor& av = at(a).val;
    const Tensor& bv = at(b).val;
    if (av.shape != bv.shape) {
        fail(ErrorCode::dimension, "add: " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
    }
    Node node;
    node.kind = kAdd;
    node.a = a;
    node.b = b;
    node.val = av;
    for (std::size_t i = 0; i < bv.numel(); ++i) node.val.v[i] += bv.v[i];
    return push(std::move(node));
}

Graph::Id Graph::scale(Id x, double c) {
    Node node;
    node.kind = kScale;
    node.a = x;
    node.x = c;
    node.val = at(x).val;
    for (auto& v : node.val.v) v *= c;
    return push(std::move(node));
}

Graph::Id Graph::reshape(Id x, std::vector<int> shape) {
    const Tensor& xv = at(x).val;
    if (Tensor::count(shape) != xv.numel()) {
        fail(ErrorCode::dimension, "reshape: " + shape_str(xv.shape) + " to " + shape_str(shape) +
                                       " changes element count");
    }
    Node node;
    node.kind = kReshape;
    node.a = x;
    node.val = Tensor(std::move(shape), xv.v);
    return push(std::move(node));
}

void Graph::backward(Id root) {
    Node& r = at(root);
    if (r.val.numel() != 1) {
        fail(ErrorCode::dimension, "backward: root must be scalar, got " + shape_str(r.val.shape));
    }
    grad_buf(root).v[0] = 1.0;
    // Creation order is topological; one reverse pass visits each node once.
    for (Id id = root; id >= 0; --id) {
        if (at(id).grad.v.empty()) continue; // nothing flowed into this node
        backward_node(id);
    }
}

void Graph::backward_node(Id id) {
    Node& n = at(id);
    const Tensor& dy = n.grad;
    switch (n.kind) {
    case kLeaf:
        return;
    case kDense: {
        const Tensor& xv = at(n.a).val;
        const Tensor& wv = at(n.b).val;
        const int nn = n.val.dim(0), m = n.val.dim(1);
        const int d = static_cast<int>(xv.numel()) / nn;
        MapConst dym(dy.v.data(), nn, m);
        MapConst xm(xv.v.data(), nn, d);
        MapConst wm(wv.v.data(), m, d);
        MapMat dxm(grad_buf(n.a).v.data(), nn, d);
        dxm.noalias() += dym * wm;
        MapMat dwm(grad_buf(n.b).v.data(), m, d);
        dwm.noalias() += dym.transpose() * xm;
        Tensor& db = grad_buf(n.c);
        for (int i = 0; i < nn; ++i) {
            for (int j = 0; j < m; ++j) db.v[static_cast<std::size_t>(j)] += dym(i, j);
        }
        return;
    }
    case kConv: {
        const ConvSpec& s = n.conv;
        const Tensor& wv = at(n.b).val;
        const int ckk = s.ci * s.kh * s.kw;
        const int ohw = s.oh * s.ow;
        MapConst wm(wv.v.data(), s.co, ckk);
        Tensor& dx = grad_buf(n.a);
        Tensor& dw = grad_buf(n.b);
        Tensor& db = grad_buf(n.c);
        MapMat dwm(dw.v.data(), s.co, ckk);
        std::vector<double> dcols(static_cast<std::size_t>(ckk) * ohw);
        for (int i = 0; i < s.n; ++i) {
            MapConst dym(dy.v.data() + static_cast<std::ptrdiff_t>(i) * s.co * ohw, s.co, ohw);
            MapConst cm(n.aux.v.data() + static_cast<std::ptrdiff_t>(i) * ckk * ohw, ckk, ohw);
            dwm.noalias() += dym * cm.transpose();
            for (int f = 0; f < s.co; ++f) db.v[static_cast<std::size_t>(f)] += dym.row(f).sum();
            MapMat dcm(dcols.data(), ckk, ohw);
            dcm.noalias() = wm.transpose() * dym;
            col2im(dcols.data(), s.ci, s.h, s.w, s.kh, s.kw, s.ph_lo, s.pw_lo, s.oh, s.ow,
                   dx.v.data() + static_cast<std::ptrdiff_t>(i) * s.ci * s.h * s.w);
        }
        return;
    }
    case kTConv: {
        const ConvSpec& s = n.conv;
        const Tensor& xv = at(n.a).val;
        const Tensor& wv = at(n.b).val;
        const int fkk = s.co * s.kh * s.kw;
        const int hw = s.h * s.w;
        MapConst wm(wv.v.data(), s.ci, fkk);
        Tensor& dx = grad_buf(n.a);
        Tensor& dw = grad_buf(n.b);
        Tensor& db = grad_buf(n.c);
        MapMat dwm(dw.v.data(), s.ci, fkk);
        std::vector<double> cols(static_cast<std::size_t>(fkk) * hw);
        for (int i = 0; i < s.n; ++i) {
            const double* dyp = dy.v.data() + static_cast<std::ptrdiff_t>(i) * s.co * s.oh * s.ow;
            im2col(dyp, s.co, s.oh, s.ow, s.kh, s.kw, s.ph_lo, s.pw_lo, s.h, s.w, cols.data());
            MapConst cm(cols.data(), fkk, hw);
            MapMat dxm(dx.v.data() + static_cast<std::ptrdiff_t>(i) * s.ci * hw, s.ci, hw);
            dxm.noalias() += wm * cm;
            MapConst xm(xv.v.data() + static_cast<std::ptrdiff_t>(i) * s.ci * hw, s.ci, hw);
            dwm.noalias() += xm * cm.transpose();
            for (int f = 0; f < s.co; ++f) {
                const double* dyf = dyp + static_cast<std::ptrdiff_t>(f) * s.oh * s.ow;
                double acc = 0.0;
                for (int j = 0; j < s.oh * s.ow; ++j) acc += dyf[j];
                db.v[static_cast<std::size_t>(f)] += acc;
            }
        }
        return;
    }
    case kRelu: {
        const Tensor& xv = at(n.a).val;
        Tensor& dx = grad_buf(n.a);
        for (std::size_t i = 0; i < dx.numel(); ++i) {
            if (xv.v[i] > 0.0) dx.v[i] += dy.v[i];
        }
        return;
    }
    case kDropout: {
        Tensor& dx = grad_buf(n.a);
        if (n.aux.v.empty()) {
            for (std::size_t i = 0; i < dx.numel(); ++i) dx.v[i] += dy.v[i];
        } else {
            for (std::size_t i = 0; i < dx.numel(); ++i) dx.v[i] += dy.v[i] * n.aux.v[i];
        }
        return;
    }
    case kSoftmax: {
        const int nn = n.val.dim(0), c = n.val.dim(1);
        Tensor& dx = grad_buf(n.a);
        for (int i = 0; i < nn; ++i) {
            const double* s = n.val.v.data() + static_cast<std::ptrdiff_t>(i) * c;
            const double* g = dy.v.data() + static_cast<std::ptrdiff_t>(i) * c;
            double dot = 0.0;
            for (int j = 0; j < c; ++j) dot += g[j] * s[j];
            double* d = dx.v.data() + static_cast<std::ptrdiff_t>(i) * c;
            for (int j = 0; j < c; ++j) d[j] += s[j] * (g[j] - dot);
        }
        return;
    }
    case kCrossEntropy: {
        const Tensor& zv = at(n.a).val;
        const int nn = zv.dim(0), c = zv.dim(1);
        Tensor& dz = grad_buf(n.a);
        const double dl = dy.v[0];
        for (int i = 0; i < nn; ++i) {
            const double* row = zv.v.data() + static_cast<std::ptrdiff_t>(i) * c;
            double m = *std::max_element(row, row + c);
            double lse = 0.0;
            for (int j = 0; j < c; ++j) lse += std::exp(row[j] - m);
            double* d = dz.v.data() + static_cast<std::ptrdiff_t>(i) * c;
            for (int j = 0; j < c; ++j) {
                const double soft = std::exp(row[j] - m) / lse;
                d[j] += dl * (soft - n.aux.v[static_cast<std::size_t>(i) * c + j]);
            }
        }
        return;
    }
    case kReparam: {
        const Tensor& lv = at(n.b).val;
        Tensor& dmu = grad_buf(n.a);
        Tensor& dlv = grad_buf(n.b);
        for (std::size_t i = 0; i < dy.numel(); ++i) {
            dmu.v[i] += dy.v[i];
            dlv.v[i] += dy.v[i] * 0.5 * std::exp(0.5 * lv.v[i]) * n.aux.v[i];
        }
        return;
    }
    case kKl: {
        const Tensor& mv = at(n.a).val;
        const Tensor& lv = at(n.b).val;
        Tensor& dmu = grad_buf(n.a);
        Tensor& dlv = grad_buf(n.b);
        const double dl = dy.v[0];
        for (std::size_t i = 0; i < mv.numel(); ++i) {
            dmu.v[i] += dl * mv.v[i];
            dlv.v[i] += dl * (-0.5) * (1.0 - std::exp(lv.v[i]));
        }
        return;
    }
    case kMse: {
        const Tensor& xv = at(n.a).val;
        Tensor& dx = grad_buf(n.a);
        const double dl = dy.v[0];
        for (std::size_t i = 0; i < xv.numel(); ++i) {
            dx.v[i] += dl * 2.0 * (xv.v[i] - n.aux.v[i]);
        }
        return;
    }
    case kAdd: {
        Tensor& da = grad_buf(n.a);
        Tensor& db = grad_buf(n.b);
        for (std::size_t i = 0; i < dy.numel(); ++i) {
            da.v[i] += dy.v[i];
            db.v[i] += dy.v[i];
        }
        return;
    }
    case kScale: {
        Tensor& dx = grad_buf(n.a);
        for (std::size_t i = 0; i < dy.numel(); ++i) dx.v[i] += n.x * dy.v[i];
        return;
    }
    case kReshape: {
        Tensor& dx = grad_buf(n.a);
        for (std::size_t i = 0; i < dy.numel(); ++i) dx.v[i] += dy.v[i];
        return;
    }
    default:
        fail(ErrorCode::internal, "backward: unknown op kind");
    }
}

void sgd_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
              double lr) {
    if (params.size() != grads.size()) fail(ErrorCode::dimension, "sgd_step: size mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = *grads[i];
        if (p.numel() != g.numel()) fail(ErrorCode::dimension, "sgd_step: shape mismatch");
        for (std::size_t j = 0; j < p.numel(); ++j) p.v[j] -= lr * g.v[j];
    }
}

void Adam::step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
    if (params.size() != grads.size()) fail(ErrorCode::dimension, "adam: size mismatch");
    if (m.empty()) {
        for (auto* p : params) {
            m.emplace_back(Tensor(p->shape));
            v.emplace_back(Tensor(p->shape));
        }
    }
    if (m.size() != params.size()) fail(ErrorCode::dimension, "adam: state/param mismatch");
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = *grads[i];
        if (p.numel() != g.numel()) fail(ErrorCode::dimension, "adam: shape mismatch");
        for (std::size_t j = 0; j < p.numel(); ++j) {
            double& mj = m[i].v[j];
            double& vj = v[i].v[j];
            mj = beta1 * mj + (1.0 - beta1) * g.v[j];
            vj = beta2 * vj + (1.0 - beta2) * g.v[j] * g.v[j];
            p.v[j] -= lr * (mj / bc1) / (std::sqrt(vj / bc2) + eps);
        }
    }
}

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return &t;
    }
    return nullptr;
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& data, std::size_t& pos, const std::string& path,
                      const char* what) {
    if (pos + 4 > data.size()) {
        fail(ErrorCode::format, path + ": truncated reading " + what + " at byte offset " +
                                    std::to_string(pos));
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data[pos++])) << (8 * i);
    }
    return v;
}

} // namespace

void write_checkpoint(const Checkpoint& ck, const std::string& path) {
    std::string out;
    out += "NNAD";
    out.push_back(0x01);
    put_u32(out, static_cast<std::uint32_t>(ck.tensors.size()));
    for (const auto& [name, t] : ck.tensors) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
        for (int d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
        for (double x : t.v) {
            float f = static_cast<float>(x);
            std::uint32_t u;
            std::memcpy(&u, &f, 4);
            put_u32(out, u);
        }
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail(ErrorCode::io, "cannot open for writing: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) fail(ErrorCode::io, "write failed: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(ErrorCode::io, "cannot open: " + path);
    std::string data(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>{});
    if (data.size() < 5 || data.compare(0, 4, "NNAD") != 0) {
        fail(ErrorCode::format, path + ": bad magic at byte offset 0");
    }
    if (data[4] != 0x01) fail(ErrorCode::format, path + ": unsupported version at byte offset 4");
    std::size_t pos = 5;
    std::uint32_t count = get_u32(data, pos, path, "tensor count");
    Checkpoint ck;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint32_t name_len = get_u32(data, pos, path, "name length");
        if (pos + name_len > data.size()) {
            fail(ErrorCode::format, path + ": truncated name at byte offset " + std::to_string(pos));
        }
        std::string name = data.substr(pos, name_len);
        pos += name_len;
        std::uint32_t rank = get_u32(data, pos, path, "rank");
        if (rank > 8) {
            fail(ErrorCode::format, path + ": implausible rank " + std::to_string(rank) +
                                        " at byte offset " + std::to_string(pos - 4));
        }
        std::vector<int> shape(rank);
        for (auto& d : shape) d = static_cast<int>(get_u32(data, pos, path, "dim"));
        Tensor t(shape);
        for (auto& x : t.v) {
            std::uint32_t u = get_u32(data, pos, path, "value");
            float fv;
            std::memcpy(&fv, &u, 4);
            x = static_cast<double>(fv);
        }
        ck.tensors.emplace_back(std::move(name), std::move(t));
    }
    if (pos != data.size()) {
        fail(ErrorCode::format, path + ": trailing bytes at byte offset " + std::to_string(pos));
    }
    return ck;
}

} // namespace rfadv::nn
