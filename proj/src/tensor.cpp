#include "jointseis/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <utility>

namespace jseis {

namespace {

#ifndef NDEBUG
void check_finite(const Tensor& t, const char* op) {
    for (double v : t.values()) {
        if (!std::isfinite(v)) {
            throw DomainError(std::string(op) + ": non-finite value in output");
        }
    }
}
#define JSEIS_CHECK_FINITE(t, op) check_finite((t), (op))
#else
#define JSEIS_CHECK_FINITE(t, op) ((void)0)
#endif

std::atomic<std::int64_t> g_next_graph_id{1};

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DomainError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                          " vs " + shape_str(b.shape()));
    }
}

// ---------------------------------------------------------------------------
// conv2d compute core.
//
// Inputs are repacked into zero-padded, width-major scratch buffers
// p[(c*Wl + w)*Hl + h] so every inner loop runs contiguously over the (large)
// depth axis; the correlation kernel then accumulates a register block of
// output rows across all taps. The input gradient is the same correlation
// with a flipped, channel-transposed kernel and swapped padding, so it reuses
// the fast path. All loop orders are fixed; results are bit-exact across runs.
// ---------------------------------------------------------------------------

struct ConvGeom {
    std::size_t cin, h, w;
    std::size_t cout, kh, kw;
    std::size_t dh, dw;
    std::size_t pad_h_before, pad_h_after;
    std::size_t pad_w_before, pad_w_after;
    std::size_t hp, wp;  // padded extents
};

ConvGeom conv_geom(const Shape& in, const Shape& ker, std::size_t dh, std::size_t dw) {
    ConvGeom g;
    g.cin = in[0];
    g.h = in[1];
    g.w = in[2];
    g.cout = ker[0];
    g.kh = ker[2];
    g.kw = ker[3];
    g.dh = dh;
    g.dw = dw;
    const std::size_t pad_h = dh * (g.kh - 1);
    const std::size_t pad_w = dw * (g.kw - 1);
    g.pad_h_before = pad_h / 2;
    g.pad_h_after = pad_h - g.pad_h_before;
    g.pad_w_before = pad_w / 2;
    g.pad_w_after = pad_w - g.pad_w_before;
    g.hp = g.h + pad_h;
    g.wp = g.w + pad_w;
    return g;
}

// x [C,H,W] row-major -> p [C][W+padwb+padwa][H+padhb+padha], width-major,
// zero padded on both axes.
void pack_padded_transposed(const double* x, std::size_t c, std::size_t h, std::size_t w,
                            std::size_t padhb, std::size_t padha, std::size_t padwb,
                            std::size_t padwa, double* p) {
    const std::size_t hl = h + padhb + padha;
    const std::size_t wl = w + padwb + padwa;
    std::fill(p, p + c * wl * hl, 0.0);
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t wi = 0; wi < w; ++wi) {
            const double* src = x + ci * h * w + wi;
            double* dst = p + (ci * wl + wi + padwb) * hl + padhb;
            for (std::size_t hi = 0; hi < h; ++hi) {
                dst[hi] = src[hi * w];
            }
        }
    }
}

// out[co][w][h] += sum_{ci,kh,kw} ker[co,ci,kh,kw] * in[ci][w + kw*dw][h + kh*dh]
// in: padded width-major planes [cin][wl][hl]; out: width-major [cout][wo][ho].
// A block of output rows stays in registers across the whole tap loop.
void corr_core(const double* __restrict in, std::size_t cin, std::size_t wl, std::size_t hl,
               const double* __restrict ker, std::size_t kh, std::size_t kw,
               std::size_t dh, std::size_t dw, double* __restrict out, std::size_t cout,
               std::size_t wo, std::size_t ho) {
    constexpr std::size_t HB = 32;
    for (std::size_t co = 0; co < cout; ++co) {
        for (std::size_t w = 0; w < wo; ++w) {
            double* ocol = out + (co * wo + w) * ho;
            std::size_t h0 = 0;
            for (; h0 + HB <= ho; h0 += HB) {
                double acc[HB];
                for (std::size_t j = 0; j < HB; ++j) {
                    acc[j] = ocol[h0 + j];
                }
                const double* kptr = ker + co * cin * kh * kw;
                for (std::size_t ci = 0; ci < cin; ++ci) {
                    const double* plane = in + (ci * wl + w) * hl + h0;
                    for (std::size_t khi = 0; khi < kh; ++khi) {
                        const double* row = plane + khi * dh;
                        for (std::size_t kwi = 0; kwi < kw; ++kwi) {
                            const double kval = *kptr++;
                            const double* src = row + kwi * dw * hl;
                            for (std::size_t j = 0; j < HB; ++j) {
                                acc[j] += kval * src[j];
                            }
                        }
                    }
                }
                for (std::size_t j = 0; j < HB; ++j) {
                    ocol[h0 + j] = acc[j];
                }
            }
            if (h0 < ho) {
                const std::size_t hb = ho - h0;
                const double* kptr = ker + co * cin * kh * kw;
                for (std::size_t ci = 0; ci < cin; ++ci) {
                    const double* plane = in + (ci * wl + w) * hl + h0;
                    for (std::size_t khi = 0; khi < kh; ++khi) {
                        const double* row = plane + khi * dh;
                        for (std::size_t kwi = 0; kwi < kw; ++kwi) {
                            const double kval = *kptr++;
                            const double* src = row + kwi * dw * hl;
                            double* a = ocol + h0;
                            for (std::size_t j = 0; j < hb; ++j) {
                                a[j] += kval * src[j];
                            }
                        }
                    }
                }
            }
        }
    }
}

void conv2d_forward_core(const double* x, const double* k, const double* b,
                         const ConvGeom& g, double* out) {
    std::vector<double> xt(g.cin * g.wp * g.hp);
    pack_padded_transposed(x, g.cin, g.h, g.w, g.pad_h_before, g.pad_h_after,
                           g.pad_w_before, g.pad_w_after, xt.data());
    std::vector<double> out_t(g.cout * g.w * g.h);
    for (std::size_t co = 0; co < g.cout; ++co) {
        std::fill(out_t.begin() + co * g.w * g.h, out_t.begin() + (co + 1) * g.w * g.h, b[co]);
    }
    corr_core(xt.data(), g.cin, g.wp, g.hp, k, g.kh, g.kw, g.dh, g.dw, out_t.data(),
              g.cout, g.w, g.h);
    for (std::size_t co = 0; co < g.cout; ++co) {
        for (std::size_t w = 0; w < g.w; ++w) {
            const double* src = out_t.data() + (co * g.w + w) * g.h;
            double* dst = out + co * g.h * g.w + w;
            for (std::size_t h = 0; h < g.h; ++h) {
                dst[h * g.w] = src[h];
            }
        }
    }
}

// Fixed-order 8-lane reduction; deterministic and vectorizable.
double dot_lanes(const double* __restrict a, const double* __restrict b, std::size_t n) {
    double p[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        for (std::size_t j = 0; j < 8; ++j) {
            p[j] += a[i + j] * b[i + j];
        }
    }
    for (std::size_t j = 0; i < n; ++i, ++j) {
        p[j] += a[i] * b[i];
    }
    return ((p[0] + p[1]) + (p[2] + p[3])) + ((p[4] + p[5]) + (p[6] + p[7]));
}

double sum_lanes(const double* __restrict a, std::size_t n) {
    double p[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        for (std::size_t j = 0; j < 8; ++j) {
            p[j] += a[i + j];
        }
    }
    for (std::size_t j = 0; i < n; ++i, ++j) {
        p[j] += a[i];
    }
    return ((p[0] + p[1]) + (p[2] + p[3])) + ((p[4] + p[5]) + (p[6] + p[7]));
}

// Any of gx/gk/gb may be null; non-null buffers are accumulated into (+=).
void conv2d_backward_core(const double* x, const double* k, const double* gout,
                          const ConvGeom& g, double* gx, double* gk, double* gb) {
    // gout packed width-major with swapped before/after padding; the interior
    // region (offset pad_after) is the plain transpose used for gk and gb.
    const std::size_t ghl = g.h + g.pad_h_before + g.pad_h_after;
    const std::size_t gwl = g.w + g.pad_w_before + g.pad_w_after;
    std::vector<double> go_t(g.cout * gwl * ghl);
    pack_padded_transposed(gout, g.cout, g.h, g.w, g.pad_h_after, g.pad_h_before,
                           g.pad_w_after, g.pad_w_before, go_t.data());

    if (gb != nullptr) {
        for (std::size_t co = 0; co < g.cout; ++co) {
            double s = 0.0;
            for (std::size_t w = 0; w < g.w; ++w) {
                const double* go =
                    go_t.data() + (co * gwl + w + g.pad_w_after) * ghl + g.pad_h_after;
                s += sum_lanes(go, g.h);
            }
            gb[co] += s;
        }
    }

    if (gk != nullptr) {
        std::vector<double> xt(g.cin * g.wp * g.hp);
        pack_padded_transposed(x, g.cin, g.h, g.w, g.pad_h_before, g.pad_h_after,
                               g.pad_w_before, g.pad_w_after, xt.data());
        for (std::size_t co = 0; co < g.cout; ++co) {
            for (std::size_t ci = 0; ci < g.cin; ++ci) {
                for (std::size_t khi = 0; khi < g.kh; ++khi) {
                    for (std::size_t kwi = 0; kwi < g.kw; ++kwi) {
                        double acc = 0.0;
                        for (std::size_t w = 0; w < g.w; ++w) {
                            const double* go = go_t.data() +
                                               (co * gwl + w + g.pad_w_after) * ghl +
                                               g.pad_h_after;
                            const double* src =
                                xt.data() + (ci * g.wp + w + kwi * g.dw) * g.hp + khi * g.dh;
                            acc += dot_lanes(go, src, g.h);
                        }
                        gk[((co * g.cin + ci) * g.kh + khi) * g.kw + kwi] += acc;
                    }
                }
            }
        }
    }

    if (gx != nullptr) {
        // grad wrt input = correlation of the padded gout with the kernel
        // flipped in both tap axes and transposed in channels.
        std::vector<double> kflip(g.cout * g.cin * g.kh * g.kw);
        for (std::size_t co = 0; co < g.cout; ++co) {
            for (std::size_t ci = 0; ci < g.cin; ++ci) {
                for (std::size_t khi = 0; khi < g.kh; ++khi) {
                    for (std::size_t kwi = 0; kwi < g.kw; ++kwi) {
                        kflip[((ci * g.cout + co) * g.kh + (g.kh - 1 - khi)) * g.kw +
                              (g.kw - 1 - kwi)] =
                            k[((co * g.cin + ci) * g.kh + khi) * g.kw + kwi];
                    }
                }
            }
        }
        std::vector<double> gx_t(g.cin * g.w * g.h, 0.0);
        corr_core(go_t.data(), g.cout, gwl, ghl, kflip.data(), g.kh, g.kw, g.dh, g.dw,
                  gx_t.data(), g.cin, g.w, g.h);
        for (std::size_t ci = 0; ci < g.cin; ++ci) {
            for (std::size_t w = 0; w < g.w; ++w) {
                const double* src = gx_t.data() + (ci * g.w + w) * g.h;
                double* dst = gx + ci * g.h * g.w + w;
                for (std::size_t h = 0; h < g.h; ++h) {
                    dst[h * g.w] += src[h];
                }
            }
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// shapes and Tensor
// ---------------------------------------------------------------------------

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) {
        n *= e;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) {
            os << ",";
        }
        os << shape[i];
    }
    os << "]";
    return os.str();
}

static void validate_extents(const Shape& shape) {
    for (std::size_t e : shape) {
        if (e == 0) {
            throw DomainError("tensor shape has zero-sized extent " + shape_str(shape));
        }
    }
}

Tensor Tensor::zeros(Shape shape) {
    return full(std::move(shape), 0.0);
}

Tensor Tensor::full(Shape shape, double value) {
    validate_extents(shape);
    Tensor t;
    const std::size_t n = shape_numel(shape);
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<std::vector<double>>(n, value);
    return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values) {
    validate_extents(shape);
    if (shape_numel(shape) != values.size()) {
        throw DomainError("from_data: shape " + shape_str(shape) + " wants " +
                          std::to_string(shape_numel(shape)) + " values, got " +
                          std::to_string(values.size()));
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<std::vector<double>>(std::move(values));
    return t;
}

Tensor Tensor::scalar(double value) {
    Tensor t;
    t.data_ = std::make_shared<std::vector<double>>(1, value);
    return t;
}

double Tensor::value() const {
    if (!defined() || numel() != 1) {
        throw DomainError("value(): tensor is not a scalar");
    }
    return (*data_)[0];
}

Tensor Tensor::clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<double>>(*data_);
    return t;
}

Tensor& Tensor::set_requires_grad(bool on) {
    requires_grad_ = on;
    if (on) {
        if (!grad_) {
            grad_ = std::make_shared<std::vector<double>>(numel(), 0.0);
        }
    } else {
        grad_.reset();
    }
    return *this;
}

std::vector<double>& Tensor::grad() {
    if (!grad_) {
        throw DomainError("grad(): tensor has no grad storage");
    }
    return *grad_;
}

const std::vector<double>& Tensor::grad() const {
    if (!grad_) {
        throw DomainError("grad(): tensor has no grad storage");
    }
    return *grad_;
}

void Tensor::zero_grad() {
    if (grad_) {
        std::fill(grad_->begin(), grad_->end(), 0.0);
    }
}

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

Graph::Graph() : id_(g_next_graph_id.fetch_add(1)) {}

int Graph::ensure_node(const Tensor& t) {
    if (!t.defined()) {
        throw DomainError("graph: undefined tensor used as op input");
    }
    if (t.graph_id_ == id_ && t.node_id_ >= 0 &&
        t.node_id_ < static_cast<int>(nodes_.size())) {
        return t.node_id_;
    }
    auto it = leaf_by_buffer_.find(t.buffer_id());
    if (it != leaf_by_buffer_.end()) {
        return it->second;
    }
    const int idx = static_cast<int>(nodes_.size());
    Node n;
    n.kind = OpKind::Leaf;
    n.out = t;
    n.needs_grad = t.requires_grad();
    nodes_.push_back(std::move(n));
    leaf_by_buffer_.emplace(t.buffer_id(), idx);
    return idx;
}

int Graph::record(OpKind kind, std::vector<int> inputs, Tensor& out,
                  std::function<void(Graph&, const Node&)> backward_fn) {
    bool needs = false;
    for (int i : inputs) {
        needs = needs || nodes_[i].needs_grad;
    }
    const int idx = static_cast<int>(nodes_.size());
    out.graph_id_ = id_;
    out.node_id_ = idx;
    out.requires_grad_ = needs;
    Node n;
    n.kind = kind;
    n.inputs = std::move(inputs);
    n.out = out;
    n.needs_grad = needs;
    n.backward_fn = std::move(backward_fn);
    nodes_.push_back(std::move(n));
    return idx;
}

std::vector<double>& Graph::grad_of(int id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) {
        n.grad.assign(n.out.numel(), 0.0);
    }
    return n.grad;
}

void Graph::backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw DomainError("backward: loss must be a scalar tensor");
    }
    const int root = ensure_node(loss);
    for (Node& n : nodes_) {
        n.grad.clear();
    }
    grad_of(root)[0] = 1.0;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.grad.empty() || !n.needs_grad) {
            continue;
        }
        if (n.backward_fn) {
            n.backward_fn(*this, n);
        }
    }
    for (Node& n : nodes_) {
        if (n.kind == OpKind::Leaf && !n.grad.empty() && n.out.requires_grad() &&
            n.out.has_grad_storage()) {
            std::vector<double>& dst = n.out.grad();
            for (std::size_t i = 0; i < dst.size(); ++i) {
                dst[i] += n.grad[i];
            }
        }
    }
}

// ---------------------------------------------------------------------------
// ops
// ---------------------------------------------------------------------------

Tensor conv2d(Graph& g, const Tensor& input, const Tensor& kernel,
              const Tensor& bias, std::size_t dil_h, std::size_t dil_w) {
    if (input.rank() != 3) {
        throw DomainError("conv2d: input must be [C_in,H,W], got " + shape_str(input.shape()));
    }
    if (kernel.rank() != 4) {
        throw DomainError("conv2d: kernel must be [C_out,C_in,kH,kW], got " +
                          shape_str(kernel.shape()));
    }
    if (kernel.shape()[1] != input.shape()[0]) {
        throw DomainError("conv2d: kernel C_in " + std::to_string(kernel.shape()[1]) +
                          " does not match input channels " + std::to_string(input.shape()[0]));
    }
    if (bias.rank() != 1 || bias.shape()[0] != kernel.shape()[0]) {
        throw DomainError("conv2d: bias must be [C_out], got " + shape_str(bias.shape()));
    }
    if (dil_h < 1 || dil_w < 1) {
        throw DomainError("conv2d: dilation components must be >= 1");
    }
    const ConvGeom geom = conv_geom(input.shape(), kernel.shape(), dil_h, dil_w);

    Tensor out = Tensor::zeros({geom.cout, geom.h, geom.w});
    conv2d_forward_core(input.data(), kernel.data(), bias.data(), geom, out.data());
    JSEIS_CHECK_FINITE(out, "conv2d");

    const int in_id = g.ensure_node(input);
    const int k_id = g.ensure_node(kernel);
    const int b_id = g.ensure_node(bias);
    g.record(OpKind::Conv2d, {in_id, k_id, b_id}, out,
             [input, kernel, in_id, k_id, b_id, geom](Graph& gr, const Graph::Node& n) {
                 const bool want_x = gr.needs_grad(in_id);
                 const bool want_k = gr.needs_grad(k_id);
                 const bool want_b = gr.needs_grad(b_id);
                 double* gx = want_x ? gr.grad_of(in_id).data() : nullptr;
                 double* gk = want_k ? gr.grad_of(k_id).data() : nullptr;
                 double* gb = want_b ? gr.grad_of(b_id).data() : nullptr;
                 if (gx == nullptr && gk == nullptr && gb == nullptr) {
                     return;
                 }
                 conv2d_backward_core(input.data(), kernel.data(), n.grad.data(), geom,
                                      gx, gk, gb);
             });
    return out;
}

Tensor relu(Graph& g, const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const double* src = x.data();
    double* dst = out.data();
    const std::size_t n = x.numel();
    for (std::size_t i = 0; i < n; ++i) {
        dst[i] = src[i] > 0.0 ? src[i] : 0.0;
    }
    JSEIS_CHECK_FINITE(out, "relu");
    const int x_id = g.ensure_node(x);
    g.record(OpKind::Relu, {x_id}, out, [x, x_id](Graph& gr, const Graph::Node& n) {
        if (!gr.needs_grad(x_id)) {
            return;
        }
        std::vector<double>& gx = gr.grad_of(x_id);
        const double* xv = x.data();
        for (std::size_t i = 0; i < gx.size(); ++i) {
            if (xv[i] > 0.0) {
                gx[i] += n.grad[i];
            }
        }
    });
    return out;
}

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = Tensor::zeros(a.shape());
    const double* av = a.data();
    const double* bv = b.data();
    double* dst = out.data();
    for (std::size_t i = 0; i < out.numel(); ++i) {
        dst[i] = av[i] + bv[i];
    }
    JSEIS_CHECK_FINITE(out, "add");
    const int a_id = g.ensure_node(a);
    const int b_id = g.ensure_node(b);
    g.record(OpKind::Add, {a_id, b_id}, out, [a_id, b_id](Graph& gr, const Graph::Node& n) {
        for (int id : {a_id, b_id}) {
            if (!gr.needs_grad(id)) {
                continue;
            }
            std::vector<double>& gi = gr.grad_of(id);
            for (std::size_t i = 0; i < gi.size(); ++i) {
                gi[i] += n.grad[i];
            }
        }
    });
    return out;
}

Tensor scale(Graph& g, const Tensor& x, double c) {
    Tensor out = Tensor::zeros(x.shape());
    const double* src = x.data();
    double* dst = out.data();
    for (std::size_t i = 0; i < out.numel(); ++i) {
        dst[i] = c * src[i];
    }
    JSEIS_CHECK_FINITE(out, "scale");
    const int x_id = g.ensure_node(x);
    g.record(OpKind::Scale, {x_id}, out, [x_id, c](Graph& gr, const Graph::Node& n) {
        // c == 0 contributes nothing; skipping keeps alpha=0 joint training
        // bit-identical to isolated training.
        if (c == 0.0 || !gr.needs_grad(x_id)) {
            return;
        }
        std::vector<double>& gx = gr.grad_of(x_id);
        for (std::size_t i = 0; i < gx.size(); ++i) {
            gx[i] += c * n.grad[i];
        }
    });
    return out;
}

Tensor sum(Graph& g, const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) {
        s += v;
    }
    Tensor out = Tensor::scalar(s);
    JSEIS_CHECK_FINITE(out, "sum");
    const int x_id = g.ensure_node(x);
    g.record(OpKind::Sum, {x_id}, out, [x_id](Graph& gr, const Graph::Node& n) {
        if (!gr.needs_grad(x_id)) {
            return;
        }
        std::vector<double>& gx = gr.grad_of(x_id);
        const double go = n.grad[0];
        for (double& v : gx) {
            v += go;
        }
    });
    return out;
}

Tensor mse(Graph& g, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mse");
    const std::size_t n = a.numel();
    double s = 0.0;
    const double* av = a.data();
    const double* bv = b.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double d = av[i] - bv[i];
        s += d * d;
    }
    Tensor out = Tensor::scalar(s / static_cast<double>(n));
    JSEIS_CHECK_FINITE(out, "mse");
    const int a_id = g.ensure_node(a);
    const int b_id = g.ensure_node(b);
    g.record(OpKind::Mse, {a_id, b_id}, out,
             [a, b, a_id, b_id, n](Graph& gr, const Graph::Node& nd) {
                 const double c = 2.0 * nd.grad[0] / static_cast<double>(n);
                 const double* av = a.data();
                 const double* bv = b.data();
                 if (gr.needs_grad(a_id)) {
                     std::vector<double>& ga = gr.grad_of(a_id);
                     for (std::size_t i = 0; i < n; ++i) {
                         ga[i] += c * (av[i] - bv[i]);
                     }
                 }
                 if (gr.needs_grad(b_id)) {
                     std::vector<double>& gb = gr.grad_of(b_id);
                     for (std::size_t i = 0; i < n; ++i) {
                         gb[i] -= c * (av[i] - bv[i]);
                     }
                 }
             });
    return out;
}

Tensor sum_squared_diff(Graph& g, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sum_squared_diff");
    const std::size_t n = a.numel();
    double s = 0.0;
    const double* av = a.data();
    const double* bv = b.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double d = av[i] - bv[i];
        s += d * d;
    }
    Tensor out = Tensor::scalar(s);
    JSEIS_CHECK_FINITE(out, "sum_squared_diff");
    const int a_id = g.ensure_node(a);
    const int b_id = g.ensure_node(b);
    g.record(OpKind::SumSquaredDiff, {a_id, b_id}, out,
             [a, b, a_id, b_id, n](Graph& gr, const Graph::Node& nd) {
                 const double c = 2.0 * nd.grad[0];
                 const double* av = a.data();
                 const double* bv = b.data();
                 if (gr.needs_grad(a_id)) {
                     std::vector<double>& ga = gr.grad_of(a_id);
                     for (std::size_t i = 0; i < n; ++i) {
                         ga[i] += c * (av[i] - bv[i]);
                     }
                 }
                 if (gr.needs_grad(b_id)) {
                     std::vector<double>& gb = gr.grad_of(b_id);
                     for (std::size_t i = 0; i < n; ++i) {
                         gb[i] -= c * (av[i] - bv[i]);
                     }
                 }
             });
    return out;
}

Tensor take_column(Graph& g, const Tensor& x, std::size_t col) {
    if (x.rank() != 3 || x.shape()[0] != 1) {
        throw DomainError("take_column: expects [1,H,W], got " + shape_str(x.shape()));
    }
    const std::size_t h = x.shape()[1];
    const std::size_t w = x.shape()[2];
    if (col >= w) {
        throw DomainError("take_column: column " + std::to_string(col) + " out of range");
    }
    Tensor out = Tensor::zeros({h});
    const double* src = x.data();
    double* dst = out.data();
    for (std::size_t i = 0; i < h; ++i) {
        dst[i] = src[i * w + col];
    }
    const int x_id = g.ensure_node(x);
    g.record(OpKind::TakeColumn, {x_id}, out,
             [x_id, col, h, w](Graph& gr, const Graph::Node& n) {
                 if (!gr.needs_grad(x_id)) {
                     return;
                 }
                 std::vector<double>& gx = gr.grad_of(x_id);
                 for (std::size_t i = 0; i < h; ++i) {
                     gx[i * w + col] += n.grad[i];
                 }
             });
    return out;
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double eps) {
    if (eps <= 0.0) {
        throw DomainError("finite_diff_grad: eps must be positive");
    }
    Tensor probe = x.clone();
    Tensor out = Tensor::zeros(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double orig = probe.values()[i];
        probe.values()[i] = orig + eps;
        const double fp = f(probe);
        probe.values()[i] = orig - eps;
        const double fm = f(probe);
        probe.values()[i] = orig;
        out.values()[i] = (fp - fm) / (2.0 * eps);
    }
    return out;
}

}  // namespace jseis
