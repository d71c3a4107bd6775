#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fsag/error.hpp"

namespace fsag::tensorkit {

// Dense row-major tensor, rank 1-4. Float storage is the on-disk and
// pipeline-facing type; the affordance network runs the same kernels in
// double for gradient headroom.
template <typename T>
class TensorT {
public:
    TensorT() = default;

    explicit TensorT(std::vector<int> dims) : dims_(std::move(dims)) {
        validate_dims();
        data_.assign(element_count(), T(0));
    }

    TensorT(std::vector<int> dims, std::vector<T> data)
        : dims_(std::move(dims)), data_(std::move(data)) {
        validate_dims();
        if (data_.size() != element_count())
            raise_input("tensor data length does not match dims");
    }

    static TensorT full(std::vector<int> dims, T value) {
        TensorT t(std::move(dims));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    int rank() const { return static_cast<int>(dims_.size()); }
    const std::vector<int>& dims() const { return dims_; }
    int dim(int i) const { return dims_[static_cast<std::size_t>(i)]; }

    std::size_t size() const { return data_.size(); }
    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& values() { return data_; }
    const std::vector<T>& values() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(int i) { return data_[static_cast<std::size_t>(i)]; }
    T& at(int i, int j) { return data_[idx2(i, j)]; }
    T& at(int i, int j, int k) { return data_[idx3(i, j, k)]; }
    T& at(int i, int j, int k, int l) { return data_[idx4(i, j, k, l)]; }
    const T& at(int i) const { return data_[static_cast<std::size_t>(i)]; }
    const T& at(int i, int j) const { return data_[idx2(i, j)]; }
    const T& at(int i, int j, int k) const { return data_[idx3(i, j, k)]; }
    const T& at(int i, int j, int k, int l) const { return data_[idx4(i, j, k, l)]; }

    bool same_dims(const TensorT& other) const { return dims_ == other.dims_; }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename U>
    TensorT<U> cast() const {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return TensorT<U>(dims_, std::move(out));
    }

private:
    std::size_t element_count() const {
        std::size_t n = 1;
        for (int d : dims_) n *= static_cast<std::size_t>(d);
        return n;
    }

    void validate_dims() const {
        if (dims_.empty() || dims_.size() > 4)
            raise_input("tensor rank must be 1-4");
        for (int d : dims_)
            if (d < 1) raise_input("tensor extents must be >= 1");
    }

    std::size_t idx2(int i, int j) const {
        return static_cast<std::size_t>(i) * dims_[1] + j;
    }
    std::size_t idx3(int i, int j, int k) const {
        return (static_cast<std::size_t>(i) * dims_[1] + j) * dims_[2] + k;
    }
    std::size_t idx4(int i, int j, int k, int l) const {
        return ((static_cast<std::size_t>(i) * dims_[1] + j) * dims_[2] + k) * dims_[3] + l;
    }

    std::vector<int> dims_;
    std::vector<T> data_;
};

using Tensor = TensorT<float>;
using DTensor = TensorT<double>;

// Generic gradient bundle: input gradient plus named parameter gradients,
// each matching its primal's dims.
template <typename T>
struct LayerGradT {
    TensorT<T> input_grad;
    std::map<std::string, TensorT<T>> param_grads;
};

enum class Padding { same, none };

namespace detail {

template <typename T>
void require_finite(const TensorT<T>& t, const char* what) {
    if (!t.all_finite()) raise_input(std::string(what) + ": non-finite values");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d: cross-correlation, kernels k in {1,3}. "same" keeps H,W (zero pad
// 1px for k=3); "none" shrinks by k-1.
// input [C_in,H,W], kernel [C_out,C_in,k,k], bias [C_out].
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& kernel,
                  std::span<const T> bias, Padding padding) {
    if (input.rank() != 3) raise_input("conv2d: input must be [C,H,W]");
    if (kernel.rank() != 4) raise_input("conv2d: kernel must be [C_out,C_in,k,k]");
    const int c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int c_out = kernel.dim(0), k = kernel.dim(2);
    if (kernel.dim(1) != c_in)
        raise_input("conv2d: kernel input channels mismatch");
    if (kernel.dim(3) != k || (k != 1 && k != 3))
        raise_input("conv2d: kernel must be square with k in {1,3}");
    if (!bias.empty() && static_cast<int>(bias.size()) != c_out)
        raise_input("conv2d: bias length mismatch");
    detail::require_finite(input, "conv2d input");
    detail::require_finite(kernel, "conv2d kernel");

    const int pad = (padding == Padding::same && k == 3) ? 1 : 0;
    const int h_out = (padding == Padding::same) ? h : h - (k - 1);
    const int w_out = (padding == Padding::same) ? w : w - (k - 1);
    if (h_out < 1 || w_out < 1) raise_input("conv2d: input smaller than kernel");

    TensorT<T> out({c_out, h_out, w_out});
    std::vector<double> acc(static_cast<std::size_t>(h_out) * w_out);
    for (int co = 0; co < c_out; ++co) {
        const double b = bias.empty() ? 0.0 : static_cast<double>(bias[co]);
        std::fill(acc.begin(), acc.end(), b);
        for (int ci = 0; ci < c_in; ++ci) {
            for (int dy = 0; dy < k; ++dy) {
                for (int dx = 0; dx < k; ++dx) {
                    const double kv = kernel.at(co, ci, dy, dx);
                    if (kv == 0.0) continue;
                    for (int y = 0; y < h_out; ++y) {
                        const int iy = y + dy - pad;
                        if (iy < 0 || iy >= h) continue;
                        const T* in_row = &input.at(ci, iy, 0);
                        double* acc_row = &acc[static_cast<std::size_t>(y) * w_out];
                        const int x_lo = std::max(0, pad - dx);
                        const int x_hi = std::min(w_out, w + pad - dx);
                        for (int x = x_lo; x < x_hi; ++x)
                            acc_row[x] += kv * static_cast<double>(in_row[x + dx - pad]);
                    }
                }
            }
        }
        for (int y = 0; y < h_out; ++y)
            for (int x = 0; x < w_out; ++x)
                out.at(co, y, x) = static_cast<T>(acc[static_cast<std::size_t>(y) * w_out + x]);
    }
    return out;
}

template <typename T>
struct Conv2dGrad {
    TensorT<T> input_grad;
    TensorT<T> kernel_grad;
    std::vector<T> bias_grad;
};

template <typename T>
Conv2dGrad<T> conv2d_backward(const TensorT<T>& input, const TensorT<T>& kernel,
                              Padding padding, const TensorT<T>& upstream) {
    const int c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int c_out = kernel.dim(0), k = kernel.dim(2);
    const int pad = (padding == Padding::same && k == 3) ? 1 : 0;
    const int h_out = upstream.dim(1), w_out = upstream.dim(2);
    const int h_expect = (padding == Padding::same) ? h : h - (k - 1);
    const int w_expect = (padding == Padding::same) ? w : w - (k - 1);
    if (upstream.dim(0) != c_out || h_out != h_expect || w_out != w_expect)
        raise_input("conv2d_backward: upstream dims mismatch");

    Conv2dGrad<T> g{TensorT<T>({c_in, h, w}), TensorT<T>({c_out, c_in, k, k}),
                    std::vector<T>(static_cast<std::size_t>(c_out), T(0))};

    std::vector<double> in_acc(input.size(), 0.0);
    for (int co = 0; co < c_out; ++co) {
        double bias_acc = 0.0;
        for (int y = 0; y < h_out; ++y)
            for (int x = 0; x < w_out; ++x)
                bias_acc += static_cast<double>(upstream.at(co, y, x));
        g.bias_grad[static_cast<std::size_t>(co)] = static_cast<T>(bias_acc);

        for (int ci = 0; ci < c_in; ++ci) {
            for (int dy = 0; dy < k; ++dy) {
                for (int dx = 0; dx < k; ++dx) {
                    double ker_acc = 0.0;
                    const double kv = kernel.at(co, ci, dy, dx);
                    for (int y = 0; y < h_out; ++y) {
                        const int iy = y + dy - pad;
                        if (iy < 0 || iy >= h) continue;
                        const int x_lo = std::max(0, pad - dx);
                        const int x_hi = std::min(w_out, w + pad - dx);
                        const T* up_row = &upstream.at(co, y, 0);
                        const T* in_row = &input.at(ci, iy, 0);
                        double* acc_row = &in_acc[(static_cast<std::size_t>(ci) * h + iy) * w];
                        for (int x = x_lo; x < x_hi; ++x) {
                            const double u = up_row[x];
                            ker_acc += u * static_cast<double>(in_row[x + dx - pad]);
                            acc_row[x + dx - pad] += kv * u;
                        }
                    }
                    g.kernel_grad.at(co, ci, dy, dx) = static_cast<T>(ker_acc);
                }
            }
        }
    }
    for (std::size_t i = 0; i < in_acc.size(); ++i)
        g.input_grad[i] = static_cast<T>(in_acc[i]);
    return g;
}

// ---------------------------------------------------------------------------
// Bilinear resize, align-corners-false. bilinear_upsample is the public
// contract (target >= source); resize_bilinear also handles shrinking and
// backs the evaluation rescale.
// ---------------------------------------------------------------------------

namespace detail {

struct Tap {
    int i0, i1;
    double t;
};

inline std::vector<Tap> make_taps(int src, int dst) {
    std::vector<Tap> taps(static_cast<std::size_t>(dst));
    const double scale = static_cast<double>(src) / dst;
    for (int i = 0; i < dst; ++i) {
        double s = (i + 0.5) * scale - 0.5;
        if (s < 0.0) s = 0.0;
        int i0 = static_cast<int>(s);
        if (i0 > src - 1) i0 = src - 1;
        const int i1 = std::min(i0 + 1, src - 1);
        taps[static_cast<std::size_t>(i)] = {i0, i1, s - i0};
    }
    return taps;
}

}  // namespace detail

template <typename T>
TensorT<T> resize_bilinear(const TensorT<T>& input, int h_out, int w_out) {
    if (input.rank() != 3) raise_input("resize_bilinear: input must be [C,H,W]");
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    if (h_out < 1 || w_out < 1) raise_input("resize_bilinear: bad target size");
    const auto ty = detail::make_taps(h, h_out);
    const auto tx = detail::make_taps(w, w_out);

    TensorT<T> out({c, h_out, w_out});
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < h_out; ++y) {
            const auto& ry = ty[static_cast<std::size_t>(y)];
            const T* r0 = &input.at(ch, ry.i0, 0);
            const T* r1 = &input.at(ch, ry.i1, 0);
            for (int x = 0; x < w_out; ++x) {
                const auto& rx = tx[static_cast<std::size_t>(x)];
                const double top = (1.0 - rx.t) * r0[rx.i0] + rx.t * r0[rx.i1];
                const double bot = (1.0 - rx.t) * r1[rx.i0] + rx.t * r1[rx.i1];
                out.at(ch, y, x) = static_cast<T>((1.0 - ry.t) * top + ry.t * bot);
            }
        }
    }
    return out;
}

template <typename T>
TensorT<T> bilinear_upsample(const TensorT<T>& input, int h_out, int w_out) {
    if (input.rank() != 3) raise_input("bilinear_upsample: input must be [C,H,W]");
    if (h_out < input.dim(1) || w_out < input.dim(2))
        raise_input("bilinear_upsample: target smaller than source");
    return resize_bilinear(input, h_out, w_out);
}

template <typename T>
TensorT<T> resize_bilinear_backward(const std::vector<int>& input_dims,
                                    const TensorT<T>& upstream) {
    const int c = input_dims[0], h = input_dims[1], w = input_dims[2];
    const int h_out = upstream.dim(1), w_out = upstream.dim(2);
    if (upstream.dim(0) != c) raise_input("resize_bilinear_backward: channel mismatch");
    const auto ty = detail::make_taps(h, h_out);
    const auto tx = detail::make_taps(w, w_out);

    std::vector<double> acc(static_cast<std::size_t>(c) * h * w, 0.0);
    for (int ch = 0; ch < c; ++ch) {
        double* plane = &acc[static_cast<std::size_t>(ch) * h * w];
        for (int y = 0; y < h_out; ++y) {
            const auto& ry = ty[static_cast<std::size_t>(y)];
            for (int x = 0; x < w_out; ++x) {
                const auto& rx = tx[static_cast<std::size_t>(x)];
                const double u = upstream.at(ch, y, x);
                plane[ry.i0 * w + rx.i0] += (1.0 - ry.t) * (1.0 - rx.t) * u;
                plane[ry.i0 * w + rx.i1] += (1.0 - ry.t) * rx.t * u;
                plane[ry.i1 * w + rx.i0] += ry.t * (1.0 - rx.t) * u;
                plane[ry.i1 * w + rx.i1] += ry.t * rx.t * u;
            }
        }
    }
    TensorT<T> grad({c, h, w});
    for (std::size_t i = 0; i < acc.size(); ++i) grad[i] = static_cast<T>(acc[i]);
    return grad;
}

// ---------------------------------------------------------------------------
// Area downsample by integer factors (box average). Used to bring finer
// activation levels onto the aggregation grid with a smooth gradient.
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> area_downsample(const TensorT<T>& input, int fy, int fx) {
    if (input.rank() != 3) raise_input("area_downsample: input must be [C,H,W]");
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    if (fy < 1 || fx < 1 || h % fy != 0 || w % fx != 0)
        raise_input("area_downsample: factors must divide extents");
    const int h_out = h / fy, w_out = w / fx;
    const double inv = 1.0 / (static_cast<double>(fy) * fx);

    TensorT<T> out({c, h_out, w_out});
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < h_out; ++y) {
            for (int x = 0; x < w_out; ++x) {
                double s = 0.0;
                for (int dy = 0; dy < fy; ++dy)
                    for (int dx = 0; dx < fx; ++dx)
                        s += static_cast<double>(input.at(ch, y * fy + dy, x * fx + dx));
                out.at(ch, y, x) = static_cast<T>(s * inv);
            }
        }
    }
    return out;
}

template <typename T>
TensorT<T> area_downsample_backward(const std::vector<int>& input_dims, int fy, int fx,
                                    const TensorT<T>& upstream) {
    const int c = input_dims[0], h = input_dims[1], w = input_dims[2];
    const int h_out = h / fy, w_out = w / fx;
    if (upstream.dim(0) != c || upstream.dim(1) != h_out || upstream.dim(2) != w_out)
        raise_input("area_downsample_backward: upstream dims mismatch");
    const T inv = static_cast<T>(1.0 / (static_cast<double>(fy) * fx));

    TensorT<T> grad({c, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                grad.at(ch, y, x) = upstream.at(ch, y / fy, x / fx) * inv;
    return grad;
}

// ---------------------------------------------------------------------------
// Global average pooling, softmax, relu, mse.
// ---------------------------------------------------------------------------

template <typename T>
std::vector<T> global_avg_pool(const TensorT<T>& input) {
    if (input.rank() != 3) raise_input("global_avg_pool: input must be [C,H,W]");
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    const double inv = 1.0 / (static_cast<double>(h) * w);
    std::vector<T> out(static_cast<std::size_t>(c));
    for (int ch = 0; ch < c; ++ch) {
        double s = 0.0;
        const T* plane = &input.at(ch, 0, 0);
        for (int i = 0; i < h * w; ++i) s += static_cast<double>(plane[i]);
        out[static_cast<std::size_t>(ch)] = static_cast<T>(s * inv);
    }
    return out;
}

template <typename T>
TensorT<T> global_avg_pool_backward(const std::vector<int>& input_dims,
                                    std::span<const T> upstream) {
    const int c = input_dims[0], h = input_dims[1], w = input_dims[2];
    if (static_cast<int>(upstream.size()) != c)
        raise_input("global_avg_pool_backward: upstream length mismatch");
    const double inv = 1.0 / (static_cast<double>(h) * w);
    TensorT<T> grad({c, h, w});
    for (int ch = 0; ch < c; ++ch) {
        const T g = static_cast<T>(upstream[static_cast<std::size_t>(ch)] * inv);
        T* plane = &grad.at(ch, 0, 0);
        std::fill(plane, plane + static_cast<std::size_t>(h) * w, g);
    }
    return grad;
}

template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
    if (logits.empty()) raise_input("softmax: empty input");
    double max_v = -std::numeric_limits<double>::infinity();
    for (T v : logits) {
        if (!std::isfinite(static_cast<double>(v))) raise_input("softmax: non-finite logit");
        max_v = std::max(max_v, static_cast<double>(v));
    }
    std::vector<double> e(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        e[i] = std::exp(static_cast<double>(logits[i]) - max_v);
        sum += e[i];
    }
    std::vector<T> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<T>(e[i] / sum);
    return out;
}

// Gradient of logits given softmax output s and upstream u:
// ds_j/dz_i = s_i (delta_ij - s_j)  =>  dz = s .* (u - <u,s>).
template <typename T>
std::vector<T> softmax_backward(std::span<const T> softmax_out, std::span<const T> upstream) {
    if (softmax_out.size() != upstream.size())
        raise_input("softmax_backward: size mismatch");
    double dot = 0.0;
    for (std::size_t i = 0; i < softmax_out.size(); ++i)
        dot += static_cast<double>(softmax_out[i]) * static_cast<double>(upstream[i]);
    std::vector<T> grad(softmax_out.size());
    for (std::size_t i = 0; i < softmax_out.size(); ++i)
        grad[i] = static_cast<T>(static_cast<double>(softmax_out[i]) *
                                 (static_cast<double>(upstream[i]) - dot));
    return grad;
}

template <typename T>
TensorT<T> leaky_relu(const TensorT<T>& input, double slope) {
    TensorT<T> out(input.dims());
    for (std::size_t i = 0; i < input.size(); ++i)
        out[i] = input[i] > T(0) ? input[i] : static_cast<T>(slope * input[i]);
    return out;
}

template <typename T>
TensorT<T> leaky_relu_backward(const TensorT<T>& input, const TensorT<T>& upstream,
                               double slope) {
    if (!input.same_dims(upstream)) raise_input("leaky_relu_backward: dims mismatch");
    TensorT<T> grad(input.dims());
    for (std::size_t i = 0; i < input.size(); ++i)
        grad[i] = input[i] > T(0) ? upstream[i] : static_cast<T>(slope * upstream[i]);
    return grad;
}

template <typename T>
TensorT<T> relu(const TensorT<T>& input) {
    TensorT<T> out(input.dims());
    for (std::size_t i = 0; i < input.size(); ++i) out[i] = std::max(input[i], T(0));
    return out;
}

template <typename T>
TensorT<T> relu_backward(const TensorT<T>& input, const TensorT<T>& upstream) {
    if (!input.same_dims(upstream)) raise_input("relu_backward: dims mismatch");
    TensorT<T> grad(input.dims());
    for (std::size_t i = 0; i < input.size(); ++i)
        grad[i] = input[i] > T(0) ? upstream[i] : T(0);
    return grad;
}

template <typename T>
double mse(const TensorT<T>& pred, const TensorT<T>& target) {
    if (!pred.same_dims(target)) raise_input("mse: dims mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

// d mse / d pred.
template <typename T>
TensorT<T> mse_backward(const TensorT<T>& pred, const TensorT<T>& target) {
    if (!pred.same_dims(target)) raise_input("mse_backward: dims mismatch");
    TensorT<T> grad(pred.dims());
    const double scale = 2.0 / static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i)
        grad[i] = static_cast<T>(scale * (static_cast<double>(pred[i]) -
                                          static_cast<double>(target[i])));
    return grad;
}

}  // namespace fsag::tensorkit

namespace fsag {
using tensorkit::DTensor;
using tensorkit::Tensor;
}  // namespace fsag
