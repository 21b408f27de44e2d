#include "ssa/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ssa/parallel.hpp"

namespace ssa {

const char* op_name(OpKind op) {
    switch (op) {
        case OpKind::None: return "none";
        case OpKind::Conv2d: return "conv2d";
        case OpKind::ChannelShuffle: return "channel_shuffle";
        case OpKind::BatchNorm: return "batch_norm";
        case OpKind::GroupNorm: return "group_norm";
        case OpKind::Relu: return "relu";
        case OpKind::Sigmoid: return "sigmoid";
        case OpKind::MaxPool: return "max_pool_2x2";
        case OpKind::Upsample: return "bilinear_upsample_x2";
        case OpKind::Concat: return "concat_channels";
        case OpKind::GlobalAvgPool: return "global_avg_pool";
        case OpKind::GlobalMaxPool: return "global_max_pool";
        case OpKind::ChannelAffine: return "channel_affine";
        case OpKind::Multiply: return "multiply";
        case OpKind::Add: return "add";
        case OpKind::SliceChannels: return "slice_channels";
        case OpKind::ChannelMean: return "channel_mean";
        case OpKind::ChannelMax: return "channel_max";
    }
    return "unknown";
}

namespace {

template <typename T>
OpContext<T> take(OpContext<T>& ctx, OpKind expected) {
    if (ctx.op != expected) {
        throw UsageError(std::string(op_name(expected)) + "_backward: missing context (found '" +
                         op_name(ctx.op) + "')");
    }
    OpContext<T> out = std::move(ctx);
    ctx.reset();
    return out;
}

template <typename T>
void check_channel_vector(const BasicTensor<T>& v, std::size_t channels, const char* what) {
    const Shape expect{1, channels, 1, 1};
    if (v.shape() != expect) {
        throw DimensionError(std::string(what) + ": expected shape " + expect.str() + ", got " + v.shape().str());
    }
}

constexpr std::size_t kTile = 256;
constexpr std::size_t kLanes = 8;

/// dot product with a fixed lane-split summation order
template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
    T lanes[kLanes] = {};
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        for (std::size_t l = 0; l < kLanes; ++l) lanes[l] += a[i + l] * b[i + l];
    }
    T tail = 0;
    for (; i < n; ++i) tail += a[i] * b[i];
    T s = 0;
    for (std::size_t l = 0; l < kLanes; ++l) s += lanes[l];
    return s + tail;
}

template <typename T>
T sum(const T* a, std::size_t n) {
    T lanes[kLanes] = {};
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        for (std::size_t l = 0; l < kLanes; ++l) lanes[l] += a[i + l];
    }
    T tail = 0;
    for (; i < n; ++i) tail += a[i];
    T s = 0;
    for (std::size_t l = 0; l < kLanes; ++l) s += lanes[l];
    return s + tail;
}

/// C[m, p] = init[m] + sum_k A(m, k) * B[k, p] over one column tile.
/// A(m, k) = a[m * a_row + k * a_col]; B rows have stride ldb; C rows stride ldc.
template <typename T>
void matmul_tile(std::size_t M, std::size_t K, std::size_t p0, std::size_t P, const T* a, std::size_t a_row,
                 std::size_t a_col, const T* b, std::size_t ldb, T* c, std::size_t ldc, const T* init) {
    T acc[4][kTile];
    std::size_t m = 0;
    for (; m + 4 <= M; m += 4) {
        for (std::size_t r = 0; r < 4; ++r) {
            const T v = init ? init[m + r] : T(0);
            for (std::size_t p = 0; p < P; ++p) acc[r][p] = v;
        }
        for (std::size_t k = 0; k < K; ++k) {
            const T* br = b + k * ldb + p0;
            const T w0 = a[(m + 0) * a_row + k * a_col];
            const T w1 = a[(m + 1) * a_row + k * a_col];
            const T w2 = a[(m + 2) * a_row + k * a_col];
            const T w3 = a[(m + 3) * a_row + k * a_col];
            for (std::size_t p = 0; p < P; ++p) {
                const T x = br[p];
                acc[0][p] += w0 * x;
                acc[1][p] += w1 * x;
                acc[2][p] += w2 * x;
                acc[3][p] += w3 * x;
            }
        }
        for (std::size_t r = 0; r < 4; ++r) std::copy(acc[r], acc[r] + P, c + (m + r) * ldc + p0);
    }
    for (; m < M; ++m) {
        const T v = init ? init[m] : T(0);
        for (std::size_t p = 0; p < P; ++p) acc[0][p] = v;
        for (std::size_t k = 0; k < K; ++k) {
            const T* br = b + k * ldb + p0;
            const T w = a[m * a_row + k * a_col];
            for (std::size_t p = 0; p < P; ++p) acc[0][p] += w * br[p];
        }
        std::copy(acc[0], acc[0] + P, c + m * ldc + p0);
    }
}

/// Half-open range of output positions whose input index o*stride - pad + k is valid.
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t out, std::size_t in, std::size_t stride,
                                                       std::size_t pad, std::size_t k) {
    // need o*stride + k >= pad and o*stride + k - pad <= in - 1
    std::size_t lo = 0;
    if (pad > k) lo = (pad - k + stride - 1) / stride;
    if (in + pad < k + 1) return {0, 0};
    std::size_t hi = (in - 1 + pad - k) / stride + 1;
    hi = std::min(hi, out);
    if (lo >= hi) return {0, 0};
    return {lo, hi};
}

struct ConvGeometry {
    std::size_t n, cin, h, w, cout, kh, kw, oh, ow, cin_g, cout_g, groups, stride, pad;
    bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

template <typename T>
ConvGeometry conv_geometry(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>* bias,
                           Conv2dParams p) {
    const Shape& xs = input.shape();
    const Shape& ws = weight.shape();
    validate_shape(xs);
    validate_shape(ws);
    if (p.groups == 0) throw ConfigError("conv2d: groups must be >= 1");
    if (p.stride == 0) throw ConfigError("conv2d: stride must be >= 1");
    if (xs.c % p.groups != 0) {
        throw DimensionError("conv2d: input channels " + std::to_string(xs.c) + " not divisible by groups " +
                          std::to_string(p.groups));
    }
    if (ws.n % p.groups != 0) {
        throw DimensionError("conv2d: output channels " + std::to_string(ws.n) + " not divisible by groups " +
                          std::to_string(p.groups));
    }
    if (ws.c != xs.c / p.groups) {
        throw DimensionError("conv2d: weight axis c is " + std::to_string(ws.c) + " but input c / groups is " +
                             std::to_string(xs.c / p.groups));
    }
    if (xs.h + 2 * p.padding < ws.h || xs.w + 2 * p.padding < ws.w) {
        throw DimensionError("conv2d: kernel " + std::to_string(ws.h) + "x" + std::to_string(ws.w) +
                             " larger than padded input on axes h/w");
    }
    if (bias) check_channel_vector(*bias, ws.n, "conv2d bias");
    ConvGeometry g{};
    g.n = xs.n;
    g.cin = xs.c;
    g.h = xs.h;
    g.w = xs.w;
    g.cout = ws.n;
    g.kh = ws.h;
    g.kw = ws.w;
    g.stride = p.stride;
    g.pad = p.padding;
    g.oh = (xs.h + 2 * p.padding - ws.h) / p.stride + 1;
    g.ow = (xs.w + 2 * p.padding - ws.w) / p.stride + 1;
    g.groups = p.groups;
    g.cin_g = xs.c / p.groups;
    g.cout_g = ws.n / p.groups;
    return g;
}

}  // namespace

// ---------------------------------------------------------------------------
// conv2d

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>* bias,
                      Conv2dParams params, OpContext<T>* ctx) {
    const ConvGeometry g = conv_geometry(input, weight, bias, params);
    BasicTensor<T> out(Shape{g.n, g.cout, g.oh, g.ow});
    const T* x = input.ptr();
    const T* wt = weight.ptr();
    const T* b = bias ? bias->ptr() : nullptr;
    T* y = out.ptr();

    if (g.pointwise()) {
        const std::size_t P = g.h * g.w;
        const std::size_t tiles = (P + kTile - 1) / kTile;
        parallel_for(g.n * g.groups * tiles, [&](std::size_t job) {
            const std::size_t tile = job % tiles;
            const std::size_t grp = (job / tiles) % g.groups;
            const std::size_t i = job / (tiles * g.groups);
            const std::size_t p0 = tile * kTile;
            const std::size_t len = std::min(kTile, P - p0);
            matmul_tile<T>(g.cout_g, g.cin_g, p0, len, wt + grp * g.cout_g * g.cin_g, g.cin_g, 1,
                           x + (i * g.cin + grp * g.cin_g) * P, P, y + (i * g.cout + grp * g.cout_g) * P, P,
                           b ? b + grp * g.cout_g : nullptr);
        });
    } else {
        parallel_for(g.n * g.cout, [&](std::size_t job) {
            const std::size_t oc = job % g.cout;
            const std::size_t i = job / g.cout;
            const std::size_t grp = oc / g.cout_g;
            T* yp = y + (i * g.cout + oc) * g.oh * g.ow;
            std::fill(yp, yp + g.oh * g.ow, b ? b[oc] : T(0));
            for (std::size_t icg = 0; icg < g.cin_g; ++icg) {
                const std::size_t ic = grp * g.cin_g + icg;
                const T* xp = x + (i * g.cin + ic) * g.h * g.w;
                const T* wk = wt + (oc * g.cin_g + icg) * g.kh * g.kw;
                for (std::size_t ky = 0; ky < g.kh; ++ky) {
                    const auto [oy0, oy1] = valid_range(g.oh, g.h, g.stride, g.pad, ky);
                    for (std::size_t kx = 0; kx < g.kw; ++kx) {
                        const auto [ox0, ox1] = valid_range(g.ow, g.w, g.stride, g.pad, kx);
                        const T wv = wk[ky * g.kw + kx];
                        for (std::size_t oy = oy0; oy < oy1; ++oy) {
                            const std::size_t iy = oy * g.stride + ky - g.pad;
                            T* yr = yp + oy * g.ow;
                            const T* xr = xp + iy * g.w;
                            if (g.stride == 1) {
                                const T* xs = xr + kx - g.pad;
                                for (std::size_t ox = ox0; ox < ox1; ++ox) yr[ox] += wv * xs[ox];
                            } else {
                                for (std::size_t ox = ox0; ox < ox1; ++ox) {
                                    yr[ox] += wv * xr[ox * g.stride + kx - g.pad];
                                }
                            }
                        }
                    }
                }
            }
        });
    }

    if (ctx) {
        ctx->reset();
        ctx->op = OpKind::Conv2d;
        ctx->saved = {input, weight};
        ctx->conv = params;
        ctx->has_bias = bias != nullptr;
    }
    return out;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(OpContext<T>& ctx_in, const BasicTensor<T>& grad_out) {
    OpContext<T> ctx = take(ctx_in, OpKind::Conv2d);
    const BasicTensor<T>& input = ctx.saved[0];
    const BasicTensor<T>& weight = ctx.saved[1];
    const ConvGeometry g = conv_geometry<T>(input, weight, nullptr, ctx.conv);
    require_same_shape(grad_out.shape(), Shape{g.n, g.cout, g.oh, g.ow}, "conv2d_backward grad_out");

    Conv2dGrads<T> grads;
    grads.input = BasicTensor<T>(input.shape());
    grads.weight = BasicTensor<T>(weight.shape());
    const T* x = input.ptr();
    const T* wt = weight.ptr();
    const T* go = grad_out.ptr();
    T* gx = grads.input.ptr();
    T* gw = grads.weight.ptr();
    const std::size_t OP = g.oh * g.ow;

    if (ctx.has_bias) {
        grads.bias = BasicTensor<T>(Shape{1, g.cout, 1, 1});
        T* gb = grads.bias.ptr();
        parallel_for(g.cout, [&](std::size_t oc) {
            T s = 0;
            for (std::size_t i = 0; i < g.n; ++i) s += sum(go + (i * g.cout + oc) * OP, OP);
            gb[oc] = s;
        });
    }

    if (g.pointwise()) {
        const std::size_t P = OP;
        const std::size_t tiles = (P + kTile - 1) / kTile;
        // grad_input[ci, p] = sum_oc W[oc, ci] * grad_out[oc, p]
        parallel_for(g.n * g.groups * tiles, [&](std::size_t job) {
            const std::size_t tile = job % tiles;
            const std::size_t grp = (job / tiles) % g.groups;
            const std::size_t i = job / (tiles * g.groups);
            const std::size_t p0 = tile * kTile;
            const std::size_t len = std::min(kTile, P - p0);
            matmul_tile<T>(g.cin_g, g.cout_g, p0, len, wt + grp * g.cout_g * g.cin_g, 1, g.cin_g,
                           go + (i * g.cout + grp * g.cout_g) * P, P, gx + (i * g.cin + grp * g.cin_g) * P, P,
                           nullptr);
        });
        // grad_weight[oc, ci] = sum_n sum_p grad_out[oc, p] * x[ci, p]
        parallel_for(g.cout, [&](std::size_t oc) {
            const std::size_t grp = oc / g.cout_g;
            T* gwr = gw + oc * g.cin_g;
            for (std::size_t i = 0; i < g.n; ++i) {
                const T* gor = go + (i * g.cout + oc) * P;
                for (std::size_t ci = 0; ci < g.cin_g; ++ci) {
                    gwr[ci] += dot(gor, x + (i * g.cin + grp * g.cin_g + ci) * P, P);
                }
            }
        });
        return grads;
    }

    // grad_input: each (sample, input channel) plane owned by one job
    parallel_for(g.n * g.cin, [&](std::size_t job) {
        const std::size_t ic = job % g.cin;
        const std::size_t i = job / g.cin;
        const std::size_t grp = ic / g.cin_g;
        const std::size_t icg = ic % g.cin_g;
        T* gxp = gx + (i * g.cin + ic) * g.h * g.w;
        for (std::size_t ocg = 0; ocg < g.cout_g; ++ocg) {
            const std::size_t oc = grp * g.cout_g + ocg;
            const T* gop = go + (i * g.cout + oc) * OP;
            const T* wk = wt + (oc * g.cin_g + icg) * g.kh * g.kw;
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
                const auto [oy0, oy1] = valid_range(g.oh, g.h, g.stride, g.pad, ky);
                for (std::size_t kx = 0; kx < g.kw; ++kx) {
                    const auto [ox0, ox1] = valid_range(g.ow, g.w, g.stride, g.pad, kx);
                    const T wv = wk[ky * g.kw + kx];
                    for (std::size_t oy = oy0; oy < oy1; ++oy) {
                        const std::size_t iy = oy * g.stride + ky - g.pad;
                        const T* gor = gop + oy * g.ow;
                        T* gxr = gxp + iy * g.w;
                        if (g.stride == 1) {
                            T* gxs = gxr + kx - g.pad;
                            for (std::size_t ox = ox0; ox < ox1; ++ox) gxs[ox] += wv * gor[ox];
                        } else {
                            for (std::size_t ox = ox0; ox < ox1; ++ox) {
                                gxr[ox * g.stride + kx - g.pad] += wv * gor[ox];
                            }
                        }
                    }
                }
            }
        }
    });

    // grad_weight: each output channel's filters owned by one job
    parallel_for(g.cout, [&](std::size_t oc) {
        const std::size_t grp = oc / g.cout_g;
        for (std::size_t icg = 0; icg < g.cin_g; ++icg) {
            const std::size_t ic = grp * g.cin_g + icg;
            T* gwk = gw + (oc * g.cin_g + icg) * g.kh * g.kw;
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
                const auto [oy0, oy1] = valid_range(g.oh, g.h, g.stride, g.pad, ky);
                for (std::size_t kx = 0; kx < g.kw; ++kx) {
                    const auto [ox0, ox1] = valid_range(g.ow, g.w, g.stride, g.pad, kx);
                    T s = 0;
                    for (std::size_t i = 0; i < g.n; ++i) {
                        const T* gop = go + (i * g.cout + oc) * OP;
                        const T* xp = x + (i * g.cin + ic) * g.h * g.w;
                        for (std::size_t oy = oy0; oy < oy1; ++oy) {
                            const std::size_t iy = oy * g.stride + ky - g.pad;
                            if (g.stride == 1 && ox1 > ox0) {
                                s += dot(gop + oy * g.ow + ox0, xp + iy * g.w + ox0 + kx - g.pad, ox1 - ox0);
                            } else {
                                for (std::size_t ox = ox0; ox < ox1; ++ox) {
                                    s += gop[oy * g.ow + ox] * xp[iy * g.w + ox * g.stride + kx - g.pad];
                                }
                            }
                        }
                    }
                    gwk[ky * g.kw + kx] = s;
                }
            }
        }
    });
    return grads;
}

// ---------------------------------------------------------------------------
// channel shuffle

std::size_t shuffle_source_channel(std::size_t j, std::size_t channels, std::size_t groups) {
    return (j % groups) * (channels / groups) + j / groups;
}

namespace {

template <typename T>
BasicTensor<T> permute_channels(const BasicTensor<T>& input, std::size_t groups, bool inverse) {
    const Shape& s = input.shape();
    BasicTensor<T> out(s);
    const std::size_t P = s.plane();
    for (std::size_t i = 0; i < s.n; ++i) {
        for (std::size_t j = 0; j < s.c; ++j) {
            const std::size_t src = shuffle_source_channel(j, s.c, groups);
            if (!inverse) {
                std::copy_n(input.plane(i, src), P, out.plane(i, j));
            } else {
                std::copy_n(input.plane(i, j), P, out.plane(i, src));
            }
        }
    }
    return out;
}

}  // namespace

template <typename T>
BasicTensor<T> channel_shuffle(const BasicTensor<T>& input, std::size_t groups, OpContext<T>* ctx) {
    validate_shape(input.shape());
    if (groups == 0 || input.shape().c % groups != 0) {
        throw DimensionError("channel_shuffle: channels " + std::to_string(input.shape().c) +
                          " not divisible by groups " + std::to_string(groups));
    }
    if (ctx) {
        ctx->reset();
        ctx->op = OpKind::ChannelShuffle;
        ctx->groups = groups;
        ctx->input_shape = input.shape();
    }
    return permute_channels(input, groups, false);
}

template <typename T>
BasicTensor<T> channel_shuffle_backward(OpContext<T>& ctx_in, const BasicTensor<T>& grad_out) {
    OpContext<T> ctx = take(ctx_in, OpKind::ChannelShuffle);
    require_same_shape(grad_out.shape(), ctx.input_shape, "channel_shuffle_backward");
    return permute_channels(grad_out, ctx.groups, true);
}

// ---------------------------------------------------------------------------
// batch norm

template <typename T>
BasicTensor<T> batch_norm(const BasicTensor<T>& input, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                          BatchNormState<T>& state, Mode mode, BatchNormParams params, OpContext<T>* ctx) {
    const Shape& s = input.shape();
    validate_shape(s);
    check_channel_vector(gamma, s.c, "batch_norm gamma");
    check_channel_vector(beta, s.c, "batch_norm beta");
    check_channel_vector(state.running_mean, s.c, "batch_norm running_mean");
    check_channel_vector(state.running_var, s.c, "batch_norm running_var");
    if (!(params.epsilon > 0)) throw ConfigError("batch_norm: epsilon must be > 0");

    const std::size_t P = s.plane();
    const std::size_t M = s.n * P;
    BasicTensor<T> out(s);
    BasicTensor<T> xhat(s);
    BasicTensor<T> invstd(Shape{1, s.c, 1, 1});

    parallel_for(s.c, [&](std::size_t c) {
        double mean = 0.0;
        double var = 0.0;
        if (mode == Mode::Train) {
            for (std::size_t i = 0; i < s.n; ++i) {
                const T* xp = input.plane(i, c);
                for (std::size_t p = 0; p < P; ++p) mean += xp[p];
            }
            mean /= static_cast<double>(M);
            for (std::size_t i = 0; i < s.n; ++i) {
                const T* xp = input.plane(i, c);
                for (std::size_t p = 0; p < P; ++p) {
                    const double d = xp[p] - mean;
                    var += d * d;
                }
            }
            var /= static_cast<double>(M);
            const double unbiased = M > 1 ? var * static_cast<double>(M) / static_cast<double>(M - 1) : var;
            const double m = params.momentum;
            state.running_mean.ptr()[c] = static_cast<T>((1.0 - m) * state.running_mean.ptr()[c] + m * mean);
            state.running_var.ptr()[c] = static_cast<T>((1.0 - m) * state.running_var.ptr()[c] + m * unbiased);
        } else {
            mean = state.running_mean.ptr()[c];
            var = state.running_var.ptr()[c];
        }
        const T inv = static_cast<T>(1.0 / std::sqrt(var + params.epsilon));
        const T mu = static_cast<T>(mean);
        invstd.ptr()[c] = inv;
        const T ga = gamma.ptr()[c];
        const T be = beta.ptr()[c];
        for (std::size_t i = 0; i < s.n; ++i) {
            const T* xp = input.plane(i, c);
            T* hp = xhat.plane(i, c);
            T* yp = out.plane(i, c);
            for (std::size_t p = 0; p < P; ++p) {
                hp[p] = (xp[p] - mu) * inv;
                yp[p] = ga * hp[p] + be;
            }
        }
    });

    if (ctx) {
        ctx->reset();
        ctx->op = OpKind::BatchNorm;
        ctx->saved = {std::move(xhat), std::move(invstd), gamma};
        ctx->mode = mode;
    }
    return out;
}

template <typename T>
NormGrads<T> batch_norm_backward(OpContext<T>& ctx_in, const BasicTensor<T>& grad_out) {
    OpContext<T> ctx = take(ctx_in, OpKind::BatchNorm);
    const BasicTensor<T>& xhat = ctx.saved[0];
    const BasicTensor<T>& invstd = ctx.saved[1];
    const BasicTensor<T>& gamma = ctx.saved[2];
    const Shape& s = xhat.shape();
    require_same_shape(grad_out.shape(), s, "batch_norm_backward grad_out");
    const std::size_t P = s.plane();
    const T M = static_cast<T>(s.n * P);

    NormGrads<T> grads{BasicTensor<T>(s), BasicTensor<T>(gamma.shape()), BasicTensor<T>(gamma.shape())};
    parallel_for(s.c, [&](std::size_t c) {
        T dbeta = 0;
        T dgamma = 0;
        for (std::size_t i = 0; i < s.n; ++i) {
            dbeta += sum(grad_out.plane(i, c), P);
            dgamma += dot(grad_out.plane(i, c), xhat.plane(i, c), P);
        }
        grads.beta.ptr()[c] = dbeta;
        grads.gamma.ptr()[c] = dgamma;
        const T scale = gamma.ptr()[c] * invstd.ptr()[c];
        for (std::size_t i = 0; i < s.n; ++i) {
            const T* gp = grad_out.plane(i, c);
            const T* hp = xhat.plane(i, c);
            T* dp = grads.input.plane(i, c);
            if (ctx.mode == Mode::Train) {
                for (std::size_t p = 0; p < P; ++p) dp[p] = scale / M * (M * gp[p] - dbeta - hp[p] * dgamma);
            } else {
                for (std::size_t p = 0; p < P; ++p) dp[p] = scale * gp[p];
            }
        }
    });
    return grads;
}

// ---------------------------------------------------------------------------
// per-channel group norm

template <typename T>
BasicTensor<T> group_norm_per_channel(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                                      const BasicTensor<T>& beta, double epsilon, OpContext<T>* ctx) {
    const Shape& s = input.shape();
    validate_shape(s);
    check_channel_vector(gamma, s.c, "group_norm gamma");
    check_channel_vector(beta, s.c, "group_norm beta");
    if (!(epsilon > 0)) throw ConfigError("group_norm: epsilon must be > 0");
    const std::size_t P = s.plane();
    BasicTensor<T> out(s);
    BasicTensor<T> xhat(s);
    BasicTensor<T> invstd(Shape{s.n, s.c, 1, 1});
    parallel_for(s.n * s.c, [&](std::size_t job) {
        const std::size_t c = job % s.c;
        const std::size_t i = job / s.c;
        const T* xp = input.plane(i, c);
        double mean = 0.0;
        for (std::size_t p = 0; p < P; ++p) mean += xp[p];
        mean /= static_cast<double>(P);
        double var = 0.0;
        for (std::size_t p = 0; p < P; ++p) {
            const double d = xp[p] - mean;
            var += d * d;
        }
        var /= static_cast<double>(P);
        const T inv = static_cast<T>(1.0 / std::sqrt(var + epsilon));
        const T mu = static_cast<T>(mean);
        invstd.ptr()[job] = inv;
        T* hp = xhat.plane(i, c);
        T* yp = out.plane(i, c);
        const T ga = gamma.ptr()[c];
        const T be = beta.ptr()[c];
        for (std::size_t p = 0; p < P; ++p) {
            hp[p] = (xp[p] - mu) * inv;
            yp[p] = ga * hp[p] + be;
        }
    });
    if (ctx) {
        ctx->reset();
        ctx->op = OpKind::GroupNorm;
        ctx->saved = {std::move(xhat), std::move(invstd), gamma};
    }
    return out;
}

template <typename T>
NormGrads<T> group_norm_backward(OpContext<T>& ctx_in, const BasicTensor<T>& grad_out) {
    OpContext<T> ctx = take(ctx_in, OpKind::GroupNorm);
    const BasicTensor<T>& xhat = ctx.saved[0];
    const BasicTensor<T>& invstd = ctx.saved[1];
    const BasicTensor<T>& gamma = ctx.saved[2];
    const Shape& s = xhat.shape();
    require_same_shape(grad_out.shape(), s, "group_norm_backward grad_out");
    const std::size_t P = s.plane();
    const T M = static_cast<T>(P);
    NormGrads<T> grads{BasicTensor<T>(s), BasicTensor<T>(gamma.shape()), BasicTensor<T>(gamma.shape())};
    parallel_for(s.c, [&](std::size_t c) {
        T dbeta_c = 0;
        T dgamma_c = 0;
        for (std::size_t i = 0; i < s.n; ++i) {
            const T* gp = grad_out.plane(i, c);
            const T* hp = xhat.plane(i, c);
            const T db = sum(gp, P);
            const T dg = dot(gp, hp, P);
            dbeta_c += db;
            dgamma_c += dg;
            // dL/dxhat = g * gamma; per-plane normalization backward
            const T scale = gamma.ptr()[c] * invstd.ptr()[i * s.c + c];
            T* dp = grads.input.plane(i, c);
            for (std::size_t p = 0; p < P; ++p) dp[p] = scale / M * (M * gp[p] - db - hp[p] * dg);
        }
        grads.beta.ptr()[c] = dbeta_c;
        grads.gamma.ptr()[c] = dgamma_c;
    });
    return grads;
}

// ---------------------------------------------------------------------------
// activations

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input, OpContext<T>* ctx) {
    BasicTensor<T> out = input;
    for (auto& v : out.data()) v = v > T(0) ? v : T(0);
    if (ctx) {
        ctx->reset();
        ctx->op = OpKind::Relu;
        ctx->saved = {input};
    }
    return out;
}

template <typename T>
BasicTensor<T> relu_backward(OpContext<T>& ctx_in, const BasicTensor<T>& grad_out) {
    OpContext<T> ctx = take(ctx_in, OpKind::Relu);
    const BasicTensor<T>& x = ctx.saved[0];
    require_same_shape(grad_out.shape(), x.shape(), "relu_backward");
    BasicTensor<T> gx = grad_out;
    for (std::size_t i = 0; i < gx.numel(); ++i) {
        if (!(x.ptr()[i] > T(0))) gx.ptr()[i] = T(0);
    }
    return gx;
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& input, OpContext<T>* ctx) {
    BasicTensor<T> out = input;
    for (auto& v : out.data()) v = T(1) / (T(1) + std::exp(-v));
    if (ctx) {
        ctx->reset();
        ctx->op = OpKind::Sigmoid;
        ctx->saved = {out};
    }
    return out;
}

template <typename T>
BasicTensor<T> sigmoid_backward(OpContext<T>& ctx_in, const BasicTensor<T>& grad_out) {
    OpContext<T> ctx = take(ctx_in, OpKind::Sigmoid);
    const BasicTensor<T>& y = ctx.saved[0];
    require_same_shape(grad_out.shape(), y.shape(), "sigmoid_backward");
    BasicTensor<T> gx = grad_out;
    for (std::size_t i = 0; i < gx.numel(); ++i) {
        const T s = y.ptr()[i];
        gx.ptr()[i] *= s * (T(1) - s);
    }
    return gx;
}

// ---------------------------------------------------------------------------
// resampling

template <typename T>
BasicTensor<T> max_pool_2x2(const BasicTensor<T>& input, OpContext<T>* ctx) {
    const Shape& s = input.shape();
    validate_shape(s);
    if (s.h % 2 != 0 || s.w % 2 != 0) {
        throw DimensionError("max_pool_2x2: spatial dims must be even, got h=" + std::to_string(s.h) +
                             " w=" + std::to_string(s.w));
    }
    const Shape os{s.n, s.c, s.h / 2, s.w / 2};
    BasicTensor<T> out(os);
    std::vector<std::size_t> arg(os.numel());
    parallel_for(s.n * s.c, [&](std::size_t plane) {
        const T* xp = input.ptr() + plane * s.plane();
        T* yp = out.ptr() + plane * os.plane();
        std::size_t* ap = arg.data() + plane * os.plane();
        for (std::size_t oy = 0; oy < os.h; ++oy) {
            for (std::size_t ox = 0; ox < os.w; ++ox) {
                std::size_t best = (2 * oy) * s.w + 2 * ox;
                const std::size_t cand[3] = {best + 1, best + s.w, best + s.w + 1};
                for (std::size_t k : cand) {
                    if (xp[k] > xp[best]) best = k;
                }
                yp[oy * os.w + ox] = xp[best];
                ap[oy * os.w + ox] = best;
            }
        }
    });
    if (ctx) {
        ctx->reset();
        ctx->op = OpKind::MaxPool;
        ctx->index = std::move(arg);
        ctx->input_shape = s;
    }
    return out;
}

template <typename T>
BasicTensor<T> max_pool_2x2_backward(OpContext<T>& ctx_in, const BasicTensor<T>& grad_out) {
    OpContext<T> ctx = take(ctx_in, OpKind::MaxPool);
    const Shape& s = ctx.input_shape;
    const Shape os{s.n, s.c, s.h / 2, s.w / 2};
    require_same_shape(grad_out.shape(), os, "max_pool_2x2_backward");
    BasicTensor<T> gx(s);
    for (std::size_t plane = 0; plane < s.n * s.c; ++plane) {
        T* gp = gx.ptr() + plane * s.plane();
        const T* go = grad_out.ptr() + plane * os.plane();
        const std::size_t* ap = ctx.index.data() + plane * os.plane();
        for (std::size_t k = 0; k < os.plane(); ++k) gp[ap[k]] += go[k];
    }
    return gx;
}

namespace {

struct Tap {
    std::size_t i0, i1;
    double l1;  // weight of i1
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
    std::vector<Tap> taps(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
        if (src < 0) src = 0;
        std::size_t i0 = static_cast<std::size_t>(src);
        if (i0 > in - 1) i0 = in - 1;
        const std::size_t i1 = std::min(i0 + 1, in - 1);
        taps[o] = {i0, i1, src - static_cast<double>(i0)};
    }
    return taps;
}

template <typename T>
BasicTensor<T> resize_planes(const BasicTensor<T>& input, std::size_t oh, std::size_t ow) {
    const Shape& s = input.shape();
    const auto ty = bilinear_taps(s.h, oh);
    const auto tx = bilinear_taps(s.w, ow);
    BasicTensor<T> out(Shape{s.n, s.c, oh, ow});
    parallel_for(s.n * s.c, [&](std::size_t plane) {
        const T* xp = input.ptr() + plane * s.plane();
        T* yp = out.ptr() + plane * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            const T ly = static_cast<T>(ty[oy].l1);
            const T* r0 = xp + ty[oy].i0 * s.w;
            const T* r1 = xp + ty[oy].i1 * s.w;
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const T lx = static_cast<T>(tx[ox].l1);
                const T top = (T(1) - lx) * r0[tx[ox].i0] + lx * r0[tx[ox].i1];
                const T bot = (T(1) - lx) * r1[tx[ox].i0] + lx * r1[tx[ox].i1];
                yp[oy * ow + ox] = (T(1) - ly) * top + ly * bot;
            }
        }
    });
    return out;
}

}  // namespace

template <typename T>
BasicTensor<T> bilinear_upsample_x2(const BasicTensor<T>& input, OpContext<T>* ctx) {
    validate_shape(input.shape());
    if (ctx) {
        ctx->reset();
        ctx->op = OpKind::Upsample;
        ctx->input_shape = input.shape();
    }
    return resize_planes(input, 2 * input.shape().h, 2 * input.shape().w);
}

template <typename T>
BasicTensor<T> bilinear_upsample_x2_backward(OpContext<T>& ctx_in, const BasicTensor<T>& grad_out) {
    OpContext<T> ctx = take(ctx_in, OpKind::Upsample);
    const Shape& s = ctx.input_shape;
    const std::size_t oh = 2 * s.h;
    const std::size_t ow = 2 * s.w;
    require_same_shape(grad_out.shape(), Shape{s.n, s.c, oh, ow}, "bilinear_upsample_x2_backward");
    const auto ty = bilinear_taps(s.h, oh);
    const auto tx = bilinear_taps(s.w, ow);
    BasicTensor<T> gx(s);
    parallel_for(s.n * s.c, [&](std::size_t plane) {
        T* gp = gx.ptr() + plane * s.plane();
        const T* go = grad_out.ptr() + plane * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            const T ly = static_cast<T>(ty[oy].l1);
            T* r0 = gp + ty[oy].i0 * s.w;
            T* r1 = gp + ty[oy].i1 * s.w;
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const T lx = static_cast<T>(tx[ox].l1);
                const T g = go[oy * ow + ox];
                r0[tx[ox].i0] += (T(1) - ly) * (T(1) - lx) * g;
                r0[tx[ox].i1] += (T(1) - ly) * lx * g;
                r1[tx[ox].i0] += ly * (T(1) - lx) * g;
                r1[tx[ox].i1] += ly * lx * g;
            }
        }
    });
    return gx;
}

template <typename T>
BasicTensor<T> bilinear_resize(const BasicTensor<T>& input, std::size_t out_h, std::size_t out_w) {
    validate_shape(input.shape());
    if (out_h == 0 || out_w == 0) throw DimensionError("bilinear_resize: target size must be >= 1");
    return resize_planes(input, out_h, out_w);
}

// ---------------------------------------------------------------------------
// channel plumbing

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b, OpContext<T>* ctx) {
    validate_shape(a.shape());
    validate_shape(b.shape());
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
        std::string axes;
        if (sa.n != sb.n) axes += " n";
        if (sa.h != sb.h) axes += " h";
        if (sa.w != sb.w) axes += " w";
        throw DimensionError("concat_channels: " + sa.str() + " vs " + sb.str() + " (mismatched axes:" + axes + ")");
    }
    BasicTensor<T> out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
    const std::size_t P = sa.plane();
    for (std::size_t i = 0; i < sa.n; ++i) {
        std::copy_n(a.plane(i, 0), sa.c * P, out.plane(i, 0));
        std::copy_n(b.plane(i, 0), sb.c * P, out.plane(i, sa.c));
    }
    if (ctx) {
        ctx->reset();
        ctx->op = OpKind::Concat;
        ctx->input_shape = sa;
        ctx->other_shape = sb;
    }
    return out;
}

template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> concat_channels_backward(OpContext<T>& ctx_in,
                                                                   const BasicTensor<T>& grad_out) {
    OpContext<T> ctx = take(ctx_in, OpKind::Concat);
    const Shape& sa = ctx.input_shape;
    const Shape& sb = ctx.other_shape;
    require_same_shape(grad_out.shape(), Shape{sa.n, sa.c + sb.c, sa.h, sa.w}, "concat_channels_backward");
    BasicTensor<T> ga(sa);
    BasicTensor<T> gb(sb);
    const std::size_t P = sa.plane();
    for (std::size_t i = 0; i < sa.n; ++i) {
        std::copy_n(grad_out.plane(i, 0), sa.c * P, ga.plane(i, 0));
        std::copy_n(grad_out.plane(i, sa.c), sb.c * P, gb.plane(i, 0));
    }
    return {std::move(ga), std::move(gb)};
}

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& input, std::size_t begin, std::size_t count,
                              OpContext<T>* ctx) {
    const Shape& s = input.shape();
    validate_shape(s);
    if (count == 0 || begin + count > s.c) {
        throw DimensionError("slice_channels: range [" + std::to_string(begin) + ", " +
                             std::to_string(begin + count) + ") outside c=" + std::to_string(s.c));
    }
    BasicTensor<T> out(Shape{s.n, count, s.h, s.w});
    for (std::size_t i = 0; i < s.n; ++i) std::copy_n(input.plane(i, begin), count * s.plane(), out.plane(i, 0));
    if (ctx) {
        ctx->reset();
        ctx->op = OpKind::SliceChannels;
        ctx->input_shape = s;
        ctx->offset = begin;
    }
    return out;
}

template <typename T>
BasicTensor<T> slice_channels_backward(OpContext<T>& ctx_in, const BasicTensor<T>& grad_out) {
    OpContext<T> ctx = take(ctx_in, OpKind::SliceChannels);
    const Shape& s = ctx.input_shape;
    const Shape& g = grad_out.shape();
    if (g.n != s.n || g.h != s.h || g.w != s.w || ctx.offset + g.c > s.c) {
        throw DimensionError("slice_channels_backward: grad " + g.str() + " does not fit input " + s.str());
    }
    BasicTensor<T> gx(s);
    for (std::size_t i = 0; i < s.n; ++i) std::copy_n(grad_out.plane(i, 0), g.c * s.plane(), gx.plane(i, ctx.offset));
    return gx;
}

// ---------------------------------------------------------------------------
// pooling

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& input, OpContext<T>* ctx) {
    const Shape& s = input.shape();
    validate_shape(s);
    BasicTensor<T> out(Shape{s.n, s.c, 1, 1});
    const std::size_t P = s.plane();
    for (std::size_t k = 0; k < s.n * s.c; ++k) {
        out.ptr()[k] = sum(input.ptr() + k * P, P) / static_cast<T>(P);
    }
    if (ctx) {
        ctx->reset();
        ctx->op = OpKind::GlobalAvgPool;
        ctx->input_shape = s;
    }
    return out;
}

template <typename T>
BasicTensor<T> global_avg_pool_backward(OpContext<T>& ctx_in, const BasicTensor<T>& grad_out) {
    OpContext<T> ctx = take(ctx_in, OpKind::GlobalAvgPool);
    const Shape& s = ctx.input_shape;
    require_same_shape(grad_out.shape(), Shape{s.n, s.c, 1, 1}, "global_avg_pool_backward");
    BasicTensor<T> gx(s);
    const std::size_t P = s.plane();
    for (std::size_t k = 0; k < s.n * s.c; ++k) {
        std::fill_n(gx.ptr() + k * P, P, grad_out.ptr()[k] / static_cast<T>(P));
    }
    return gx;
}

template <typename T>
BasicTensor<T> global_max_pool(const BasicTensor<T>& input, OpContext<T>* ctx) {
    const Shape& s = input.shape();
    validate_shape(s);
    BasicTensor<T> out(Shape{s.n, s.c, 1, 1});
    std::vector<std::size_t> arg(s.n * s.c);
    const std::size_t P = s.plane();
    for (std::size_t k = 0; k < s.n * s.c; ++k) {
        const T* xp = input.ptr() + k * P;
        std::size_t best = 0;
        for (std::size_t p = 1; p < P; ++p) {
            if (xp[p] > xp[best]) best = p;
        }
        out.ptr()[k] = xp[best];
        arg[k] = best;
    }
    if (ctx) {
        ctx->reset();
        ctx->op = OpKind::GlobalMaxPool;
        ctx->input_shape = s;
        ctx->index = std::move(arg);
    }
    return out;
}

template <typename T>
BasicTensor<T> global_max_pool_backward(OpContext<T>& ctx_in, const BasicTensor<T>& grad_out) {
    OpContext<T> ctx = take(ctx_in, OpKind::GlobalMaxPool);
    const Shape& s = ctx.input_shape;
    require_same_shape(grad_out.shape(), Shape{s.n, s.c, 1, 1}, "global_max_pool_backward");
    BasicTensor<T> gx(s);
    for (std::size_t k = 0; k < s.n * s.c; ++k) gx.ptr()[k * s.plane() + ctx.index[k]] = grad_out.ptr()[k];
    return gx;
}

template <typename T>
BasicTensor<T> channel_mean(const BasicTensor<T>& input, OpContext<T>* ctx) {
    const Shape& s = input.shape();
    validate_shape(s);
    BasicTensor<T> out(Shape{s.n, 1, s.h, s.w});
    const std::size_t P = s.plane();
    for (std::size_t i = 0; i < s.n; ++i) {
        T* yp = out.plane(i, 0);
        for (std::size_t c = 0; c < s.c; ++c) {
            const T* xp = input.plane(i, c);
            for (std::size_t p = 0; p < P; ++p) yp[p] += xp[p];
        }
        for (std::size_t p = 0; p < P; ++p) yp[p] /= static_cast<T>(s.c);
    }
    if (ctx) {
        ctx->reset();
        ctx->op = OpKind::ChannelMean;
        ctx->input_shape = s;
    }
    return out;
}

template <typename T>
BasicTensor<T> channel_mean_backward(OpContext<T>& ctx_in, const BasicTensor<T>& grad_out) {
    OpContext<T> ctx = take(ctx_in, OpKind::ChannelMean);
    const Shape& s = ctx.input_shape;
    require_same_shape(grad_out.shape(), Shape{s.n, 1, s.h, s.w}, "channel_mean_backward");
    BasicTensor<T> gx(s);
    const std::size_t P = s.plane();
    for (std::size_t i = 0; i < s.n; ++i) {
        const T* gp = grad_out.plane(i, 0);
        for (std::size_t c = 0; c < s.c; ++c) {
            T* dp = gx.plane(i, c);
            for (std::size_t p = 0; p < P; ++p) dp[p] = gp[p] / static_cast<T>(s.c);
        }
    }
    return gx;
}

template <typename T>
BasicTensor<T> channel_max(const BasicTensor<T>& input, OpContext<T>* ctx) {
    const Shape& s = input.shape();
    validate_shape(s);
    BasicTensor<T> out(Shape{s.n, 1, s.h, s.w});
    std::vector<std::size_t> arg(s.n * s.plane(), 0);
    const std::size_t P = s.plane();
    for (std::size_t i = 0; i < s.n; ++i) {
        T* yp = out.plane(i, 0);
        std::size_t* ap = arg.data() + i * P;
        std::copy_n(input.plane(i, 0), P, yp);
        for (std::size_t c = 1; c < s.c; ++c) {
            const T* xp = input.plane(i, c);
            for (std::size_t p = 0; p < P; ++p) {
                if (xp[p] > yp[p]) {
                    yp[p] = xp[p];
                    ap[p] = c;
                }
            }
        }
    }
    if (ctx) {
        ctx->reset();
        ctx->op = OpKind::ChannelMax;
        ctx->input_shape = s;
        ctx->index = std::move(arg);
    }
    return out;
}

template <typename T>
BasicTensor<T> channel_max_backward(OpContext<T>& ctx_in, const BasicTensor<T>& grad_out) {
    OpContext<T> ctx = take(ctx_in, OpKind::ChannelMax);
    const Shape& s = ctx.input_shape;
    require_same_shape(grad_out.shape(), Shape{s.n, 1, s.h, s.w}, "channel_max_backward");
    BasicTensor<T> gx(s);
    const std::size_t P = s.plane();
    for (std::size_t i = 0; i < s.n; ++i) {
        for (std::size_t p = 0; p < P; ++p) gx(i, ctx.index[i * P + p], p / s.w, p % s.w) = grad_out.plane(i, 0)[p];
    }
    return gx;
}

// ---------------------------------------------------------------------------
// affine, gating, addition

template <typename T>
BasicTensor<T> channel_affine(const BasicTensor<T>& input, const BasicTensor<T>& scale, const BasicTensor<T>& shift,
                              OpContext<T>* ctx) {
    const Shape& s = input.shape();
    validate_shape(s);
    check_channel_vector(scale, s.c, "channel_affine scale");
    check_channel_vector(shift, s.c, "channel_affine shift");
    BasicTensor<T> out(s);
    const std::size_t P = s.plane();
    for (std::size_t i = 0; i < s.n; ++i) {
        for (std::size_t c = 0; c < s.c; ++c) {
            const T a = scale.ptr()[c];
            const T b = shift.ptr()[c];
            const T* xp = input.plane(i, c);
            T* yp = out.plane(i, c);
            for (std::size_t p = 0; p < P; ++p) yp[p] = xp[p] * a + b;
        }
    }
    if (ctx) {
        ctx->reset();
        ctx->op = OpKind::ChannelAffine;
        ctx->saved = {input, scale};
    }
    return out;
}

template <typename T>
AffineGrads<T> channel_affine_backward(OpContext<T>& ctx_in, const BasicTensor<T>& grad_out) {
    OpContext<T> ctx = take(ctx_in, OpKind::ChannelAffine);
    const BasicTensor<T>& x = ctx.saved[0];
    const BasicTensor<T>& scale = ctx.saved[1];
    const Shape& s = x.shape();
    require_same_shape(grad_out.shape(), s, "channel_affine_backward");
    AffineGrads<T> g{BasicTensor<T>(s), BasicTensor<T>(scale.shape()), BasicTensor<T>(scale.shape())};
    const std::size_t P = s.plane();
    for (std::size_t c = 0; c < s.c; ++c) {
        T ds = 0;
        T db = 0;
        const T a = scale.ptr()[c];
        for (std::size_t i = 0; i < s.n; ++i) {
            const T* gp = grad_out.plane(i, c);
            ds += dot(gp, x.plane(i, c), P);
            db += sum(gp, P);
            T* dp = g.input.plane(i, c);
            for (std::size_t p = 0; p < P; ++p) dp[p] = gp[p] * a;
        }
        g.scale.ptr()[c] = ds;
        g.shift.ptr()[c] = db;
    }
    return g;
}

namespace {

enum class Broadcast { Full, PerChannel, PerPixel };

Broadcast broadcast_kind(const Shape& x, const Shape& gate) {
    if (gate == x) return Broadcast::Full;
    if (gate == Shape{x.n, x.c, 1, 1}) return Broadcast::PerChannel;
    if (gate == Shape{x.n, 1, x.h, x.w}) return Broadcast::PerPixel;
    throw DimensionError("multiply: gate shape " + gate.str() + " cannot broadcast to " + x.str());
}

}  // namespace

template <typename T>
BasicTensor<T> multiply(const BasicTensor<T>& x, const BasicTensor<T>& gate, OpContext<T>* ctx) {
    const Shape& s = x.shape();
    validate_shape(s);
    const Broadcast kind = broadcast_kind(s, gate.shape());
    BasicTensor<T> out(s);
    const std::size_t P = s.plane();
    for (std::size_t i = 0; i < s.n; ++i) {
        for (std::size_t c = 0; c < s.c; ++c) {
            const T* xp = x.plane(i, c);
            T* yp = out.plane(i, c);
            switch (kind) {
                case Broadcast::Full: {
                    const T* gp = gate.plane(i, c);
                    for (std::size_t p = 0; p < P; ++p) yp[p] = xp[p] * gp[p];
                    break;
                }
                case Broadcast::PerChannel: {
                    const T gv = gate(i, c, 0, 0);
                    for (std::size_t p = 0; p < P; ++p) yp[p] = xp[p] * gv;
                    break;
                }
                case Broadcast::PerPixel: {
                    const T* gp = gate.plane(i, 0);
                    for (std::size_t p = 0; p < P; ++p) yp[p] = xp[p] * gp[p];
                    break;
                }
            }
        }
    }
    if (ctx) {
        ctx->reset();
        ctx->op = OpKind::Multiply;
        ctx->saved = {x, gate};
    }
    return out;
}

template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> multiply_backward(OpContext<T>& ctx_in, const BasicTensor<T>& grad_out) {
    OpContext<T> ctx = take(ctx_in, OpKind::Multiply);
    const BasicTensor<T>& x = ctx.saved[0];
    const BasicTensor<T>& gate = ctx.saved[1];
    const Shape& s = x.shape();
    require_same_shape(grad_out.shape(), s, "multiply_backward");
    const Broadcast kind = broadcast_kind(s, gate.shape());
    BasicTensor<T> gx(s);
    BasicTensor<T> gg(gate.shape());
    const std::size_t P = s.plane();
    for (std::size_t i = 0; i < s.n; ++i) {
        for (std::size_t c = 0; c < s.c; ++c) {
            const T* go = grad_out.plane(i, c);
            const T* xp = x.plane(i, c);
            T* dx = gx.plane(i, c);
            switch (kind) {
                case Broadcast::Full: {
                    const T* gp = gate.plane(i, c);
                    T* dg = gg.plane(i, c);
                    for (std::size_t p = 0; p < P; ++p) {
                        dx[p] = go[p] * gp[p];
                        dg[p] = go[p] * xp[p];
                    }
                    break;
                }
                case Broadcast::PerChannel: {
                    const T gv = gate(i, c, 0, 0);
                    for (std::size_t p = 0; p < P; ++p) dx[p] = go[p] * gv;
                    gg(i, c, 0, 0) = dot(go, xp, P);
                    break;
                }
                case Broadcast::PerPixel: {
                    const T* gp = gate.plane(i, 0);
                    T* dg = gg.plane(i, 0);
                    for (std::size_t p = 0; p < P; ++p) {
                        dx[p] = go[p] * gp[p];
                        dg[p] += go[p] * xp[p];
                    }
                    break;
                }
            }
        }
    }
    return {std::move(gx), std::move(gg)};
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b, OpContext<T>* ctx) {
    require_same_shape(a.shape(), b.shape(), "add");
    BasicTensor<T> out = a;
    for (std::size_t i = 0; i < out.numel(); ++i) out.ptr()[i] += b.ptr()[i];
    if (ctx) {
        ctx->reset();
        ctx->op = OpKind::Add;
        ctx->input_shape = a.shape();
    }
    return out;
}

template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> add_backward(OpContext<T>& ctx_in, const BasicTensor<T>& grad_out) {
    OpContext<T> ctx = take(ctx_in, OpKind::Add);
    require_same_shape(grad_out.shape(), ctx.input_shape, "add_backward");
    return {grad_out, grad_out};
}

// ---------------------------------------------------------------------------

#define SSA_INSTANTIATE_OPS(T)                                                                                  \
    template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>*,          \
                                   Conv2dParams, OpContext<T>*);                                                 \
    template Conv2dGrads<T> conv2d_backward(OpContext<T>&, const BasicTensor<T>&);                               \
    template BasicTensor<T> channel_shuffle(const BasicTensor<T>&, std::size_t, OpContext<T>*);                  \
    template BasicTensor<T> channel_shuffle_backward(OpContext<T>&, const BasicTensor<T>&);                      \
    template BasicTensor<T> batch_norm(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,      \
                                       BatchNormState<T>&, Mode, BatchNormParams, OpContext<T>*);                \
    template NormGrads<T> batch_norm_backward(OpContext<T>&, const BasicTensor<T>&);                             \
    template BasicTensor<T> group_norm_per_channel(const BasicTensor<T>&, const BasicTensor<T>&,                 \
                                                   const BasicTensor<T>&, double, OpContext<T>*);                \
    template NormGrads<T> group_norm_backward(OpContext<T>&, const BasicTensor<T>&);                             \
    template BasicTensor<T> relu(const BasicTensor<T>&, OpContext<T>*);                                          \
    template BasicTensor<T> relu_backward(OpContext<T>&, const BasicTensor<T>&);                                 \
    template BasicTensor<T> sigmoid(const BasicTensor<T>&, OpContext<T>*);                                       \
    template BasicTensor<T> sigmoid_backward(OpContext<T>&, const BasicTensor<T>&);                              \
    template BasicTensor<T> max_pool_2x2(const BasicTensor<T>&, OpContext<T>*);                                  \
    template BasicTensor<T> max_pool_2x2_backward(OpContext<T>&, const BasicTensor<T>&);                         \
    template BasicTensor<T> bilinear_upsample_x2(const BasicTensor<T>&, OpContext<T>*);                          \
    template BasicTensor<T> bilinear_upsample_x2_backward(OpContext<T>&, const BasicTensor<T>&);                 \
    template BasicTensor<T> bilinear_resize(const BasicTensor<T>&, std::size_t, std::size_t);                    \
    template BasicTensor<T> concat_channels(const BasicTensor<T>&, const BasicTensor<T>&, OpContext<T>*);        \
    template std::pair<BasicTensor<T>, BasicTensor<T>> concat_channels_backward(OpContext<T>&,                   \
                                                                                const BasicTensor<T>&);          \
    template BasicTensor<T> slice_channels(const BasicTensor<T>&, std::size_t, std::size_t, OpContext<T>*);      \
    template BasicTensor<T> slice_channels_backward(OpContext<T>&, const BasicTensor<T>&);                       \
    template BasicTensor<T> global_avg_pool(const BasicTensor<T>&, OpContext<T>*);                               \
    template BasicTensor<T> global_avg_pool_backward(OpContext<T>&, const BasicTensor<T>&);                      \
    template BasicTensor<T> global_max_pool(const BasicTensor<T>&, OpContext<T>*);                               \
    template BasicTensor<T> global_max_pool_backward(OpContext<T>&, const BasicTensor<T>&);                      \
    template BasicTensor<T> channel_mean(const BasicTensor<T>&, OpContext<T>*);                                  \
    template BasicTensor<T> channel_mean_backward(OpContext<T>&, const BasicTensor<T>&);                         \
    template BasicTensor<T> channel_max(const BasicTensor<T>&, OpContext<T>*);                                   \
    template BasicTensor<T> channel_max_backward(OpContext<T>&, const BasicTensor<T>&);                          \
    template BasicTensor<T> channel_affine(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,  \
                                           OpContext<T>*);                                                       \
    template AffineGrads<T> channel_affine_backward(OpContext<T>&, const BasicTensor<T>&);                       \
    template BasicTensor<T> multiply(const BasicTensor<T>&, const BasicTensor<T>&, OpContext<T>*);               \
    template std::pair<BasicTensor<T>, BasicTensor<T>> multiply_backward(OpContext<T>&, const BasicTensor<T>&);  \
    template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&, OpContext<T>*);                    \
    template std::pair<BasicTensor<T>, BasicTensor<T>> add_backward(OpContext<T>&, const BasicTensor<T>&);

SSA_INSTANTIATE_OPS(float)
SSA_INSTANTIATE_OPS(double)

}  // namespace ssa
