#include "fsag/affordance.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "fsag/error.hpp"
#include "fsag/io.hpp"
#include "fsag/rng.hpp"

namespace fsag::affordance {

using namespace fsag::tensorkit;

// Slope of the leaky smoothing nonlinearity in the decoder trunk. A hard
// ReLU leaves isolated blob regions with no gradient path once their
// features die, which reliably kills the thumb channel at desk scale.
constexpr double kSmoothSlope = 0.05;

HeatmapStack::HeatmapStack(Tensor t) : channels(std::move(t)) {
    if (channels.rank() != 3) raise_input("heatmap stack must be [K,h,w]");
}

double label_sigma(int h, int w) { return std::min(h, w) / 64.0; }

HeatmapStack synthesize_labels(const std::vector<FingerAnnotation>& annotations, int h, int w) {
    if (h < 64 || w < 64) raise_input("label lattice extents must be >= 64");
    if (annotations.size() > static_cast<std::size_t>(kFingers))
        raise_input("too many finger annotations");
    std::set<int> seen;
    for (const auto& a : annotations) {
        if (a.finger_id < 0 || a.finger_id >= kFingers)
            raise_input("finger_id out of range: " + std::to_string(a.finger_id));
        if (!seen.insert(a.finger_id).second)
            raise_input("duplicate finger_id: " + std::to_string(a.finger_id));
        if (a.row < 0.0 || a.row > h - 1.0 || a.col < 0.0 || a.col > w - 1.0)
            raise_input("annotation center out of lattice bounds");
    }

    const double sigma = label_sigma(h, w);
    const double inv = 1.0 / (2.0 * sigma * sigma);
    HeatmapStack stack(Tensor({kFingers, h, w}));
    for (const auto& a : annotations) {
        for (int r = 0; r < h; ++r) {
            const double dr = r - a.row;
            float* row = &stack.channels.at(a.finger_id, r, 0);
            for (int c = 0; c < w; ++c) {
                const double dc = c - a.col;
                row[c] = static_cast<float>(std::exp(-(dr * dr + dc * dc) * inv));
            }
        }
    }
    return stack;
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 1 || t > steps()) raise_input("timestep out of schedule range");
    return alpha_bars[static_cast<std::size_t>(t - 1)];
}

NoiseSchedule make_linear_schedule(int steps, double beta_start, double beta_end) {
    if (steps < 1 || beta_start <= 0.0 || beta_end >= 1.0 || beta_start > beta_end)
        raise_input("invalid noise schedule parameters");
    NoiseSchedule s;
    s.betas.resize(static_cast<std::size_t>(steps));
    s.alpha_bars.resize(static_cast<std::size_t>(steps));
    double acc = 1.0;
    for (int i = 0; i < steps; ++i) {
        const double beta =
            steps == 1 ? beta_start
                       : beta_start + (beta_end - beta_start) * i / static_cast<double>(steps - 1);
        s.betas[static_cast<std::size_t>(i)] = beta;
        acc *= 1.0 - beta;
        s.alpha_bars[static_cast<std::size_t>(i)] = acc;
    }
    return s;
}

Tensor forward_noise(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& schedule) {
    if (!z0.same_dims(eps)) raise_input("forward_noise: eps dims must match z0");
    const double ab = schedule.alpha_bar(t);
    const double signal = std::sqrt(ab);
    const double noise = std::sqrt(1.0 - ab);
    Tensor out(z0.dims());
    for (std::size_t i = 0; i < z0.size(); ++i)
        out[i] = static_cast<float>(signal * z0[i] + noise * eps[i]);
    return out;
}

ActivationSet generate_synthetic_activations(const HeatmapStack& target, std::uint64_t seed,
                                             const ActivationShapeSpec& spec,
                                             const NoiseSchedule& schedule) {
    if (spec.levels.empty() || spec.timesteps.empty())
        raise_input("activation spec needs at least one level and one timestep");
    const int k = target.fingers();
    const int h = target.height(), w = target.width();

    ActivationSet acts;
    acts.timesteps = spec.timesteps;
    acts.conditioning.resize(8);
    {
        Rng rng(hash_tag(seed, "conditioning"));
        for (auto& v : acts.conditioning) v = static_cast<float>(rng.normal());
    }

    // Fixed embedding per level, shared across timesteps: a channel-cycling
    // backbone plus seeded random mixing, so every target channel is carried
    // with comparable strength.
    std::vector<std::vector<double>> embeddings;
    for (std::size_t l = 0; l < spec.levels.size(); ++l) {
        const auto& lv = spec.levels[l];
        if (lv.channels < 1 || lv.height < 1 || lv.width < 1)
            raise_input("bad activation level shape");
        if (h % lv.height != 0 || w % lv.width != 0)
            raise_input("activation level extents must divide the target lattice");
        Rng rng(hash_combine(hash_tag(seed, "embed"), l));
        std::vector<double> m(static_cast<std::size_t>(lv.channels) * k);
        const double scale = 0.4 / std::sqrt(static_cast<double>(k));
        for (std::size_t i = 0; i < m.size(); ++i) {
            const int c = static_cast<int>(i) / k;
            const int f = static_cast<int>(i) % k;
            m[i] = rng.uniform(-scale, scale) + (c % k == f ? 0.9 : 0.0);
        }
        embeddings.push_back(std::move(m));
    }

    for (std::size_t ti = 0; ti < spec.timesteps.size(); ++ti) {
        const int t = spec.timesteps[ti];
        const double ab = schedule.alpha_bar(t);
        const double signal = std::sqrt(ab);
        const double noise = std::sqrt(1.0 - ab) * spec.noise_amp;
        std::vector<Tensor> level_acts;
        for (std::size_t l = 0; l < spec.levels.size(); ++l) {
            const auto& lv = spec.levels[l];
            Tensor ds = area_downsample(target.channels, h / lv.height, w / lv.width);
            Tensor act({lv.channels, lv.height, lv.width});
            const std::uint64_t noise_seed =
                hash_combine(hash_combine(hash_tag(seed, "noise"), ti), l);
            std::uint64_t counter = 0;
            for (int c = 0; c < lv.channels; ++c) {
                const double* m = &embeddings[l][static_cast<std::size_t>(c) * k];
                for (int y = 0; y < lv.height; ++y) {
                    for (int x = 0; x < lv.width; ++x) {
                        double v = 0.0;
                        for (int f = 0; f < k; ++f) v += m[f] * ds.at(f, y, x);
                        v = signal * v + noise * counter_normal(noise_seed, counter++);
                        act.at(c, y, x) = static_cast<float>(v);
                    }
                }
            }
            level_acts.push_back(std::move(act));
        }
        acts.levels.push_back(std::move(level_acts));
    }
    return acts;
}

// ---------------------------------------------------------------------------
// Aggregation + decoding (double precision internals)
// ---------------------------------------------------------------------------

namespace {

struct CommonGrid {
    int h = 0, w = 0;
    std::vector<std::pair<int, int>> factors;  // per level (fy, fx)
};

CommonGrid common_grid(const std::vector<std::vector<Tensor>>& levels) {
    CommonGrid grid;
    grid.h = levels[0][0].dim(1);
    grid.w = levels[0][0].dim(2);
    for (const auto& act : levels[0]) {
        if (act.dim(1) * act.dim(2) < grid.h * grid.w) {
            grid.h = act.dim(1);
            grid.w = act.dim(2);
        }
    }
    for (const auto& act : levels[0]) {
        if (act.dim(1) % grid.h != 0 || act.dim(2) % grid.w != 0)
            raise_input("activation levels must be integer multiples of the coarsest grid");
        grid.factors.emplace_back(act.dim(1) / grid.h, act.dim(2) / grid.w);
    }
    return grid;
}

void check_acts_params(const ActivationSet& acts, const AggregatorParams& params) {
    const int levels = acts.level_count();
    const int s = acts.timestep_count();
    if (levels == 0 || s == 0) raise_input("empty activation set");
    if (static_cast<int>(params.bottleneck_kernels.size()) != levels ||
        static_cast<int>(params.bottleneck_biases.size()) != levels)
        raise_input("aggregator level count mismatch");
    if (params.mixing_logits.dim(0) != levels || params.mixing_logits.dim(1) != s)
        raise_input("mixing logits shape mismatch");
    for (const auto& per_t : acts.levels) {
        if (static_cast<int>(per_t.size()) != levels)
            raise_input("inconsistent level count across timesteps");
        for (int l = 0; l < levels; ++l) {
            if (per_t[static_cast<std::size_t>(l)].dims() != acts.levels[0][static_cast<std::size_t>(l)].dims())
                raise_input("inconsistent activation shapes across timesteps");
            if (params.bottleneck_kernels[static_cast<std::size_t>(l)].dim(1) !=
                per_t[static_cast<std::size_t>(l)].dim(0))
                raise_input("bottleneck channel mismatch at level " + std::to_string(l));
        }
    }
}

struct AggCache {
    std::vector<double> weights;                 // softmax over (l,t), index l*S+t
    std::vector<std::vector<DTensor>> bottled;   // [S][L] post-conv, pre-resample
    std::vector<std::vector<DTensor>> resampled; // [S][L] on the common grid
    CommonGrid grid;
    DTensor a_g;
};

AggCache aggregate_forward(const ActivationSet& acts, const AggregatorParams& params) {
    check_acts_params(acts, params);
    AggCache cache;
    cache.grid = common_grid(acts.levels);
    const int levels = acts.level_count();
    const int s = acts.timestep_count();
    const int cg = params.bottleneck_kernels[0].dim(0);

    cache.weights = softmax(std::span<const double>(params.mixing_logits.values()));
    cache.a_g = DTensor({cg, cache.grid.h, cache.grid.w});
    for (int ti = 0; ti < s; ++ti) {
        std::vector<DTensor> row_b, row_r;
        for (int l = 0; l < levels; ++l) {
            DTensor act = acts.levels[static_cast<std::size_t>(ti)][static_cast<std::size_t>(l)]
                              .cast<double>();
            const auto& kern = params.bottleneck_kernels[static_cast<std::size_t>(l)];
            const auto& bias = params.bottleneck_biases[static_cast<std::size_t>(l)];
            DTensor z = conv2d(act, kern, std::span<const double>(bias), Padding::same);
            auto [fy, fx] = cache.grid.factors[static_cast<std::size_t>(l)];
            DTensor r = area_downsample(z, fy, fx);
            const double wgt = cache.weights[static_cast<std::size_t>(l) * s + ti];
            for (std::size_t i = 0; i < r.size(); ++i) cache.a_g[i] += wgt * r[i];
            row_b.push_back(std::move(z));
            row_r.push_back(std::move(r));
        }
        cache.bottled.push_back(std::move(row_b));
        cache.resampled.push_back(std::move(row_r));
    }
    return cache;
}

}  // namespace

AggregateResult aggregate(const ActivationSet& acts, const AggregatorParams& params) {
    AggCache cache = aggregate_forward(acts, params);
    AggregateResult out;
    out.pooled = global_avg_pool(cache.a_g);
    out.map = std::move(cache.a_g);
    return out;
}

namespace {

struct DecodeCache {
    // Index i corresponds to level r = 3 - i (top-down order of computation).
    std::array<DTensor, 3> lateral, lateral_up, adapter, adapter_up, pre, conv, feat;
    DTensor pred;
};

void check_decoder(const DTensor& a_g, const DecoderParams& p) {
    if (a_g.rank() != 3) raise_input("decode: A_g must be [C,h,w]");
    if (p.lateral_kernels[0].dim(1) != a_g.dim(0))
        raise_input("decode: lateral projection channel mismatch");
    for (int i = 0; i < 3; ++i) {
        if (p.lateral_kernels[static_cast<std::size_t>(i)].dim(1) != a_g.dim(0))
            raise_input("decode: lateral projection channel mismatch");
    }
    // tau_r consumes F_{r+1}: adapter i=0 consumes the zero F_4 at c3 width.
    for (int i = 0; i < 3; ++i) {
        const int expect = i == 0 ? p.lateral_kernels[0].dim(0)
                                  : p.lateral_kernels[static_cast<std::size_t>(i - 1)].dim(0);
        if (p.adapter_kernels[static_cast<std::size_t>(i)].dim(1) != expect)
            raise_input("decode: adapter channel chain inconsistent");
        if (p.adapter_kernels[static_cast<std::size_t>(i)].dim(0) !=
            p.lateral_kernels[static_cast<std::size_t>(i)].dim(0))
            raise_input("decode: adapter output channels inconsistent");
        if (p.smooth_kernels[static_cast<std::size_t>(i)].dim(0) !=
                p.lateral_kernels[static_cast<std::size_t>(i)].dim(0) ||
            p.smooth_kernels[static_cast<std::size_t>(i)].dim(1) !=
                p.lateral_kernels[static_cast<std::size_t>(i)].dim(0))
            raise_input("decode: smoothing conv channels inconsistent");
    }
    if (p.head_kernel.dim(1) != p.lateral_kernels[2].dim(0))
        raise_input("decode: head channel mismatch");
    const int h = a_g.dim(1), w = a_g.dim(2);
    if (p.out_height < 2 * h || p.out_width < 2 * w)
        raise_input("decode: target-size chain must grow (H_out >= 2h)");
}

std::pair<int, int> target_size(const DTensor& a_g, const DecoderParams& p, int r) {
    switch (r) {
        case 3: return {a_g.dim(1), a_g.dim(2)};
        case 2: return {2 * a_g.dim(1), 2 * a_g.dim(2)};
        default: return {p.out_height, p.out_width};
    }
}

DecodeCache decode_forward(const DTensor& a_g, const DecoderParams& p) {
    check_decoder(a_g, p);
    DecodeCache cache;
    DTensor prev;  // F_{r+1}; starts as the zero F_4 at c3 channels, s3 size.
    for (int i = 0; i < 3; ++i) {
        const int r = 3 - i;
        const auto [th, tw] = target_size(a_g, p, r);
        if (i == 0) prev = DTensor({p.lateral_kernels[0].dim(0), a_g.dim(1), a_g.dim(2)});
        const std::size_t ii = static_cast<std::size_t>(i);
        cache.adapter[ii] = conv2d(prev, p.adapter_kernels[ii],
                                   std::span<const double>(p.adapter_biases[ii]), Padding::same);
        cache.adapter_up[ii] = bilinear_upsample(cache.adapter[ii], th, tw);
        cache.lateral[ii] = conv2d(a_g, p.lateral_kernels[ii],
                                   std::span<const double>(p.lateral_biases[ii]), Padding::same);
        cache.lateral_up[ii] = bilinear_upsample(cache.lateral[ii], th, tw);
        DTensor pre(cache.adapter_up[ii].dims());
        for (std::size_t j = 0; j < pre.size(); ++j)
            pre[j] = cache.adapter_up[ii][j] + cache.lateral_up[ii][j];
        cache.pre[ii] = std::move(pre);
        cache.conv[ii] = conv2d(cache.pre[ii], p.smooth_kernels[ii],
                                std::span<const double>(p.smooth_biases[ii]), Padding::same);
        cache.feat[ii] = leaky_relu(cache.conv[ii], kSmoothSlope);
        prev = cache.feat[ii];
    }
    cache.pred = conv2d(cache.feat[2], p.head_kernel, std::span<const double>(p.head_bias),
                        Padding::same);
    return cache;
}

}  // namespace

HeatmapStack decode(const DTensor& a_g, const DecoderParams& params) {
    DecodeCache cache = decode_forward(a_g, params);
    return HeatmapStack(cache.pred.cast<float>());
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

DTensor rand_kernel(Rng& rng, std::vector<int> dims) {
    DTensor t(std::move(dims));
    const int fan_in = t.dim(1) * t.dim(2) * t.dim(3);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

std::vector<double> rand_bias(Rng& rng, int n, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> b(static_cast<std::size_t>(n));
    for (auto& v : b) v = rng.uniform(-bound, bound);
    return b;
}

// Visit every parameter array in a fixed order (update + Adam state layout).
template <typename Fn>
void for_each_param(AggregatorParams& agg, DecoderParams& dec, Fn&& fn) {
    for (std::size_t l = 0; l < agg.bottleneck_kernels.size(); ++l) {
        fn(agg.bottleneck_kernels[l].values());
        fn(agg.bottleneck_biases[l]);
    }
    fn(agg.mixing_logits.values());
    for (std::size_t i = 0; i < 3; ++i) {
        fn(dec.lateral_kernels[i].values());
        fn(dec.lateral_biases[i]);
        fn(dec.adapter_kernels[i].values());
        fn(dec.adapter_biases[i]);
        fn(dec.smooth_kernels[i].values());
        fn(dec.smooth_biases[i]);
    }
    fn(dec.head_kernel.values());
    fn(dec.head_bias);
}

NetGrads zero_grads(const AggregatorParams& agg, const DecoderParams& dec) {
    NetGrads g;
    g.agg.bottleneck_kernels.reserve(agg.bottleneck_kernels.size());
    for (const auto& k : agg.bottleneck_kernels) g.agg.bottleneck_kernels.emplace_back(k.dims());
    for (const auto& b : agg.bottleneck_biases)
        g.agg.bottleneck_biases.emplace_back(b.size(), 0.0);
    g.agg.mixing_logits = DTensor(agg.mixing_logits.dims());
    for (std::size_t i = 0; i < 3; ++i) {
        g.dec.lateral_kernels[i] = DTensor(dec.lateral_kernels[i].dims());
        g.dec.lateral_biases[i].assign(dec.lateral_biases[i].size(), 0.0);
        g.dec.adapter_kernels[i] = DTensor(dec.adapter_kernels[i].dims());
        g.dec.adapter_biases[i].assign(dec.adapter_biases[i].size(), 0.0);
        g.dec.smooth_kernels[i] = DTensor(dec.smooth_kernels[i].dims());
        g.dec.smooth_biases[i].assign(dec.smooth_biases[i].size(), 0.0);
    }
    g.dec.head_kernel = DTensor(dec.head_kernel.dims());
    g.dec.head_bias.assign(dec.head_bias.size(), 0.0);
    g.dec.out_height = dec.out_height;
    g.dec.out_width = dec.out_width;
    return g;
}

void accumulate(std::vector<double>& into, const std::vector<double>& from, double scale) {
    for (std::size_t i = 0; i < into.size(); ++i) into[i] += scale * from[i];
}

template <typename T>
void accumulate(std::vector<double>& into, const std::vector<T>& from, double scale) {
    for (std::size_t i = 0; i < into.size(); ++i) into[i] += scale * from[i];
}

}  // namespace

double forward_loss(const ActivationSet& acts, const HeatmapStack& target,
                    const AggregatorParams& agg, const DecoderParams& dec) {
    AggCache agg_cache = aggregate_forward(acts, agg);
    DecodeCache dec_cache = decode_forward(agg_cache.a_g, dec);
    return mse(dec_cache.pred, target.channels.cast<double>());
}

NetGrads compute_grads(const ActivationSet& acts, const HeatmapStack& target,
                       const AggregatorParams& agg, const DecoderParams& dec,
                       double* loss_out) {
    AggCache agg_cache = aggregate_forward(acts, agg);
    DecodeCache dec_cache = decode_forward(agg_cache.a_g, dec);
    DTensor target_d = target.channels.cast<double>();
    if (loss_out) *loss_out = mse(dec_cache.pred, target_d);

    NetGrads grads = zero_grads(agg, dec);

    // Head.
    DTensor dpred = mse_backward(dec_cache.pred, target_d);
    {
        auto g = conv2d_backward(dec_cache.feat[2], dec.head_kernel, Padding::same, dpred);
        grads.dec.head_kernel = std::move(g.kernel_grad);
        grads.dec.head_bias.assign(g.bias_grad.begin(), g.bias_grad.end());
        dpred = std::move(g.input_grad);  // now dF_1
    }

    // Top-down levels in reverse: i = 2 (r=1) .. 0 (r=3).
    DTensor d_ag(agg_cache.a_g.dims());
    DTensor dfeat = std::move(dpred);
    for (int i = 2; i >= 0; --i) {
        const std::size_t ii = static_cast<std::size_t>(i);
        DTensor dconv = leaky_relu_backward(dec_cache.conv[ii], dfeat, kSmoothSlope);
        auto gs = conv2d_backward(dec_cache.pre[ii], dec.smooth_kernels[ii], Padding::same, dconv);
        grads.dec.smooth_kernels[ii] = std::move(gs.kernel_grad);
        grads.dec.smooth_biases[ii].assign(gs.bias_grad.begin(), gs.bias_grad.end());
        const DTensor& dpre = gs.input_grad;

        DTensor dlat = resize_bilinear_backward(dec_cache.lateral[ii].dims(), dpre);
        auto gl = conv2d_backward(agg_cache.a_g, dec.lateral_kernels[ii], Padding::same, dlat);
        grads.dec.lateral_kernels[ii] = std::move(gl.kernel_grad);
        grads.dec.lateral_biases[ii].assign(gl.bias_grad.begin(), gl.bias_grad.end());
        for (std::size_t j = 0; j < d_ag.size(); ++j) d_ag[j] += gl.input_grad[j];

        DTensor dad = resize_bilinear_backward(dec_cache.adapter[ii].dims(), dpre);
        DTensor zero_f4;
        if (i == 0)
            zero_f4 = DTensor({dec.lateral_kernels[0].dim(0), agg_cache.a_g.dim(1),
                               agg_cache.a_g.dim(2)});
        const DTensor& prev = i == 0 ? zero_f4 : dec_cache.feat[ii - 1];
        auto ga = conv2d_backward(prev, dec.adapter_kernels[ii], Padding::same, dad);
        grads.dec.adapter_kernels[ii] = std::move(ga.kernel_grad);
        grads.dec.adapter_biases[ii].assign(ga.bias_grad.begin(), ga.bias_grad.end());
        if (i > 0)
            dfeat = std::move(ga.input_grad);  // flows into F_r for the next round
        // i == 0: gradient into the constant F_4 is discarded.
    }

    // Aggregator.
    const int s = acts.timestep_count();
    const int levels = acts.level_count();
    std::vector<double> dweights(static_cast<std::size_t>(levels) * s, 0.0);
    for (int ti = 0; ti < s; ++ti) {
        for (int l = 0; l < levels; ++l) {
            const std::size_t wi = static_cast<std::size_t>(l) * s + ti;
            const DTensor& r = agg_cache.resampled[static_cast<std::size_t>(ti)][static_cast<std::size_t>(l)];
            double dot = 0.0;
            for (std::size_t j = 0; j < r.size(); ++j) dot += d_ag[j] * r[j];
            dweights[wi] = dot;

            DTensor dr(r.dims());
            const double wgt = agg_cache.weights[wi];
            for (std::size_t j = 0; j < dr.size(); ++j) dr[j] = wgt * d_ag[j];
            auto [fy, fx] = agg_cache.grid.factors[static_cast<std::size_t>(l)];
            DTensor dz = area_downsample_backward(
                agg_cache.bottled[static_cast<std::size_t>(ti)][static_cast<std::size_t>(l)].dims(),
                fy, fx, dr);
            DTensor act = acts.levels[static_cast<std::size_t>(ti)][static_cast<std::size_t>(l)]
                              .cast<double>();
            auto gb = conv2d_backward(act, agg.bottleneck_kernels[static_cast<std::size_t>(l)],
                                      Padding::same, dz);
            for (std::size_t j = 0; j < gb.kernel_grad.size(); ++j)
                grads.agg.bottleneck_kernels[static_cast<std::size_t>(l)][j] += gb.kernel_grad[j];
            accumulate(grads.agg.bottleneck_biases[static_cast<std::size_t>(l)], gb.bias_grad, 1.0);
        }
    }
    auto dlogits = softmax_backward(std::span<const double>(agg_cache.weights),
                                    std::span<const double>(dweights));
    std::copy(dlogits.begin(), dlogits.end(), grads.agg.mixing_logits.values().begin());
    return grads;
}

std::pair<AggregatorParams, DecoderParams> init_params(const std::vector<Sample>& dataset,
                                                       const TrainConfig& config) {
    if (dataset.empty()) raise_input("training dataset is empty");
    const ActivationSet& acts = dataset[0].first;
    const HeatmapStack& label = dataset[0].second;
    const int levels = acts.level_count();
    const int s = acts.timestep_count();
    if (levels == 0 || s == 0) raise_input("empty activation set in dataset");
    const int cg = config.descriptor_channels;
    if (cg < 1) raise_input("descriptor_channels must be >= 1");

    Rng rng(hash_tag(config.seed, "init"));
    AggregatorParams agg;
    for (int l = 0; l < levels; ++l) {
        const int cl = acts.levels[0][static_cast<std::size_t>(l)].dim(0);
        agg.bottleneck_kernels.push_back(rand_kernel(rng, {cg, cl, 1, 1}));
        agg.bottleneck_biases.push_back(rand_bias(rng, cg, cl));
    }
    agg.mixing_logits = DTensor({levels, s});

    const int base[3] = {256, 128, 64};
    int widths[3];
    for (int i = 0; i < 3; ++i)
        widths[i] = std::max(1, static_cast<int>(std::lround(base[i] * config.width_factor)));

    DecoderParams dec;
    dec.out_height = label.height();
    dec.out_width = label.width();
    for (int i = 0; i < 3; ++i) {
        const std::size_t ii = static_cast<std::size_t>(i);
        const int c_r = widths[i];
        const int c_prev = i == 0 ? widths[0] : widths[i - 1];
        dec.lateral_kernels[ii] = rand_kernel(rng, {c_r, cg, 1, 1});
        dec.lateral_biases[ii] = rand_bias(rng, c_r, cg);
        dec.adapter_kernels[ii] = rand_kernel(rng, {c_r, c_prev, 1, 1});
        dec.adapter_biases[ii] = rand_bias(rng, c_r, c_prev);
        dec.smooth_kernels[ii] = rand_kernel(rng, {c_r, c_r, 3, 3});
        dec.smooth_biases[ii] = rand_bias(rng, c_r, c_r * 9);
    }
    dec.head_kernel = rand_kernel(rng, {label.fingers(), widths[2], 3, 3});
    dec.head_bias = rand_bias(rng, label.fingers(), widths[2] * 9);
    return {std::move(agg), std::move(dec)};
}

TrainResult train_decoder(const std::vector<Sample>& dataset, const TrainConfig& config) {
    if (dataset.empty()) raise_input("training dataset is empty");
    for (const auto& [acts, label] : dataset) {
        if (acts.level_count() != dataset[0].first.level_count() ||
            acts.timestep_count() != dataset[0].first.timestep_count())
            raise_input("inconsistent activation shapes across dataset");
        if (!label.channels.same_dims(dataset[0].second.channels))
            raise_input("inconsistent label shapes across dataset");
    }

    auto [agg, dec] = init_params(dataset, config);
    TrainResult result;

    // Adam state sized over the flattened parameter list.
    std::size_t n_params = 0;
    for_each_param(agg, dec, [&](auto& v) { n_params += v.size(); });
    std::vector<double> m(n_params, 0.0), v(n_params, 0.0);
    constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

    Rng order_rng(hash_tag(config.seed, "batch"));
    std::vector<std::size_t> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t cursor = order.size();  // trigger shuffle on first use

    const int batch = std::max(1, config.batch);
    for (int step = 0; step < config.steps; ++step) {
        NetGrads total = zero_grads(agg, dec);
        double loss_sum = 0.0;
        for (int b = 0; b < batch; ++b) {
            if (cursor >= order.size()) {
                for (std::size_t i = order.size(); i > 1; --i)
                    std::swap(order[i - 1], order[order_rng.index(i)]);
                cursor = 0;
            }
            const auto& [acts, label] = dataset[order[cursor++]];
            double loss = 0.0;
            NetGrads g = compute_grads(acts, label, agg, dec, &loss);
            loss_sum += loss;
            const double inv_b = 1.0 / batch;
            std::vector<std::vector<double>*> dst, src;
            for_each_param(total.agg, total.dec, [&](std::vector<double>& x) { dst.push_back(&x); });
            for_each_param(g.agg, g.dec, [&](std::vector<double>& x) { src.push_back(&x); });
            for (std::size_t i = 0; i < dst.size(); ++i) accumulate(*dst[i], *src[i], inv_b);
        }
        const double loss = loss_sum / batch;
        if (!std::isfinite(loss))
            raise(ErrorCode::internal,
                  "training diverged: non-finite loss at step " + std::to_string(step));

        const double progress = config.steps > 1 ? static_cast<double>(step) / (config.steps - 1) : 1.0;
        const double lr = config.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
        result.history.push_back({step, loss, lr});

        const double bc1 = 1.0 - std::pow(beta1, step + 1);
        const double bc2 = 1.0 - std::pow(beta2, step + 1);
        std::size_t off = 0;
        std::vector<std::vector<double>*> params, gradv;
        for_each_param(agg, dec, [&](std::vector<double>& x) { params.push_back(&x); });
        for_each_param(total.agg, total.dec, [&](std::vector<double>& x) { gradv.push_back(&x); });
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& p = *params[i];
            const auto& g = *gradv[i];
            for (std::size_t j = 0; j < p.size(); ++j) {
                m[off] = beta1 * m[off] + (1.0 - beta1) * g[j];
                v[off] = beta2 * v[off] + (1.0 - beta2) * g[j] * g[j];
                p[j] -= lr * (m[off] / bc1) / (std::sqrt(v[off] / bc2) + adam_eps);
                ++off;
            }
        }
    }

    result.aggregator = std::move(agg);
    result.decoder = std::move(dec);
    return result;
}

// ---------------------------------------------------------------------------
// Peak extraction
// ---------------------------------------------------------------------------

std::vector<Peak> extract_peaks(const HeatmapStack& stack, double threshold) {
    std::vector<Peak> peaks;
    const int k = stack.fingers(), h = stack.height(), w = stack.width();
    for (int f = 0; f < k; ++f) {
        float best = -std::numeric_limits<float>::infinity();
        int br = 0, bc = 0;
        for (int r = 0; r < h; ++r) {
            const float* row = &stack.channels.at(f, r, 0);
            for (int c = 0; c < w; ++c) {
                if (row[c] > best) {
                    best = row[c];
                    br = r;
                    bc = c;
                }
            }
        }
        if (!(best >= threshold)) continue;
        double wsum = 0.0, rsum = 0.0, csum = 0.0;
        for (int r = std::max(0, br - 1); r <= std::min(h - 1, br + 1); ++r) {
            for (int c = std::max(0, bc - 1); c <= std::min(w - 1, bc + 1); ++c) {
                const double val = std::max(0.0f, stack.channels.at(f, r, c));
                wsum += val;
                rsum += val * r;
                csum += val * c;
            }
        }
        Peak p;
        p.finger_id = f;
        p.score = best;
        if (wsum > 0.0) {
            p.row = rsum / wsum;
            p.col = csum / wsum;
        } else {
            p.row = br;
            p.col = bc;
        }
        peaks.push_back(p);
    }
    return peaks;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

std::vector<FingerAnnotation> annotations_from_json(const nlohmann::json& j, int* h, int* w) {
    const auto& fingers = io::require_field(j, "fingers", "");
    if (!fingers.is_array()) raise_input("expected array at /fingers");
    std::vector<FingerAnnotation> out;
    for (std::size_t i = 0; i < fingers.size(); ++i) {
        const auto& f = fingers[i];
        const std::string where = "/fingers/" + std::to_string(i);
        FingerAnnotation a;
        a.finger_id = io::require_int(f, "id", where);
        a.row = io::require_number(f, "row", where);
        a.col = io::require_number(f, "col", where);
        out.push_back(a);
    }
    if (h) *h = io::require_int(j, "h", "");
    if (w) *w = io::require_int(j, "w", "");
    return out;
}

nlohmann::json annotations_to_json(const std::vector<FingerAnnotation>& annotations, int h, int w) {
    nlohmann::json fingers = nlohmann::json::array();
    for (const auto& a : annotations)
        fingers.push_back({{"id", a.finger_id}, {"row", a.row}, {"col", a.col}});
    return {{"fingers", fingers}, {"h", h}, {"w", w}};
}

namespace {

namespace fs = std::filesystem;

void save_named(const fs::path& dir, const std::string& name, const DTensor& t) {
    io::write_tensor(dir / (name + ".tns"), t.cast<float>());
}

void save_named(const fs::path& dir, const std::string& name, const std::vector<double>& v) {
    Tensor t({static_cast<int>(v.size())});
    for (std::size_t i = 0; i < v.size(); ++i) t[i] = static_cast<float>(v[i]);
    io::write_tensor(dir / (name + ".tns"), t);
}

DTensor load_tensor_d(const fs::path& dir, const std::string& name) {
    return io::read_tensor(dir / (name + ".tns")).cast<double>();
}

std::vector<double> load_vector_d(const fs::path& dir, const std::string& name) {
    Tensor t = io::read_tensor(dir / (name + ".tns"));
    if (t.rank() != 1) raise_input("expected rank-1 tensor in " + name + ".tns");
    std::vector<double> v(t.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = t[i];
    return v;
}

}  // namespace

void save_params(const fs::path& dir, const AggregatorParams& agg, const DecoderParams& dec) {
    fs::create_directories(dir);
    nlohmann::json meta;
    meta["levels"] = agg.bottleneck_kernels.size();
    meta["out_height"] = dec.out_height;
    meta["out_width"] = dec.out_width;
    io::write_json(dir / "params.json", meta);
    for (std::size_t l = 0; l < agg.bottleneck_kernels.size(); ++l) {
        save_named(dir, "bottleneck_kernel_" + std::to_string(l), agg.bottleneck_kernels[l]);
        save_named(dir, "bottleneck_bias_" + std::to_string(l), agg.bottleneck_biases[l]);
    }
    save_named(dir, "mixing_logits", agg.mixing_logits);
    for (int i = 0; i < 3; ++i) {
        const std::string suffix = std::to_string(3 - i);
        const std::size_t ii = static_cast<std::size_t>(i);
        save_named(dir, "lateral_kernel_" + suffix, dec.lateral_kernels[ii]);
        save_named(dir, "lateral_bias_" + suffix, dec.lateral_biases[ii]);
        save_named(dir, "adapter_kernel_" + suffix, dec.adapter_kernels[ii]);
        save_named(dir, "adapter_bias_" + suffix, dec.adapter_biases[ii]);
        save_named(dir, "smooth_kernel_" + suffix, dec.smooth_kernels[ii]);
        save_named(dir, "smooth_bias_" + suffix, dec.smooth_biases[ii]);
    }
    save_named(dir, "head_kernel", dec.head_kernel);
    save_named(dir, "head_bias", dec.head_bias);
}

std::pair<AggregatorParams, DecoderParams> load_params(const fs::path& dir) {
    nlohmann::json meta = io::read_json(dir / "params.json");
    const int levels = io::require_int(meta, "levels", "/params");
    AggregatorParams agg;
    for (int l = 0; l < levels; ++l) {
        agg.bottleneck_kernels.push_back(load_tensor_d(dir, "bottleneck_kernel_" + std::to_string(l)));
        agg.bottleneck_biases.push_back(load_vector_d(dir, "bottleneck_bias_" + std::to_string(l)));
    }
    agg.mixing_logits = load_tensor_d(dir, "mixing_logits");
    DecoderParams dec;
    dec.out_height = io::require_int(meta, "out_height", "/params");
    dec.out_width = io::require_int(meta, "out_width", "/params");
    for (int i = 0; i < 3; ++i) {
        const std::string suffix = std::to_string(3 - i);
        const std::size_t ii = static_cast<std::size_t>(i);
        dec.lateral_kernels[ii] = load_tensor_d(dir, "lateral_kernel_" + suffix);
        dec.lateral_biases[ii] = load_vector_d(dir, "lateral_bias_" + suffix);
        dec.adapter_kernels[ii] = load_tensor_d(dir, "adapter_kernel_" + suffix);
        dec.adapter_biases[ii] = load_vector_d(dir, "adapter_bias_" + suffix);
        dec.smooth_kernels[ii] = load_tensor_d(dir, "smooth_kernel_" + suffix);
        dec.smooth_biases[ii] = load_vector_d(dir, "smooth_bias_" + suffix);
    }
    dec.head_kernel = load_tensor_d(dir, "head_kernel");
    dec.head_bias = load_vector_d(dir, "head_bias");
    return {std::move(agg), std::move(dec)};
}

void save_activations(const fs::path& dir, const ActivationSet& acts) {
    fs::create_directories(dir);
    nlohmann::json meta;
    meta["timesteps"] = acts.timesteps;
    meta["levels"] = acts.level_count();
    meta["conditioning"] = acts.conditioning;
    io::write_json(dir / "activations.json", meta);
    for (std::size_t ti = 0; ti < acts.levels.size(); ++ti)
        for (std::size_t l = 0; l < acts.levels[ti].size(); ++l)
            io::write_tensor(dir / ("act_t" + std::to_string(acts.timesteps[ti]) + "_l" +
                                    std::to_string(l) + ".tns"),
                             acts.levels[ti][l]);
}

ActivationSet load_activations(const fs::path& dir) {
    nlohmann::json meta = io::read_json(dir / "activations.json");
    ActivationSet acts;
    const auto& ts = io::require_field(meta, "timesteps", "/activations");
    for (const auto& t : ts) acts.timesteps.push_back(t.get<int>());
    const int levels = io::require_int(meta, "levels", "/activations");
    const auto& cond = io::require_field(meta, "conditioning", "/activations");
    for (const auto& c : cond) acts.conditioning.push_back(c.get<float>());
    for (int t : acts.timesteps) {
        std::vector<Tensor> row;
        for (int l = 0; l < levels; ++l)
            row.push_back(io::read_tensor(dir / ("act_t" + std::to_string(t) + "_l" +
                                                 std::to_string(l) + ".tns")));
        acts.levels.push_back(std::move(row));
    }
    return acts;
}

}  // namespace fsag::affordance
