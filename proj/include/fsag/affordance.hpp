#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fsag/tensor.hpp"

namespace fsag::affordance {

inline constexpr int kFingers = 5;

// Per-finger likelihood maps over an image lattice, channel k = finger k
// (thumb..little).
struct HeatmapStack {
    Tensor channels;  // [K,h,w]

    HeatmapStack() = default;
    explicit HeatmapStack(Tensor t);

    int fingers() const { return channels.dim(0); }
    int height() const { return channels.dim(1); }
    int width() const { return channels.dim(2); }
};

struct FingerAnnotation {
    int finger_id = 0;  // 0=thumb .. 4=little
    double row = 0.0;
    double col = 0.0;
};

// Gaussian label synthesis: H_k(u) = exp(-|u-mu_k|^2 / (2 sigma^2)) with
// sigma = min(h,w)/64. Channels without an annotation stay zero.
HeatmapStack synthesize_labels(const std::vector<FingerAnnotation>& annotations, int h, int w);
double label_sigma(int h, int w);

// Forward noising schedule: beta linear in [1e-4, 0.02] over T steps,
// alpha_bar_t = prod(1 - beta_tau).
struct NoiseSchedule {
    std::vector<double> betas;       // [T]
    std::vector<double> alpha_bars;  // [T]
    int steps() const { return static_cast<int>(betas.size()); }
    double alpha_bar(int t) const;  // t is 1-based
};

NoiseSchedule make_linear_schedule(int steps = 1000, double beta_start = 1e-4,
                                   double beta_end = 0.02);

// z_t = sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) eps.
Tensor forward_noise(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& schedule);

// Synthetic stand-in for the frozen denoising backbone: per (timestep, level)
// a fixed seeded linear embedding of the area-downsampled target plus seeded
// noise, attenuated along the schedule.
struct ActivationLevelSpec {
    int channels = 0;
    int height = 0;
    int width = 0;
};

struct ActivationShapeSpec {
    std::vector<ActivationLevelSpec> levels;
    std::vector<int> timesteps;  // 1-based indices into the schedule
    double noise_amp = 0.1;
};

struct ActivationSet {
    std::vector<int> timesteps;
    std::vector<std::vector<Tensor>> levels;  // [S][L], each [C_l,H_l,W_l]
    std::vector<float> conditioning;

    int timestep_count() const { return static_cast<int>(timesteps.size()); }
    int level_count() const { return levels.empty() ? 0 : static_cast<int>(levels[0].size()); }
};

ActivationSet generate_synthetic_activations(const HeatmapStack& target, std::uint64_t seed,
                                             const ActivationShapeSpec& spec,
                                             const NoiseSchedule& schedule = make_linear_schedule());

// Hyperfeature aggregation: A_g = sum_{t,l} softmax(logits)_{l,t} *
// bottleneck_l(A^(t)_l), all resampled onto the coarsest level grid.
struct AggregatorParams {
    std::vector<DTensor> bottleneck_kernels;            // per level [C_g,C_l,1,1]
    std::vector<std::vector<double>> bottleneck_biases;  // per level [C_g]
    DTensor mixing_logits;                               // [L,S]
};

struct AggregateResult {
    DTensor map;                 // [C_g,h,w] at the coarsest level grid
    std::vector<double> pooled;  // global-average summary descriptor
};

AggregateResult aggregate(const ActivationSet& acts, const AggregatorParams& params);

// FPN-style decoder: three lateral 1x1 projections, top-down adapters and
// 3x3 smoothing convs with ReLU, final 3x3 head to K channels.
struct DecoderParams {
    std::array<DTensor, 3> lateral_kernels;   // index i -> level r=3-i
    std::array<std::vector<double>, 3> lateral_biases;
    std::array<DTensor, 3> adapter_kernels;
    std::array<std::vector<double>, 3> adapter_biases;
    std::array<DTensor, 3> smooth_kernels;
    std::array<std::vector<double>, 3> smooth_biases;
    DTensor head_kernel;  // [K,c1,3,3]
    std::vector<double> head_bias;
    int out_height = 0;
    int out_width = 0;

    int channels(int r) const { return lateral_kernels[static_cast<std::size_t>(3 - r)].dim(0); }
};

HeatmapStack decode(const DTensor& a_g, const DecoderParams& params);

struct TrainConfig {
    int steps = 1000;
    double lr = 1e-3;
    int batch = 2;
    std::uint64_t seed = 0;
    double width_factor = 0.125;  // scales the {256,128,64} lateral widths
    int descriptor_channels = 16; // C_g
};

struct LossRecord {
    int step;
    double loss;
    double lr;
};

struct TrainResult {
    AggregatorParams aggregator;
    DecoderParams decoder;
    std::vector<LossRecord> history;
};

using Sample = std::pair<ActivationSet, HeatmapStack>;

TrainResult train_decoder(const std::vector<Sample>& dataset, const TrainConfig& config);

// Deterministic parameter init for the given dataset geometry (also the
// state train_decoder starts from).
std::pair<AggregatorParams, DecoderParams> init_params(const std::vector<Sample>& dataset,
                                                       const TrainConfig& config);

// Mean Eq.-style MSE over the batch; pure, used by training and by the
// finite-difference suite.
double forward_loss(const ActivationSet& acts, const HeatmapStack& target,
                    const AggregatorParams& agg, const DecoderParams& dec);

struct NetGrads {
    AggregatorParams agg;  // same shapes as params, holding gradients
    DecoderParams dec;
};

NetGrads compute_grads(const ActivationSet& acts, const HeatmapStack& target,
                       const AggregatorParams& agg, const DecoderParams& dec,
                       double* loss_out = nullptr);

struct Peak {
    int finger_id;
    double row;
    double col;
    float score;
};

// Per-channel argmax refined by a 3x3 intensity-weighted centroid; channels
// whose max falls below the threshold are omitted. Ties: first in row-major
// order.
std::vector<Peak> extract_peaks(const HeatmapStack& stack, double threshold = 0.1);

// JSON (de)serialization for annotations and parameter bundles.
std::vector<FingerAnnotation> annotations_from_json(const nlohmann::json& j, int* h = nullptr,
                                                    int* w = nullptr);
nlohmann::json annotations_to_json(const std::vector<FingerAnnotation>& annotations, int h, int w);

void save_params(const std::filesystem::path& dir, const AggregatorParams& agg,
                 const DecoderParams& dec);
std::pair<AggregatorParams, DecoderParams> load_params(const std::filesystem::path& dir);

void save_activations(const std::filesystem::path& dir, const ActivationSet& acts);
ActivationSet load_activations(const std::filesystem::path& dir);

}  // namespace fsag::affordance
