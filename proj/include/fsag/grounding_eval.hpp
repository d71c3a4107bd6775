#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fsag/affordance.hpp"
#include "fsag/tensor.hpp"

namespace fsag::grounding {

inline constexpr int kEvalSize = 448;
inline constexpr double kEvalEps = 1e-12;

// A heatmap channel as a probability distribution over pixels.
struct Channel {
    int height = 0;
    int width = 0;
    std::vector<double> values;  // row-major, length h*w
};

// Bilinear rescale to 448x448 and renormalize each channel to integrate to 1.
// Channels with no positive mass are flagged (excluded from averages).
struct NormalizedStack {
    std::vector<Channel> channels;     // one per finger
    std::vector<bool> has_mass;        // false -> channel excluded
};

NormalizedStack normalize_for_eval(const affordance::HeatmapStack& stack);

// KLD(P,G) = sum_u G ln(eps + G/(eps + P)); both inputs normalized to sum 1.
double kld(const Channel& pred, const Channel& gt);

// SIM(P,G) = sum_u min(P,G).
double sim(const Channel& pred, const Channel& gt);

// NSS: standardize P over pixels, sample at the fixation (bilinear,
// sub-pixel); zero-variance maps score 0.
double nss(const Channel& pred, double fixation_row, double fixation_col);

struct EvalRecord {
    std::string sample_id;
    std::vector<int> fingers;  // fingers that were scored
    std::vector<double> finger_kld, finger_sim, finger_nss;
    double mean_kld = 0.0, mean_sim = 0.0, mean_nss = 0.0;
};

struct EvalReport {
    std::vector<EvalRecord> per_sample;
    double mean_kld = 0.0, mean_sim = 0.0, mean_nss = 0.0;
};

struct EvalSample {
    std::string id;
    affordance::HeatmapStack pred;
    affordance::HeatmapStack gt;
    std::vector<affordance::FingerAnnotation> annotations;  // fixations, gt lattice coords
};

// Fingers are averaged first, then samples. Fingers without ground-truth
// mass or annotation are skipped, not scored as zero.
EvalReport evaluate_set(const std::vector<EvalSample>& samples);

nlohmann::json report_to_json(const EvalReport& report);
std::vector<std::vector<double>> report_to_csv_rows(const EvalReport& report);

}  // namespace fsag::grounding
