#include "fsag/grounding_eval.hpp"

#include <algorithm>
#include <cmath>

#include "fsag/error.hpp"
#include "fsag/parallel.hpp"

namespace fsag::grounding {

using affordance::HeatmapStack;

namespace {

void check_normalized(const Channel& c, const char* what) {
    double sum = 0.0;
    for (double v : c.values) sum += v;
    if (std::abs(sum - 1.0) > 1e-3)
        raise_input(std::string(what) + ": channel not normalized (sum deviates from 1)");
}

void check_same_shape(const Channel& a, const Channel& b) {
    if (a.height != b.height || a.width != b.width)
        raise_input("metric inputs must share the lattice");
}

}  // namespace

NormalizedStack normalize_for_eval(const HeatmapStack& stack) {
    // Negative values carry no likelihood mass; clamp before renormalizing.
    Tensor clamped = stack.channels;
    for (auto& v : clamped.values()) v = std::max(v, 0.0f);
    Tensor resized = tensorkit::resize_bilinear(clamped, kEvalSize, kEvalSize);

    NormalizedStack out;
    out.channels.resize(static_cast<std::size_t>(stack.fingers()));
    out.has_mass.resize(static_cast<std::size_t>(stack.fingers()));
    for (int f = 0; f < stack.fingers(); ++f) {
        Channel& ch = out.channels[static_cast<std::size_t>(f)];
        ch.height = kEvalSize;
        ch.width = kEvalSize;
        ch.values.resize(static_cast<std::size_t>(kEvalSize) * kEvalSize);
        double sum = 0.0;
        const float* plane = &resized.at(f, 0, 0);
        for (std::size_t i = 0; i < ch.values.size(); ++i) sum += plane[i];
        if (sum <= 0.0) {
            out.has_mass[static_cast<std::size_t>(f)] = false;
            continue;
        }
        out.has_mass[static_cast<std::size_t>(f)] = true;
        const double inv = 1.0 / sum;
        for (std::size_t i = 0; i < ch.values.size(); ++i) ch.values[i] = plane[i] * inv;
    }
    return out;
}

double kld(const Channel& pred, const Channel& gt) {
    check_same_shape(pred, gt);
    check_normalized(pred, "kld pred");
    check_normalized(gt, "kld gt");
    double acc = 0.0;
    for (std::size_t i = 0; i < gt.values.size(); ++i) {
        const double g = gt.values[i];
        if (g <= 0.0) continue;
        acc += g * std::log(kEvalEps + g / (kEvalEps + pred.values[i]));
    }
    return acc;
}

double sim(const Channel& pred, const Channel& gt) {
    check_same_shape(pred, gt);
    check_normalized(pred, "sim pred");
    check_normalized(gt, "sim gt");
    double acc = 0.0;
    for (std::size_t i = 0; i < gt.values.size(); ++i)
        acc += std::min(pred.values[i], gt.values[i]);
    return acc;
}

double nss(const Channel& pred, double fixation_row, double fixation_col) {
    if (fixation_row < 0.0 || fixation_row > pred.height - 1.0 || fixation_col < 0.0 ||
        fixation_col > pred.width - 1.0)
        raise_input("nss fixation out of bounds");
    const std::size_t n = pred.values.size();
    double mean = 0.0;
    for (double v : pred.values) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : pred.values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double stddev = std::sqrt(var);
    if (stddev == 0.0) return 0.0;

    const int r0 = static_cast<int>(fixation_row);
    const int c0 = static_cast<int>(fixation_col);
    const int r1 = std::min(r0 + 1, pred.height - 1);
    const int c1 = std::min(c0 + 1, pred.width - 1);
    const double tr = fixation_row - r0, tc = fixation_col - c0;
    auto at = [&](int r, int c) {
        return pred.values[static_cast<std::size_t>(r) * pred.width + c];
    };
    const double value = (1 - tr) * ((1 - tc) * at(r0, c0) + tc * at(r0, c1)) +
                         tr * ((1 - tc) * at(r1, c0) + tc * at(r1, c1));
    return (value - mean) / stddev;
}

namespace {

EvalRecord evaluate_one(const EvalSample& sample);

}  // namespace

EvalReport evaluate_set(const std::vector<EvalSample>& samples) {
    if (samples.empty()) raise_input("evaluate_set: empty sample set");
    EvalReport report;
    report.per_sample.resize(samples.size());
    std::vector<std::exception_ptr> errors(samples.size());
    parallel_for(samples.size(), [&](std::size_t i) {
        try {
            report.per_sample[i] = evaluate_one(samples[i]);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    });
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    double sum_kld = 0.0, sum_sim = 0.0, sum_nss = 0.0;
    for (const auto& rec : report.per_sample) {
        sum_kld += rec.mean_kld;
        sum_sim += rec.mean_sim;
        sum_nss += rec.mean_nss;
    }
    const double n = static_cast<double>(report.per_sample.size());
    report.mean_kld = sum_kld / n;
    report.mean_sim = sum_sim / n;
    report.mean_nss = sum_nss / n;
    return report;
}

namespace {

EvalRecord evaluate_one(const EvalSample& sample) {
    {
        if (!sample.pred.channels.same_dims(sample.gt.channels))
            raise_input("evaluate_set: pred/gt shape mismatch for sample " + sample.id);
        NormalizedStack pred = normalize_for_eval(sample.pred);
        NormalizedStack gt = normalize_for_eval(sample.gt);

        EvalRecord rec;
        rec.sample_id = sample.id;
        const double row_scale = static_cast<double>(kEvalSize) / sample.gt.height();
        const double col_scale = static_cast<double>(kEvalSize) / sample.gt.width();
        for (int f = 0; f < sample.gt.fingers(); ++f) {
            const std::size_t fi = static_cast<std::size_t>(f);
            if (!gt.has_mass[fi]) continue;  // no ground truth for this finger
            Channel uniform;
            if (!pred.has_mass[fi]) {
                // Zero-mass prediction scores against the uniform distribution.
                uniform.height = kEvalSize;
                uniform.width = kEvalSize;
                uniform.values.assign(static_cast<std::size_t>(kEvalSize) * kEvalSize,
                                      1.0 / (static_cast<double>(kEvalSize) * kEvalSize));
            }
            const Channel& use = pred.has_mass[fi] ? pred.channels[fi] : uniform;
            rec.fingers.push_back(f);
            rec.finger_kld.push_back(kld(use, gt.channels[fi]));
            rec.finger_sim.push_back(sim(use, gt.channels[fi]));

            // Fixation: annotated keypoint mapped onto the eval lattice
            // (align-corners-false convention).
            double fr = -1.0, fc = -1.0;
            for (const auto& a : sample.annotations) {
                if (a.finger_id == f) {
                    fr = std::clamp((a.row + 0.5) * row_scale - 0.5, 0.0, kEvalSize - 1.0);
                    fc = std::clamp((a.col + 0.5) * col_scale - 0.5, 0.0, kEvalSize - 1.0);
                    break;
                }
            }
            if (fr >= 0.0) rec.finger_nss.push_back(nss(use, fr, fc));
        }
        if (rec.fingers.empty())
            raise_input("evaluate_set: sample " + sample.id + " has no scorable fingers");

        auto mean = [](const std::vector<double>& v) {
            double s = 0.0;
            for (double x : v) s += x;
            return v.empty() ? 0.0 : s / static_cast<double>(v.size());
        };
        rec.mean_kld = mean(rec.finger_kld);
        rec.mean_sim = mean(rec.finger_sim);
        rec.mean_nss = mean(rec.finger_nss);
        return rec;
    }
}

}  // namespace

nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json per_sample = nlohmann::json::array();
    for (const auto& rec : report.per_sample)
        per_sample.push_back({{"id", rec.sample_id},
                              {"kld", rec.mean_kld},
                              {"sim", rec.mean_sim},
                              {"nss", rec.mean_nss}});
    return {{"metadata",
             {{"eval_size", kEvalSize},
              {"epsilon", kEvalEps},
              {"averaging", "finger_then_sample"}}},
            {"per_sample", per_sample},
            {"mean",
             {{"kld", report.mean_kld}, {"sim", report.mean_sim}, {"nss", report.mean_nss}}}};
}

std::vector<std::vector<double>> report_to_csv_rows(const EvalReport& report) {
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < report.per_sample.size(); ++i) {
        const auto& rec = report.per_sample[i];
        rows.push_back({static_cast<double>(i), rec.mean_kld, rec.mean_sim, rec.mean_nss});
    }
    return rows;
}

}  // namespace fsag::grounding
