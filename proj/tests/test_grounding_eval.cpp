#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fsag/error.hpp"
#include "fsag/grounding_eval.hpp"
#include "fsag/rng.hpp"

using namespace fsag;
using namespace fsag::grounding;
using affordance::HeatmapStack;

namespace {

Channel make_channel(int h, int w, std::vector<double> v) {
    return Channel{h, w, std::move(v)};
}

Channel uniform_channel(int h, int w) {
    const double p = 1.0 / (static_cast<double>(h) * w);
    return Channel{h, w, std::vector<double>(static_cast<std::size_t>(h) * w, p)};
}

}  // namespace

TEST_CASE("kld closed forms") {
    // Two-pixel case: G uniform {0.5,0.5}, P {0.9,0.1}.
    Channel g = make_channel(1, 2, {0.5, 0.5});
    Channel p = make_channel(1, 2, {0.9, 0.1});
    const double expect = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1);
    CHECK(kld(p, g) == doctest::Approx(expect).epsilon(1e-6));
    CHECK(expect == doctest::Approx(0.5108).epsilon(1e-3));

    // Identity.
    CHECK(kld(g, g) <= 1e-9);
    CHECK(kld(g, g) >= -1e-9);

    // One-hot G vs uniform P over n pixels -> ln n.
    for (int n : {4, 100}) {
        Channel onehot = make_channel(1, n, std::vector<double>(static_cast<std::size_t>(n), 0.0));
        onehot.values[2] = 1.0;
        Channel uni = uniform_channel(1, n);
        CHECK(kld(uni, onehot) == doctest::Approx(std::log(static_cast<double>(n))).epsilon(1e-6));
    }

    // Unnormalized inputs are rejected.
    Channel bad = make_channel(1, 2, {0.9, 0.9});
    CHECK_THROWS_AS(kld(bad, g), Error);
}

TEST_CASE("kld nonnegativity on random distributions") {
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 16;
        Channel p = make_channel(4, 4, std::vector<double>(n)), g = p;
        double sp = 0.0, sg = 0.0;
        for (int i = 0; i < n; ++i) {
            p.values[i] = rng.uniform(0.001, 1.0);
            g.values[i] = rng.uniform(0.001, 1.0);
            sp += p.values[i];
            sg += g.values[i];
        }
        for (int i = 0; i < n; ++i) {
            p.values[i] /= sp;
            g.values[i] /= sg;
        }
        CHECK(kld(p, g) >= -1e-9);
    }
}

TEST_CASE("sim closed forms and symmetry") {
    Channel g = make_channel(1, 2, {0.5, 0.5});
    Channel p = make_channel(1, 2, {0.9, 0.1});
    CHECK(sim(p, g) == doctest::Approx(0.6).epsilon(1e-9));
    CHECK(sim(g, p) == doctest::Approx(0.6).epsilon(1e-9));
    CHECK(sim(g, g) == doctest::Approx(1.0).epsilon(1e-9));

    Channel a = make_channel(1, 4, {0.5, 0.5, 0.0, 0.0});
    Channel b = make_channel(1, 4, {0.0, 0.0, 0.25, 0.75});
    CHECK(sim(a, b) == doctest::Approx(0.0));

    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        Channel x = make_channel(2, 3, std::vector<double>(6)), y = x;
        double sx = 0, sy = 0;
        for (int i = 0; i < 6; ++i) {
            x.values[i] = rng.uniform(0.0, 1.0);
            y.values[i] = rng.uniform(0.0, 1.0);
            sx += x.values[i];
            sy += y.values[i];
        }
        for (int i = 0; i < 6; ++i) {
            x.values[i] /= sx;
            y.values[i] /= sy;
        }
        CHECK(sim(x, y) == doctest::Approx(sim(y, x)).epsilon(1e-12));
        CHECK(sim(x, y) >= 0.0);
        CHECK(sim(x, y) <= 1.0 + 1e-12);
    }
}

TEST_CASE("nss closed forms") {
    // Uniform map: zero variance -> 0 by the degenerate rule.
    Channel uni = uniform_channel(4, 4);
    CHECK(nss(uni, 2.0, 2.0) == 0.0);

    // Single hot pixel among n-1 zeros, fixation at the hot pixel -> sqrt(n-1).
    for (int side : {3, 7}) {
        const int n = side * side;
        Channel hot = make_channel(side, side, std::vector<double>(static_cast<std::size_t>(n), 0.0));
        hot.values[static_cast<std::size_t>(side + 1)] = 1.0;  // row 1, col 1
        CHECK(nss(hot, 1.0, 1.0) ==
              doctest::Approx(std::sqrt(static_cast<double>(n - 1))).epsilon(1e-9));
    }

    // Affine invariance: NSS(aP + b) == NSS(P) for a > 0.
    Rng rng(11);
    Channel p = make_channel(5, 5, std::vector<double>(25));
    for (auto& v : p.values) v = rng.uniform(0.0, 1.0);
    const double base = nss(p, 1.7, 3.2);
    Channel q = p;
    for (auto& v : q.values) v = 3.5 * v + 0.77;
    CHECK(nss(q, 1.7, 3.2) == doctest::Approx(base).epsilon(1e-12));

    CHECK_THROWS_AS(nss(p, -1.0, 0.0), Error);
    CHECK_THROWS_AS(nss(p, 0.0, 25.0), Error);
}

TEST_CASE("normalize_for_eval conventions") {
    // Constant channel -> uniform distribution 1/(448*448).
    HeatmapStack stack(Tensor::full({1, 64, 64}, 0.5f));
    NormalizedStack norm = normalize_for_eval(stack);
    REQUIRE(norm.has_mass[0]);
    const double expect = 1.0 / (448.0 * 448.0);
    for (double v : norm.channels[0].values) CHECK(v == doctest::Approx(expect).epsilon(1e-6));

    // Scale invariance: channel scaled by 10 normalizes identically.
    Rng rng(3);
    Tensor t({1, 64, 64});
    for (auto& v : t.values()) v = static_cast<float>(rng.uniform(0.0, 1.0));
    Tensor t10 = t;
    for (auto& v : t10.values()) v *= 10.0f;
    NormalizedStack n1 = normalize_for_eval(HeatmapStack(t));
    NormalizedStack n2 = normalize_for_eval(HeatmapStack(t10));
    for (std::size_t i = 0; i < n1.channels[0].values.size(); ++i)
        CHECK(n1.channels[0].values[i] == doctest::Approx(n2.channels[0].values[i]).epsilon(1e-5));

    // Idempotence: re-normalizing an already-normalized 448x448 channel is
    // the identity within 1e-6.
    Tensor t448({1, 448, 448});
    for (auto& v : t448.values()) v = static_cast<float>(rng.uniform(0.0, 1.0));
    NormalizedStack once = normalize_for_eval(HeatmapStack(t448));
    Tensor t_norm({1, 448, 448});
    for (std::size_t i = 0; i < once.channels[0].values.size(); ++i)
        t_norm[i] = static_cast<float>(once.channels[0].values[i]);
    NormalizedStack twice = normalize_for_eval(HeatmapStack(t_norm));
    double max_dev = 0.0;
    for (std::size_t i = 0; i < once.channels[0].values.size(); ++i)
        max_dev = std::max(max_dev,
                           std::abs(once.channels[0].values[i] - twice.channels[0].values[i]));
    CHECK(max_dev <= 1e-6);

    // Zero-mass channel is flagged.
    HeatmapStack empty(Tensor({2, 64, 64}));
    empty.channels.at(0, 5, 5) = 1.0f;
    NormalizedStack flagged = normalize_for_eval(empty);
    CHECK(flagged.has_mass[0]);
    CHECK_FALSE(flagged.has_mass[1]);
}

TEST_CASE("evaluate_set perfect prediction and contracts") {
    std::vector<affordance::FingerAnnotation> ann = {{0, 40.0, 20.0}, {1, 12.0, 40.0},
                                                     {2, 20.0, 60.0}};
    HeatmapStack gt = affordance::synthesize_labels(ann, 64, 64);

    EvalSample sample;
    sample.id = "s0";
    sample.pred = gt;
    sample.gt = gt;
    sample.annotations = ann;

    EvalReport report = evaluate_set({sample});
    REQUIRE(report.per_sample.size() == 1);
    // Only annotated fingers scored.
    CHECK(report.per_sample[0].fingers == std::vector<int>{0, 1, 2});
    CHECK(report.mean_kld <= 1e-9);
    CHECK(report.mean_sim == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(report.mean_nss > 0.0);

    // Single sample: report means equal the per-sample values.
    CHECK(report.mean_kld == report.per_sample[0].mean_kld);
    CHECK(report.mean_sim == report.per_sample[0].mean_sim);

    // Empty set is an error, not an empty report.
    CHECK_THROWS_AS(evaluate_set({}), Error);

    // Mismatched shapes rejected.
    EvalSample bad = sample;
    bad.pred = HeatmapStack(Tensor({5, 32, 32}));
    CHECK_THROWS_AS(evaluate_set({bad}), Error);

    nlohmann::json j = report_to_json(report);
    CHECK(j["mean"]["sim"].get<double>() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(j["per_sample"].size() == 1);
    CHECK(j["metadata"]["averaging"] == "finger_then_sample");
}
