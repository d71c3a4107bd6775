#include "fsag/render.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fsag/error.hpp"
#include "fsag/io.hpp"

namespace fsag::render {

namespace {

// Thumb..little.
constexpr unsigned char kFingerColors[5][3] = {
    {230, 25, 75}, {60, 180, 75}, {255, 225, 25}, {0, 130, 200}, {245, 130, 48}};

}  // namespace

void write_overlay_ppm(const std::filesystem::path& path, const Tensor& depth,
                       const affordance::HeatmapStack& stack) {
    if (depth.rank() != 2) raise_input("overlay: depth must be rank-2");
    const int h = depth.dim(0), w = depth.dim(1);
    if (stack.fingers() > 5) raise_input("overlay: at most five channels supported");

    // Depth normalized over valid (nonzero) pixels.
    float lo = std::numeric_limits<float>::max(), hi = 0.0f;
    for (std::size_t i = 0; i < depth.size(); ++i) {
        if (depth[i] <= 0.0f) continue;
        lo = std::min(lo, depth[i]);
        hi = std::max(hi, depth[i]);
    }
    const float range = hi > lo ? hi - lo : 1.0f;

    // Heatmaps may live on a different lattice; resample to the image.
    Tensor heat = stack.channels;
    if (stack.height() != h || stack.width() != w)
        heat = tensorkit::resize_bilinear(stack.channels, h, w);

    std::string bytes;
    bytes.reserve(static_cast<std::size_t>(h) * w * 3);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const float d = depth.at(r, c);
            const float gray = d > 0.0f ? 220.0f - 170.0f * (d - lo) / range : 30.0f;
            double rgb[3] = {gray, gray, gray};
            for (int f = 0; f < stack.fingers(); ++f) {
                const double a = std::clamp(static_cast<double>(heat.at(f, r, c)), 0.0, 1.0);
                if (a <= 0.0) continue;
                for (int ch = 0; ch < 3; ++ch)
                    rgb[ch] = (1.0 - a) * rgb[ch] + a * kFingerColors[f][ch];
            }
            for (int ch = 0; ch < 3; ++ch)
                bytes.push_back(static_cast<char>(
                    static_cast<unsigned char>(std::clamp(rgb[ch], 0.0, 255.0))));
        }
    }
    std::ostringstream out;
    out << "P6\n" << w << ' ' << h << "\n255\n" << bytes;
    io::write_text_atomic(path, out.str());
}

namespace {

std::string polyline(const std::vector<double>& xs, const std::vector<double>& ys,
                     const char* color) {
    std::ostringstream out;
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1\" points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i)
        out << io::format_double(xs[i]) << ',' << io::format_double(ys[i]) << ' ';
    out << "\"/>\n";
    return out.str();
}

}  // namespace

void write_trajectory_svg(const std::filesystem::path& path, const tracker::RolloutResult& result) {
    const int width = 720, height = 420, pad = 40;
    const int rows = static_cast<int>(result.trajectory.size());
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    if (rows >= 1) {
        const int n_q = static_cast<int>(result.trajectory.front().q.size());
        double q_lo = 1e300, q_hi = -1e300, r_hi = 0.0;
        for (const auto& step : result.trajectory) {
            for (int i = 0; i < n_q; ++i) {
                q_lo = std::min(q_lo, step.q(i));
                q_hi = std::max(q_hi, step.q(i));
            }
            for (double v : step.residuals) r_hi = std::max(r_hi, v);
        }
        if (q_hi <= q_lo) q_hi = q_lo + 1.0;
        if (r_hi <= 0.0) r_hi = 1.0;

        const double plot_w = (width - 3.0 * pad) / 2.0;
        const double plot_h = height - 2.0 * pad;
        auto x_at = [&](int t, double x0) {
            return x0 + plot_w * (rows > 1 ? static_cast<double>(t) / (rows - 1) : 0.5);
        };

        // Left: joint curves.
        for (int i = 0; i < n_q; ++i) {
            std::vector<double> xs, ys;
            for (int t = 0; t < rows; ++t) {
                xs.push_back(x_at(t, pad));
                ys.push_back(pad + plot_h * (1.0 - (result.trajectory[static_cast<std::size_t>(t)].q(i) - q_lo) /
                                                       (q_hi - q_lo)));
            }
            std::ostringstream color;
            color << "hsl(" << (i * 360 / std::max(1, n_q)) << ",60%,45%)";
            svg << polyline(xs, ys, color.str().c_str());
        }
        svg << "<text x=\"" << pad << "\" y=\"" << pad - 10 << "\" font-size=\"13\">joints q(t)</text>\n";

        // Right: residual curves, one per participating finger.
        const std::size_t fingers = result.trajectory.front().residuals.size();
        const double x0 = 2.0 * pad + plot_w;
        for (std::size_t f = 0; f < fingers; ++f) {
            std::vector<double> xs, ys;
            for (int t = 0; t < rows; ++t) {
                xs.push_back(x_at(t, x0));
                ys.push_back(pad + plot_h * (1.0 - result.trajectory[static_cast<std::size_t>(t)]
                                                           .residuals[f] /
                                                       r_hi));
            }
            std::ostringstream color;
            color << "hsl(" << (f * 72) << ",80%,40%)";
            svg << polyline(xs, ys, color.str().c_str());
        }
        svg << "<text x=\"" << x0 << "\" y=\"" << pad - 10
            << "\" font-size=\"13\">finger residuals (max " << io::format_double(r_hi)
            << " m)</text>\n";
    }
    svg << "</svg>\n";
    io::write_text_atomic(path, svg.str());
}

}  // namespace fsag::render
