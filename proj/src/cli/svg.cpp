#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "mhf/cli.hpp"

namespace mhf::cli {

namespace {

constexpr double panel_w = 640.0;
constexpr double panel_h = 220.0;
constexpr double margin_l = 60.0;
constexpr double margin_r = 20.0;
constexpr double margin_t = 20.0;
constexpr double margin_b = 30.0;

const char* palette[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e",
                         "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f"};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

}  // namespace

std::string forecast_svg(const Matrix& context, const ForecastSet& forecast) {
    const std::size_t L = context.rows(), D = context.cols();
    const std::size_t H = forecast.hypotheses.empty() ? 0 : forecast.hypotheses.front().rows();
    const std::size_t steps = L + H;
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << panel_w << "\" height=\"" << panel_h * D
        << "\" font-family=\"sans-serif\" font-size=\"11\">\n";

    for (std::size_t d = 0; d < D; ++d) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (std::size_t t = 0; t < L; ++t) {
            lo = std::min(lo, context(t, d));
            hi = std::max(hi, context(t, d));
        }
        for (const Matrix& h : forecast.hypotheses)
            for (std::size_t t = 0; t < H; ++t) {
                lo = std::min(lo, h(t, d));
                hi = std::max(hi, h(t, d));
            }
        if (!(hi > lo)) {
            lo -= 1.0;
            hi += 1.0;
        }
        const double top = panel_h * d + margin_t;
        const double plot_w = panel_w - margin_l - margin_r, plot_h = panel_h - margin_t - margin_b;
        auto px = [&](double t) { return margin_l + plot_w * t / static_cast<double>(std::max<std::size_t>(1, steps - 1)); };
        auto py = [&](double v) { return top + plot_h * (hi - v) / (hi - lo); };

        svg << "<g>\n<rect x=\"" << margin_l << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\"" << plot_h
            << "\" fill=\"none\" stroke=\"#999\"/>\n";
        for (int i = 0; i <= 4; ++i) {
            const double v = lo + (hi - lo) * i / 4.0;
            svg << "<line x1=\"" << margin_l - 4 << "\" y1=\"" << fmt(py(v)) << "\" x2=\"" << margin_l << "\" y2=\""
                << fmt(py(v)) << "\" stroke=\"#999\"/><text x=\"" << margin_l - 6 << "\" y=\"" << fmt(py(v) + 4)
                << "\" text-anchor=\"end\">" << fmt(v) << "</text>\n";
        }
        const std::size_t tick_step = std::max<std::size_t>(1, steps / 8);
        for (std::size_t t = 0; t < steps; t += tick_step) {
            svg << "<text x=\"" << fmt(px(static_cast<double>(t))) << "\" y=\"" << top + plot_h + 16
                << "\" text-anchor=\"middle\">" << t << "</text>\n";
        }
        svg << "<line x1=\"" << fmt(px(static_cast<double>(L) - 1)) << "\" y1=\"" << top << "\" x2=\""
            << fmt(px(static_cast<double>(L) - 1)) << "\" y2=\"" << top + plot_h
            << "\" stroke=\"#bbb\" stroke-dasharray=\"4 3\"/>\n";
        svg << "<text x=\"" << margin_l + 4 << "\" y=\"" << top + 12 << "\">channel " << d << "</text>\n";

        svg << "<polyline fill=\"none\" stroke=\"#000\" stroke-width=\"1.5\" points=\"";
        for (std::size_t t = 0; t < L; ++t) svg << fmt(px(static_cast<double>(t))) << ',' << fmt(py(context(t, d))) << ' ';
        svg << "\"/>\n";
        for (std::size_t k = 0; k < forecast.hypotheses.size(); ++k) {
            const Matrix& h = forecast.hypotheses[k];
            const double opacity = 0.3 + 0.7 * std::clamp(forecast.confidences[k], 0.0, 1.0);
            svg << "<polyline fill=\"none\" stroke=\"" << palette[k % std::size(palette)] << "\" stroke-opacity=\""
                << fmt(opacity) << "\" points=\"" << fmt(px(static_cast<double>(L) - 1)) << ','
                << fmt(py(context(L - 1, d))) << ' ';
            for (std::size_t t = 0; t < H; ++t) svg << fmt(px(static_cast<double>(L + t))) << ',' << fmt(py(h(t, d))) << ' ';
            svg << "\"/>\n";
        }
        svg << "</g>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace mhf::cli
