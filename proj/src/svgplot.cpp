#include "svgplot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "common.hpp"

namespace projpost {

namespace {

constexpr double kWidth = 800.0, kHeight = 500.0, kMargin = 50.0;

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

std::string render_regression_band_svg(const PlotData& data) {
    if (data.grid_x.size() < 2 || data.grid_x.size() != data.mean.size() ||
        data.grid_x.size() != data.sd.size() || data.train_x.size() != data.train_y.size())
        throw ShapeError("svg plot: inconsistent plot data");

    double x_lo = data.grid_x.front(), x_hi = data.grid_x.back();
    double y_lo = data.mean[0], y_hi = data.mean[0];
    for (size_t i = 0; i < data.grid_x.size(); ++i) {
        y_lo = std::min(y_lo, data.mean[i] - 2.0 * data.sd[i]);
        y_hi = std::max(y_hi, data.mean[i] + 2.0 * data.sd[i]);
    }
    for (double y : data.train_y) {
        y_lo = std::min(y_lo, y);
        y_hi = std::max(y_hi, y);
    }
    const double pad = std::max(1e-6, 0.1 * (y_hi - y_lo));
    y_lo -= pad;
    y_hi += pad;

    auto sx = [&](double x) { return kMargin + (x - x_lo) / (x_hi - x_lo) * (kWidth - 2 * kMargin); };
    auto sy = [&](double y) {
        return kHeight - kMargin - (y - y_lo) / (y_hi - y_lo) * (kHeight - 2 * kMargin);
    };

    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << int(kWidth) << "\" height=\""
        << int(kHeight) << "\" viewBox=\"0 0 " << int(kWidth) << " " << int(kHeight) << "\">\n";
    svg << "<rect x=\"0\" y=\"0\" width=\"" << int(kWidth) << "\" height=\"" << int(kHeight)
        << "\" fill=\"white\"/>\n";

    svg << "<path id=\"band\" fill=\"#9ecae1\" fill-opacity=\"0.6\" stroke=\"none\" d=\"";
    for (size_t i = 0; i < data.grid_x.size(); ++i)
        svg << (i == 0 ? "M" : "L") << fmt(sx(data.grid_x[i])) << " "
            << fmt(sy(data.mean[i] + 2.0 * data.sd[i]));
    for (size_t i = data.grid_x.size(); i-- > 0;)
        svg << "L" << fmt(sx(data.grid_x[i])) << " " << fmt(sy(data.mean[i] - 2.0 * data.sd[i]));
    svg << "Z\"/>\n";

    svg << "<path id=\"mean\" fill=\"none\" stroke=\"#08519c\" stroke-width=\"2\" d=\"";
    for (size_t i = 0; i < data.grid_x.size(); ++i)
        svg << (i == 0 ? "M" : "L") << fmt(sx(data.grid_x[i])) << " " << fmt(sy(data.mean[i]));
    svg << "\"/>\n";

    for (size_t i = 0; i < data.train_x.size(); ++i)
        svg << "<circle cx=\"" << fmt(sx(data.train_x[i])) << "\" cy=\"" << fmt(sy(data.train_y[i]))
            << "\" r=\"3\" fill=\"#d62728\"/>\n";

    svg << "<line x1=\"" << fmt(kMargin) << "\" y1=\"" << fmt(kHeight - kMargin) << "\" x2=\""
        << fmt(kWidth - kMargin) << "\" y2=\"" << fmt(kHeight - kMargin)
        << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << fmt(kMargin) << "\" y1=\"" << fmt(kMargin) << "\" x2=\"" << fmt(kMargin)
        << "\" y2=\"" << fmt(kHeight - kMargin) << "\" stroke=\"black\"/>\n";
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace projpost
