#pragma once

#include <string>
#include <vector>

namespace projpost {

struct PlotData {
    std::vector<double> grid_x;
    std::vector<double> mean;
    std::vector<double> sd;
    std::vector<double> train_x;
    std::vector<double> train_y;
};

// 1-D regression plot: training points, mean curve, mean +/- 2 sd band.
// Output bytes are a pure function of the input (fixed-precision number
// formatting, no timestamps), so repeated runs are byte-identical.
std::string render_regression_band_svg(const PlotData& data);

}  // namespace projpost
