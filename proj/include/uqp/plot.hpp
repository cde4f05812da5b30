/*
 * Copyright 2026 The UQP Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "uqp/pls.hpp"

namespace uqp {

enum class PlotFormat { kCsv, kSvg };

PlotFormat ParsePlotFormat(std::string_view s);

// Points are labelled "high" when group_mask is set (correctness above the
// median) and "low" otherwise.
struct PlotData {
  Eigen::MatrixXd scores;  // [M, 2]
  std::vector<double> correctness;
  std::vector<bool> group_mask;
  KdeGrids grids;
};

// csv: "x,y,correctness,group" rows, a blank line, then
//      "group,ix,iy,x,y,density" grid rows.
// svg: scatter plus contours at 25/50/75% of each group's peak density.
// Output bytes depend only on the input values.
std::string RenderPlot(const PlotData& data, PlotFormat format);
void EmitPlot(const PlotData& data, const std::filesystem::path& out, PlotFormat format);

struct Segment {
  double x0, y0, x1, y1;
};

// Marching-squares iso-lines of `grid` (values at cell centers of `bounds`)
// in data coordinates.
std::vector<Segment> ContourSegments(const Eigen::MatrixXd& grid, const GridBounds& bounds,
                                     double level);

}  // namespace uqp
