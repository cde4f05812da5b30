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

#include "uqp/plot.hpp"

#include <cstdio>
#include <fstream>

#include "uqp/error.hpp"

namespace uqp {
namespace {

constexpr double kCanvas = 640.0;
constexpr double kMargin = 40.0;
constexpr const char* kHighColor = "#1f77b4";
constexpr const char* kLowColor = "#d62728";
constexpr double kLevels[] = {0.25, 0.5, 0.75};

std::string Fmt(const char* fmt, double a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, a);
  return buf;
}

void CheckLengths(const PlotData& d) {
  const auto m = static_cast<size_t>(d.scores.rows());
  if (d.scores.cols() != 2 || d.correctness.size() != m || d.group_mask.size() != m) {
    throw Error(ErrorCode::kLengthMismatch, "plot inputs have inconsistent lengths");
  }
}

std::string RenderCsv(const PlotData& d) {
  std::string out = "x,y,correctness,group\n";
  char buf[160];
  for (Eigen::Index i = 0; i < d.scores.rows(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g,%s\n", d.scores(i, 0), d.scores(i, 1),
                  d.correctness[static_cast<size_t>(i)], d.group_mask[static_cast<size_t>(i)] ? "high" : "low");
    out += buf;
  }
  out += "\ngroup,ix,iy,x,y,density\n";
  const GridBounds& b = d.grids.bounds;
  for (int g = 0; g < 2; ++g) {
    const Eigen::MatrixXd& grid = g == 0 ? d.grids.in_group : d.grids.out_group;
    for (int j = 0; j < grid.rows(); ++j) {
      for (int i = 0; i < grid.cols(); ++i) {
        std::snprintf(buf, sizeof(buf), "%s,%d,%d,%.9g,%.9g,%.9g\n", g == 0 ? "high" : "low", i, j,
                      b.cx(i), b.cy(j), grid(j, i));
        out += buf;
      }
    }
  }
  return out;
}

std::string RenderSvg(const PlotData& d) {
  const GridBounds& b = d.grids.bounds;
  const double inner = kCanvas - 2.0 * kMargin;
  auto px = [&](double x) { return kMargin + (x - b.x_min) / (b.x_max - b.x_min) * inner; };
  auto py = [&](double y) { return kCanvas - kMargin - (y - b.y_min) / (b.y_max - b.y_min) * inner; };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"640\" viewBox=\"0 0 640 640\">\n";
  out += "<rect x=\"0\" y=\"0\" width=\"640\" height=\"640\" fill=\"white\"/>\n";
  out += "<rect x=\"40\" y=\"40\" width=\"560\" height=\"560\" fill=\"none\" stroke=\"#888888\"/>\n";
  for (Eigen::Index i = 0; i < d.scores.rows(); ++i) {
    const bool high = d.group_mask[static_cast<size_t>(i)];
    out += "<circle cx=\"" + Fmt("%.2f", px(d.scores(i, 0))) + "\" cy=\"" + Fmt("%.2f", py(d.scores(i, 1))) +
           "\" r=\"2\" fill=\"" + (high ? kHighColor : kLowColor) + "\" fill-opacity=\"0.5\"/>\n";
  }
  for (int g = 0; g < 2; ++g) {
    const Eigen::MatrixXd& grid = g == 0 ? d.grids.in_group : d.grids.out_group;
    const double peak = grid.maxCoeff();
    for (double frac : kLevels) {
      const auto segs = ContourSegments(grid, b, frac * peak);
      if (segs.empty()) continue;
      std::string path;
      for (const auto& s : segs) {
        path += "M" + Fmt("%.2f", px(s.x0)) + " " + Fmt("%.2f", py(s.y0)) + "L" + Fmt("%.2f", px(s.x1)) +
                " " + Fmt("%.2f", py(s.y1));
      }
      out += "<path d=\"" + path + "\" fill=\"none\" stroke=\"" + (g == 0 ? kHighColor : kLowColor) +
             "\" stroke-width=\"1\"/>\n";
    }
  }
  out += "<text x=\"40\" y=\"28\" font-family=\"sans-serif\" font-size=\"14\">PLS component 1 vs 2</text>\n";
  out += "</svg>\n";
  return out;
}

}  // namespace

PlotFormat ParsePlotFormat(std::string_view s) {
  if (s == "csv") return PlotFormat::kCsv;
  if (s == "svg") return PlotFormat::kSvg;
  throw Error(ErrorCode::kInvalidArgument, "unknown plot format '" + std::string(s) + "'");
}

std::vector<Segment> ContourSegments(const Eigen::MatrixXd& grid, const GridBounds& b, double level) {
  std::vector<Segment> segs;
  auto lerp = [&](double xa, double ya, double va, double xb, double yb, double vb, double& x, double& y) {
    const double t = (va == vb) ? 0.5 : (level - va) / (vb - va);
    x = xa + t * (xb - xa);
    y = ya + t * (yb - ya);
  };
  for (int j = 0; j + 1 < grid.rows(); ++j) {
    for (int i = 0; i + 1 < grid.cols(); ++i) {
      // Corners counter-clockwise from bottom-left.
      const double xs[4] = {b.cx(i), b.cx(i + 1), b.cx(i + 1), b.cx(i)};
      const double ys[4] = {b.cy(j), b.cy(j), b.cy(j + 1), b.cy(j + 1)};
      const double vs[4] = {grid(j, i), grid(j, i + 1), grid(j + 1, i + 1), grid(j + 1, i)};
      int mask = 0;
      for (int c = 0; c < 4; ++c) mask |= (vs[c] >= level ? 1 : 0) << c;
      if (mask == 0 || mask == 15) continue;
      // Crossing points on edges 0:(0,1) 1:(1,2) 2:(2,3) 3:(3,0).
      double ex[4], ey[4];
      bool crosses[4];
      for (int e = 0; e < 4; ++e) {
        const int a = e, c = (e + 1) % 4;
        crosses[e] = ((mask >> a) & 1) != ((mask >> c) & 1);
        if (crosses[e]) lerp(xs[a], ys[a], vs[a], xs[c], ys[c], vs[c], ex[e], ey[e]);
      }
      std::vector<int> edges;
      for (int e = 0; e < 4; ++e) {
        if (crosses[e]) edges.push_back(e);
      }
      if (edges.size() == 2) {
        segs.push_back({ex[edges[0]], ey[edges[0]], ex[edges[1]], ey[edges[1]]});
      } else if (edges.size() == 4) {
        // Saddle: resolve by the cell-center average.
        const double center = 0.25 * (vs[0] + vs[1] + vs[2] + vs[3]);
        const bool join_03 = (center >= level) == ((mask & 1) != 0);
        if (join_03) {
          segs.push_back({ex[0], ey[0], ex[1], ey[1]});
          segs.push_back({ex[2], ey[2], ex[3], ey[3]});
        } else {
          segs.push_back({ex[3], ey[3], ex[0], ey[0]});
          segs.push_back({ex[1], ey[1], ex[2], ey[2]});
        }
      }
    }
  }
  return segs;
}

std::string RenderPlot(const PlotData& data, PlotFormat format) {
  CheckLengths(data);
  return format == PlotFormat::kCsv ? RenderCsv(data) : RenderSvg(data);
}

void EmitPlot(const PlotData& data, const std::filesystem::path& out, PlotFormat format) {
  const std::string text = RenderPlot(data, format);
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::kIoError, "cannot write " + out.string());
  f << text;
  if (!f) throw Error(ErrorCode::kIoError, "write failed for " + out.string());
}

}  // namespace uqp
