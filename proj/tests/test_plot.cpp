#include <regex>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "igct/io.hpp"
#include "igct/plot.hpp"

using namespace igct;

namespace {

std::vector<std::string> polylines(const std::string& svg) {
  std::vector<std::string> out;
  const std::regex re("<polyline class=\"series\"[^>]*points=\"([^\"]*)\"");
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), re); it != std::sregex_iterator(); ++it) {
    out.push_back((*it)[1]);
  }
  return out;
}

}  // namespace

TEST(Svg, EmptyChartIsAnError) {
  EXPECT_THROW(render_svg(Chart{}), std::invalid_argument);
  Chart c;
  c.series.push_back(Series{"nan", {std::nan("")}, {1.0}, false});
  EXPECT_THROW(render_svg(c), std::invalid_argument);
}

TEST(Svg, IdenticalSeriesDrawIdenticalPolylines) {
  Chart c{"t", "x", "y", {}};
  c.series.push_back(Series{"a", {0, 1, 2}, {1, 4, 9}, false});
  c.series.push_back(Series{"b", {0, 1, 2}, {1, 4, 9}, false});
  const std::string svg = render_svg(c);
  const auto p = polylines(svg);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[0], p[1]);
  EXPECT_NE(svg.find("<g id=\"legend\">"), std::string::npos);
  EXPECT_NE(svg.find(">a</text>"), std::string::npos);
  EXPECT_NE(svg.find(">b</text>"), std::string::npos);
}

TEST(Svg, LabelsAreEscaped) {
  Chart c{"x<y", "x", "y", {}};
  c.series.push_back(Series{"a&b", {0, 1}, {0, 1}, false});
  const std::string svg = render_svg(c);
  EXPECT_NE(svg.find("a&amp;b"), std::string::npos);
  EXPECT_EQ(svg.find("a&b"), std::string::npos);
}

TEST(Histogram, DensityIntegratesToOne) {
  const CsvTable t = parse_csv("index,class,w,x_0\n0,0,1,-2\n1,0,1,-1.9\n2,1,1,2\n3,1,1,2.2\n");
  const Chart c = histogram_chart({t, t}, {"a", "b"}, 10);
  ASSERT_EQ(c.series.size(), 2u);
  const Series& s = c.series[0];
  double area = 0.0;
  for (std::size_t i = 0; i + 1 < s.x.size(); ++i) area += s.y[i] * (s.x[i + 1] - s.x[i]);
  EXPECT_NEAR(area, 1.0, 1e-12);
  EXPECT_EQ(s.y, c.series[1].y);
  EXPECT_THROW(histogram_chart({parse_csv("index,t\n0,1\n")}, {"a"}), std::runtime_error);
}

TEST(Trajectory, OnePathPerIndex) {
  const CsvTable t = parse_csv("index,t,x_0\n0,80,10\n0,1,2\n1,80,-5\n1,1,-2\n2,80,0\n2,1,2\n");
  EXPECT_EQ(trajectory_chart(t, "oracle").series.size(), 3u);
  EXPECT_EQ(trajectory_chart(t, "oracle", 2).series.size(), 2u);
}

TEST(Sweep, SeriesPerMethodAndNfe) {
  const CsvTable t = parse_csv(eval_csv_header() +
                               "r,igct,1,1,4,0.1,1,1,0,,,\n"
                               "r,igct,13,1,4,0.2,1,1,0,,,\n"
                               "r,cfg-edm,1,18,4,0.3,1,1,0,,,\n");
  const Chart c = sweep_chart({t}, "w1");
  ASSERT_EQ(c.series.size(), 2u);
  EXPECT_EQ(c.series[1].label, "igct nfe=1");
  EXPECT_EQ(c.series[1].y, (std::vector<double>{0.1, 0.2}));
  EXPECT_THROW(sweep_chart({t}, "fid"), std::runtime_error);
  EXPECT_EQ(parse_plot_kind("sweep"), PlotKind::kSweep);
  EXPECT_THROW(parse_plot_kind("pie"), std::invalid_argument);
}
