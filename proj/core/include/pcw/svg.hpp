#pragma once

// Minimal standalone SVG line/scatter plots.

#include <string>
#include <utility>
#include <vector>

namespace pcw {

class SvgPlot {
public:
    using Points = std::vector<std::pair<double, double>>;

    SvgPlot(double width = 640, double height = 440);

    SvgPlot& title(std::string t);
    SvgPlot& x_label(std::string t);
    SvgPlot& y_label(std::string t);
    SvgPlot& log_y(bool on = true);
    /// Fix the x range instead of fitting it to the data.
    SvgPlot& x_range(double lo, double hi);

    /// One <circle class="marker"> per point.
    SvgPlot& scatter(Points pts, std::string color, std::string label);
    SvgPlot& line(Points pts, std::string color, std::string label, bool dashed = false);
    /// Shaded vertical band [x0, x1].
    SvgPlot& band(double x0, double x1, std::string color, std::string label);
    SvgPlot& hline(double y, std::string color, std::string label);

    std::string render() const;
    void save(const std::string& path) const;

private:
    enum class Kind { scatter, line, dashed, band, hline };
    struct Series {
        Kind kind;
        Points pts;
        std::string color;
        std::string label;
    };

    double width_, height_;
    std::string title_, xlabel_, ylabel_;
    bool log_y_ = false;
    bool fixed_x_ = false;
    double x_lo_ = 0, x_hi_ = 1;
    std::vector<Series> series_;
};

std::string xml_escape(const std::string& s);

} // namespace pcw
