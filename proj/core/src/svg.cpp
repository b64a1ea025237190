#include "pcw/svg.hpp"

#include "pcw/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace pcw {
namespace {

std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick_label(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

// "Nice" tick positions covering [lo, hi].
std::vector<double> linear_ticks(double lo, double hi)
{
    const double span = hi - lo;
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
        if (m * mag >= raw) {
            step = m * mag;
            break;
        }
    }
    std::vector<double> t;
    for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step) {
        t.push_back(std::abs(v) < 1e-12 * span ? 0.0 : v);
    }
    return t;
}

} // namespace

std::string xml_escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

SvgPlot::SvgPlot(double width, double height) : width_(width), height_(height) {}

SvgPlot& SvgPlot::title(std::string t)
{
    title_ = std::move(t);
    return *this;
}

SvgPlot& SvgPlot::x_label(std::string t)
{
    xlabel_ = std::move(t);
    return *this;
}

SvgPlot& SvgPlot::y_label(std::string t)
{
    ylabel_ = std::move(t);
    return *this;
}

SvgPlot& SvgPlot::log_y(bool on)
{
    log_y_ = on;
    return *this;
}

SvgPlot& SvgPlot::x_range(double lo, double hi)
{
    fixed_x_ = true;
    x_lo_ = lo;
    x_hi_ = hi;
    return *this;
}

SvgPlot& SvgPlot::scatter(Points pts, std::string color, std::string label)
{
    series_.push_back({Kind::scatter, std::move(pts), std::move(color), std::move(label)});
    return *this;
}

SvgPlot& SvgPlot::line(Points pts, std::string color, std::string label, bool dashed)
{
    series_.push_back({dashed ? Kind::dashed : Kind::line, std::move(pts), std::move(color), std::move(label)});
    return *this;
}

SvgPlot& SvgPlot::band(double x0, double x1, std::string color, std::string label)
{
    series_.push_back({Kind::band, {{x0, 0.0}, {x1, 0.0}}, std::move(color), std::move(label)});
    return *this;
}

SvgPlot& SvgPlot::hline(double y, std::string color, std::string label)
{
    series_.push_back({Kind::hline, {{0.0, y}}, std::move(color), std::move(label)});
    return *this;
}

std::string SvgPlot::render() const
{
    const double ml = 70, mr = 20, mt = 36, mb = 52;
    const double pw = width_ - ml - mr;
    const double ph = height_ - mt - mb;

    auto ty = [&](double y) { return log_y_ ? std::log10(y) : y; };
    double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo;
    double ylo = xlo, yhi = -xlo;
    for (const auto& s : series_) {
        for (const auto& [x, y] : s.pts) {
            if (s.kind != Kind::hline) {
                xlo = std::min(xlo, x);
                xhi = std::max(xhi, x);
            }
            if (s.kind != Kind::band && (!log_y_ || y > 0)) {
                ylo = std::min(ylo, ty(y));
                yhi = std::max(yhi, ty(y));
            }
        }
    }
    if (fixed_x_) {
        xlo = x_lo_;
        xhi = x_hi_;
    }
    if (!std::isfinite(xlo) || xhi <= xlo) {
        xlo = std::isfinite(xlo) ? xlo - 0.5 : 0.0;
        xhi = xlo + 1.0;
    }
    if (!std::isfinite(ylo) || yhi <= ylo) {
        ylo = std::isfinite(ylo) ? ylo - 0.5 : 0.0;
        yhi = ylo + 1.0;
    }
    if (log_y_) {
        ylo = std::floor(ylo);
        yhi = std::ceil(yhi);
    } else {
        const double pad = 0.05 * (yhi - ylo);
        ylo -= pad;
        yhi += pad;
    }
    auto px = [&](double x) { return ml + (x - xlo) / (xhi - xlo) * pw; };
    auto py = [&](double y) { return mt + (1.0 - (ty(y) - ylo) / (yhi - ylo)) * ph; };

    std::ostringstream o;
    o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width_) << "\" height=\"" << num(height_)
      << "\" viewBox=\"0 0 " << num(width_) << ' ' << num(height_) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<defs><clipPath id=\"plot\"><rect x=\"" << num(ml) << "\" y=\"" << num(mt) << "\" width=\"" << num(pw)
      << "\" height=\"" << num(ph) << "\"/></clipPath></defs>\n";

    // axes and ticks
    o << "<g class=\"axes\" stroke=\"black\" fill=\"none\">\n";
    o << "<rect x=\"" << num(ml) << "\" y=\"" << num(mt) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
      << "\"/>\n";
    const auto xt = linear_ticks(xlo, xhi);
    for (double v : xt) {
        o << "<line x1=\"" << num(px(v)) << "\" y1=\"" << num(mt + ph) << "\" x2=\"" << num(px(v)) << "\" y2=\""
          << num(mt + ph + 5) << "\"/>\n";
    }
    std::vector<double> yt;
    if (log_y_) {
        for (double e = ylo; e <= yhi + 1e-9; e += 1.0) {
            yt.push_back(std::pow(10.0, e));
        }
    } else {
        yt = linear_ticks(ylo, yhi);
    }
    for (double v : yt) {
        o << "<line x1=\"" << num(ml - 5) << "\" y1=\"" << num(py(v)) << "\" x2=\"" << num(ml) << "\" y2=\""
          << num(py(v)) << "\"/>\n";
    }
    o << "</g>\n<g class=\"tick-labels\">\n";
    for (double v : xt) {
        o << "<text x=\"" << num(px(v)) << "\" y=\"" << num(mt + ph + 18) << "\" text-anchor=\"middle\">"
          << tick_label(v) << "</text>\n";
    }
    for (double v : yt) {
        o << "<text x=\"" << num(ml - 8) << "\" y=\"" << num(py(v) + 4) << "\" text-anchor=\"end\">" << tick_label(v)
          << "</text>\n";
    }
    o << "</g>\n";
    if (!title_.empty()) {
        o << "<text x=\"" << num(ml + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
          << xml_escape(title_) << "</text>\n";
    }
    if (!xlabel_.empty()) {
        o << "<text x=\"" << num(ml + pw / 2) << "\" y=\"" << num(height_ - 12) << "\" text-anchor=\"middle\">"
          << xml_escape(xlabel_) << "</text>\n";
    }
    if (!ylabel_.empty()) {
        o << "<text transform=\"translate(18," << num(mt + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
          << xml_escape(ylabel_) << "</text>\n";
    }

    o << "<g clip-path=\"url(#plot)\">\n";
    for (const auto& s : series_) {
        switch (s.kind) {
        case Kind::band:
            o << "<rect class=\"band\" x=\"" << num(px(s.pts[0].first)) << "\" y=\"" << num(mt) << "\" width=\""
              << num(std::max(px(s.pts[1].first) - px(s.pts[0].first), 1.0)) << "\" height=\"" << num(ph)
              << "\" fill=\"" << s.color << "\" fill-opacity=\"0.25\"/>\n";
            break;
        case Kind::hline:
            o << "<line class=\"hline\" x1=\"" << num(ml) << "\" x2=\"" << num(ml + pw) << "\" y1=\""
              << num(py(s.pts[0].second)) << "\" y2=\"" << num(py(s.pts[0].second)) << "\" stroke=\"" << s.color
              << "\" stroke-dasharray=\"4 3\"/>\n";
            break;
        case Kind::line:
        case Kind::dashed: {
            o << "<polyline class=\"curve\" fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\"";
            if (s.kind == Kind::dashed) {
                o << " stroke-dasharray=\"6 4\"";
            }
            o << " points=\"";
            for (const auto& [x, y] : s.pts) {
                if (!log_y_ || y > 0) {
                    o << num(px(x)) << ',' << num(py(y)) << ' ';
                }
            }
            o << "\"/>\n";
            break;
        }
        case Kind::scatter:
            for (const auto& [x, y] : s.pts) {
                if (log_y_ && y <= 0) {
                    continue;
                }
                o << "<circle class=\"marker\" cx=\"" << num(px(x)) << "\" cy=\"" << num(py(y))
                  << "\" r=\"4\" fill=\"" << s.color << "\" stroke=\"black\" stroke-width=\"0.5\"/>\n";
            }
            break;
        }
    }
    o << "</g>\n";

    // legend
    double ly = mt + 14;
    o << "<g class=\"legend\">\n";
    for (const auto& s : series_) {
        if (s.label.empty()) {
            continue;
        }
        const double lx = ml + pw - 150;
        if (s.kind == Kind::scatter) {
            o << "<circle cx=\"" << num(lx + 8) << "\" cy=\"" << num(ly - 4) << "\" r=\"4\" fill=\"" << s.color
              << "\"/>\n";
        } else {
            o << "<line x1=\"" << num(lx) << "\" x2=\"" << num(lx + 16) << "\" y1=\"" << num(ly - 4) << "\" y2=\""
              << num(ly - 4) << "\" stroke=\"" << s.color << "\" stroke-width=\"3\"/>\n";
        }
        o << "<text x=\"" << num(lx + 22) << "\" y=\"" << num(ly) << "\">" << xml_escape(s.label) << "</text>\n";
        ly += 16;
    }
    o << "</g>\n</svg>\n";
    return o.str();
}

void SvgPlot::save(const std::string& path) const
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path);
    }
    out << render();
    if (!out) {
        throw IoError("write failed for " + path);
    }
}

} // namespace pcw
