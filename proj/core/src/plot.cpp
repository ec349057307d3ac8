#include "sdlpgc/plot.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace sdlpgc::plot {

namespace {

constexpr double kWidth = 640, kHeight = 420, kLeft = 70, kRight = 20, kTop = 40, kBottom = 60;
const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            default: out += c;
        }
    }
    return out;
}

void header(std::ostringstream& out, const std::string& title, double w = kWidth, double h = kHeight) {
    out << std::fixed << std::setprecision(2);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 "
        << w << ' ' << h << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
        << escape(title) << "</text>\n";
}

void axes(std::ostringstream& out, double y_min, double y_max) {
    const double x0 = kLeft, y0 = kHeight - kBottom, x1 = kWidth - kRight, y1 = kTop;
    out << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0 << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1 << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double v = y_min + (y_max - y_min) * i / 4.0;
        const double y = y0 - (y0 - y1) * i / 4.0;
        out << "<text x=\"" << x0 - 6 << "\" y=\"" << y + 4
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << std::setprecision(3) << v
            << std::setprecision(2) << "</text>\n";
    }
}

}  // namespace

std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const std::vector<Series>& series) {
    double x_min = std::numeric_limits<double>::infinity(), x_max = -x_min, y_min = x_min, y_max = -x_min;
    for (const auto& s : series)
        for (auto [x, y] : s.points) {
            x_min = std::min(x_min, x);
            x_max = std::max(x_max, x);
            y_min = std::min(y_min, y);
            y_max = std::max(y_max, y);
        }
    if (!std::isfinite(x_min)) throw std::invalid_argument("line_chart: no points");
    if (x_max == x_min) x_max = x_min + 1;
    if (y_max == y_min) y_max = y_min + 1;
    std::ostringstream out;
    header(out, title);
    axes(out, y_min, y_max);
    const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
    auto px = [&](double x) { return kLeft + pw * (x - x_min) / (x_max - x_min); };
    auto py = [&](double y) { return kHeight - kBottom - ph * (y - y_min) / (y_max - y_min); };
    for (std::size_t i = 0; i < series.size(); ++i) {
        const char* color = kPalette[i % std::size(kPalette)];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (auto [x, y] : series[i].points) out << px(x) << ',' << py(y) << ' ';
        out << "\"/>\n";
        out << "<text x=\"" << kWidth - kRight - 120 << "\" y=\"" << kTop + 16 * (i + 1) << "\" fill=\"" << color
            << "\" font-family=\"sans-serif\" font-size=\"12\">" << escape(series[i].name) << "</text>\n";
    }
    out << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 20
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << escape(x_label) << "</text>\n"
        << "<text x=\"16\" y=\"" << kTop + ph / 2 << "\" transform=\"rotate(-90 16 " << kTop + ph / 2
        << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << escape(y_label) << "</text>\n"
        << "</svg>\n";
    return out.str();
}

std::string bar_chart(const std::string& title, const std::vector<std::string>& categories,
                      const std::vector<BarGroup>& groups) {
    if (categories.empty() || groups.empty()) throw std::invalid_argument("bar_chart: nothing to draw");
    double y_max = 0.0;
    for (const auto& g : groups) {
        if (g.values.size() != categories.size()) throw std::invalid_argument("bar_chart: ragged groups");
        for (double v : g.values) y_max = std::max(y_max, v);
    }
    if (y_max <= 0.0) y_max = 1.0;
    std::ostringstream out;
    header(out, title);
    axes(out, 0.0, y_max);
    const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
    const double slot = pw / static_cast<double>(categories.size());
    const double bar = slot * 0.8 / static_cast<double>(groups.size());
    for (std::size_t c = 0; c < categories.size(); ++c) {
        for (std::size_t g = 0; g < groups.size(); ++g) {
            const double h = ph * groups[g].values[c] / y_max;
            out << "<rect x=\"" << kLeft + slot * c + slot * 0.1 + bar * g << "\" y=\"" << kHeight - kBottom - h
                << "\" width=\"" << bar << "\" height=\"" << h << "\" fill=\"" << kPalette[g % std::size(kPalette)]
                << "\"/>\n";
        }
        out << "<text x=\"" << kLeft + slot * (c + 0.5) << "\" y=\"" << kHeight - kBottom + 16
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << escape(categories[c])
            << "</text>\n";
    }
    for (std::size_t g = 0; g < groups.size(); ++g)
        out << "<text x=\"" << kWidth - kRight - 120 << "\" y=\"" << kTop + 16 * (g + 1) << "\" fill=\""
            << kPalette[g % std::size(kPalette)] << "\" font-family=\"sans-serif\" font-size=\"12\">"
            << escape(groups[g].name) << "</text>\n";
    out << "</svg>\n";
    return out.str();
}

std::string heatmap(const std::string& title, const Tensor& m) {
    if (m.rank() != 2 || m.size() == 0) throw std::invalid_argument("heatmap: expects a non-empty matrix");
    const std::size_t rows = m.dim(0), cols = m.dim(1);
    const auto [lo_it, hi_it] = std::minmax_element(m.values().begin(), m.values().end());
    const double lo = *lo_it, hi = *hi_it > *lo_it ? *hi_it : *lo_it + 1.0;
    const double side = 480.0;
    const double cw = side / static_cast<double>(cols), ch = side / static_cast<double>(rows);
    std::ostringstream out;
    header(out, title, side + 40, side + 60);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            const double t = (m[r * cols + c] - lo) / (hi - lo);
            const int red = static_cast<int>(255 * (1 - t) + 8 * t);
            const int green = static_cast<int>(255 * (1 - t) + 48 * t);
            const int blue = static_cast<int>(255 * (1 - t) + 107 * t);
            out << "<rect x=\"" << 20 + cw * c << "\" y=\"" << 40 + ch * r << "\" width=\"" << cw << "\" height=\"" << ch
                << "\" fill=\"rgb(" << red << ',' << green << ',' << blue << ")\"/>\n";
        }
    out << "</svg>\n";
    return out.str();
}

}  // namespace sdlpgc::plot
