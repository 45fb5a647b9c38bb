#pragma once

// Learning-curve plots: labeled-set size on x, mean test Dice on y, one
// line per strategy with a shaded across-seed band (mean +/- 1.96 sd/sqrt(n)).
// Output is plain SVG, written without any rendering dependency.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "taal/experiment.hpp"

namespace taal {

namespace detail {

inline const char* plot_color(size_t i) {
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
    return palette[i % 8];
}

struct PlotSeries {
    std::string label;
    std::vector<double> x, mean, half_band;
};

inline void write_svg(const std::vector<PlotSeries>& series, const std::string& title,
                      const std::string& y_label, const std::filesystem::path& path) {
    const double W = 800, H = 500, ml = 70, mr = 170, mt = 40, mb = 55;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series)
        for (size_t i = 0; i < s.x.size(); ++i) {
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.mean[i] - s.half_band[i]);
            ymax = std::max(ymax, s.mean[i] + s.half_band[i]);
        }
    if (!(xmax >= xmin)) throw std::invalid_argument("plot: nothing to draw");
    if (xmax == xmin) xmax = xmin + 1;
    const double pad = std::max(1e-6, (ymax - ymin) * 0.08);
    ymin -= pad;
    ymax += pad;

    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
    auto py = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };

    std::ofstream os(path);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << W << " " << H
       << "\" font-family=\"sans-serif\" font-size=\"13\">\n";
    os << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    os << "<text x=\"" << (ml + (W - ml - mr) / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"16\">"
       << title << "</text>\n";

    const int ticks = 5;
    for (int t = 0; t <= ticks; ++t) {
        const double yv = ymin + (ymax - ymin) * t / ticks;
        const double xv = xmin + (xmax - xmin) * t / ticks;
        os << "<line x1=\"" << ml << "\" y1=\"" << py(yv) << "\" x2=\"" << (W - mr) << "\" y2=\"" << py(yv)
           << "\" stroke=\"#e0e0e0\"/>\n";
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3f", yv);
        os << "<text x=\"" << (ml - 8) << "\" y=\"" << (py(yv) + 4) << "\" text-anchor=\"end\">" << buf
           << "</text>\n";
        std::snprintf(buf, sizeof buf, "%g", xv);
        os << "<text x=\"" << px(xv) << "\" y=\"" << (H - mb + 20) << "\" text-anchor=\"middle\">" << buf
           << "</text>\n";
    }
    os << "<line x1=\"" << ml << "\" y1=\"" << py(ymin) << "\" x2=\"" << (W - mr) << "\" y2=\"" << py(ymin)
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << py(ymin) << "\" x2=\"" << ml << "\" y2=\"" << py(ymax)
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << (ml + (W - ml - mr) / 2) << "\" y=\"" << (H - 12)
       << "\" text-anchor=\"middle\">labeled samples</text>\n";
    os << "<text x=\"18\" y=\"" << (mt + (H - mt - mb) / 2)
       << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " << (mt + (H - mt - mb) / 2) << ")\">"
       << y_label << "</text>\n";

    for (size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* color = plot_color(si);
        if (s.x.size() > 1) {
            os << "<polygon fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
            for (size_t i = 0; i < s.x.size(); ++i)
                os << px(s.x[i]) << "," << py(s.mean[i] + s.half_band[i]) << " ";
            for (size_t i = s.x.size(); i-- > 0;)
                os << px(s.x[i]) << "," << py(s.mean[i] - s.half_band[i]) << " ";
            os << "\"/>\n";
        }
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (size_t i = 0; i < s.x.size(); ++i) os << px(s.x[i]) << "," << py(s.mean[i]) << " ";
        os << "\"/>\n";
        for (size_t i = 0; i < s.x.size(); ++i)
            os << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.mean[i]) << "\" r=\"3\" fill=\""
               << color << "\"/>\n";
        const double ly = mt + 22.0 * static_cast<double>(si);
        os << "<line x1=\"" << (W - mr + 12) << "\" y1=\"" << ly << "\" x2=\"" << (W - mr + 40) << "\" y2=\""
           << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << (W - mr + 46) << "\" y=\"" << (ly + 4) << "\">" << s.label << "</text>\n";
    }
    os << "</svg>\n";
}

}  // namespace detail

/// Emit dice3d.svg and dice2d.svg learning curves under `out_dir`.
/// Errors out (writing nothing) when `records` is empty.
inline std::vector<std::filesystem::path> plot_curves(const std::vector<CycleRecord>& records,
                                                      const std::filesystem::path& out_dir) {
    if (records.empty()) throw std::invalid_argument("plot_curves: no records to plot");
    CompareTable table = compare_strategies(records);
    std::filesystem::create_directories(out_dir);

    std::vector<std::filesystem::path> written;
    struct MetricSel {
        const char* file;
        const char* title;
        bool three_d;
    };
    for (const MetricSel sel : {MetricSel{"dice3d.svg", "mean test 3D Dice", true},
                                MetricSel{"dice2d.svg", "mean test 2D Dice", false}}) {
        std::vector<detail::PlotSeries> series;
        for (const auto& row : table.rows) {
            detail::PlotSeries s;
            s.label = row.label;
            for (int c = 0; c < table.cycles; ++c) {
                const auto ci = static_cast<size_t>(c);
                if (row.labeled_sizes[ci] < 0) continue;
                const double mean = sel.three_d ? row.mean3d[ci] : row.mean2d[ci];
                const double sd = sel.three_d ? row.std3d[ci] : row.std2d[ci];
                s.x.push_back(row.labeled_sizes[ci]);
                s.mean.push_back(mean);
                s.half_band.push_back(row.n_seeds > 0 ? 1.96 * sd / std::sqrt(static_cast<double>(row.n_seeds))
                                                      : 0.0);
            }
            if (!s.x.empty()) series.push_back(std::move(s));
        }
        const std::filesystem::path path = out_dir / sel.file;
        detail::write_svg(series, sel.title, sel.three_d ? "mean 3D Dice" : "mean 2D Dice", path);
        written.push_back(path);
    }
    return written;
}

}  // namespace taal
