#include "ttnmtl/plot.hpp"

#include "ttnmtl/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace ttnmtl {

std::size_t CsvTable::column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw InvalidArgument("column '" + name + "' not found");
    return static_cast<std::size_t>(it - header.begin());
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double to_number(const std::string& cell, std::size_t line) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || ptr != cell.data() + cell.size())
        throw ParseError("line " + std::to_string(line) + ": '" + cell + "' is not a number");
    return v;
}

} // namespace

CsvTable parse_csv(const std::string& text) {
    CsvTable table;
    std::istringstream in(text);
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_line(line);
        if (table.header.empty()) {
            table.header = std::move(cells);
            continue;
        }
        if (cells.size() != table.header.size())
            throw ParseError("line " + std::to_string(number) + " has " + std::to_string(cells.size()) +
                             " cells, header has " + std::to_string(table.header.size()));
        table.rows.push_back(std::move(cells));
    }
    if (table.header.empty()) throw ParseError("file is empty");
    if (table.rows.empty()) throw ParseError("file has a header but no data rows");
    return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    try {
        return parse_csv(buffer.str());
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

std::vector<PlotSeries> metrics_series(const CsvTable& table, std::span<const std::string> columns) {
    const std::size_t step_col = table.column("step");
    const std::size_t task_col = table.column("task");
    std::vector<std::size_t> selected;
    for (const auto& c : columns) selected.push_back(table.column(c));

    std::vector<PlotSeries> out;
    for (std::size_t i = 0; i < columns.size(); ++i) {
        const bool per_task = columns[i] == "train_ce" || columns[i] == "test_acc";
        std::map<std::string, PlotSeries> by_task;  // ordered by task label
        std::vector<std::string> task_order;
        std::string first_task;
        for (std::size_t r = 0; r < table.rows.size(); ++r) {
            const auto& row = table.rows[r];
            const std::string& task = row[task_col];
            if (first_task.empty()) first_task = task;
            if (!per_task && task != first_task) continue;
            const std::string& cell = row[selected[i]];
            if (cell.empty()) continue;
            auto [it, fresh] = by_task.try_emplace(task);
            if (fresh) {
                task_order.push_back(task);
                it->second.label = per_task ? columns[i] + " task " + task : columns[i];
            }
            it->second.x.push_back(to_number(row[step_col], r + 2));
            it->second.y.push_back(to_number(cell, r + 2));
        }
        for (const auto& t : task_order) out.push_back(std::move(by_task[t]));
    }
    return out;
}

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string tick_label(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::string escape(const std::string& s) {
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

} // namespace

std::string render_svg(std::span<const PlotSeries> series, const std::string& title) {
    const double width = 800, height = 480;
    const double left = 70, right = 200, top = 40, bottom = 50;
    const double plot_w = width - left - right, plot_h = height - top - bottom;

    double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
    double y_lo = x_lo, y_hi = -x_lo;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            x_lo = std::min(x_lo, s.x[i]);
            x_hi = std::max(x_hi, s.x[i]);
            y_lo = std::min(y_lo, s.y[i]);
            y_hi = std::max(y_hi, s.y[i]);
        }
    if (!std::isfinite(x_lo)) x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;
    if (x_hi == x_lo) x_hi = x_lo + 1;
    if (y_hi == y_lo) {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    auto px = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * plot_w; };
    auto py = [&](double y) { return top + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h; };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << left + plot_w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
        << "</text>\n";
    svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\"" << plot_h
        << "\" fill=\"none\" stroke=\"black\"/>\n";

    for (int k = 0; k <= 5; ++k) {
        const double xv = x_lo + (x_hi - x_lo) * k / 5.0, yv = y_lo + (y_hi - y_lo) * k / 5.0;
        svg << "<line x1=\"" << fixed(px(xv), 2) << "\" y1=\"" << top + plot_h << "\" x2=\"" << fixed(px(xv), 2)
            << "\" y2=\"" << top + plot_h + 5 << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << fixed(px(xv), 2) << "\" y=\"" << top + plot_h + 18 << "\" text-anchor=\"middle\">"
            << tick_label(xv) << "</text>\n";
        svg << "<line x1=\"" << left - 5 << "\" y1=\"" << fixed(py(yv), 2) << "\" x2=\"" << left << "\" y2=\""
            << fixed(py(yv), 2) << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << left - 8 << "\" y=\"" << fixed(py(yv) + 4, 2) << "\" text-anchor=\"end\">"
            << tick_label(yv) << "</text>\n";
    }
    svg << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">step</text>\n";

    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& s = series[i];
        const char* colour = kPalette[i % std::size(kPalette)];
        svg << "<path fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" d=\"";
        bool pen_down = false;
        for (std::size_t j = 0; j < s.x.size(); ++j) {
            if (!std::isfinite(s.x[j]) || !std::isfinite(s.y[j])) {
                pen_down = false;
                continue;
            }
            svg << (pen_down ? " L" : (j ? " M" : "M")) << fixed(px(s.x[j]), 2) << ',' << fixed(py(s.y[j]), 2);
            pen_down = true;
        }
        svg << "\"><title>" << escape(s.label) << "</title></path>\n";
        const double ly = top + 10 + 18.0 * static_cast<double>(i);
        svg << "<line x1=\"" << left + plot_w + 12 << "\" y1=\"" << ly << "\" x2=\"" << left + plot_w + 36
            << "\" y2=\"" << ly << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
        svg << "<text x=\"" << left + plot_w + 42 << "\" y=\"" << ly + 4 << "\">" << escape(s.label) << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

} // namespace ttnmtl
