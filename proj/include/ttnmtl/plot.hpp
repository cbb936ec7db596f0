#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ttnmtl {

/// Comma-separated table with a header row. Cells are kept as text; no
/// quoting is supported (the metrics files never need it).
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Index of a header column, or InvalidArgument naming it.
    std::size_t column(const std::string& name) const;
};

/// ParseError for an empty file, a missing header, or ragged rows.
CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::filesystem::path& path);

struct PlotSeries {
    std::string label;
    std::vector<double> x, y;
};

/// Series for the selected columns of a metrics table, x = step. Per-task
/// columns (train_ce, test_acc) give one series per task; other columns give
/// one series, taken from the first task's rows. Empty cells are skipped.
std::vector<PlotSeries> metrics_series(const CsvTable& table, std::span<const std::string> columns);

/// Standalone SVG line chart with axes, tick labels and a legend.
std::string render_svg(std::span<const PlotSeries> series, const std::string& title);

} // namespace ttnmtl
