#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "metaexplore/advisor.hpp"

namespace metaexplore::harness {

inline constexpr const char* kMetricsHeader =
    "run_id,meta_episode,task_id,lifetime_return,ep_return_first,ep_return_last,ep_return_mean,"
    "explored_fraction,poor_action_rate,wall_time_s";

struct MetricsRow {
    std::string run_id;
    int meta_episode = 0;
    std::string task_id;
    double lifetime_return = 0.0;
    double ep_return_first = 0.0;
    double ep_return_last = 0.0;
    double ep_return_mean = 0.0;
    double explored_fraction = 0.0;
    std::optional<double> poor_action_rate;
    std::optional<double> wall_time_s;
};

MetricsRow to_row(const std::string& run_id, const MetaEpisodeMetrics& m, std::optional<double> wall_time = {});

// Shortest round-trip text for a double; "nan"/"inf" spelled out.
std::string format_number(double v);

// Append-only metrics sink. The header is written on open.
class MetricsWriter {
public:
    explicit MetricsWriter(const std::filesystem::path& path);

    void write(const MetricsRow& row);
    void flush() { out_.flush(); }

private:
    std::ofstream out_;
};

std::string format_row(const MetricsRow& row);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

// Static SVG charts. Both read their data from a CSV file so a figure can
// only show values that are in the CSV.
void write_line_plot(const std::filesystem::path& csv, const std::string& x_column,
                     const std::vector<std::string>& y_columns, const std::filesystem::path& svg,
                     const std::string& title, const std::string& y_label);
void write_bar_plot(const std::filesystem::path& csv, const std::string& label_column,
                    const std::string& value_column, const std::string& error_column,
                    const std::filesystem::path& svg, const std::string& title, const std::string& y_label);

std::string render_line_svg(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                            const std::string& y_label);

std::uint64_t file_hash(const std::filesystem::path& path);

} // namespace metaexplore::harness
