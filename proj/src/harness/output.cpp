#include "metaexplore/harness/output.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "metaexplore/rng.hpp"

namespace metaexplore::harness {

namespace {

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string xml_escape(const std::string& s)
{
    std::string out;
    for (char ch : s) {
        switch (ch) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += ch;
        }
    }
    return out;
}

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') {
            out += '"';
        }
        out += ch;
    }
    return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_cell(const std::string& s)
{
    if (s.empty() || s == "nan") {
        return std::nan("");
    }
    try {
        return std::stod(s);
    } catch (const std::exception&) {
        return std::nan("");
    }
}

std::string tick_label(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

struct Frame {
    double width = 720;
    double height = 420;
    double left = 70;
    double right = 170;
    double top = 40;
    double bottom = 50;
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;

    double px(double x) const { return left + (x - x0) / (x1 - x0) * (width - left - right); }
    double py(double y) const { return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom); }
};

void expand(double& lo, double& hi)
{
    if (!std::isfinite(lo) || !std::isfinite(hi)) {
        lo = 0.0;
        hi = 1.0;
    }
    if (hi - lo < 1e-12) {
        lo -= 0.5;
        hi += 0.5;
    }
}

void axes(std::ostringstream& os, const Frame& f, const std::string& title, const std::string& x_label,
          const std::string& y_label, bool x_ticks)
{
    os << "<rect x=\"0\" y=\"0\" width=\"" << f.width << "\" height=\"" << f.height << "\" fill=\"white\"/>\n";
    os << "<text x=\"" << f.width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title)
       << "</text>\n";
    os << "<line x1=\"" << f.left << "\" y1=\"" << f.height - f.bottom << "\" x2=\"" << f.width - f.right
       << "\" y2=\"" << f.height - f.bottom << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << f.left << "\" y1=\"" << f.top << "\" x2=\"" << f.left << "\" y2=\""
       << f.height - f.bottom << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double y = f.y0 + (f.y1 - f.y0) * k / 4.0;
        os << "<text x=\"" << f.left - 6 << "\" y=\"" << f.py(y) + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
           << tick_label(y) << "</text>\n";
        if (x_ticks) {
            const double x = f.x0 + (f.x1 - f.x0) * k / 4.0;
            os << "<text x=\"" << f.px(x) << "\" y=\"" << f.height - f.bottom + 16
               << "\" text-anchor=\"middle\" font-size=\"11\">" << tick_label(x) << "</text>\n";
        }
    }
    os << "<text x=\"" << (f.left + f.width - f.right) / 2 << "\" y=\"" << f.height - 10
       << "\" text-anchor=\"middle\" font-size=\"12\">" << xml_escape(x_label) << "</text>\n";
    os << "<text x=\"16\" y=\"" << (f.top + f.height - f.bottom) / 2 << "\" text-anchor=\"middle\" font-size=\"12\" "
       << "transform=\"rotate(-90 16 " << (f.top + f.height - f.bottom) / 2 << ")\">" << xml_escape(y_label)
       << "</text>\n";
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << text;
}

} // namespace

std::string format_number(double v)
{
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

MetricsRow to_row(const std::string& run_id, const MetaEpisodeMetrics& m, std::optional<double> wall_time)
{
    MetricsRow row;
    row.run_id = run_id;
    row.meta_episode = m.meta_episode;
    row.task_id = m.task_id;
    row.lifetime_return = m.lifetime_return;
    row.ep_return_first = m.ep_return_first;
    row.ep_return_last = m.ep_return_last;
    row.ep_return_mean = m.ep_return_mean;
    row.explored_fraction = m.explored_fraction;
    row.poor_action_rate = m.poor_action_rate;
    row.wall_time_s = wall_time;
    return row;
}

std::string format_row(const MetricsRow& row)
{
    std::string out = csv_field(row.run_id) + "," + std::to_string(row.meta_episode) + "," + csv_field(row.task_id);
    for (double v : {row.lifetime_return, row.ep_return_first, row.ep_return_last, row.ep_return_mean,
                     row.explored_fraction}) {
        out += "," + format_number(v);
    }
    out += ",";
    if (row.poor_action_rate) {
        out += format_number(*row.poor_action_rate);
    }
    out += ",";
    if (row.wall_time_s) {
        out += format_number(*row.wall_time_s);
    }
    return out;
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path) : out_(path, std::ios::binary)
{
    if (!out_) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out_ << kMetricsHeader << "\n";
}

void MetricsWriter::write(const MetricsRow& row)
{
    out_ << format_row(row) << "\n";
}

int CsvTable::column(const std::string& name) const
{
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
        throw std::invalid_argument("CSV has no column '" + name + "'");
    }
    return static_cast<int>(it - header.begin());
}

CsvTable read_csv(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot read " + path.string());
    }
    CsvTable table;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (first) {
            table.header = split_csv_line(line);
            first = false;
        } else if (!line.empty()) {
            table.rows.push_back(split_csv_line(line));
        }
    }
    return table;
}

void write_csv(const std::filesystem::path& path, const CsvTable& table)
{
    std::ostringstream os;
    auto emit = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            os << (i ? "," : "") << csv_field(cells[i]);
        }
        os << "\n";
    };
    emit(table.header);
    for (const auto& r : table.rows) {
        emit(r);
    }
    write_text(path, os.str());
}

std::string render_line_svg(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                            const std::string& y_label)
{
    Frame f;
    double xlo = INFINITY, xhi = -INFINITY, ylo = INFINITY, yhi = -INFINITY;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) {
                xlo = std::min(xlo, s.x[i]);
                xhi = std::max(xhi, s.x[i]);
                ylo = std::min(ylo, s.y[i]);
                yhi = std::max(yhi, s.y[i]);
            }
        }
    }
    expand(xlo, xhi);
    expand(ylo, yhi);
    f.x0 = xlo;
    f.x1 = xhi;
    f.y0 = ylo;
    f.y1 = yhi;

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width << "\" height=\"" << f.height
       << "\" font-family=\"sans-serif\">\n";
    axes(os, f, title, x_label, y_label, true);
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* color = kPalette[k % std::size(kPalette)];
        std::string points;
        auto flush = [&] {
            if (!points.empty()) {
                os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"" << points
                   << "\"/>\n";
                points.clear();
            }
        };
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
                flush();
                continue;
            }
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.2f,%.2f ", f.px(s.x[i]), f.py(s.y[i]));
            points += buf;
        }
        flush();
        const double ly = f.top + 10 + 18.0 * static_cast<double>(k);
        os << "<line x1=\"" << f.width - f.right + 12 << "\" y1=\"" << ly << "\" x2=\"" << f.width - f.right + 32
           << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << f.width - f.right + 38 << "\" y=\"" << ly + 4 << "\" font-size=\"11\">"
           << xml_escape(s.label) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

void write_line_plot(const std::filesystem::path& csv, const std::string& x_column,
                     const std::vector<std::string>& y_columns, const std::filesystem::path& svg,
                     const std::string& title, const std::string& y_label)
{
    const auto table = read_csv(csv);
    const int xc = table.column(x_column);
    std::vector<Series> series;
    for (const auto& name : y_columns) {
        const int yc = table.column(name);
        Series s{name, {}, {}};
        for (const auto& row : table.rows) {
            s.x.push_back(parse_cell(row[static_cast<std::size_t>(xc)]));
            s.y.push_back(parse_cell(row[static_cast<std::size_t>(yc)]));
        }
        series.push_back(std::move(s));
    }
    write_text(svg, render_line_svg(series, title, x_column, y_label));
}

void write_bar_plot(const std::filesystem::path& csv, const std::string& label_column,
                    const std::string& value_column, const std::string& error_column,
                    const std::filesystem::path& svg, const std::string& title, const std::string& y_label)
{
    const auto table = read_csv(csv);
    const int lc = table.column(label_column);
    const int vc = table.column(value_column);
    const int ec = error_column.empty() ? -1 : table.column(error_column);

    std::vector<std::string> labels;
    std::vector<double> values, errors;
    double lo = 0.0, hi = 0.0;
    for (const auto& row : table.rows) {
        labels.push_back(row[static_cast<std::size_t>(lc)]);
        values.push_back(parse_cell(row[static_cast<std::size_t>(vc)]));
        errors.push_back(ec >= 0 ? parse_cell(row[static_cast<std::size_t>(ec)]) : 0.0);
        const double e = std::isfinite(errors.back()) ? errors.back() : 0.0;
        if (std::isfinite(values.back())) {
            lo = std::min(lo, values.back() - e);
            hi = std::max(hi, values.back() + e);
        }
    }
    Frame f;
    f.right = 30;
    f.bottom = 80;
    expand(lo, hi);
    f.y0 = lo;
    f.y1 = hi;
    f.x0 = 0.0;
    f.x1 = static_cast<double>(std::max<std::size_t>(labels.size(), 1));

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width << "\" height=\"" << f.height
       << "\" font-family=\"sans-serif\">\n";
    axes(os, f, title, "", y_label, false);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double cx = f.px(static_cast<double>(i) + 0.5);
        const double w = 0.6 * (f.px(1.0) - f.px(0.0));
        if (std::isfinite(values[i])) {
            const double top = f.py(std::max(values[i], 0.0));
            const double base = f.py(std::min(values[i], 0.0));
            os << "<rect x=\"" << cx - w / 2 << "\" y=\"" << top << "\" width=\"" << w << "\" height=\""
               << std::max(base - top, 0.5) << "\" fill=\"" << kPalette[i % std::size(kPalette)] << "\"/>\n";
            if (std::isfinite(errors[i]) && errors[i] > 0.0) {
                os << "<line x1=\"" << cx << "\" y1=\"" << f.py(values[i] - errors[i]) << "\" x2=\"" << cx
                   << "\" y2=\"" << f.py(values[i] + errors[i]) << "\" stroke=\"black\"/>\n";
            }
        }
        os << "<text x=\"" << cx << "\" y=\"" << f.height - f.bottom + 16
           << "\" text-anchor=\"middle\" font-size=\"11\">" << xml_escape(labels[i]) << "</text>\n";
    }
    os << "</svg>\n";
    write_text(svg, os.str());
}

std::uint64_t file_hash(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot read " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return fnv1a64(ss.str());
}

} // namespace metaexplore::harness
