#include "scale/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace scale {

const char* const kMetricsHeader =
    "step,loss_cont,loss_forget,loss_total,acc,knn_acc,buffer_fill,wall_ms";

namespace {

std::string real9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

std::string format_metrics(const std::vector<MetricsRow>& rows) {
    std::string out = kMetricsHeader;
    out += '\n';
    for (const auto& r : rows) {
        out += std::to_string(r.step);
        out += ',';
        out += real9(r.loss_cont);
        out += ',';
        out += real9(r.loss_forget);
        out += ',';
        out += real9(r.loss_total);
        out += ',';
        out += real9(r.acc);
        out += ',';
        out += real9(r.knn_acc);
        out += ',';
        out += std::to_string(r.buffer_fill);
        out += ',';
        out += real9(r.wall_ms);
        out += '\n';
    }
    return out;
}

void write_metrics(const std::vector<MetricsRow>& rows, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_metrics: cannot open " + path);
    os << format_metrics(rows);
    if (!os) throw std::runtime_error("write_metrics: write failed for " + path);
}

std::vector<MetricsRow> read_metrics(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("read_metrics: cannot open " + path);
    std::string line;
    if (!std::getline(is, line) || line != kMetricsHeader)
        throw std::runtime_error("read_metrics: bad header in " + path);

    std::vector<MetricsRow> rows;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 8)
            throw std::runtime_error("read_metrics: bad column count at " + path + ":" +
                                     std::to_string(lineno));
        MetricsRow r;
        try {
            r.step = std::stoull(fields[0]);
            r.loss_cont = std::stod(fields[1]);
            r.loss_forget = std::stod(fields[2]);
            r.loss_total = std::stod(fields[3]);
            r.acc = std::stod(fields[4]);
            r.knn_acc = std::stod(fields[5]);
            r.buffer_fill = std::stoull(fields[6]);
            r.wall_ms = std::stod(fields[7]);
        } catch (const std::exception&) {
            throw std::runtime_error("read_metrics: bad value at " + path + ":" +
                                     std::to_string(lineno));
        }
        rows.push_back(r);
    }
    return rows;
}

}  // namespace scale
