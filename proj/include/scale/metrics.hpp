#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace scale {

struct MetricsRow {
    std::uint64_t step = 0;
    double loss_cont = 0.0;
    double loss_forget = 0.0;
    double loss_total = 0.0;
    double acc = 0.0;
    double knn_acc = 0.0;
    std::uint64_t buffer_fill = 0;
    double wall_ms = 0.0;
};

// Fixed header, reals at 9 significant digits, lossless round trip at that
// precision.
extern const char* const kMetricsHeader;

std::string format_metrics(const std::vector<MetricsRow>& rows);
void write_metrics(const std::vector<MetricsRow>& rows, const std::string& path);
std::vector<MetricsRow> read_metrics(const std::string& path);

}  // namespace scale
