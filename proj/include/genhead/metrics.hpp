#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "genhead/data.hpp"

namespace genhead {

enum class HistogramDomain {
  kSigned,  // raw values over [-1, 1]
  kBytes,   // byte-quantized values over [0, 255]
};

// Equal-width bins over the domain. Bin k covers [lo + k*w, lo + (k+1)*w);
// the last bin is closed on the right. A value exactly on an interior edge
// belongs to the bin on its right.
struct Histogram {
  std::size_t bins = 256;
  HistogramDomain domain = HistogramDomain::kSigned;
  double lo = -1.0;
  double hi = 1.0;
  std::vector<std::vector<std::uint64_t>> per_channel;  // [channel][bin]
  std::vector<std::uint64_t> combined;
  std::uint64_t total = 0;

  double edge(std::size_t k) const;
  std::size_t bin_of(double v) const;
};

Histogram histogram(const ImageBatch& b, std::size_t bins = 256,
                    HistogramDomain domain = HistogramDomain::kSigned);

// bin_left,bin_right,count_r,count_g,count_b,count_all
void export_histogram_csv(const Histogram& h, const std::filesystem::path& path);

struct Series {
  std::vector<std::int64_t> index;
  std::vector<double> value;
};

// Trailing mean over the last `window` points; point i < window-1 averages
// the first i+1 points.
Series running_mean(const Series& s, std::size_t window = 100);

struct MetricsRecord {
  std::int64_t iteration = 0;
  std::vector<double> values;  // aligned with MetricsLog::columns
};

struct MetricsLog {
  std::vector<std::string> columns;  // excluding the leading "iteration"
  std::vector<MetricsRecord> records;

  void append(std::int64_t iteration, std::vector<double> values);
  std::size_t column_index(const std::string& name) const;
  std::vector<double> column(const std::string& name) const;
  Series series(const std::string& name) const;
};

// Header "iteration,<columns...>" then one row per record, values printed
// with 12 significant digits.
void export_csv(const MetricsLog& log, const std::filesystem::path& path);
std::string format_csv(const MetricsLog& log);
MetricsLog parse_csv(const std::string& text);

// Images tiled row-major, `cols` per row, separated by 2-pixel black gutters.
void export_image_grid(const ImageBatch& b, std::size_t cols, const std::filesystem::path& path);

}  // namespace genhead
