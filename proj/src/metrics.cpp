#include "genhead/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace genhead {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

std::string fmt12(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

double Histogram::edge(std::size_t k) const {
  return lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(bins);
}

std::size_t Histogram::bin_of(double v) const {
  if (v <= lo) return 0;
  if (v >= hi) return bins - 1;
  auto k = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
  k = std::min(k, bins - 1);
  while (k + 1 < bins && v >= edge(k + 1)) ++k;
  while (k > 0 && v < edge(k)) --k;
  return k;
}

Histogram histogram(const ImageBatch& b, std::size_t bins, HistogramDomain domain) {
  if (bins < 2) throw std::invalid_argument("histogram needs at least 2 bins");
  Histogram h;
  h.bins = bins;
  h.domain = domain;
  if (domain == HistogramDomain::kBytes) {
    h.lo = 0.0;
    h.hi = 255.0;
  }
  const std::size_t channels = b.channels();
  const std::size_t plane = b.height() * b.width();
  h.per_channel.assign(channels, std::vector<std::uint64_t>(bins, 0));
  h.combined.assign(bins, 0);
  const auto v = b.values().values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t c = (i / plane) % channels;
    const double x = domain == HistogramDomain::kBytes ? static_cast<double>(to_byte(v[i])) : v[i];
    const std::size_t k = h.bin_of(x);
    ++h.per_channel[c][k];
    ++h.combined[k];
    ++h.total;
  }
  return h;
}

void export_histogram_csv(const Histogram& h, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "bin_left,bin_right,count_r,count_g,count_b,count_all\n";
  for (std::size_t k = 0; k < h.bins; ++k) {
    os << fmt12(h.edge(k)) << ',' << fmt12(h.edge(k + 1));
    for (std::size_t c = 0; c < 3; ++c) {
      os << ',' << (c < h.per_channel.size() ? h.per_channel[c][k] : 0);
    }
    os << ',' << h.combined[k] << '\n';
  }
  write_text(path, os.str());
}

Series running_mean(const Series& s, std::size_t window) {
  if (window == 0) throw std::invalid_argument("running_mean window must be at least 1");
  Series out;
  out.index = s.index;
  out.value.resize(s.value.size());
  for (std::size_t i = 0; i < s.value.size(); ++i) {
    const std::size_t first = i + 1 >= window ? i + 1 - window : 0;
    double acc = 0.0;
    for (std::size_t j = first; j <= i; ++j) acc += s.value[j];
    out.value[i] = acc / static_cast<double>(i + 1 - first);
  }
  return out;
}

void MetricsLog::append(std::int64_t iteration, std::vector<double> values) {
  if (values.size() != columns.size()) {
    throw std::invalid_argument("metrics record has " + std::to_string(values.size()) +
                                " values for " + std::to_string(columns.size()) + " columns");
  }
  if (!records.empty() && iteration <= records.back().iteration) {
    throw std::invalid_argument("metrics iterations must be strictly increasing");
  }
  records.push_back({iteration, std::move(values)});
}

std::size_t MetricsLog::column_index(const std::string& name) const {
  auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw std::out_of_range("no metrics column '" + name + "'");
  return static_cast<std::size_t>(it - columns.begin());
}

std::vector<double> MetricsLog::column(const std::string& name) const {
  const std::size_t k = column_index(name);
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.values[k]);
  return out;
}

Series MetricsLog::series(const std::string& name) const {
  Series s;
  s.value = column(name);
  for (const auto& r : records) s.index.push_back(r.iteration);
  return s;
}

std::string format_csv(const MetricsLog& log) {
  std::string out = "iteration";
  for (const auto& c : log.columns) out += "," + c;
  out += "\n";
  for (const auto& r : log.records) {
    out += std::to_string(r.iteration);
    for (double v : r.values) out += "," + fmt12(v);
    out += "\n";
  }
  return out;
}

void export_csv(const MetricsLog& log, const std::filesystem::path& path) {
  write_text(path, format_csv(log));
}

MetricsLog parse_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  MetricsLog log;
  if (!std::getline(is, line)) throw std::runtime_error("metrics CSV is empty");
  {
    std::istringstream hs(line);
    std::string cell;
    std::getline(hs, cell, ',');
    if (cell != "iteration") throw std::runtime_error("metrics CSV must start with 'iteration'");
    while (std::getline(hs, cell, ',')) log.columns.push_back(cell);
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream rs(line);
    std::string cell;
    std::getline(rs, cell, ',');
    const std::int64_t it = std::stoll(cell);
    std::vector<double> values;
    while (std::getline(rs, cell, ',')) values.push_back(std::stod(cell));
    log.append(it, std::move(values));
  }
  return log;
}

void export_image_grid(const ImageBatch& b, std::size_t cols, const std::filesystem::path& path) {
  if (cols == 0) throw std::invalid_argument("image grid needs at least one column");
  if (b.channels() != 3) throw ShapeError("image grid needs 3-channel images");
  constexpr std::size_t gutter = 2;
  const std::size_t n = b.count(), h = b.height(), w = b.width(), plane = h * w;
  const std::size_t used_cols = std::min(cols, n);
  const std::size_t rows = (n + cols - 1) / cols;
  const std::size_t gh = rows * h + (rows - 1) * gutter;
  const std::size_t gw = used_cols * w + (used_cols - 1) * gutter;
  std::string data(gh * gw * 3, '\0');
  const auto v = b.values().values();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t oy = (i / cols) * (h + gutter);
    const std::size_t ox = (i % cols) * (w + gutter);
    const double* base = v.data() + i * 3 * plane;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t c = 0; c < 3; ++c) {
          data[((oy + y) * gw + ox + x) * 3 + c] =
              static_cast<char>(to_byte(base[c * plane + y * w + x]));
        }
      }
    }
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << "P6\n" << gw << " " << gh << "\n255\n";
  os.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace genhead
