#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "genhead/data.hpp"
#include "genhead/metrics.hpp"
#include "genhead/rng.hpp"
#include "oracle.hpp"

using namespace genhead;

namespace {

ImageBatch random_batch(std::uint64_t seed, std::size_t n, std::size_t h, std::size_t w) {
  return ImageBatch(oracle::random_tensor(seed, {n, 3, h, w}), Provenance::kSynthetic);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST(ImageBatch, RejectsOutOfRangeValues) {
  EXPECT_THROW(ImageBatch(Tensor({1, 3, 1, 1}, {0.0, 1.0000001, 0.0}), Provenance::kSynthetic),
               std::invalid_argument);
  EXPECT_THROW(ImageBatch(Tensor({3, 4}, 0.0), Provenance::kSynthetic), ShapeError);
}

TEST(Cifar, LabelNames) {
  EXPECT_EQ(cifar_label("frog"), kCifarFrogLabel);
  EXPECT_EQ(cifar_label("airplane"), 0);
  EXPECT_EQ(cifar_label("truck"), 9);
  EXPECT_EQ(cifar_label("3"), 3);
  EXPECT_THROW(cifar_label("zebra"), std::invalid_argument);
}

TEST(Cifar, FrogFilterOverFiveTrainingFiles) {
  const ImageBatch frogs = load_cifar10(oracle::cifar_fixture_dir(), kCifarFrogLabel);
  EXPECT_EQ(frogs.count(), 5000u);
  EXPECT_EQ(frogs.values().shape(), (Shape{5000, 3, 32, 32}));
  EXPECT_EQ(frogs.provenance(), Provenance::kCifar);
}

TEST(Cifar, DecodesPlanarRecords) {
  const auto dir = oracle::scratch_dir("cifar_record");
  std::vector<std::uint8_t> rec(kCifarRecordBytes * 2, 0);
  rec[0] = 6;
  for (std::size_t i = 0; i < 1024; ++i) {
    rec[1 + i] = 255;           // R
    rec[1 + 1024 + i] = 0;      // G
    rec[1 + 2048 + i] = i % 256;  // B
  }
  rec[kCifarRecordBytes] = 2;
  {
    std::ofstream os(dir / "one.bin", std::ios::binary);
    os.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
  }
  const ImageBatch all = load_cifar10(dir / "one.bin");
  EXPECT_EQ(all.count(), 2u);
  const ImageBatch b = load_cifar10(dir / "one.bin", 6);
  ASSERT_EQ(b.count(), 1u);
  const auto v = b.values().values();
  EXPECT_EQ(v[0], 1.0);
  EXPECT_EQ(v[1024], -1.0);
  EXPECT_DOUBLE_EQ(v[2048 + 37], from_byte(37));
  // Row-major: pixel (row 1, col 2) of R is byte 1 + 32 + 2.
  EXPECT_EQ(v[32 + 2], 1.0);
}

TEST(Cifar, MalformedFilesThrow) {
  const auto dir = oracle::scratch_dir("cifar_bad");
  {
    std::ofstream os(dir / "short.bin", std::ios::binary);
    os << std::string(kCifarRecordBytes - 1, '\0');
  }
  EXPECT_THROW(load_cifar10(dir / "short.bin"), std::runtime_error);
  {
    std::string bad(kCifarRecordBytes, '\0');
    bad[0] = 10;
    std::ofstream os(dir / "label.bin", std::ios::binary);
    os << bad;
  }
  EXPECT_THROW(load_cifar10(dir / "label.bin"), std::runtime_error);
  EXPECT_THROW(load_cifar10(dir / "missing.bin"), std::runtime_error);
}

TEST(Bytes, EndpointsAndRounding) {
  EXPECT_EQ(to_byte(-1.0), 0);
  EXPECT_EQ(to_byte(1.0), 255);
  EXPECT_EQ(to_byte(0.0), 128);
  EXPECT_EQ(from_byte(0), -1.0);
  EXPECT_EQ(from_byte(255), 1.0);
  for (int b = 0; b < 256; ++b) EXPECT_EQ(to_byte(from_byte(static_cast<std::uint8_t>(b))), b);
  Rng r(3);
  for (int i = 0; i < 1000; ++i) {
    const double v = 2.0 * r.uniform() - 1.0;
    EXPECT_LE(std::abs(from_byte(to_byte(v)) - v), 1.0 / 127.5);
  }
}

TEST(Ppm, ExactBytesForWhitePixel) {
  const auto dir = oracle::scratch_dir("ppm_white");
  const ImageBatch white(Tensor({1, 3, 1, 1}, 1.0), Provenance::kSynthetic);
  write_ppm(white, 0, dir / "w.ppm");
  EXPECT_EQ(slurp(dir / "w.ppm"), std::string("P6\n1 1\n255\n\xFF\xFF\xFF", 14));
  const ImageBatch black(Tensor({1, 3, 2, 2}, -1.0), Provenance::kSynthetic);
  write_ppm(black, 0, dir / "b.ppm");
  EXPECT_EQ(std::filesystem::file_size(dir / "b.ppm"), std::string("P6\n2 2\n255\n").size() + 12);
}

TEST(Ppm, RoundTripThroughIndependentParser) {
  const auto dir = oracle::scratch_dir("ppm_roundtrip");
  const ImageBatch b = random_batch(60, 2, 5, 7);
  write_ppm(b, 1, dir / "x.ppm");
  const oracle::Ppm p = oracle::read_ppm(dir / "x.ppm");
  ASSERT_EQ(p.width, 7u);
  ASSERT_EQ(p.height, 5u);
  EXPECT_EQ(p.maxval, 255);
  const auto bytes = to_bytes(b);
  for (std::size_t y = 0; y < 5; ++y)
    for (std::size_t x = 0; x < 7; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        EXPECT_EQ(p.rgb[(y * 7 + x) * 3 + c], bytes[((1 * 3 + c) * 5 + y) * 7 + x]);
}

// Moments of clamp(m + s Z, -1, 1) for standard normal Z.
std::pair<double, double> clamped_normal_moments(double m, double s) {
  const auto cdf = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
  const auto pdf = [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); };
  const double a = (-1.0 - m) / s, b = (1.0 - m) / s;
  const double inside = cdf(b) - cdf(a);
  const double e1 = -cdf(a) + (1.0 - cdf(b)) + m * inside + s * (pdf(a) - pdf(b));
  const double e2 = cdf(a) + (1.0 - cdf(b)) + m * m * inside + 2.0 * m * s * (pdf(a) - pdf(b)) +
                    s * s * (inside + a * pdf(a) - b * pdf(b));
  return {e1, std::sqrt(e2 - e1 * e1)};
}

TEST(Synthetic, FlatNoiseMatchesClampedNormal) {
  SynthSpec spec;
  spec.structure = SynthStructure::kFlatNoise;
  const ChannelStats s = channel_stats(synth_dataset(spec, 400, 16, 16));
  for (std::size_t c = 0; c < 3; ++c) {
    const auto [mean, sd] = clamped_normal_moments(spec.mean[c], spec.std[c]);
    // 102400 samples per channel: standard error about 0.0016.
    EXPECT_NEAR(s.mean[c], mean, 0.006);
    EXPECT_NEAR(s.std[c], sd, 0.006);
  }
}

TEST(Synthetic, BlobMomentsNearSpec) {
  SynthSpec spec;
  const ChannelStats t = channel_stats(synth_dataset(spec, 400, 16, 16));
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_NEAR(t.mean[c], spec.mean[c], 0.03);
    EXPECT_NEAR(t.std[c], spec.std[c], 0.03);
  }
}

TEST(Synthetic, ValidationAndDeterminism) {
  SynthSpec bad;
  bad.mean = {0.8, 0.0, 0.0};
  bad.std = {0.3, 0.1, 0.1};
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  SynthSpec warn;
  warn.mean = {0.5, 0.0, 0.0};
  warn.std = {0.3, 0.1, 0.1};
  EXPECT_TRUE(warn.validate().has_value());
  EXPECT_FALSE(SynthSpec{}.validate().has_value());
  const SynthSpec spec;
  const auto a = synth_dataset(spec, 3, 8, 8), b = synth_dataset(spec, 3, 8, 8);
  for (std::size_t i = 0; i < a.values().size(); ++i) EXPECT_EQ(a.values()[i], b.values()[i]);
}

TEST(Downsample, PreservesChannelMeans) {
  const ImageBatch b = random_batch(61, 4, 32, 32);
  const ImageBatch d = downsample(b, 4);
  EXPECT_EQ(d.values().shape(), (Shape{4, 3, 8, 8}));
  const ChannelStats sb = channel_stats(b), sd = channel_stats(d);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(sb.mean[c], sd.mean[c], 1e-12);
  EXPECT_NEAR(d.values()[0],
              [&] {
                double acc = 0.0;
                for (std::size_t y = 0; y < 4; ++y)
                  for (std::size_t x = 0; x < 4; ++x) acc += b.values()[y * 32 + x];
                return acc / 16.0;
              }(),
              1e-15);
  EXPECT_THROW(downsample(b, 5), std::invalid_argument);
}

TEST(Probe, HasSaturatedQuadrant) {
  const ImageBatch p = make_probe(SynthSpec{}, 32, 32);
  ASSERT_EQ(p.count(), 1u);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t x = 16; x < 32; ++x) EXPECT_EQ(p.values()[(c * 32 + y) * 32 + x], -1.0);
}

TEST(Histogram, AllMinusOneInFirstBin) {
  const ImageBatch b(Tensor({2, 3, 4, 4}, -1.0), Provenance::kSynthetic);
  const Histogram h = histogram(b);
  EXPECT_EQ(h.combined[0], 96u);
  EXPECT_EQ(h.total, 96u);
}

TEST(Histogram, ByteDomainOneCountPerBin) {
  std::vector<double> v(3 * 256);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 256; ++i) v[c * 256 + i] = from_byte(static_cast<std::uint8_t>(i));
  const ImageBatch b(Tensor({1, 3, 16, 16}, v), Provenance::kSynthetic);
  const Histogram h = histogram(b, 256, HistogramDomain::kBytes);
  for (std::size_t k = 0; k < 256; ++k) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(h.per_channel[c][k], 1u) << "bin " << k;
  }
}

TEST(Histogram, MatchesNaiveCountsAndConservesMass) {
  const ImageBatch b = random_batch(62, 5, 9, 9);
  const Histogram h = histogram(b, 64);
  std::vector<std::uint64_t> naive(64, 0);
  for (double v : b.values().values()) {
    std::size_t k = 0;
    while (k + 1 < 64 && v >= -1.0 + 2.0 * double(k + 1) / 64.0) ++k;
    ++naive[k];
  }
  EXPECT_EQ(h.combined, naive);
  std::uint64_t total = 0;
  for (auto c : h.combined) total += c;
  EXPECT_EQ(total, 5u * 3 * 81);
  for (const auto& ch : h.per_channel) {
    std::uint64_t t = 0;
    for (auto c : ch) t += c;
    EXPECT_EQ(t, 5u * 81);
  }
}

TEST(Histogram, InteriorEdgeGoesRight) {
  const ImageBatch b(Tensor({1, 3, 1, 1}, {0.0, 1.0, -0.5}), Provenance::kSynthetic);
  const Histogram h = histogram(b, 4);  // edges -1, -0.5, 0, 0.5, 1
  EXPECT_EQ(h.per_channel[0][2], 1u);
  EXPECT_EQ(h.per_channel[1][3], 1u);  // right-closed last bin
  EXPECT_EQ(h.per_channel[2][1], 1u);
  EXPECT_THROW(histogram(b, 1), std::invalid_argument);
}

TEST(Histogram, CsvLayout) {
  const auto dir = oracle::scratch_dir("hist_csv");
  const ImageBatch b(Tensor({1, 3, 1, 1}, {-1.0, 0.0, 1.0}), Provenance::kSynthetic);
  export_histogram_csv(histogram(b, 2), dir / "h.csv");
  EXPECT_EQ(slurp(dir / "h.csv"),
            "bin_left,bin_right,count_r,count_g,count_b,count_all\n-1,0,1,0,0,1\n0,1,0,1,1,2\n");
}

TEST(RunningMean, ConstantAndIdentity) {
  Series s;
  for (int i = 0; i < 50; ++i) {
    s.index.push_back(i);
    s.value.push_back(i % 2 ? 3.5 : 3.5);
  }
  for (double v : running_mean(s).value) EXPECT_DOUBLE_EQ(v, 3.5);
  Rng r(4);
  for (double& v : s.value) v = r.normal();
  const Series one = running_mean(s, 1);
  EXPECT_EQ(one.value, s.value);
  EXPECT_EQ(one.index, s.index);
  EXPECT_THROW(running_mean(s, 0), std::invalid_argument);
}

TEST(RunningMean, MatchesNaiveResummation) {
  Rng r(5);
  Series s;
  for (int i = 0; i < 500; ++i) {
    s.index.push_back(i * 3);
    s.value.push_back(r.normal(1.0, 2.0));
  }
  const Series m = running_mean(s, 100);
  for (std::size_t i = 0; i < 500; ++i) {
    const std::size_t lo = i >= 99 ? i - 99 : 0;
    double acc = 0.0;
    for (std::size_t j = lo; j <= i; ++j) acc += s.value[j];
    EXPECT_NEAR(m.value[i], acc / double(i - lo + 1), 1e-12);
  }
}

TEST(RunningMean, IsLinear) {
  Rng r(6);
  Series x, y, z;
  for (int i = 0; i < 300; ++i) {
    x.index.push_back(i);
    x.value.push_back(r.normal());
    y.value.push_back(r.normal());
  }
  y.index = z.index = x.index;
  for (int i = 0; i < 300; ++i) z.value.push_back(2.5 * x.value[i] - 0.75 * y.value[i]);
  const Series rx = running_mean(x), ry = running_mean(y), rz = running_mean(z);
  for (int i = 0; i < 300; ++i) EXPECT_NEAR(rz.value[i], 2.5 * rx.value[i] - 0.75 * ry.value[i], 1e-12);
}

TEST(MetricsCsv, EmptyLogIsHeaderOnly) {
  MetricsLog log;
  log.columns = {"a", "b"};
  EXPECT_EQ(format_csv(log), "iteration,a,b\n");
}

TEST(MetricsCsv, RoundTripAndDeterminism) {
  const auto dir = oracle::scratch_dir("metrics_csv");
  MetricsLog log;
  log.columns = {"loss", "mean_r"};
  Rng r(7);
  for (int i = 0; i < 20; ++i) log.append(i, {r.normal(0, 1e3), r.normal(0, 1e-4)});
  EXPECT_THROW(log.append(19, {0.0, 0.0}), std::invalid_argument);
  EXPECT_THROW(log.append(25, {0.0}), std::invalid_argument);
  export_csv(log, dir / "a.csv");
  export_csv(log, dir / "b.csv");
  EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
  const MetricsLog back = parse_csv(slurp(dir / "a.csv"));
  ASSERT_EQ(back.records.size(), 20u);
  EXPECT_EQ(back.columns, log.columns);
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_EQ(back.records[i].iteration, log.records[i].iteration);
    for (std::size_t c = 0; c < 2; ++c) {
      const double want = log.records[i].values[c];
      EXPECT_NEAR(back.records[i].values[c], want, 1e-9 * std::max(1.0, std::abs(want)));
    }
  }
}

TEST(ImageGrid, SingleImageMatchesPpm) {
  const auto dir = oracle::scratch_dir("grid_single");
  const ImageBatch b = random_batch(63, 1, 4, 6);
  write_ppm(b, 0, dir / "a.ppm");
  export_image_grid(b, 1, dir / "g.ppm");
  EXPECT_EQ(slurp(dir / "a.ppm"), slurp(dir / "g.ppm"));
}

TEST(ImageGrid, LayoutAndTilesRoundTrip) {
  const auto dir = oracle::scratch_dir("grid_layout");
  const ImageBatch b = random_batch(64, 4, 5, 3);
  export_image_grid(b, 2, dir / "g.ppm");
  const oracle::Ppm p = oracle::read_ppm(dir / "g.ppm");
  EXPECT_EQ(p.height, 2u * 5 + 2);
  EXPECT_EQ(p.width, 2u * 3 + 2);
  const auto bytes = to_bytes(b);
  for (std::size_t i = 0; i < 4; ++i) {
    const std::size_t oy = (i / 2) * 7, ox = (i % 2) * 5;
    for (std::size_t y = 0; y < 5; ++y)
      for (std::size_t x = 0; x < 3; ++x)
        for (std::size_t c = 0; c < 3; ++c)
          EXPECT_EQ(p.rgb[((oy + y) * p.width + ox + x) * 3 + c], bytes[((i * 3 + c) * 5 + y) * 3 + x]);
  }
  // Gutter pixels are black.
  EXPECT_EQ(p.rgb[(0 * p.width + 3) * 3], 0);
  EXPECT_EQ(p.rgb[(5 * p.width + 0) * 3 + 1], 0);
}

TEST(Bytes, FromBytesInvertsToBytes) {
  std::vector<std::uint8_t> all(3 * 16 * 16);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::uint8_t>(i % 256);
  const ImageBatch b = from_bytes(all, {1, 3, 16, 16});
  EXPECT_EQ(to_bytes(b), all);
  EXPECT_THROW(from_bytes(all, {2, 3, 16, 16}), ShapeError);
}
