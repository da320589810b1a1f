#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "mhf/data.hpp"
#include "mhf/errors.hpp"
#include "mhf/metrics.hpp"
#include "mhf/normalization.hpp"
#include "support.hpp"

using mhf::Matrix;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

double column_std(const Matrix& m, std::size_t c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) mean += m(r, c) / m.rows();
    double v = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) v += (m(r, c) - mean) * (m(r, c) - mean) / (m.rows() - 1);
    return std::sqrt(v);
}

}  // namespace

TEST_CASE("parse_csv examples") {
    std::istringstream plain("1,2\n3,4\n5,6\n");
    const auto ds = mhf::parse_csv(plain, false);
    CHECK(ds.length() == 3);
    CHECK(ds.channels() == 2);
    CHECK(ds.values == Matrix{{1, 2}, {3, 4}, {5, 6}});

    std::istringstream header("a,b\n1,2\n3,4\n");
    CHECK(mhf::parse_csv(header, true).length() == 2);
}

TEST_CASE("parse_csv errors carry coordinates") {
    std::istringstream ragged("1,2\n3\n");
    CHECK_THROWS_WITH_AS(mhf::parse_csv(ragged, false), doctest::Contains("row 2"), mhf::ParseError);
    std::istringstream text("1,2\n3,x\n");
    CHECK_THROWS_WITH_AS(mhf::parse_csv(text, false), doctest::Contains("row 2, column 2"), mhf::ParseError);
    std::istringstream empty("");
    CHECK_THROWS_AS(mhf::parse_csv(empty, false), mhf::DataError);
}

TEST_CASE("default split is chronological 70/10/20") {
    const auto [train, val] = mhf::default_split(1000);
    CHECK(train == 700);
    CHECK(val == 800);
    const auto ds = mhf::make_dataset(Matrix(1000, 1));
    CHECK(ds.segment(mhf::Split::train) == std::pair<std::size_t, std::size_t>{0, 700});
    CHECK(ds.segment(mhf::Split::validation) == std::pair<std::size_t, std::size_t>{700, 800});
    CHECK(ds.segment(mhf::Split::test) == std::pair<std::size_t, std::size_t>{800, 1000});
    CHECK(ds.segment(mhf::Split::all) == std::pair<std::size_t, std::size_t>{0, 1000});
}

TEST_CASE("property: csv round trip is exact") {
    TempDir dir("mhf_data_csv");
    std::mt19937_64 rng(1);
    for (int rep = 0; rep < 20; ++rep) {
        Matrix m = testing::random_matrix(testing::random_size(rng, 1, 30), testing::random_size(rng, 1, 4), rng);
        for (double& v : m.values()) v *= std::pow(10.0, rep - 10);
        const std::string path = dir.file("m.csv");
        mhf::save_csv(path, m);
        CHECK(mhf::load_csv(path, false).values == m);
    }
}

TEST_CASE("load_csv honours the metadata sidecar") {
    TempDir dir("mhf_data_meta");
    auto ds = mhf::make_dataset(Matrix(100, 1, 2.0));
    ds.train_end = 40;
    ds.val_end = 90;
    ds.metadata["seed"] = "17";
    const std::string path = dir.file("d.csv");
    mhf::save_dataset(path, ds);
    const auto back = mhf::load_csv(path, false);
    CHECK(back.train_end == 40);
    CHECK(back.val_end == 90);
    CHECK(back.metadata.at("seed") == "17");

    std::ofstream(mhf::sidecar_path(path)) << "train_end=-4\n";
    CHECK_THROWS_AS(mhf::load_csv(path, false), mhf::ParseError);
    CHECK_THROWS_WITH_AS(mhf::load_csv(dir.file("none.csv"), false), doctest::Contains("none.csv"), mhf::IoError);
}

TEST_CASE("metadata text round trip") {
    const mhf::Metadata m{{"a", "1"}, {"kind", "spiky"}, {"x", "p=q"}};
    std::stringstream ss;
    mhf::write_metadata(ss, m);
    CHECK(mhf::read_metadata(ss) == m);
    std::istringstream bad("novalue\n");
    CHECK_THROWS_AS(mhf::read_metadata(bad), mhf::ParseError);
}

TEST_CASE("validate rejects bad boundaries and non-finite values") {
    auto ds = mhf::make_dataset(Matrix(10, 1));
    ds.train_end = 0;
    CHECK_THROWS_AS(ds.validate(), mhf::DataError);
    ds = mhf::make_dataset(Matrix(10, 1));
    ds.val_end = 11;
    CHECK_THROWS_AS(ds.validate(), mhf::DataError);
    ds = mhf::make_dataset(Matrix(10, 1));
    ds.values[3] = std::nan("");
    CHECK_THROWS_AS(ds.validate(), mhf::DataError);
}

TEST_CASE("evaluation windows tile the split") {
    Matrix v(10, 1);
    for (std::size_t t = 0; t < 10; ++t) v(t, 0) = static_cast<double>(t);
    const auto ds = mhf::make_dataset(v);
    const auto w = mhf::eval_windows(ds, 3, 3, mhf::Split::all);
    REQUIRE(w.size() == 1);
    CHECK(w[0].origin == 0);
    CHECK(w[0].y(0, 0) == 3.0);

    std::size_t expected = 0;
    for (std::size_t o = 0; o + 6 <= 10; o += 6) ++expected;
    CHECK(w.size() == expected);

    CHECK_THROWS_WITH_AS(mhf::eval_windows(ds, 3, 3, mhf::Split::test), doctest::Contains("6"), mhf::DataError);
    const auto big = mhf::make_dataset(Matrix(1000, 2));
    const auto tiles = mhf::eval_windows(big, 16, 16, mhf::Split::test);
    CHECK(tiles.size() == 200 / 32);
    for (std::size_t i = 0; i < tiles.size(); ++i) CHECK(tiles[i].origin == 800 + 32 * i);
}

TEST_CASE("property: windows are contiguous slices inside their split") {
    const auto ds = mhf::synth_scale_imbalance(600, {1.0, 5.0}, 4);
    mhf::WindowSampler a(ds, 8, 4, mhf::Split::train, 9), b(ds, 8, 4, mhf::Split::train, 9);
    for (int i = 0; i < 500; ++i) {
        const auto w = a.next();
        CHECK(b.next_origin() == w.origin);
        CHECK(w.origin + 12 <= ds.train_end);
        for (std::size_t t = 0; t < 8; ++t)
            for (std::size_t d = 0; d < 2; ++d) CHECK(w.x(t, d) == ds.values(w.origin + t, d));
        for (std::size_t t = 0; t < 4; ++t)
            for (std::size_t d = 0; d < 2; ++d) CHECK(w.y(t, d) == ds.values(w.origin + 8 + t, d));
    }
    mhf::WindowSampler c(ds, 8, 4, mhf::Split::train, 10);
    mhf::WindowSampler d(ds, 8, 4, mhf::Split::train, 9);
    int same = 0;
    for (int i = 0; i < 50; ++i) same += c.next_origin() == d.next_origin();
    CHECK(same < 50);
}

TEST_CASE("bimodal generator") {
    const auto ds = mhf::synth_bimodal(10000, 3141);
    CHECK(ds.channels() == 1);
    CHECK(ds.length() == 10000);
    const double segs = std::stod(ds.metadata.at("segments"));
    const double pos = std::stod(ds.metadata.at("positive_segments"));
    CHECK(pos / segs >= 0.4);
    CHECK(pos / segs <= 0.6);
    CHECK(ds.metadata.at("segment_length") == "32");
    CHECK(ds.metadata.at("seed") == "3141");
    CHECK(ds.train_end % 32 == 0);
    CHECK(ds.val_end % 32 == 0);
    for (double v : ds.values.values()) CHECK(std::abs(v) <= 1.0 + 5 * 0.05);
    CHECK_THROWS_AS(mhf::synth_bimodal(100, 1), mhf::ConfigError);
}

TEST_CASE("bimodal: a two-point quantizer beats the conditional mean") {
    const auto ds = mhf::synth_bimodal(10000, 3142);
    const auto windows = mhf::eval_windows(ds, 16, 16, mhf::Split::test);
    Matrix plus(16, 1), minus(16, 1), mean(16, 1, 0.0);
    for (std::size_t j = 0; j < 16; ++j) {
        plus(j, 0) = std::sin(2 * std::numbers::pi * j / 16.0);
        minus(j, 0) = -plus(j, 0);
    }
    std::vector<mhf::ForecastSet> one, two;
    std::vector<Matrix> targets;
    for (const auto& w : windows) {
        one.push_back({{mean}, {1.0}, {}, {}});
        two.push_back({{plus, minus}, {0.5, 0.5}, {}, {}});
        targets.push_back(w.y);
    }
    const double d1 = mhf::distortion(one, targets), d2 = mhf::distortion(two, targets);
    // ||sin|| over 16 steps is sqrt(8); the quantizer leaves only noise, about 0.05 sqrt(16)
    CHECK(d1 == doctest::Approx(std::sqrt(8.0)).epsilon(0.05));
    CHECK(d2 == doctest::Approx(0.2).epsilon(0.15));
    CHECK(d2 < d1);
}

TEST_CASE("scale-imbalance generator") {
    const auto ds = mhf::synth_scale_imbalance(10000, {1.0, 1000.0}, 3141);
    const double ratio = column_std(ds.values, 1) / column_std(ds.values, 0);
    CHECK(ratio >= 800.0);
    CHECK(ratio <= 1200.0);
    CHECK(ds.metadata.at("seed") == "3141");
    CHECK_THROWS_AS(mhf::synth_scale_imbalance(100, {1.0, 0.0}, 1), mhf::ConfigError);
    CHECK_THROWS_AS(mhf::synth_scale_imbalance(100, {-2.0}, 1), mhf::ConfigError);

    mhf::NormConfig cfg;
    for (const auto& w : mhf::eval_windows(ds, 16, 16, mhf::Split::test)) {
        const Matrix xn = mhf::normalize(w.x, mhf::robust_stats(w.x, cfg));
        mhf::NormConfig plain = cfg;
        plain.var_epsilon = 0.0;
        const auto again = mhf::robust_stats(xn, plain);
        for (double s : again.sigma) CHECK(s == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("spiky generator") {
    const auto clean = mhf::synth_spiky(500, 0.0, 10.0, 1);
    for (std::size_t t = 0; t < 500; ++t) CHECK(clean.values(t, 0) == std::sin(2 * std::numbers::pi * t / 24.0));
    CHECK(clean.metadata.at("period") == "24");

    const double T = 10000, p = 0.05;
    const auto ds = mhf::synth_spiky(10000, p, 10.0, 2);
    const double count = std::stod(ds.metadata.at("spike_count"));
    CHECK(std::abs(count - T * p) <= 3 * std::sqrt(T * p));
    std::size_t seen = 0;
    for (double v : ds.values.values()) seen += v > 5.0;
    CHECK(seen == count);
    CHECK_THROWS_AS(mhf::synth_spiky(100, 0.3, 1.0, 1), mhf::ConfigError);
}

TEST_CASE("spiky: spikes on the top order statistics leave SIN statistics untouched") {
    const std::size_t L = 20;
    mhf::NormConfig cfg;  // k = floor(0.1 * 20) = 2
    Matrix clean(L, 1);
    for (std::size_t t = 0; t < L; ++t) clean(t, 0) = std::sin(2 * std::numbers::pi * (t + 0.3) / 24.0);
    std::vector<std::size_t> order(L);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return clean(i, 0) > clean(j, 0); });
    for (std::size_t spikes = 1; spikes <= 2; ++spikes) {
        Matrix spiked = clean;
        for (std::size_t s = 0; s < spikes; ++s) spiked(order[s], 0) += 10.0;
        CHECK(mhf::robust_stats(spiked, cfg) == mhf::robust_stats(clean, cfg));
    }
    Matrix three = clean;
    for (std::size_t s = 0; s < 3; ++s) three(order[s], 0) += 10.0;
    CHECK_FALSE(mhf::robust_stats(three, cfg) == mhf::robust_stats(clean, cfg));
}

TEST_CASE("generators are deterministic in the seed") {
    CHECK(mhf::synth_bimodal(500, 1).values == mhf::synth_bimodal(500, 1).values);
    CHECK_FALSE(mhf::synth_bimodal(500, 1).values == mhf::synth_bimodal(500, 2).values);
    CHECK(mhf::synth_scale_imbalance(500, {1, 2}, 1).values == mhf::synth_scale_imbalance(500, {1, 2}, 1).values);
    CHECK_FALSE(mhf::synth_scale_imbalance(500, {1, 2}, 1).values ==
                mhf::synth_scale_imbalance(500, {1, 2}, 2).values);
    CHECK(mhf::synth_spiky(500, 0.1, 3, 1).values == mhf::synth_spiky(500, 0.1, 3, 1).values);
    CHECK_FALSE(mhf::synth_spiky(500, 0.1, 3, 1).values == mhf::synth_spiky(500, 0.1, 3, 2).values);

    TempDir dir("mhf_data_bytes");
    mhf::save_dataset(dir.file("a.csv"), mhf::synth_bimodal(700, 9));
    mhf::save_dataset(dir.file("b.csv"), mhf::synth_bimodal(700, 9));
    CHECK(read_bytes(dir.file("a.csv")) == read_bytes(dir.file("b.csv")));
    CHECK(read_bytes(dir.file("a.csv.meta")) == read_bytes(dir.file("b.csv.meta")));
}
