#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "mhf/errors.hpp"
#include "mhf/metrics.hpp"
#include "support.hpp"

using mhf::ForecastSet;
using mhf::Matrix;

namespace {

std::vector<ForecastSet> random_forecasts(std::size_t N, std::size_t K, std::size_t H, std::size_t D,
                                          std::mt19937_64& rng, std::vector<Matrix>& targets) {
    std::vector<ForecastSet> out(N);
    targets.clear();
    for (auto& f : out) {
        for (std::size_t k = 0; k < K; ++k) {
            f.hypotheses.push_back(testing::random_matrix(H, D, rng, -3, 3));
            f.confidences.push_back(std::uniform_real_distribution<double>(0.05, 0.95)(rng));
        }
        targets.push_back(testing::random_matrix(H, D, rng, -3, 3));
    }
    return out;
}

double brute_distortion(const std::vector<ForecastSet>& f, const std::vector<Matrix>& y) {
    double total = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        double best = 1e300;
        for (const Matrix& h : f[i].hypotheses) {
            double s = 0.0;
            for (std::size_t r = 0; r < h.rows(); ++r)
                for (std::size_t c = 0; c < h.cols(); ++c) s += (h(r, c) - y[i](r, c)) * (h(r, c) - y[i](r, c));
            if (std::sqrt(s) < best) best = std::sqrt(s);
        }
        total += best;
    }
    return total / f.size();
}

// Integral of (F(z) - 1{y <= z})^2 for the empirical step CDF, by the midpoint rule
// on a fine grid between breakpoints (the integrand is piecewise constant).
double crps_by_integration(std::vector<double> s, double y) {
    std::vector<double> knots = s;
    knots.push_back(y);
    std::sort(knots.begin(), knots.end());
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
        const double a = knots[i], b = knots[i + 1];
        const int steps = 64;
        for (int j = 0; j < steps; ++j) {
            const double z = a + (b - a) * (j + 0.5) / steps;
            double F = 0.0;
            for (double v : s) F += v <= z ? 1.0 : 0.0;
            F /= static_cast<double>(s.size());
            const double ind = y <= z ? 1.0 : 0.0;
            total += (F - ind) * (F - ind) * (b - a) / steps;
        }
    }
    return total;
}

double naive_crps_sum(const std::vector<ForecastSet>& f, const std::vector<Matrix>& y) {
    double total = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        const std::size_t H = y[i].rows(), D = y[i].cols(), K = f[i].hypotheses.size();
        double acc = 0.0, denom = 0.0;
        for (std::size_t t = 0; t < H; ++t) {
            double yt = 0.0;
            for (std::size_t d = 0; d < D; ++d) yt += y[i](t, d);
            std::vector<double> paths(K, 0.0);
            for (std::size_t k = 0; k < K; ++k)
                for (std::size_t d = 0; d < D; ++d) paths[k] += f[i].hypotheses[k](t, d);
            double first = 0.0, second = 0.0;
            for (std::size_t k = 0; k < K; ++k) first += std::abs(paths[k] - yt);
            for (std::size_t j = 0; j < K; ++j)
                for (std::size_t k = 0; k < K; ++k) second += std::abs(paths[j] - paths[k]);
            acc += first / K - second / (2.0 * K * K);
            denom += std::abs(yt);
        }
        total += acc / (denom + 1e-12);
    }
    return total / f.size();
}

mhf::ModelConfig cfg_of(std::size_t L, std::size_t H, std::size_t D, std::size_t K, std::size_t h) {
    mhf::ModelConfig c;
    c.context_length = L;
    c.horizon = H;
    c.channels = D;
    c.hypotheses = K;
    c.head_hidden = h;
    return c;
}

}  // namespace

TEST_CASE("distortion examples") {
    ForecastSet f;
    f.hypotheses = {Matrix{{5.0, 0.0}}, Matrix{{0.0, 3.0}}};
    f.confidences = {0.5, 0.5};
    const std::vector<ForecastSet> fs{f};
    const std::vector<Matrix> y{Matrix{{0.0, 0.0}}};
    CHECK(mhf::distortion(fs, y) == 3.0);
    const std::vector<Matrix> hit{Matrix{{0.0, 3.0}}};
    CHECK(mhf::distortion(fs, hit) == 0.0);
    CHECK_THROWS_AS(mhf::distortion(std::vector<ForecastSet>{}, std::vector<Matrix>{}), mhf::DataError);
}

TEST_CASE("property: distortion matches a brute-force scan and never grows with more hypotheses") {
    std::mt19937_64 rng(1);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<Matrix> y;
        const std::size_t H = testing::random_size(rng, 1, 6), D = testing::random_size(rng, 1, 6);
        auto f = random_forecasts(testing::random_size(rng, 1, 8), testing::random_size(rng, 1, 16), H, D, rng, y);
        const double d = mhf::distortion(f, y);
        CHECK(std::abs(d - brute_distortion(f, y)) <= 1e-10);
        for (auto& fs : f) {
            fs.hypotheses.push_back(testing::random_matrix(H, D, rng, -3, 3));
            fs.confidences.push_back(0.5);
        }
        CHECK(mhf::distortion(f, y) <= d);
    }
}

TEST_CASE("distortion with one hypothesis is the mean Euclidean error") {
    std::mt19937_64 rng(2);
    std::vector<Matrix> y;
    const auto f = random_forecasts(5, 1, 3, 2, rng, y);
    double expect = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
        Matrix diff = f[i].hypotheses[0];
        for (std::size_t j = 0; j < diff.size(); ++j) diff[j] -= y[i][j];
        expect += mhf::frobenius_norm(diff) / 5.0;
    }
    CHECK(mhf::distortion(f, y) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("crps_empirical examples") {
    CHECK(std::abs(mhf::crps_empirical(std::vector<double>{0.0, 2.0}, 1.0) - 0.5) <= 1e-12);
    CHECK(mhf::crps_empirical(std::vector<double>{1.5, 1.5, 1.5}, 1.5) == 0.0);
    CHECK(mhf::crps_empirical(std::vector<double>{4.0}, 1.5) == 2.5);
}

TEST_CASE("property: crps_empirical equals the integral definition") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int rep = 0; rep < 50; ++rep) {
        const std::vector<double> s{u(rng), u(rng), u(rng)};
        const double y = u(rng);
        CHECK(std::abs(mhf::crps_empirical(s, y) - crps_by_integration(s, y)) <= 1e-6);
    }
}

TEST_CASE("property: crps_empirical is non-negative and translation invariant") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<double> s(1 + rep % 6);
        for (double& v : s) v = u(rng);
        const double y = u(rng), c = u(rng);
        const double base = mhf::crps_empirical(s, y);
        CHECK(base > 0.0);
        std::vector<double> shifted = s;
        for (double& v : shifted) v += c;
        CHECK(mhf::crps_empirical(shifted, y + c) == doctest::Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("crps_weighted reduces to the unweighted form with equal weights") {
    const std::vector<double> s{0.3, -1.2, 2.5, 0.9};
    for (double w : {1.0, 0.25, 7.0}) {
        const std::vector<double> weights(4, w);
        CHECK(mhf::crps_weighted(s, weights, 0.4) == doctest::Approx(mhf::crps_empirical(s, 0.4)).epsilon(1e-14));
    }
    CHECK(mhf::crps_weighted(s, std::vector<double>{1, 0, 0, 0}, 0.4) == doctest::Approx(0.1).epsilon(1e-14));
}

TEST_CASE("crps_sum examples and oracle equivalence") {
    std::mt19937_64 rng(5);
    std::vector<Matrix> y;
    auto f = random_forecasts(3, 2, 4, 2, rng, y);
    for (std::size_t i = 0; i < 3; ++i)
        for (auto& h : f[i].hypotheses) h = y[i];
    CHECK(mhf::crps_sum(f, y) == 0.0);

    ForecastSet one;
    one.hypotheses = {Matrix{{0.0}}, Matrix{{2.0}}};
    one.confidences = {0.5, 0.5};
    CHECK(mhf::crps_sum(std::vector<ForecastSet>{one}, std::vector<Matrix>{Matrix{{4.0}}}) ==
          doctest::Approx(mhf::crps_empirical(std::vector<double>{0.0, 2.0}, 4.0) / 4.0).epsilon(1e-12));

    for (int rep = 0; rep < 100; ++rep) {
        f = random_forecasts(2, 3, 2, 2, rng, y);
        CHECK(std::abs(mhf::crps_sum(f, y) - naive_crps_sum(f, y)) <= 1e-10);
    }
    CHECK_THROWS_AS(mhf::crps_sum(std::vector<ForecastSet>{}, std::vector<Matrix>{}), mhf::DataError);
}

TEST_CASE("crps_sum raw and weighted options") {
    ForecastSet one;
    one.hypotheses = {Matrix{{0.0}}, Matrix{{2.0}}};
    one.confidences = {0.9, 0.1};
    const std::vector<ForecastSet> f{one};
    const std::vector<Matrix> y{Matrix{{4.0}}};
    CHECK(mhf::crps_sum(f, y, {false, false}) == doctest::Approx(2.5));
    CHECK(mhf::crps_sum(f, y, {false, true}) ==
          doctest::Approx(mhf::crps_weighted(std::vector<double>{0.0, 2.0}, std::vector<double>{0.9, 0.1}, 4.0)));
}

TEST_CASE("property: metrics are invariant under a consistent channel permutation") {
    std::mt19937_64 rng(6);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<Matrix> y;
        auto f = random_forecasts(3, 4, 3, 3, rng, y);
        auto perm = [](const Matrix& m) {
            Matrix out(m.rows(), m.cols());
            for (std::size_t r = 0; r < m.rows(); ++r)
                for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = m(r, (c + 1) % m.cols());
            return out;
        };
        auto fp = f;
        auto yp = y;
        for (auto& fs : fp)
            for (auto& h : fs.hypotheses) h = perm(h);
        for (auto& t : yp) t = perm(t);
        CHECK(mhf::distortion(fp, yp) == doctest::Approx(mhf::distortion(f, y)).epsilon(1e-13));
        CHECK(mhf::crps_sum(fp, yp) == doctest::Approx(mhf::crps_sum(f, y)).epsilon(1e-12));
    }
}

TEST_CASE("covariance examples") {
    Matrix twin(50, 2);
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n(0.0, 1.0);
    for (std::size_t t = 0; t < 50; ++t) twin(t, 0) = twin(t, 1) = n(rng);
    const Matrix c = mhf::covariance_matrix(twin);
    CHECK(c(0, 0) == doctest::Approx(c(0, 1)).epsilon(1e-14));
    CHECK(c(1, 1) == doctest::Approx(c(1, 0)).epsilon(1e-14));
    CHECK(c(0, 0) * c(1, 1) - c(0, 1) * c(1, 0) == doctest::Approx(0.0).scale(c(0, 0) * c(0, 0)).epsilon(1e-12));

    Matrix ind(10000, 3);
    for (double& v : ind.values()) v = n(rng);
    const Matrix ci = mhf::covariance_matrix(ind);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            if (i != j) CHECK(std::abs(ci(i, j)) < 0.05);

    CHECK_THROWS_AS(mhf::covariance_matrix(Matrix(1, 2)), mhf::DataError);
}

TEST_CASE("property: covariance is symmetric positive semi-definite") {
    std::mt19937_64 rng(8);
    for (int rep = 0; rep < 30; ++rep) {
        const std::size_t D = testing::random_size(rng, 1, 5);
        const Matrix x = testing::random_matrix(testing::random_size(rng, 2, 20), D, rng);
        const Matrix c = mhf::covariance_matrix(x);
        for (std::size_t i = 0; i < D; ++i)
            for (std::size_t j = 0; j < D; ++j) CHECK(c(i, j) == c(j, i));
        // quadratic forms on random directions stay non-negative
        for (int q = 0; q < 20; ++q) {
            const Matrix v = testing::random_matrix(D, 1, rng);
            CHECK(mhf::matmul(mhf::matmul(v.transposed(), c), v)[0] >= -1e-10);
        }
    }
}

TEST_CASE("linear CKA examples and invariances") {
    std::mt19937_64 rng(9);
    const Matrix a = testing::random_matrix(40, 3, rng);
    CHECK(mhf::linear_cka(a, a) == doctest::Approx(1.0).epsilon(1e-12));

    const double th = 0.7;
    const Matrix rot{{std::cos(th), -std::sin(th), 0}, {std::sin(th), std::cos(th), 0}, {0, 0, 1}};
    const Matrix ar = mhf::matmul(a, rot);
    CHECK(mhf::linear_cka(a, ar) == doctest::Approx(1.0).epsilon(1e-12));
    Matrix scaled = a;
    for (double& v : scaled.values()) v *= 42.0;
    CHECK(mhf::linear_cka(a, scaled) == doctest::Approx(1.0).epsilon(1e-12));

    const Matrix b = testing::random_matrix(40, 5, rng);
    CHECK(mhf::linear_cka(a, b) == doctest::Approx(mhf::linear_cka(b, a)).epsilon(1e-12));
    CHECK(mhf::linear_cka(a, b) >= 0.0);
    CHECK(mhf::linear_cka(a, b) <= 1.0);

    const Matrix big_a = testing::random_matrix(1000, 3, rng), big_b = testing::random_matrix(1000, 3, rng);
    CHECK(mhf::linear_cka(big_a, big_b) < 0.1);

    CHECK_THROWS_AS(mhf::linear_cka(Matrix(5, 2, 1.0), a), mhf::Error);
}

TEST_CASE("FLOP count examples") {
    const auto f = mhf::count_flops(cfg_of(24, 24, 2, 1, 1));
    CHECK(f.encoder == 2352);
    const auto f1 = mhf::count_flops(cfg_of(24, 24, 2, 4, 16)), f2 = mhf::count_flops(cfg_of(24, 24, 2, 8, 16));
    CHECK(f2.encoder == f1.encoder);
    CHECK(f2.normalization == f1.normalization);
    CHECK(f2.trajectory_heads == 2 * f1.trajectory_heads);
    CHECK(f2.confidence_heads == 2 * f1.confidence_heads);
    CHECK(f1.total() == f1.normalization + f1.encoder + f1.trajectory_heads + f1.confidence_heads +
                            f1.denormalization);
}

TEST_CASE("property: FLOP count equals the instrumented forward pass") {
    std::mt19937_64 rng(10);
    for (int rep = 0; rep < 10; ++rep) {
        mhf::ModelConfig c = cfg_of(testing::random_size(rng, 2, 30), testing::random_size(rng, 1, 20),
                                    testing::random_size(rng, 1, 4), testing::random_size(rng, 1, 8),
                                    testing::random_size(rng, 1, 32));
        const auto p = mhf::init_params(c);
        mhf::FlopCounter counter;
        (void)mhf::forward(testing::random_matrix(c.context_length, c.channels, rng), p, c, &counter);
        CHECK(counter.flops == mhf::count_flops(c).total());
    }
}

TEST_CASE("latency measurement") {
    const mhf::ModelConfig small = cfg_of(16, 16, 2, 1, 16), large = cfg_of(16, 16, 2, 16, 16);
    std::mt19937_64 rng(11);
    std::vector<Matrix> batch;
    for (int b = 0; b < 32; ++b) batch.push_back(testing::random_matrix(16, 2, rng));
    const double t1 = mhf::measure_latency(mhf::init_params(small), small, batch, 9);
    const double t16 = mhf::measure_latency(mhf::init_params(large), large, batch, 9);
    CHECK(t1 > 0.0);
    CHECK(t16 > t1);
    const std::vector<Matrix> half(batch.begin(), batch.begin() + 4);
    CHECK(mhf::measure_latency(mhf::init_params(large), large, half, 9) < t16);
    CHECK_THROWS_AS(mhf::measure_latency(mhf::init_params(small), small, batch, 2), mhf::ContractError);
}

TEST_CASE("evaluate reports consistent metrics") {
    const auto ds = mhf::synth_bimodal(1200, 4, {8, 8, 1.0});
    mhf::ModelConfig c = cfg_of(8, 8, 1, 3, 8);
    const auto p = mhf::init_params(c);
    const auto windows = mhf::eval_windows(ds, 8, 8, mhf::Split::test);
    const auto r = mhf::evaluate(p, c, windows);
    CHECK(r.n_windows == windows.size());
    CHECK(r.per_window_distortion.size() == windows.size());
    const double mean =
        std::accumulate(r.per_window_distortion.begin(), r.per_window_distortion.end(), 0.0) / windows.size();
    CHECK(r.distortion == doctest::Approx(mean).epsilon(1e-12));
    std::uint64_t wins = 0;
    for (auto u : r.utilization) wins += u;
    CHECK(wins == windows.size());
    CHECK(r.crps_sum >= 0.0);
    CHECK(r.crps_sum_raw >= 0.0);
    CHECK(r.per_channel_crps.size() == 1);
    CHECK(r.per_channel_crps[0] == doctest::Approx(r.crps_sum).epsilon(1e-12));
}
