// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mhf/cli.hpp"
#include "mhf/data.hpp"
#include "mhf/metrics.hpp"
#include "mhf/model.hpp"
#include "mhf/normalization.hpp"
#include "mhf/training.hpp"

using namespace mhf;

namespace {

const std::vector<std::uint64_t> seeds{3141, 3142, 3143};
constexpr std::size_t reduced_epochs = 50;
constexpr std::size_t reduced_patience = 50;

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
    std::printf("%s %d %s: %s\n", ok ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

std::string fmt(const char* format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(rows, cols);
    for (double& v : m.values()) v = u(rng);
    return m;
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

std::string join(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "/" : "") + fmt("%.4g", v[i]);
    return s;
}

// 1 -----------------------------------------------------------------------

void sin_correctness() {
    NormConfig cfg;
    cfg.trim_ratio = 0.2;
    cfg.var_epsilon = 0.0;
    const NormStats s = robust_stats(Matrix::column(std::vector<double>{1, 2, 3, 4, 100}), cfg);
    const double mu_err = std::abs(s.mu[0] - 3.0), sigma_err = std::abs(s.sigma[0] - std::sqrt(2.0 / 3.0));

    std::mt19937_64 rng(1);
    NormConfig def;
    double worst = 0.0;
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t L = 2 + rep % 40, D = 1 + rep % 4;
        const Matrix x = random_matrix(L, D, rng, -1000, 1000);
        worst = std::max(worst, max_abs_diff(denormalize(normalize(x, robust_stats(x, def)), robust_stats(x, def)), x));
    }
    report(1, "SIN correctness", mu_err <= 1e-12 && sigma_err <= 1e-12 && worst <= 1e-9,
           fmt("|mu-3|=%.2g |sigma-sqrt(2/3)|=%.2g round-trip max error %.2g over 1000 windows", mu_err, sigma_err,
               worst));
}

// 2 -----------------------------------------------------------------------

void breakdown_invariance() {
    std::mt19937_64 rng(2);
    NormConfig cfg;
    int cases = 0, identical = 0, skipped = 0;
    for (int rep = 0; rep < 500; ++rep) {
        const std::size_t L = 10 + rep % 50, D = 1 + rep % 3;
        cfg.trim_ratio = 0.1 + 0.3 * (rep % 4) / 4.0;
        if (trim_count(L, cfg.trim_ratio) < 1) continue;
        Matrix x = random_matrix(L, D, rng, -5, 5);
        const NormStats before = robust_stats(x, cfg);
        bool outlier = true;
        for (std::size_t d = 0; d < D; ++d) {
            std::size_t arg = 0;
            for (std::size_t t = 1; t < L; ++t)
                if (x(t, d) > x(arg, d)) arg = t;
            // scaling a non-positive maximum moves it to the bottom of the order, not the top
            outlier = outlier && x(arg, d) > 0.0;
            x(arg, d) *= 1e6;
        }
        if (!outlier) {
            ++skipped;
            continue;
        }
        ++cases;
        identical += robust_stats(x, cfg) == before;
    }
    report(2, "breakdown invariance", identical == cases,
           fmt("%d of %d windows bit-identical after scaling each channel maximum by 1e6 (%d windows with a "
               "non-positive channel maximum excluded)",
               identical, cases, skipped));
}

// 3 -----------------------------------------------------------------------

void gradient_fidelity() {
    ModelConfig mc;
    mc.context_length = 4;
    mc.horizon = 4;
    mc.channels = 2;
    mc.hypotheses = 2;
    mc.head_hidden = 3;
    mc.init_scale = 0.5;
    TrainConfig tc;
    std::mt19937_64 rng(3);
    double worst = 0.0;
    for (int draw = 0; draw < 20; ++draw) {
        mc.init_seed = 1000 + draw;
        const ModelParams p = init_params(mc);
        const Matrix x = random_matrix(4, 2, rng, -3, 3), y = random_matrix(4, 2, rng, -3, 3);
        for (std::size_t i = 0; i < p.tensors().size(); ++i) {
            const auto f = [&](Tape& tape, NodeId v) {
                return total_loss(tape, bind_params(tape, p, i, v), x, y, mc, tc);
            };
            worst = std::max(worst, finite_diff_check(f, *p.tensors()[i], 1e-6));
        }
    }
    report(3, "gradient fidelity", worst < 1e-5,
           fmt("max relative error %.3g over 20 parameter draws, every tensor", worst));
}

// 4 -----------------------------------------------------------------------

double crps_integral(const std::vector<double>& s, double y) {
    std::vector<double> knots = s;
    knots.push_back(y);
    std::sort(knots.begin(), knots.end());
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
        const double z = 0.5 * (knots[i] + knots[i + 1]);  // integrand is constant between knots
        double F = 0.0;
        for (double v : s) F += v <= z ? 1.0 : 0.0;
        F /= s.size();
        const double ind = y <= z ? 1.0 : 0.0;
        total += (F - ind) * (F - ind) * (knots[i + 1] - knots[i]);
    }
    return total;
}

void loss_oracles() {
    const double r = rwta_loss(std::vector<double>{1.0, 3.0}, 0.1);
    const double s = score_loss(std::vector<double>{0.5, 0.5}, 0);
    const double c = crps_empirical(std::vector<double>{0.0, 2.0}, 1.0);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-10, 10);
    double worst = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
        const std::vector<double> samples{u(rng), u(rng), u(rng)};
        const double y = u(rng);
        worst = std::max(worst, std::abs(crps_empirical(samples, y) - crps_integral(samples, y)));
    }
    const bool ok = std::abs(r - 1.2) <= 1e-12 && std::abs(s - std::log(2.0)) <= 1e-12 && std::abs(c - 0.5) <= 1e-12 &&
                    worst <= 1e-6;
    report(4, "loss formula oracles", ok,
           fmt("rwta=%.15g score=%.15g crps=%.15g integral max error %.2g", r, s, c, worst));
}

// 5 -----------------------------------------------------------------------

void distortion_oracle() {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<std::size_t> n(1, 8), k(1, 16), hd(1, 6);
    double worst = 0.0;
    int grew = 0;
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t N = n(rng), K = k(rng), H = hd(rng), D = hd(rng);
        std::vector<ForecastSet> f(N);
        std::vector<Matrix> y;
        for (auto& fs : f) {
            for (std::size_t j = 0; j < K; ++j) {
                fs.hypotheses.push_back(random_matrix(H, D, rng, -5, 5));
                fs.confidences.push_back(0.5);
            }
            y.push_back(random_matrix(H, D, rng, -5, 5));
        }
        double brute = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            double best = INFINITY;
            for (std::size_t j = 0; j < K; ++j) {
                double sq = 0.0;
                for (std::size_t t = 0; t < H; ++t)
                    for (std::size_t d = 0; d < D; ++d) {
                        const double e = f[i].hypotheses[j](t, d) - y[i](t, d);
                        sq += e * e;
                    }
                best = std::min(best, std::sqrt(sq));
            }
            brute += best;
        }
        brute /= N;
        const double got = distortion(f, y);
        worst = std::max(worst, std::abs(got - brute));
        for (auto& fs : f) {
            fs.hypotheses.push_back(random_matrix(H, D, rng, -5, 5));
            fs.confidences.push_back(0.5);
        }
        grew += distortion(f, y) > got;
    }
    report(5, "distortion oracle", worst <= 1e-10 && grew == 0,
           fmt("max deviation from brute force %.2g over 200 instances; %d increases after adding a hypothesis", worst,
               grew));
}

// 6 -----------------------------------------------------------------------

TrainConfig reduced(std::uint64_t seed, double eps) {
    TrainConfig tc;
    tc.epochs = reduced_epochs;
    tc.patience = reduced_patience;
    tc.seed = seed;
    tc.relax_epsilon = eps;
    return tc;
}

void multimodality() {
    std::vector<double> by_k[3];
    const std::size_t ks[3] = {1, 2, 4};
    for (std::uint64_t seed : seeds) {
        const TimeSeriesDataset ds = synth_bimodal(5000, seed);
        const auto test = eval_windows(ds, 16, 16, Split::test);
        for (int i = 0; i < 3; ++i) {
            ModelConfig mc;
            mc.hypotheses = ks[i];
            mc.init_seed = seed;
            const FitResult r = fit(ds, mc, reduced(seed, ks[i] == 1 ? 0.0 : 0.1));
            by_k[i].push_back(evaluate(r.params, mc, test).distortion);
        }
    }
    const double d1 = mean_of(by_k[0]), d2 = mean_of(by_k[1]), d4 = mean_of(by_k[2]);
    report(6, "multi-modality benefit", d2 <= 0.6 * d1 && d4 <= 1.05 * d2,
           fmt("mean distortion K=1 %.4g (%s) K=2 %.4g (%s) K=4 %.4g (%s); K2/K1 %.3f, K4/K2 %.3f", d1,
               join(by_k[0]).c_str(), d2, join(by_k[1]).c_str(), d4, join(by_k[2]).c_str(), d2 / d1, d4 / d2));
}

// 7 and 8 -----------------------------------------------------------------

struct ImbalanceRun {
    double entropy;
    double distortion;
};

ImbalanceRun imbalance_run(NormKind kind, std::uint64_t seed) {
    const TimeSeriesDataset ds = synth_scale_imbalance(5000, {1.0, 1000.0}, seed);
    ModelConfig mc;
    mc.channels = 2;
    mc.hypotheses = 4;
    mc.init_seed = seed;
    mc.norm.kind = kind;
    const FitResult r = fit(ds, mc, reduced(seed, 0.0));
    return {r.report.epochs.back().entropy, evaluate(r.params, mc, eval_windows(ds, 16, 16, Split::test)).distortion};
}

void collapse_and_ablation() {
    std::vector<ImbalanceRun> sin_runs, identity_runs;
    for (std::uint64_t seed : seeds) {
        sin_runs.push_back(imbalance_run(NormKind::sin, seed));
        identity_runs.push_back(imbalance_run(NormKind::identity, seed));
    }
    int lower = 0;
    bool sin_high = true;
    std::vector<double> e_sin, e_id;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        lower += identity_runs[i].entropy < sin_runs[i].entropy;
        sin_high = sin_high && sin_runs[i].entropy >= 0.8 * std::log(4.0);
        e_sin.push_back(sin_runs[i].entropy);
        e_id.push_back(identity_runs[i].entropy);
    }
    report(7, "collapse reproduction", lower >= 2 && sin_high,
           fmt("identity entropy below SIN in %d of 3 seeds; entropy identity %s, SIN %s (floor %.4g)", lower,
               join(e_id).c_str(), join(e_sin).c_str(), 0.8 * std::log(4.0)));

    std::vector<double> d_sin;
    for (const auto& r : sin_runs) d_sin.push_back(r.distortion);
    const double sin_mean = mean_of(d_sin);
    bool ok = true;
    std::string detail = fmt("mean distortion SIN %.5g (%s)", sin_mean, join(d_sin).c_str());
    for (NormKind kind : {NormKind::batch_stat, NormKind::layer_stat, NormKind::group_stat}) {
        std::vector<double> d;
        for (std::uint64_t seed : seeds) d.push_back(imbalance_run(kind, seed).distortion);
        const double m = mean_of(d);
        ok = ok && sin_mean <= m;
        detail += fmt(", %s %.5g (%s)", std::string(norm_kind_name(kind)).c_str(), m, join(d).c_str());
    }
    report(8, "normalization ablation direction", ok, detail);
}

// 9 -----------------------------------------------------------------------

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void determinism() {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "mhf_acceptance_determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string data = (dir / "d.csv").string();
    save_dataset(data, synth_bimodal(5000, 3141));
    std::ostringstream sink;
    int codes = 0;
    for (const char* run : {"a", "b"}) {
        codes += cli::run({"train", "--data", data, "--out", (dir / run).string(), "--seed", "3141", "--epochs", "20"},
                          sink, sink);
    }
    const std::string a = read_file(dir / "a" / "epochs.csv"), b = read_file(dir / "b" / "epochs.csv");
    const bool ok = codes == 0 && !a.empty() && a == b;
    report(9, "determinism", ok,
           fmt("two train runs, seed 3141: exit codes sum %d, epochs.csv %zu bytes, identical=%s", codes, a.size(),
               a == b ? "yes" : "no"));
    fs::remove_all(dir);
}

// 10 ----------------------------------------------------------------------

void efficiency() {
    std::mt19937_64 rng(10);
    std::uniform_int_distribution<std::size_t> dim(1, 32), chans(1, 4), heads(1, 16), hidden(1, 64);
    int exact = 0;
    for (int rep = 0; rep < 10; ++rep) {
        ModelConfig c;
        c.context_length = 1 + dim(rng);
        c.horizon = dim(rng);
        c.channels = chans(rng);
        c.hypotheses = heads(rng);
        c.head_hidden = hidden(rng);
        FlopCounter counter;
        (void)forward(random_matrix(c.context_length, c.channels, rng, -2, 2), init_params(c), c, &counter);
        exact += counter.flops == count_flops(c).total();
    }
    ModelConfig one, many;
    one.channels = many.channels = 2;
    one.hypotheses = 1;
    many.hypotheses = 16;
    std::vector<Matrix> batch;
    for (int b = 0; b < 64; ++b) batch.push_back(random_matrix(16, 2, rng, -2, 2));
    const double t1 = measure_latency(init_params(one), one, batch, 9);
    const double t16 = measure_latency(init_params(many), many, batch, 9);
    report(10, "efficiency plumbing", exact == 10 && t16 > t1,
           fmt("FLOP count exact on %d of 10 configs; median latency K=1 %.3g s, K=16 %.3g s", exact, t1, t16));
}

}  // namespace

int main() {
    const std::function<void()> criteria[] = {sin_correctness,  breakdown_invariance,  gradient_fidelity,
                                              loss_oracles,     distortion_oracle,     multimodality,
                                              collapse_and_ablation, determinism, efficiency};
    for (const auto& c : criteria) {
        try {
            c();
        } catch (const std::exception& e) {
            std::printf("FAIL error: %s\n", e.what());
            ++failures;
        }
    }
    std::printf("%d criterion failure(s)\n", failures);
    return failures == 0 ? 0 : 1;
}
