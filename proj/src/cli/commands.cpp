#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "mhf/checkpoint.hpp"
#include "mhf/cli.hpp"
#include "mhf/data.hpp"

namespace fs = std::filesystem;

namespace mhf::cli {

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string short_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string join_counts(const std::vector<std::uint64_t>& v, char sep = ' ') {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += sep;
        out += std::to_string(v[i]);
    }
    return out;
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "validation") return Split::validation;
    if (s == "all") return Split::all;
    return Split::test;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    return out;
}

TimeSeriesDataset load_training_data(const RunConfig& cfg) {
    if (cfg.data_path.empty()) throw ConfigError("no dataset given (--data)");
    if (!fs::exists(cfg.data_path)) throw IoError("dataset not found: " + cfg.data_path);
    TimeSeriesDataset ds = load_csv(cfg.data_path, cfg.data_header);
    ds.validate();
    return ds;
}

/// Model configuration for a run on `ds` seeded with `seed`.
ModelConfig model_for(const RunConfig& cfg, const TimeSeriesDataset& ds, std::uint64_t seed) {
    ModelConfig m = cfg.model;
    m.channels = ds.channels();
    m.init_seed = seed;
    m.validate();
    return m;
}

TrainConfig train_for(const RunConfig& cfg, std::uint64_t seed) {
    TrainConfig t = cfg.train;
    t.seed = seed;
    t.validate();
    return t;
}

void describe_model(ReportTree& node, const ModelConfig& m) {
    node.set("L", static_cast<std::uint64_t>(m.context_length));
    node.set("H", static_cast<std::uint64_t>(m.horizon));
    node.set("D", static_cast<std::uint64_t>(m.channels));
    node.set("K", static_cast<std::uint64_t>(m.hypotheses));
    node.set("head_hidden", static_cast<std::uint64_t>(m.head_hidden));
    node.set("norm", std::string(norm_kind_name(m.norm.kind)));
    node.set("trim_ratio", m.norm.trim_ratio);
    node.set("var_epsilon", m.norm.var_epsilon);
    node.set("group_count", static_cast<std::uint64_t>(m.norm.group_count));
    node.set("init_seed", m.init_seed);
    node.set("init_scale", m.init_scale);
    node.set("parameters", static_cast<std::uint64_t>(parameter_count(m)));
}

void describe_train(ReportTree& node, const TrainConfig& t) {
    node.set("epsilon", t.relax_epsilon);
    node.set("beta", t.beta);
    node.set("learning_rate", t.learning_rate);
    node.set("epochs", static_cast<std::uint64_t>(t.epochs));
    node.set("batches_per_epoch", static_cast<std::uint64_t>(t.batches_per_epoch));
    node.set("batch_size", static_cast<std::uint64_t>(t.batch_size));
    node.set("patience", static_cast<std::uint64_t>(t.patience));
    node.set("seed", t.seed);
}

std::vector<std::uint64_t> summed_utilization(const TrainReport& report) {
    std::vector<std::uint64_t> total;
    for (const EpochStats& e : report.epochs) {
        if (total.empty()) total.assign(e.utilization.size(), 0);
        for (std::size_t k = 0; k < e.utilization.size(); ++k) total[k] += e.utilization[k];
    }
    return total;
}

ReportTree train_report_tree(const TimeSeriesDataset& ds, const std::string& data_path, const ModelConfig& m,
                             const TrainConfig& t, const TrainReport& report) {
    ReportTree tree;
    auto& data = tree.section("data");
    data.set("path", data_path);
    data.set("T", static_cast<std::uint64_t>(ds.length()));
    data.set("D", static_cast<std::uint64_t>(ds.channels()));
    data.set("train_end", static_cast<std::uint64_t>(ds.train_end));
    data.set("val_end", static_cast<std::uint64_t>(ds.val_end));
    describe_model(tree.section("model"), m);
    describe_train(tree.section("training"), t);
    auto& res = tree.section("result");
    res.set("epochs_run", static_cast<std::uint64_t>(report.epochs.size()));
    res.set("best_epoch", static_cast<std::uint64_t>(report.best_epoch));
    res.set("best_val_distortion", report.best_val_distortion);
    res.set("stopped_early", report.stopped_early);
    res.set("selections", report.total_selections());
    const auto total = summed_utilization(report);
    res.set("utilization", join_counts(total));
    if (!report.epochs.empty()) {
        res.set("final_entropy", report.epochs.back().entropy);
        res.set("final_rwta_loss", report.epochs.back().rwta_loss);
        res.set("final_score_loss", report.epochs.back().score_loss);
    }
    return tree;
}

std::vector<Matrix> contexts_of(const std::vector<WindowPair>& windows) {
    std::vector<Matrix> out;
    out.reserve(windows.size());
    for (const auto& w : windows) out.push_back(w.x);
    return out;
}

/// Latent vec(Z) of every window, one row each.
Matrix latent_rows(const ModelParams& params, const ModelConfig& m, const std::vector<Matrix>& contexts) {
    const auto fc = forward_batch(contexts, params, m);
    const std::size_t n = m.latent_size();
    Matrix out(fc.size(), n);
    for (std::size_t i = 0; i < fc.size(); ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = fc[i].latent[j];
    return out;
}

}  // namespace

void write_epoch_csv(std::ostream& out, const TrainReport& report) {
    const std::size_t K = report.epochs.empty() ? 0 : report.epochs.front().utilization.size();
    out << "epoch,rwta_loss,score_loss,val_distortion,entropy";
    for (std::size_t k = 0; k < K; ++k) out << ",wins_" << k;
    out << '\n';
    for (const EpochStats& e : report.epochs) {
        out << e.epoch << ',' << num(e.rwta_loss) << ',' << num(e.score_loss) << ',' << num(e.val_distortion) << ','
            << num(e.entropy);
        for (auto u : e.utilization) out << ',' << u;
        out << '\n';
    }
}

TrainArtifacts cmd_train(const RunConfig& cfg, std::ostream& log) {
    const TimeSeriesDataset ds = load_training_data(cfg);
    const std::uint64_t seed = cfg.seeds.front();
    if (cfg.seeds.size() > 1) log << "train: using the first of " << cfg.seeds.size() << " seeds (" << seed << ")\n";
    const ModelConfig m = model_for(cfg, ds, seed);
    const TrainConfig t = train_for(cfg, seed);

    FitResult fit_result = fit(ds, m, t, {}, [&](const EpochStats& e) {
        log << "epoch " << e.epoch << " rwta=" << short_num(e.rwta_loss) << " score=" << short_num(e.score_loss)
            << " val=" << short_num(e.val_distortion) << " entropy=" << short_num(e.entropy) << '\n';
    });

    ensure_dir(cfg.out_dir);
    TrainArtifacts art{(fs::path(cfg.out_dir) / "checkpoint.mhf").string(),
                       (fs::path(cfg.out_dir) / "train_report.txt").string(),
                       (fs::path(cfg.out_dir) / "epochs.csv").string()};
    save_checkpoint(art.checkpoint, Checkpoint{m, fit_result.params});
    {
        auto out = open_out(art.report);
        train_report_tree(ds, cfg.data_path, m, t, fit_result.report).write(out);
    }
    {
        auto out = open_out(art.epochs_csv);
        write_epoch_csv(out, fit_result.report);
    }
    log << "best epoch " << fit_result.report.best_epoch << " validation distortion "
        << short_num(fit_result.report.best_val_distortion) << (fit_result.report.stopped_early ? " (early stop)" : "")
        << '\n'
        << "wrote " << art.checkpoint << ", " << art.report << ", " << art.epochs_csv << '\n';
    return art;
}

ReportTree cmd_eval(const RunConfig& cfg, std::ostream& log) {
    if (cfg.checkpoint_path.empty()) throw ConfigError("no checkpoint given (--checkpoint)");
    const Checkpoint ckpt = load_checkpoint(cfg.checkpoint_path);
    const TimeSeriesDataset ds = load_training_data(cfg);
    const ModelConfig& m = ckpt.config;
    if (m.channels != ds.channels()) {
        throw ConfigError("checkpoint expects D=" + std::to_string(m.channels) + " channels but dataset has D=" +
                          std::to_string(ds.channels()));
    }
    const auto windows = eval_windows(ds, m.context_length, m.horizon, parse_split(cfg.split));
    CrpsOptions opts;
    opts.weighted = cfg.crps_weighted;
    const EvalResult res = evaluate(ckpt.params, m, windows, opts);
    const FlopBreakdown flops = count_flops(m);
    const auto contexts = contexts_of(windows);
    const double latency = measure_latency(ckpt.params, m, contexts, cfg.latency_repeats);

    ReportTree tree;
    describe_model(tree.section("model"), m);
    auto& ev = tree.section("eval");
    ev.set("data", cfg.data_path);
    ev.set("split", cfg.split);
    ev.set("n_windows", static_cast<std::uint64_t>(res.n_windows));
    ev.set("distortion", res.distortion);
    ev.set("crps_sum", res.crps_sum);
    ev.set("crps_sum_raw", res.crps_sum_raw);
    ev.set("crps_weighted", cfg.crps_weighted);
    ev.set("crps_reported", std::string(cfg.crps_raw ? "raw" : "normalized"));
    std::string per_channel;
    for (std::size_t d = 0; d < res.per_channel_crps.size(); ++d) per_channel += (d ? " " : "") + num(res.per_channel_crps[d]);
    ev.set("per_channel_crps", per_channel);
    ev.set("utilization", join_counts(res.utilization));
    auto& fl = tree.section("flops");
    fl.set("normalization", flops.normalization);
    fl.set("encoder", flops.encoder);
    fl.set("trajectory_heads", flops.trajectory_heads);
    fl.set("confidence_heads", flops.confidence_heads);
    fl.set("denormalization", flops.denormalization);
    fl.set("total", flops.total());
    auto& lat = tree.section("latency");
    lat.set("batch_windows", static_cast<std::uint64_t>(contexts.size()));
    lat.set("repeats", static_cast<std::uint64_t>(cfg.latency_repeats));
    lat.set("median_seconds", latency);

    ensure_dir(cfg.out_dir);
    const std::string path = (fs::path(cfg.out_dir) / "eval_report.txt").string();
    {
        auto out = open_out(path);
        tree.write(out);
    }
    log << "windows " << res.n_windows << " distortion " << short_num(res.distortion) << " crps_sum"
        << (cfg.crps_raw ? " (raw) " : " ") << short_num(cfg.crps_raw ? res.crps_sum_raw : res.crps_sum) << " flops "
        << flops.total() << " latency " << short_num(latency) << " s\n"
        << "wrote " << path << '\n';
    return tree;
}

std::string cmd_forecast(const RunConfig& cfg, std::ostream& log) {
    if (cfg.checkpoint_path.empty()) throw ConfigError("no checkpoint given (--checkpoint)");
    if (cfg.context_path.empty()) throw ConfigError("no context CSV given (--context)");
    const Checkpoint ckpt = load_checkpoint(cfg.checkpoint_path);
    const ModelConfig& m = ckpt.config;
    std::ifstream in(cfg.context_path);
    if (!in) throw IoError("cannot open context CSV: " + cfg.context_path);
    const Matrix context = parse_csv(in, cfg.data_header, cfg.context_path).values;
    if (context.rows() != m.context_length) {
        throw ConfigError("context has " + std::to_string(context.rows()) + " rows but the model needs L=" +
                          std::to_string(m.context_length));
    }
    if (context.cols() != m.channels) {
        throw ConfigError("context has D=" + std::to_string(context.cols()) + " columns but the checkpoint expects D=" +
                          std::to_string(m.channels));
    }
    const ForecastSet fc = forward(context, ckpt.params, m);

    ensure_dir(cfg.out_dir);
    const std::string path = (fs::path(cfg.out_dir) / "forecast.csv").string();
    {
        auto out = open_out(path);
        out << "hypothesis,step";
        for (std::size_t d = 0; d < m.channels; ++d) out << ",c" << d;
        out << ",confidence\n";
        for (std::size_t k = 0; k < fc.hypotheses.size(); ++k)
            for (std::size_t t = 0; t < m.horizon; ++t) {
                out << k << ',' << t;
                for (std::size_t d = 0; d < m.channels; ++d) out << ',' << num(fc.hypotheses[k](t, d));
                out << ',' << num(fc.confidences[k]) << '\n';
            }
    }
    log << "wrote " << path << " (" << m.hypotheses * m.horizon << " rows)\n";
    if (cfg.plot) {
        const std::string svg_path = (fs::path(cfg.out_dir) / "forecast.svg").string();
        auto out = open_out(svg_path);
        out << forecast_svg(context, fc);
        log << "wrote " << svg_path << '\n';
    }
    return path;
}

// ---------------------------------------------------------------------------
// Ablation

namespace {

struct AblationRun {
    std::string value;
    ModelConfig model;
    TrainConfig train;
    double distortion = 0.0;
    double crps_sum = 0.0;
    double entropy = 0.0;
    ModelParams params;
};

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& v) {
    MeanStd r;
    if (v.empty()) return r;
    r.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - r.mean) * (x - r.mean);
        r.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return r;
}

std::vector<std::string> axis_defaults(const std::string& axis) {
    if (axis == "norm-kind") return {"sin", "batch", "layer", "group"};
    if (axis == "K-sweep") return {"1", "2", "4", "8", "16"};
    return {"0", "0.05", "0.1", "0.2"};
}

std::size_t thread_cap(std::size_t jobs) {
    std::size_t n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("MHF_THREADS")) {
        char* end = nullptr;
        const unsigned long v = std::strtoul(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) n = v;
    }
    return std::min(n, std::max<std::size_t>(1, jobs));
}

}  // namespace

std::string cmd_ablate(const RunConfig& cfg, std::ostream& log) {
    if (cfg.axis != "norm-kind" && cfg.axis != "K-sweep" && cfg.axis != "epsilon-sweep") {
        throw ConfigError("axis: expected norm-kind, K-sweep or epsilon-sweep, got '" + cfg.axis + "'");
    }
    const TimeSeriesDataset ds = load_training_data(cfg);
    std::vector<std::string> values = cfg.axis_values.empty() ? axis_defaults(cfg.axis) : cfg.axis_values;
    if (cfg.axis == "K-sweep" && std::find(values.begin(), values.end(), "1") == values.end()) {
        values.insert(values.begin(), "1");
    }

    // One configuration per axis value, validated before any training starts.
    std::vector<std::pair<ModelConfig, TrainConfig>> variants;
    for (const std::string& v : values) {
        RunConfig c = cfg;
        Settings s;
        if (cfg.axis == "norm-kind") s["norm"] = v;
        if (cfg.axis == "K-sweep") s["K"] = v;
        if (cfg.axis == "epsilon-sweep") s["epsilon"] = v;
        apply_settings(c, s, "ablation value");
        if (cfg.axis == "K-sweep" && c.model.hypotheses == 1) c.train.relax_epsilon = 0.0;
        variants.emplace_back(model_for(c, ds, cfg.seeds.front()), train_for(c, cfg.seeds.front()));
    }

    std::vector<AblationRun> runs;
    for (std::size_t i = 0; i < values.size(); ++i)
        for (std::uint64_t seed : cfg.seeds) {
            AblationRun r;
            r.value = values[i];
            r.model = variants[i].first;
            r.model.init_seed = seed;
            r.train = variants[i].second;
            r.train.seed = seed;
            runs.push_back(std::move(r));
        }

    const auto test_windows = eval_windows(ds, cfg.model.context_length, cfg.model.horizon, Split::test);
    const fs::path root(cfg.out_dir);
    ensure_dir(cfg.out_dir);

    std::mutex log_mutex;
    std::exception_ptr failure;
    std::size_t next = 0;
    auto worker = [&] {
        for (;;) {
            std::size_t i;
            {
                std::lock_guard lock(log_mutex);
                if (next >= runs.size() || failure) return;
                i = next++;
            }
            AblationRun& r = runs[i];
            try {
                FitResult fr = fit(ds, r.model, r.train);
                const EvalResult ev = evaluate(fr.params, r.model, test_windows);
                r.distortion = ev.distortion;
                r.crps_sum = ev.crps_sum;
                r.entropy = fr.report.epochs.back().entropy;
                const fs::path dir = root / "runs" / (r.value + "-seed" + std::to_string(r.train.seed));
                ensure_dir(dir.string());
                {
                    auto out = open_out((dir / "epochs.csv").string());
                    write_epoch_csv(out, fr.report);
                }
                {
                    auto out = open_out((dir / "train_report.txt").string());
                    train_report_tree(ds, cfg.data_path, r.model, r.train, fr.report).write(out);
                }
                r.params = std::move(fr.params);
                std::lock_guard lock(log_mutex);
                log << cfg.axis << '=' << r.value << " seed=" << r.train.seed << " distortion=" << short_num(r.distortion)
                    << " crps_sum=" << short_num(r.crps_sum) << " entropy=" << short_num(r.entropy) << '\n';
            } catch (...) {
                std::lock_guard lock(log_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };
    const std::size_t n_threads = thread_cap(runs.size());
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    std::string seeds_text;
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s) seeds_text += (s ? ";" : "") + std::to_string(cfg.seeds[s]);

    const std::string path = (root / "ablation.csv").string();
    {
        auto out = open_out(path);
        out << "axis,value,norm,K,epsilon,seeds,distortion_mean,distortion_std,crps_sum_mean,crps_sum_std,"
               "entropy_mean,entropy_std\n";
        const std::size_t per = cfg.seeds.size();
        for (std::size_t i = 0; i < values.size(); ++i) {
            std::vector<double> dist, crps, ent;
            for (std::size_t s = 0; s < per; ++s) {
                const AblationRun& r = runs[i * per + s];
                dist.push_back(r.distortion);
                crps.push_back(r.crps_sum);
                ent.push_back(r.entropy);
            }
            const auto d = mean_std(dist), c = mean_std(crps), e = mean_std(ent);
            const auto& [m, t] = variants[i];
            out << cfg.axis << ',' << values[i] << ',' << norm_kind_name(m.norm.kind) << ',' << m.hypotheses << ','
                << num(t.relax_epsilon) << ',' << seeds_text << ',' << num(d.mean) << ',' << num(d.std) << ','
                << num(c.mean) << ',' << num(c.std) << ',' << num(e.mean) << ',' << num(e.std) << '\n';
        }
    }
    log << "wrote " << path << '\n';

    if (cfg.axis == "norm-kind") {
        // Latents of the first-seed model of every kind on the same batch.
        const auto contexts = contexts_of(test_windows);
        std::vector<Matrix> latents;
        const std::size_t per = cfg.seeds.size();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const AblationRun& r = runs[i * per];
            latents.push_back(latent_rows(r.params, r.model, contexts));
        }
        const std::string cka_path = (root / "cka.csv").string();
        auto out = open_out(cka_path);
        const std::size_t n = values.size();
        std::vector<double> cka(n * n, 1.0);
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = a + 1; b < n; ++b) cka[a * n + b] = cka[b * n + a] = linear_cka(latents[a], latents[b]);
        out << "kind_a,kind_b,cka\n";
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = 0; b < n; ++b) out << values[a] << ',' << values[b] << ',' << num(cka[a * n + b]) << '\n';
        log << "wrote " << cka_path << '\n';
    }
    return path;
}

std::string cmd_synth(const RunConfig& cfg, std::ostream& log) {
    const std::uint64_t seed = cfg.seeds.front();
    TimeSeriesDataset ds;
    if (cfg.synth_kind == "bimodal") {
        BimodalOptions opts;
        opts.context = cfg.model.context_length;
        opts.horizon = cfg.model.horizon;
        ds = synth_bimodal(cfg.synth_length, seed, opts);
    } else if (cfg.synth_kind == "scale-imbalance") {
        ds = synth_scale_imbalance(cfg.synth_length, cfg.scales, seed);
    } else if (cfg.synth_kind == "spiky") {
        ds = synth_spiky(cfg.synth_length, cfg.spike_prob, cfg.spike_mag, seed);
    } else {
        throw ConfigError("kind: unknown synthetic kind '" + cfg.synth_kind +
                          "' (valid kinds: bimodal, scale-imbalance, spiky)");
    }

    fs::path path(cfg.out_dir);
    if (path.extension() != ".csv") {
        ensure_dir(cfg.out_dir);
        path /= cfg.synth_kind + ".csv";
    } else if (path.has_parent_path()) {
        ensure_dir(path.parent_path().string());
    }
    save_dataset(path.string(), ds);

    log << "T=" << ds.length() << " D=" << ds.channels() << " std=";
    for (std::size_t d = 0; d < ds.channels(); ++d) {
        const auto col = ds.values.column_values(d);
        const double mean = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(col.size());
        double ss = 0.0;
        for (double x : col) ss += (x - mean) * (x - mean);
        log << (d ? "," : "") << short_num(std::sqrt(ss / static_cast<double>(col.size() - 1)));
    }
    log << "\nwrote " << path.string() << " and " << sidecar_path(path.string()) << '\n';
    return path.string();
}

}  // namespace mhf::cli
