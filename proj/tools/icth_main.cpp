// icth: interval-censored transformer Hawkes toolkit.
//
// Subcommands: simulate | reconstruct | downsample | fit | pretrain |
// finetune-classify | finetune-popularity | benchmark | embed | gradcheck.
// Every run resolves all randomness from --seed (or the config seed), writes
// outputs atomically, and logs its resolved configuration to stderr.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "icth/cascade.hpp"
#include "icth/cascade_io.hpp"
#include "icth/eval.hpp"
#include "icth/fit.hpp"
#include "icth/forward.hpp"
#include "icth/gradcheck.hpp"
#include "icth/heads.hpp"
#include "icth/mbp.hpp"
#include "icth/model.hpp"
#include "icth/parametric.hpp"
#include "icth/parametric_io.hpp"
#include "icth/train.hpp"
#include "icth/util.hpp"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

json load_config(const std::string& path) {
    try {
        return json::parse(icth::read_file(path));
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("config " + path + ": " + e.what());
    }
}

void log_resolved(const std::string& cmd, const json& cfg) {
    std::cerr << "[icth] " << cmd << " resolved config: " << cfg.dump() << "\n";
}

icth::models::ParametricModel model_from_config(const json& j) {
    icth::models::ParametricModel m;
    m.family = icth::models::family_from_name(j.value("family", "hawkes"));
    const json& k = j.at("kernel");
    std::string kind = k.value("kind", "exponential");
    if (kind == "exponential") m.kernel.kind = icth::models::KernelKind::Exponential;
    else if (kind == "powerlaw") m.kernel.kind = icth::models::KernelKind::PowerLaw;
    else throw std::invalid_argument("unknown kernel kind: " + kind);
    m.kernel.kappa = k.value("kappa", 0.0);
    m.kernel.theta = k.value("theta", 1.0);
    m.kernel.c = k.value("c", 1.0);
    m.mu = j.value("mu", 0.0);
    m.N = j.value("N", static_cast<std::int64_t>(0));
    return m;
}

icth::nn::ICTHConfig icth_config_from(const json& j) {
    return icth::nn::config_from_json(j);
}

icth::train::ContrastiveConfig contrastive_from(const json& j, std::uint64_t seed) {
    icth::train::ContrastiveConfig cc;
    cc.temperature = j.value("temperature", cc.temperature);
    cc.batch_groups = j.value("batch_groups", cc.batch_groups);
    cc.proj_dim = j.value("proj_dim", cc.proj_dim);
    cc.epochs = j.value("epochs", cc.epochs);
    cc.learning_rate = j.value("learning_rate", cc.learning_rate);
    cc.grad_clip = j.value("grad_clip", cc.grad_clip);
    cc.backbone_anchor_decay = j.value("backbone_anchor_decay", cc.backbone_anchor_decay);
    cc.seed = seed;
    return cc;
}

std::vector<icth::data::Cascade> flatten(const std::vector<icth::data::CascadeGroup>& groups) {
    std::vector<icth::data::Cascade> out;
    for (const auto& g : groups)
        for (const auto& c : g.cascades) out.push_back(c);
    return out;
}

std::vector<std::pair<std::string, const icth::nn::Mat*>> projection_tensors(
    const icth::train::ProjectionHead& proj) {
    std::vector<std::pair<std::string, const icth::nn::Mat*>> out;
    icth::train::for_each_tensor(const_cast<icth::train::ProjectionHead&>(proj),
                                 [&](const std::string& n, icth::nn::Mat& m) {
                                     out.emplace_back("proj." + n, &m);
                                 });
    return out;
}

// ---- subcommand bodies -------------------------------------------------------

int cmd_simulate(const std::string& config_path, const std::string& family_flag,
                 const std::string& out_path, std::optional<std::uint64_t> seed_flag) {
    json cfg = load_config(config_path);
    if (!family_flag.empty()) cfg["family"] = family_flag;
    std::uint64_t seed = seed_flag.value_or(cfg.value("seed", 0ULL));
    cfg["seed"] = seed;
    log_resolved("simulate", cfg);

    icth::models::ParametricModel model = model_from_config(cfg);
    double horizon = cfg.at("horizon").get<double>();
    int n_cascades = cfg.value("n_cascades", 1);  // per group
    int n_groups = cfg.value("n_groups", 1);
    icth::models::SimulateOptions opts;
    opts.immigrant_at_zero = cfg.value("immigrant_at_zero", model.mu == 0.0);
    opts.max_events = cfg.value("max_events", static_cast<std::size_t>(100000));

    const std::string base_id = cfg.value("group_id", std::string("simulated"));
    std::vector<icth::data::CascadeGroup> groups;
    for (int gi = 0; gi < n_groups; ++gi) {
        icth::data::CascadeGroup g;
        g.group_id = n_groups > 1 ? base_id + "-" + std::to_string(gi) : base_id;
        if (cfg.contains("label") && !cfg["label"].is_null()) g.label = cfg["label"].get<std::string>();
        for (int i = 0; i < n_cascades; ++i) {
            opts.id = g.group_id + "/" + std::to_string(i);
            std::uint64_t cascade_seed =
                icth::mix_seed(seed, static_cast<std::uint64_t>(gi) * 1000003 + static_cast<std::uint64_t>(i));
            if (model.family == icth::models::Family::MBP) {
                auto mode = cfg.value("mbp_mode", std::string("background")) == "immigrant"
                                ? icth::models::MbpMode::ImmigrantAtZero
                                : icth::models::MbpMode::Background;
                g.cascades.push_back(icth::models::simulate_mbp(
                    model, horizon, cascade_seed, cfg.value("mbp_grid_step", 0.0), mode, opts.id));
            } else {
                g.cascades.push_back(icth::models::simulate(model, horizon, cascade_seed, opts));
            }
        }
        groups.push_back(std::move(g));
    }
    icth::data::write_groups(groups, out_path);
    std::cerr << "[icth] wrote " << n_groups << " group(s) x " << n_cascades << " cascades to "
              << out_path << "\n";
    return kExitOk;
}

int cmd_reconstruct(const std::string& in_path, const std::string& out_path, bool verbose) {
    auto raws = icth::data::read_raw_events(in_path);
    icth::data::CascadeGroup g;
    g.group_id = "reconstructed";
    std::size_t warnings = 0;
    for (const auto& rc : raws) {
        auto res = icth::data::reconstruct_missing_counts(rc.events, rc.horizon, rc.cascade_id);
        warnings += res.warnings.size();
        if (verbose)
            for (const auto& w : res.warnings)
                std::cerr << "[icth] " << rc.cascade_id << ": " << w.message << "\n";
        g.cascades.push_back(std::move(res.cascade));
    }
    icth::data::write_groups({g}, out_path);
    std::cerr << "[icth] reconstructed " << raws.size() << " cascades (" << warnings << " warnings)\n";
    return kExitOk;
}

int cmd_downsample(const std::string& in_path, const std::string& out_path, double p,
                   std::uint64_t seed) {
    auto groups = icth::data::read_groups(in_path);
    std::uint64_t counter = 0;
    for (auto& g : groups)
        for (auto& c : g.cascades) c = icth::data::downsample(c, p, icth::mix_seed(seed, counter++));
    icth::data::write_groups(groups, out_path);
    return kExitOk;
}

int cmd_fit(const std::string& config_path, const std::string& family_flag, const std::string& in_path,
            const std::string& out_path, std::optional<std::uint64_t> seed_flag) {
    json cfg = load_config(config_path);
    if (!family_flag.empty()) cfg["family"] = family_flag;
    std::uint64_t seed = seed_flag.value_or(cfg.value("seed", 0ULL));
    cfg["seed"] = seed;
    log_resolved("fit", cfg);

    icth::models::Family family = icth::models::family_from_name(cfg.at("family").get<std::string>());
    icth::models::ParametricModel init = model_from_config(cfg.at("init"));
    init.family = family;

    icth::models::FitConfig fc;
    if (cfg.contains("optimizer")) {
        const json& oj = cfg["optimizer"];
        fc.max_iterations = oj.value("max_iterations", fc.max_iterations);
        fc.learning_rate = oj.value("learning_rate", fc.learning_rate);
        fc.grad_tol = oj.value("grad_tol", fc.grad_tol);
        fc.mbp_grid_step = oj.value("mbp_grid_step", fc.mbp_grid_step);
        if (oj.value("mbp_mode", std::string("background")) == "immigrant")
            fc.mbp_mode = icth::models::MbpMode::ImmigrantAtZero;
    }
    fc.seed = seed;

    auto cascades = flatten(icth::data::read_groups(in_path));
    auto res = icth::models::fit(cascades, family, init, fc);
    icth::models::write_model(res.model, out_path, res.final_ll);
    std::cerr << "[icth] fit: ll=" << res.final_ll << " iters=" << res.iterations
              << " converged=" << (res.converged ? "yes" : "no") << "\n";
    return kExitOk;
}

int cmd_pretrain(const std::string& config_path, const std::string& out_path,
                 const std::string& metrics_path, std::optional<std::uint64_t> seed_flag) {
    json cfg = load_config(config_path);
    std::uint64_t seed = seed_flag.value_or(cfg.value("seed", 0ULL));
    cfg["seed"] = seed;
    log_resolved("pretrain", cfg);

    icth::nn::ICTHConfig mc = icth_config_from(cfg.value("model", json::object()));
    icth::train::ContrastiveConfig cc = contrastive_from(cfg.value("contrastive", json::object()), seed);
    auto groups = icth::data::read_groups(cfg.at("data").get<std::string>());

    icth::nn::ICTHWeights w = icth::nn::init_weights(mc, icth::mix_seed(seed, 0x111));
    icth::train::ProjectionHead proj = icth::train::init_projection(
        mc.d_m, cc.proj_dim > 0 ? cc.proj_dim : std::max(1, mc.d_m / 2), icth::mix_seed(seed, 0x222));

    auto res = icth::train::pretrain(w, proj, mc, groups, cc);
    for (const auto& warning : res.warnings) std::cerr << "[icth] " << warning << "\n";

    icth::nn::save_checkpoint(out_path, mc, w, projection_tensors(proj));
    if (!metrics_path.empty()) {
        std::string lines;
        for (std::size_t e = 0; e < res.loss_curve.size(); ++e)
            lines += "{\"epoch\":" + std::to_string(e) + ",\"loss\":" + icth::fmt17(res.loss_curve[e]) +
                     ",\"val_metric\":null}\n";
        icth::atomic_write_file(metrics_path, lines);
    }
    std::cerr << "[icth] pretrain: initial=" << res.initial_loss << " best=" << res.best_loss
              << " (epoch " << res.best_epoch << ")\n";
    return kExitOk;
}

int cmd_finetune_classify(const std::string& config_path, const std::string& out_path,
                          const std::string& out_checkpoint, const std::string& metrics_path,
                          std::optional<std::uint64_t> seed_flag) {
    json cfg = load_config(config_path);
    std::uint64_t seed = seed_flag.value_or(cfg.value("seed", 0ULL));
    cfg["seed"] = seed;
    log_resolved("finetune-classify", cfg);

    auto ck = icth::nn::load_checkpoint(cfg.at("checkpoint").get<std::string>());
    icth::nn::ICTHWeights w = icth::nn::weights_from_checkpoint(ck);
    auto groups = icth::data::read_groups(cfg.at("data").get<std::string>());

    icth::train::ClassifyOptions opts;
    opts.train_fraction = cfg.value("train_fraction", opts.train_fraction);
    opts.val_fraction = cfg.value("val_fraction", opts.val_fraction);
    opts.max_epochs = cfg.value("max_epochs", opts.max_epochs);
    opts.patience = cfg.value("patience", opts.patience);
    opts.learning_rate = cfg.value("learning_rate", opts.learning_rate);
    opts.unfreeze = cfg.value("unfreeze", false);
    opts.backbone_lr = cfg.value("backbone_lr", opts.backbone_lr);
    opts.split_seed = icth::mix_seed(seed, 1);
    opts.train_seed = icth::mix_seed(seed, 2);

    auto res = icth::train::finetune_classify(w, ck.config, groups, opts);

    std::string out = "{\"classes\":[";
    for (std::size_t i = 0; i < res.classes.size(); ++i) {
        if (i) out += ',';
        out += "\"" + icth::json_escape(res.classes[i]) + "\"";
    }
    out += "],\"test_macro_f1\":" + icth::fmt17(res.test_macro_f1) +
           ",\"train_macro_f1\":" + icth::fmt17(res.train_macro_f1) + ",\"confusion\":[";
    for (int r = 0; r < res.confusion.n_classes; ++r) {
        if (r) out += ',';
        out += '[';
        for (int c = 0; c < res.confusion.n_classes; ++c) {
            if (c) out += ',';
            out += std::to_string(res.confusion.at(r, c));
        }
        out += ']';
    }
    out += "],\"epochs_run\":" + std::to_string(res.val_curve.size()) + "}\n";
    icth::atomic_write_file(out_path, out);

    if (!metrics_path.empty()) {
        std::string lines;
        for (std::size_t e = 0; e < res.val_curve.size(); ++e)
            lines += "{\"epoch\":" + std::to_string(e) + ",\"loss\":null,\"val_metric\":" +
                     icth::fmt17(res.val_curve[e]) + "}\n";
        icth::atomic_write_file(metrics_path, lines);
    }

    if (!out_checkpoint.empty()) {
        icth::nn::Mat fmean = icth::nn::Mat::row_vector(res.feature_mean);
        icth::nn::Mat fstd = icth::nn::Mat::row_vector(res.feature_std);
        std::vector<std::pair<std::string, const icth::nn::Mat*>> extra = {
            {"classifier.w", &res.head.w},
            {"classifier.b", &res.head.b},
            {"classifier.feature_mean", &fmean},
            {"classifier.feature_std", &fstd}};
        icth::nn::save_checkpoint(out_checkpoint, ck.config, w, extra);
    }
    std::cerr << "[icth] classify: test macro-F1=" << res.test_macro_f1 << "\n";
    return kExitOk;
}

int cmd_finetune_popularity(const std::string& config_path, const std::string& out_path,
                            std::optional<std::uint64_t> seed_flag) {
    json cfg = load_config(config_path);
    std::uint64_t seed = seed_flag.value_or(cfg.value("seed", 0ULL));
    cfg["seed"] = seed;
    log_resolved("finetune-popularity", cfg);

    auto ck = icth::nn::load_checkpoint(cfg.at("checkpoint").get<std::string>());
    icth::nn::ICTHWeights w = icth::nn::weights_from_checkpoint(ck);
    auto cascades = flatten(icth::data::read_groups(cfg.at("data").get<std::string>()));

    icth::train::PopularityOptions opts;
    opts.t_obs = cfg.value("t_obs", 0.0);
    opts.t_final = cfg.value("t_final", 0.0);
    opts.train_fraction = cfg.value("train_fraction", opts.train_fraction);
    opts.epochs = cfg.value("epochs", opts.epochs);
    opts.learning_rate = cfg.value("learning_rate", opts.learning_rate);
    opts.split_seed = icth::mix_seed(seed, 1);
    opts.train_seed = icth::mix_seed(seed, 2);

    auto res = icth::train::finetune_popularity(w, ck.config, cascades, opts);
    for (const auto& warning : res.warnings) std::cerr << "[icth] " << warning << "\n";

    std::string out = "{\"n_test\":" + std::to_string(res.test_apes.size()) +
                      ",\"mean_ape\":" + icth::fmt17(res.mean_ape) +
                      ",\"median_ape\":" + icth::fmt17(res.median_ape) +
                      ",\"baseline_mean_ape\":" + icth::fmt17(res.baseline_mean_ape) +
                      ",\"baseline_median_ape\":" + icth::fmt17(res.baseline_median_ape) + ",\"apes\":[";
    for (std::size_t i = 0; i < res.test_apes.size(); ++i) {
        if (i) out += ',';
        out += icth::fmt17(res.test_apes[i]);
    }
    out += "]}\n";
    icth::atomic_write_file(out_path, out);
    std::cerr << "[icth] popularity: mean APE=" << res.mean_ape << " median=" << res.median_ape << "\n";
    return kExitOk;
}

int cmd_benchmark(const std::string& config_path, const std::string& out_path,
                  std::optional<std::uint64_t> seed_flag) {
    json cfg = load_config(config_path);
    std::uint64_t seed = seed_flag.value_or(cfg.value("seed", 0ULL));
    cfg["seed"] = seed;
    log_resolved("benchmark", cfg);

    icth::eval::SyntheticBenchConfig bench;
    const json& bj = cfg.value("bench", json::object());
    bench.n_groups_per_family = bj.value("n_groups_per_family", bench.n_groups_per_family);
    bench.cascades_per_group = bj.value("cascades_per_group", bench.cascades_per_group);
    bench.horizon = bj.value("horizon", bench.horizon);
    if (bj.contains("p_missing")) bench.p_missing = bj["p_missing"].get<std::vector<double>>();
    bench.max_events_per_cascade = bj.value("max_events_per_cascade", bench.max_events_per_cascade);
    bench.seed = seed;

    icth::eval::BenchmarkRunConfig run;
    run.model = icth_config_from(cfg.value("model", json::object()));
    run.contrastive = contrastive_from(cfg.value("contrastive", json::object()), icth::mix_seed(seed, 0x333));
    run.knn_k = cfg.value("knn_k", run.knn_k);
    run.eval_seed = icth::mix_seed(seed, 0x444);
    run.embeddings_out_prefix = cfg.value("embeddings_out_prefix", std::string());

    auto reports = icth::eval::run_downsampling_benchmark(bench, run);
    std::string out = "{\"reports\":[";
    for (std::size_t i = 0; i < reports.size(); ++i) {
        if (i) out += ',';
        out += icth::eval::report_to_json(reports[i]);
    }
    out += "]}\n";
    icth::atomic_write_file(out_path, out);
    for (const auto& r : reports)
        std::cerr << "[icth] p_missing=" << r.p_missing << " retrieval=" << r.retrieval
                  << " knn=" << r.knn << " silhouette=" << r.silhouette_score << " ("
                  << r.runtime_seconds << " s)\n";
    return kExitOk;
}

int cmd_embed(const std::string& checkpoint_path, const std::string& in_path, const std::string& out_path) {
    auto ck = icth::nn::load_checkpoint(checkpoint_path);
    icth::nn::ICTHWeights w = icth::nn::weights_from_checkpoint(ck);
    auto groups = icth::data::read_groups(in_path);
    auto embs = icth::train::detail::embed_groups(w, ck.config, groups);
    std::vector<std::string> ids, labels;
    for (const auto& g : groups) {
        ids.push_back(g.group_id);
        labels.push_back(g.label.value_or(""));
    }
    icth::eval::export_embeddings(ids, labels, embs, out_path);
    std::cerr << "[icth] wrote " << embs.size() << " group embeddings to " << out_path << "\n";
    return kExitOk;
}

int cmd_gradcheck(bool tiny, std::uint64_t seed, const std::string& out_path) {
    (void)tiny;  // the tiny battery is the only mode
    auto res = icth::train::run_tiny_gradcheck(seed);
    double max_err = res.max_rel_err();
    std::printf("icth_loglik   max rel err: %.3e\n", res.icth.max_rel_err);
    std::printf("ntxent        max rel err: %.3e\n", res.ntxent.max_rel_err);
    std::printf("classify_head max rel err: %.3e\n", res.classify.max_rel_err);
    std::printf("pop_head      max rel err: %.3e\n", res.popularity.max_rel_err);
    std::printf("max relative gradient error: %.6e\n", max_err);
    if (!out_path.empty()) {
        std::string out = "{\"icth\":" + icth::fmt17(res.icth.max_rel_err) +
                          ",\"ntxent\":" + icth::fmt17(res.ntxent.max_rel_err) +
                          ",\"classify\":" + icth::fmt17(res.classify.max_rel_err) +
                          ",\"popularity\":" + icth::fmt17(res.popularity.max_rel_err) +
                          ",\"max\":" + icth::fmt17(max_err) + "}\n";
        icth::atomic_write_file(out_path, out);
    }
    return max_err < 1e-4 ? kExitOk : kExitValidation;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"interval-censored transformer Hawkes toolkit"};
    app.require_subcommand(1);

    std::string config_path, in_path, out_path, metrics_path, family_flag, checkpoint_path,
        out_checkpoint;
    double p_missing = 0.0;
    std::optional<std::uint64_t> seed_flag;
    std::uint64_t seed_value = 0;
    bool verbose = false, tiny = false;
    app.add_flag("--verbose", verbose, "verbose logging");

    auto add_seed = [&](CLI::App* cmd) { cmd->add_option("--seed", seed_value, "master seed"); };

    auto* sim = app.add_subcommand("simulate", "sample cascades from a parametric model");
    sim->add_option("--config", config_path, "model config JSON")->required();
    sim->add_option("--family", family_flag, "override family: hawkes|hawkesn");
    sim->add_option("--out", out_path, "output cascade-group JSONL")->required();
    add_seed(sim);

    auto* rec = app.add_subcommand("reconstruct", "rebuild censored cascades from raw retweet counts");
    rec->add_option("--in", in_path, "raw-event JSONL")->required();
    rec->add_option("--out", out_path, "output cascade-group JSONL")->required();

    auto* ds = app.add_subcommand("downsample", "randomly remove events, folding counts into intervals");
    ds->add_option("--in", in_path, "input cascade-group JSONL")->required();
    ds->add_option("--out", out_path, "output cascade-group JSONL")->required();
    ds->add_option("--p", p_missing, "removal probability in [0,1]")->required();
    add_seed(ds);

    auto* fit = app.add_subcommand("fit", "maximum-likelihood fit of a parametric model");
    fit->add_option("--config", config_path, "fit config JSON")->required();
    fit->add_option("--family", family_flag, "override family: hawkes|hawkesn|mbp");
    fit->add_option("--in", in_path, "training cascade-group JSONL")->required();
    fit->add_option("--out", out_path, "output model JSON")->required();
    add_seed(fit);

    auto* pt = app.add_subcommand("pretrain", "contrastive pre-training over cascade groups");
    pt->add_option("--config", config_path, "training config JSON")->required();
    pt->add_option("--out", out_path, "output checkpoint JSON")->required();
    pt->add_option("--metrics", metrics_path, "per-epoch metrics JSONL");
    add_seed(pt);

    auto* fc = app.add_subcommand("finetune-classify", "train a category head on group embeddings");
    fc->add_option("--config", config_path, "config JSON")->required();
    fc->add_option("--out", out_path, "output metrics JSON")->required();
    fc->add_option("--out-checkpoint", out_checkpoint, "checkpoint with the trained head");
    fc->add_option("--metrics", metrics_path, "per-epoch validation metrics JSONL");
    add_seed(fc);

    auto* fp = app.add_subcommand("finetune-popularity", "train a popularity head, report APE");
    fp->add_option("--config", config_path, "config JSON")->required();
    fp->add_option("--out", out_path, "output metrics JSON")->required();
    add_seed(fp);

    auto* bm = app.add_subcommand("benchmark", "down-sampling robustness benchmark");
    bm->add_option("--config", config_path, "benchmark config JSON")->required();
    bm->add_option("--out", out_path, "output report JSON")->required();
    add_seed(bm);

    auto* em = app.add_subcommand("embed", "export group embeddings as TSV");
    em->add_option("--checkpoint", checkpoint_path, "model checkpoint JSON")->required();
    em->add_option("--in", in_path, "cascade-group JSONL")->required();
    em->add_option("--out", out_path, "output TSV")->required();

    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    gc->add_flag("--tiny", tiny, "tiny double-precision battery (default)");
    gc->add_option("--out", out_path, "optional JSON report");
    add_seed(gc);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n" << app.help() << "\n";
        return kExitValidation;
    }

    for (CLI::App* cmd : {sim, ds, fit, pt, fc, fp, bm, gc}) {
        if (!cmd->parsed()) continue;
        if (auto* opt = cmd->get_option_no_throw("--seed"); opt && opt->count() > 0)
            seed_flag = seed_value;
    }

    try {
        if (sim->parsed()) return cmd_simulate(config_path, family_flag, out_path, seed_flag);
        if (rec->parsed()) return cmd_reconstruct(in_path, out_path, verbose);
        if (ds->parsed()) return cmd_downsample(in_path, out_path, p_missing, seed_flag.value_or(0));
        if (fit->parsed()) return cmd_fit(config_path, family_flag, in_path, out_path, seed_flag);
        if (pt->parsed()) return cmd_pretrain(config_path, out_path, metrics_path, seed_flag);
        if (fc->parsed())
            return cmd_finetune_classify(config_path, out_path, out_checkpoint, metrics_path, seed_flag);
        if (fp->parsed()) return cmd_finetune_popularity(config_path, out_path, seed_flag);
        if (bm->parsed()) return cmd_benchmark(config_path, out_path, seed_flag);
        if (em->parsed()) return cmd_embed(checkpoint_path, in_path, out_path);
        if (gc->parsed()) return cmd_gradcheck(tiny, seed_flag.value_or(0), out_path);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitValidation;
}
