#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "icth/cascade.hpp"
#include "icth/fit.hpp"
#include "icth/forward.hpp"
#include "icth/heads.hpp"
#include "icth/parametric.hpp"
#include "icth/train.hpp"
#include "icth/util.hpp"

namespace icth::eval {

using nn::Embedding;

// ---- synthetic benchmark data (down-sampling robustness protocol) ------------

struct SyntheticBenchConfig {
    int n_groups_per_family = 20;
    int cascades_per_group = 50;
    double horizon = 50.0;
    // Family ranges keep exponential decays fast and power-law tails heavy so
    // the two regimes stay distinguishable at desk scale (50 cascades per
    // group put family separation near its information limit otherwise).
    // exponential kernel: kappa is the branching mass
    double exp_mass_lo = 0.3, exp_mass_hi = 0.9;
    double exp_theta_lo = 1.5, exp_theta_hi = 5.0;
    // power-law kernel: sampled by branching mass, then kappa = mass*theta*c^theta
    double pl_mass_lo = 0.3, pl_mass_hi = 0.9;
    double pl_theta_lo = 0.3, pl_theta_hi = 0.8;
    double pl_c_lo = 0.5, pl_c_hi = 2.0;
    std::vector<double> p_missing = {0.0, 0.5, 0.8, 0.9};
    std::uint64_t seed = 0;
    std::size_t max_events_per_cascade = 2000;

    void check() const {
        if (n_groups_per_family < 1 || cascades_per_group < 1)
            throw std::invalid_argument("bench: counts must be positive");
        if (!(horizon > 0.0)) throw std::invalid_argument("bench: horizon must be > 0");
        auto range_ok = [](double lo, double hi) { return lo > 0.0 && hi >= lo; };
        if (!range_ok(exp_mass_lo, exp_mass_hi) || !range_ok(exp_theta_lo, exp_theta_hi) ||
            !range_ok(pl_mass_lo, pl_mass_hi) || !range_ok(pl_theta_lo, pl_theta_hi) ||
            !range_ok(pl_c_lo, pl_c_hi))
            throw std::invalid_argument("bench: degenerate parameter range");
        if (exp_mass_hi >= 1.0 || pl_mass_hi >= 1.0)
            throw std::invalid_argument("bench: branching mass must stay < 1");
        for (double p : p_missing)
            if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("bench: p_missing outside [0,1]");
    }
};

// Reshare cascades (mu = 0, immigrant at t = 0) from two Hawkes families with
// per-group parameter draws; labels carry the family name.
inline std::vector<data::CascadeGroup> generate_synthetic_groups(const SyntheticBenchConfig& cfg) {
    cfg.check();
    std::vector<data::CascadeGroup> groups;
    auto uniform = [](std::mt19937_64& rng, double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(rng);
    };
    for (int fam = 0; fam < 2; ++fam) {
        const bool exponential = fam == 0;
        for (int gi = 0; gi < cfg.n_groups_per_family; ++gi) {
            std::mt19937_64 rng = make_rng(cfg.seed, 0x6e00 + static_cast<std::uint64_t>(fam) * 1000 +
                                                        static_cast<std::uint64_t>(gi));
            models::ParametricModel model;
            model.family = models::Family::Hawkes;
            model.mu = 0.0;
            if (exponential) {
                model.kernel.kind = models::KernelKind::Exponential;
                model.kernel.kappa = uniform(rng, cfg.exp_mass_lo, cfg.exp_mass_hi);
                model.kernel.theta = uniform(rng, cfg.exp_theta_lo, cfg.exp_theta_hi);
            } else {
                model.kernel.kind = models::KernelKind::PowerLaw;
                double mass = uniform(rng, cfg.pl_mass_lo, cfg.pl_mass_hi);
                model.kernel.theta = uniform(rng, cfg.pl_theta_lo, cfg.pl_theta_hi);
                model.kernel.c = uniform(rng, cfg.pl_c_lo, cfg.pl_c_hi);
                model.kernel.kappa = mass * model.kernel.theta * std::pow(model.kernel.c, model.kernel.theta);
            }

            data::CascadeGroup g;
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%s-%02d", exponential ? "exp" : "pl", gi);
            g.group_id = buf;
            g.label = exponential ? "exponential" : "powerlaw";
            for (int ci = 0; ci < cfg.cascades_per_group; ++ci) {
                models::SimulateOptions opts;
                opts.immigrant_at_zero = true;
                opts.max_events = cfg.max_events_per_cascade;
                opts.id = g.group_id + "/" + std::to_string(ci);
                std::uint64_t cseed = mix_seed(cfg.seed, 0xca5c + (static_cast<std::uint64_t>(fam) * 1000 +
                                                                   static_cast<std::uint64_t>(gi)) *
                                                              100000 +
                                                          static_cast<std::uint64_t>(ci));
                g.cascades.push_back(models::simulate(model, cfg.horizon, cseed, opts));
            }
            groups.push_back(std::move(g));
        }
    }
    return groups;
}

// ---- embedding-space metrics ---------------------------------------------------

// Half embeddings come in partner order [g0a, g0b, g1a, g1b, ...]; accuracy of
// retrieving the partner as the cosine nearest neighbour among all other halves.
inline double pair_retrieval(const std::vector<Embedding>& halves) {
    if (halves.size() < 4 || halves.size() % 2 != 0)
        throw std::invalid_argument("pair_retrieval: need an even number (>= 4) of half embeddings");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < halves.size(); ++i) {
        std::size_t best = i;
        double best_sim = -2.0;
        for (std::size_t j = 0; j < halves.size(); ++j) {
            if (j == i) continue;
            double sim = train::cosine_similarity(halves[i], halves[j]);
            if (sim > best_sim) {
                best_sim = sim;
                best = j;
            }
        }
        std::size_t partner = (i % 2 == 0) ? i + 1 : i - 1;
        if (best == partner) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(halves.size());
}

inline double euclidean(const Embedding& a, const Embedding& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

// Leave-one-out k-nearest-neighbour vote accuracy (Euclidean metric). Vote
// ties break toward the class of the nearest tied member.
inline double knn_accuracy(const std::vector<Embedding>& embs, const std::vector<int>& labels, int k) {
    const std::size_t n = embs.size();
    if (labels.size() != n) throw std::invalid_argument("knn: labels size mismatch");
    if (k < 1 || static_cast<std::size_t>(k) >= n) throw std::invalid_argument("knn: need 1 <= k < n");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::pair<double, std::size_t>> d;
        d.reserve(n - 1);
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) d.emplace_back(euclidean(embs[i], embs[j]), j);
        std::sort(d.begin(), d.end());
        std::map<int, int> votes;
        for (int t = 0; t < k; ++t) votes[labels[d[static_cast<std::size_t>(t)].second]] += 1;
        int best_label = -1, best_votes = -1;
        for (int t = 0; t < k; ++t) {  // scan in distance order so ties go to the nearest
            int lab = labels[d[static_cast<std::size_t>(t)].second];
            if (votes[lab] > best_votes) {
                best_votes = votes[lab];
                best_label = lab;
            }
        }
        if (best_label == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

// Mean silhouette score with Euclidean distances; singleton clusters score 0.
inline double silhouette(const std::vector<Embedding>& embs, const std::vector<int>& labels) {
    const std::size_t n = embs.size();
    if (labels.size() != n) throw std::invalid_argument("silhouette: labels size mismatch");
    std::set<int> distinct(labels.begin(), labels.end());
    if (distinct.size() < 2) throw std::invalid_argument("silhouette: undefined for a single class");

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::map<int, std::pair<double, int>> per_class;  // sum dist, count
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            auto& [sum, cnt] = per_class[labels[j]];
            sum += euclidean(embs[i], embs[j]);
            cnt += 1;
        }
        auto own = per_class.find(labels[i]);
        if (own == per_class.end()) continue;  // singleton: s(i) = 0
        double a = own->second.first / own->second.second;
        double b = std::numeric_limits<double>::infinity();
        for (const auto& [lab, sc] : per_class)
            if (lab != labels[i]) b = std::min(b, sc.first / sc.second);
        double denom = std::max(a, b);
        total += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return total / static_cast<double>(n);
}

// ---- k-means --------------------------------------------------------------------

struct KmeansResult {
    std::vector<int> assignments;
    std::vector<Embedding> centroids;
    double inertia = 0.0;
    std::vector<double> inertia_curve;
};

// Lloyd iterations from seeded k-means++ starts; deterministic given the seed.
inline KmeansResult kmeans(const std::vector<Embedding>& embs, int k, std::uint64_t seed) {
    const std::size_t n = embs.size();
    if (k < 1 || static_cast<std::size_t>(k) > n) throw std::invalid_argument("kmeans: need 1 <= k <= n");
    std::mt19937_64 rng = make_rng(seed, 0x4a3a);

    KmeansResult res;
    // k-means++ seeding
    std::uniform_int_distribution<std::size_t> first(0, n - 1);
    res.centroids.push_back(embs[first(rng)]);
    std::vector<double> d2(n);
    while (res.centroids.size() < static_cast<std::size_t>(k)) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : res.centroids) best = std::min(best, euclidean(embs[i], c));
            d2[i] = best * best;
            total += d2[i];
        }
        if (total <= 0.0) {
            res.centroids.push_back(embs[res.centroids.size() % n]);  // all points covered
            continue;
        }
        double r = std::uniform_real_distribution<double>(0.0, total)(rng);
        std::size_t pick = 0;
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            acc += d2[i];
            if (r <= acc) {
                pick = i;
                break;
            }
        }
        res.centroids.push_back(embs[pick]);
    }

    res.assignments.assign(n, -1);
    for (int iter = 0; iter < 200; ++iter) {
        bool changed = false;
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                double d = euclidean(embs[i], res.centroids[static_cast<std::size_t>(c)]);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (res.assignments[i] != best) {
                res.assignments[i] = best;
                changed = true;
            }
            inertia += best_d * best_d;
        }
        res.inertia = inertia;
        res.inertia_curve.push_back(inertia);
        if (!changed) break;
        for (int c = 0; c < k; ++c) {
            Embedding mean(embs.front().size(), 0.0);
            int cnt = 0;
            for (std::size_t i = 0; i < n; ++i)
                if (res.assignments[i] == c) {
                    for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += embs[i][d];
                    ++cnt;
                }
            if (cnt > 0) {
                for (double& x : mean) x /= cnt;
                res.centroids[static_cast<std::size_t>(c)] = std::move(mean);
            }
        }
    }
    return res;
}

// ---- hashtag-style Jaccard similarity ------------------------------------------

struct JaccardSummary {
    double intra_mean = 0.0, intra_std = 0.0;
    double inter_mean = 0.0, inter_std = 0.0;
    std::size_t intra_pairs = 0, inter_pairs = 0, skipped_pairs = 0;
};

inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty()) throw std::invalid_argument("jaccard: both sets empty");
    std::size_t inter = 0;
    for (const auto& x : a) inter += b.count(x);
    std::size_t uni = a.size() + b.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

// Pairwise Jaccard similarity of tag sets, summarized within and across
// cluster assignments; pairs of two empty sets are skipped.
inline JaccardSummary jaccard_matrix(const std::vector<std::set<std::string>>& tags,
                                     const std::vector<int>& assignments) {
    if (tags.size() != assignments.size()) throw std::invalid_argument("jaccard_matrix: size mismatch");
    std::vector<double> intra, inter;
    JaccardSummary s;
    for (std::size_t i = 0; i < tags.size(); ++i)
        for (std::size_t j = i + 1; j < tags.size(); ++j) {
            if (tags[i].empty() && tags[j].empty()) {
                ++s.skipped_pairs;
                continue;
            }
            double v = jaccard(tags[i], tags[j]);
            (assignments[i] == assignments[j] ? intra : inter).push_back(v);
        }
    auto summarize = [](const std::vector<double>& v, double& mean, double& stdev) {
        if (v.empty()) return;
        double m = 0.0;
        for (double x : v) m += x;
        m /= static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - m) * (x - m);
        mean = m;
        stdev = std::sqrt(var / static_cast<double>(v.size()));
    };
    summarize(intra, s.intra_mean, s.intra_std);
    summarize(inter, s.inter_mean, s.inter_std);
    s.intra_pairs = intra.size();
    s.inter_pairs = inter.size();
    return s;
}

// ---- embedding export ------------------------------------------------------------

inline void export_embeddings(const std::vector<std::string>& ids, const std::vector<std::string>& labels,
                              const std::vector<Embedding>& embs, const std::string& path) {
    std::size_t dim = embs.empty() ? 0 : embs.front().size();
    std::string out = "group_id\tlabel";
    for (std::size_t d = 0; d < dim; ++d) out += "\te" + std::to_string(d);
    out += '\n';
    for (std::size_t i = 0; i < embs.size(); ++i) {
        out += ids[i] + "\t" + labels[i];
        for (double v : embs[i]) out += "\t" + fmt17(v);
        out += '\n';
    }
    atomic_write_file(path, out);
}

// ---- down-sampling robustness benchmark ------------------------------------------

struct MetricReport {
    double p_missing = 0.0;
    double retrieval = 0.0;
    double knn = 0.0;
    double silhouette_score = 0.0;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    int epochs = 0;
    double runtime_seconds = 0.0;
};

// Runtime stays out of the serialized report: rerunning a seeded benchmark
// must reproduce the output file byte for byte.
inline std::string report_to_json(const MetricReport& r) {
    return std::string("{\"p_missing\":") + fmt17(r.p_missing) + ",\"pair_retrieval\":" + fmt17(r.retrieval) +
           ",\"knn_accuracy\":" + fmt17(r.knn) + ",\"silhouette\":" + fmt17(r.silhouette_score) +
           ",\"initial_loss\":" + fmt17(r.initial_loss) + ",\"final_loss\":" + fmt17(r.final_loss) +
           ",\"epochs\":" + std::to_string(r.epochs) + "}";
}

struct BenchmarkRunConfig {
    nn::ICTHConfig model;
    train::ContrastiveConfig contrastive;
    int knn_k = 3;
    std::uint64_t eval_seed = 12345;      // base seed of the retrieval half splits
    int retrieval_splits = 5;             // retrieval averaged over this many splits
    std::string embeddings_out_prefix;    // empty -> no export
};

// Applies per-p_missing down-sampling to identical underlying cascades.
inline std::vector<data::CascadeGroup> downsample_groups(const std::vector<data::CascadeGroup>& groups,
                                                         double p, std::uint64_t seed,
                                                         std::uint64_t p_stream) {
    std::vector<data::CascadeGroup> out = groups;
    std::uint64_t counter = 0;
    for (auto& g : out)
        for (auto& c : g.cascades)
            c = data::downsample(c, p, mix_seed(seed, 0xd50 + p_stream * 1000003 + counter++));
    return out;
}

// Down-sampling robustness protocol: generate groups once, then per p_missing down-sample,
// pretrain contrastively from the same init, and measure half-pair retrieval,
// family-label knn and silhouette on the learned embeddings.
inline std::vector<MetricReport> run_downsampling_benchmark(const SyntheticBenchConfig& bench,
                                                            const BenchmarkRunConfig& run) {
    bench.check();
    run.model.check();
    std::vector<data::CascadeGroup> base = generate_synthetic_groups(bench);

    std::vector<int> family_labels;
    std::vector<std::string> ids, label_names;
    for (const auto& g : base) {
        family_labels.push_back(*g.label == "exponential" ? 0 : 1);
        ids.push_back(g.group_id);
        label_names.push_back(*g.label);
    }

    std::vector<MetricReport> reports;
    for (std::size_t pi = 0; pi < bench.p_missing.size(); ++pi) {
        const double p = bench.p_missing[pi];
        auto t0 = std::chrono::steady_clock::now();

        std::vector<data::CascadeGroup> groups = downsample_groups(base, p, bench.seed, pi);

        nn::ICTHWeights weights = nn::init_weights(run.model, mix_seed(bench.seed, 0x111));
        train::ProjectionHead proj = train::init_projection(
            run.model.d_m, run.contrastive.proj_dim > 0 ? run.contrastive.proj_dim
                                                        : std::max(1, run.model.d_m / 2),
            mix_seed(bench.seed, 0x222));
        train::PretrainResult pt = train::pretrain(weights, proj, run.model, groups, run.contrastive);

        // retrieval averaged over several half splits (single splits are noisy
        // at 40 groups); cascade embeddings are computed once and pooled per half
        std::vector<data::CascadeGroup> clipped = groups;
        for (auto& g : clipped)
            for (auto& c : g.cascades)
                c = data::clip_records(c, static_cast<std::size_t>(run.model.max_seq_len));
        std::vector<std::vector<Embedding>> casc_embs(clipped.size());
        for (std::size_t gi = 0; gi < clipped.size(); ++gi) {
            casc_embs[gi].resize(clipped[gi].cascades.size());
            parallel_for(clipped[gi].cascades.size(), [&](std::size_t ci) {
                casc_embs[gi][ci] = nn::cascade_embedding(weights, run.model, clipped[gi].cascades[ci]);
            });
        }
        double retrieval_sum = 0.0;
        const int n_splits = std::max(1, run.retrieval_splits);
        for (int split = 0; split < n_splits; ++split) {
            train::PairingResult halves =
                train::make_pairs(clipped, mix_seed(run.eval_seed, static_cast<std::uint64_t>(split)));
            std::vector<Embedding> half_embs;
            for (const auto& pr : halves.pairs) {
                for (const auto* half : {&pr.half_a, &pr.half_b}) {
                    std::vector<Embedding> ce;
                    for (std::size_t ci : *half) ce.push_back(casc_embs[pr.group_index][ci]);
                    half_embs.push_back(nn::mean_embedding(ce));
                }
            }
            retrieval_sum += pair_retrieval(half_embs);
        }

        std::vector<Embedding> group_embs = train::detail::embed_groups(weights, run.model, groups);

        MetricReport rep;
        rep.p_missing = p;
        rep.retrieval = retrieval_sum / n_splits;
        rep.knn = knn_accuracy(group_embs, family_labels, run.knn_k);
        rep.silhouette_score = silhouette(group_embs, family_labels);
        rep.initial_loss = pt.initial_loss;
        rep.final_loss = pt.best_loss;
        rep.epochs = static_cast<int>(pt.loss_curve.size());
        rep.runtime_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        if (!run.embeddings_out_prefix.empty()) {
            char suffix[32];
            std::snprintf(suffix, sizeof(suffix), "_pm%g.tsv", p);
            export_embeddings(ids, label_names, group_embs, run.embeddings_out_prefix + suffix);
        }
        reports.push_back(rep);
    }
    return reports;
}

} // namespace icth::eval
