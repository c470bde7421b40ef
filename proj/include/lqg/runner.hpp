#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lqg/cluster.hpp"
#include "lqg/config.hpp"
#include "lqg/experiments.hpp"
#include "lqg/voronoi.hpp"

namespace lqg {

// Experiment registry and the reproducibility envelope: every run resolves
// its full effective configuration (defaults overlaid with the user's file
// and overrides, unknown keys rejected), executes with per-replica streams,
// and emits CSV result tables plus a manifest with checksums. Identical
// manifests reproduce byte-identical CSVs at any thread count.

struct csv_table {
    std::string name;  // file name, e.g. "volume_scaling.csv"
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    std::string render() const {
        std::string out;
        for (std::size_t c = 0; c < columns.size(); ++c) {
            if (c) out += ",";
            out += columns[c];
        }
        out += "\n";
        for (const auto& row : rows) {
            for (std::size_t c = 0; c < row.size(); ++c) {
                if (c) out += ",";
                out += row[c];
            }
            out += "\n";
        }
        return out;
    }
};

/// Locale-independent float formatting, 17 significant digits.
inline std::string fmt(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}
inline std::string fmt(std::int64_t v) { return std::to_string(v); }
inline std::string fmt(int v) { return std::to_string(v); }

struct key_spec {
    std::string key;
    std::string default_value;
    std::string help;
};

struct run_context {
    std::uint64_t seed = 1;
    int threads = 1;
};

struct experiment_def {
    std::string name;
    std::string description;
    std::vector<key_spec> keys;
    std::function<std::vector<csv_table>(const config_map&, const run_context&)> run;
};

namespace runner_detail {

inline std::vector<key_spec> pipeline_keys(const char* gamma_default, const char* d_default,
                                           const char* res_default, const char* hw_default) {
    return {
        {"pipeline.gamma", gamma_default, "coupling in (0,2); 0 = flat baseline"},
        {"pipeline.d_gamma", d_default, "dimension input (> 2); 0 = built-in table or 2+gamma^2/2"},
        {"pipeline.resolution", res_default, "grid cells per side of the analysis window"},
        {"pipeline.half_width", hw_default, "analysis window half-width"},
        {"pipeline.band_a", "0", "first band (exclusive) of the field"},
        {"pipeline.band_b", "-1", "last band; -1 = deepest resolvable"},
        {"pipeline.epsilon_factor", "4", "mollification radius in grid cells (dyadic)"},
        {"pipeline.normalize", "true", "subtract the unit-circle average"},
        {"pipeline.calibrate", "true", "calibrate median D(0,1) = 1"},
        {"pipeline.calibration", "1", "explicit calibration constant when calibrate = false"},
        {"pipeline.n_cal_samples", "200", "replicas for the calibration median"},
        {"pipeline.noise_factor", "16", "white-noise cells per band scale"},
        {"pipeline.measure_norm", "lqg", "measure normalization: lqg or gmc"},
    };
}

inline pipeline_config pipeline_from(const config_map& cfg) {
    pipeline_config pc;
    pc.gamma = get_double(cfg, "pipeline.gamma");
    if (pc.gamma < 0.0 || pc.gamma >= 2.0)
        throw parameter_error("gamma", "(0,2)", "gamma must lie in (0,2); 0 is the flat baseline");
    pc.d_gamma = get_double(cfg, "pipeline.d_gamma");
    if (pc.d_gamma == 0.0) {
        const auto builtin = builtin_dgamma(pc.gamma);
        pc.d_gamma = builtin ? *builtin : 2.0 + pc.gamma * pc.gamma / 2.0;
    }
    pc.resolution = static_cast<int>(get_int(cfg, "pipeline.resolution"));
    pc.half_width = get_double(cfg, "pipeline.half_width");
    pc.band_a = static_cast<int>(get_int(cfg, "pipeline.band_a"));
    pc.band_b = static_cast<int>(get_int(cfg, "pipeline.band_b"));
    pc.epsilon_factor = get_double(cfg, "pipeline.epsilon_factor");
    pc.normalize_field = get_bool(cfg, "pipeline.normalize");
    pc.calibrate = get_bool(cfg, "pipeline.calibrate");
    pc.calibration = get_double(cfg, "pipeline.calibration");
    pc.n_cal_samples = static_cast<int>(get_int(cfg, "pipeline.n_cal_samples"));
    pc.field_cfg.noise_factor = static_cast<int>(get_int(cfg, "pipeline.noise_factor"));
    const auto& norm = get_raw(cfg, "pipeline.measure_norm");
    if (norm == "lqg")
        pc.norm = measure_normalization::lqg;
    else if (norm == "gmc")
        pc.norm = measure_normalization::gmc;
    else
        throw config_error("pipeline.measure_norm", "measure_norm must be lqg or gmc");
    pc.validate();
    return pc;
}

inline std::vector<double> geometric_ladder(double lo, double hi, int n) {
    if (n < 2 || lo <= 0.0 || hi <= lo)
        throw parameter_error("ladder", "0 < min < max, n >= 2", "bad scale ladder");
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i)
        out[i] = lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
    return out;
}

inline csv_table fit_table(const std::string& name, const scaling_fit& fit) {
    csv_table t;
    t.name = name;
    t.columns = {"slope", "intercept", "ci_halfwidth", "n_replicas"};
    t.rows = {{fmt(fit.slope), fmt(fit.intercept), fmt(fit.ci_halfwidth), fmt(fit.n_replicas)}};
    return t;
}

inline csv_table scales_table(const std::string& name, const char* scale_col,
                              const scaling_fit& fit) {
    csv_table t;
    t.name = name;
    t.columns = {scale_col, "median", "discard_rate"};
    for (std::size_t i = 0; i < fit.scales.size(); ++i)
        t.rows.push_back({fmt(fit.scales[i]), fmt(fit.medians[i]), fmt(fit.discard_rate[i])});
    return t;
}

}

inline const std::vector<experiment_def>& experiment_registry() {
    using namespace runner_detail;
    static const std::vector<experiment_def> defs = [] {
        std::vector<experiment_def> v;

        {
            experiment_def e;
            e.name = "volume-scaling";
            e.description = "median volume of metric balls vs radius, log-log slope";
            e.keys = pipeline_keys("1.6329931618554521", "0", "256", "1.15");
            e.keys.push_back({"volume.s_min", "0.1", "smallest quantum radius"});
            e.keys.push_back({"volume.s_max", "1.0", "largest quantum radius"});
            e.keys.push_back({"volume.n_scales", "5", "ladder points"});
            e.keys.push_back({"volume.n_replicas", "50", "field replicas"});
            e.run = [](const config_map& cfg, const run_context& ctx) {
                const auto pc = pipeline_from(cfg);
                const auto ladder =
                    geometric_ladder(get_double(cfg, "volume.s_min"),
                                     get_double(cfg, "volume.s_max"),
                                     static_cast<int>(get_int(cfg, "volume.n_scales")));
                const auto fit = volume_scaling_fit(
                    pc, ladder, static_cast<int>(get_int(cfg, "volume.n_replicas")), ctx.seed,
                    ctx.threads);
                return std::vector<csv_table>{scales_table("volume_scaling.csv", "s", fit),
                                              fit_table("volume_scaling_fit.csv", fit)};
            };
            v.push_back(std::move(e));
        }

        {
            experiment_def e;
            e.name = "exit-time-scaling";
            e.description = "median quantum exit time of metric balls vs radius";
            e.keys = pipeline_keys("1.6329931618554521", "0", "256", "1.15");
            e.keys.push_back({"exit.s_min", "0.1", "smallest quantum radius"});
            e.keys.push_back({"exit.s_max", "1.0", "largest quantum radius"});
            e.keys.push_back({"exit.n_scales", "5", "ladder points"});
            e.keys.push_back({"exit.n_replicas", "50", "field replicas"});
            e.keys.push_back({"exit.n_paths", "3", "walks per field and radius"});
            e.keys.push_back({"exit.dt", "0", "Euler step; 0 = 4*spacing^2"});
            e.run = [](const config_map& cfg, const run_context& ctx) {
                const auto pc = pipeline_from(cfg);
                const auto ladder =
                    geometric_ladder(get_double(cfg, "exit.s_min"), get_double(cfg, "exit.s_max"),
                                     static_cast<int>(get_int(cfg, "exit.n_scales")));
                const auto fit = exit_time_scaling_fit(
                    pc, ladder, static_cast<int>(get_int(cfg, "exit.n_replicas")),
                    get_double(cfg, "exit.dt"), ctx.seed, ctx.threads,
                    static_cast<int>(get_int(cfg, "exit.n_paths")));
                return std::vector<csv_table>{scales_table("exit_time_scaling.csv", "s", fit),
                                              fit_table("exit_time_scaling_fit.csv", fit)};
            };
            v.push_back(std::move(e));
        }

        {
            experiment_def e;
            e.name = "minkowski";
            e.description = "greedy cover/packing counts of a square region by metric balls";
            e.keys = pipeline_keys("1.6329931618554521", "0", "256", "1.15");
            e.keys.push_back({"minkowski.eps_min", "0.1", "smallest quantum radius"});
            e.keys.push_back({"minkowski.eps_max", "1.0", "largest quantum radius"});
            e.keys.push_back({"minkowski.n_scales", "5", "ladder points"});
            e.keys.push_back({"minkowski.n_replicas", "20", "field replicas"});
            e.keys.push_back({"minkowski.region_half_width", "0.4", "covered square half-width"});
            e.keys.push_back({"minkowski.packing", "false", "also compute the packing pair"});
            e.run = [](const config_map& cfg, const run_context& ctx) {
                const auto pc = pipeline_from(cfg);
                const auto ladder = geometric_ladder(
                    get_double(cfg, "minkowski.eps_min"), get_double(cfg, "minkowski.eps_max"),
                    static_cast<int>(get_int(cfg, "minkowski.n_scales")));
                const bool packing = get_bool(cfg, "minkowski.packing");
                const auto counts = minkowski_estimate(
                    pc, get_double(cfg, "minkowski.region_half_width"), ladder,
                    static_cast<int>(get_int(cfg, "minkowski.n_replicas")), ctx.seed,
                    ctx.threads, packing);
                csv_table t;
                t.name = "minkowski.csv";
                t.columns = {"eps", "replica", "n_cover", "m_pack", "n_cover_2eps"};
                for (std::size_t r = 0; r < counts.cover.size(); ++r)
                    for (std::size_t s = 0; s < counts.eps.size(); ++s)
                        t.rows.push_back(
                            {fmt(counts.eps[s]), fmt(static_cast<int>(r)),
                             fmt(counts.cover[r][s]),
                             packing ? fmt(counts.pack[r][s]) : std::string("nan"),
                             packing ? fmt(counts.cover_2eps[r][s]) : std::string("nan")});
                return std::vector<csv_table>{t, fit_table("minkowski_fit.csv", counts.fit)};
            };
            v.push_back(std::move(e));
        }

        {
            experiment_def e;
            e.name = "cluster-p";
            e.description = "Monte Carlo estimate of the cluster-tree condition probability";
            e.keys = {
                {"cluster.gamma", "1.5", "coupling in (0,2)"},
                {"cluster.points", "0,0;0.0497870683678639,0", "semicolon-separated planar points"},
                {"cluster.a", "0", "initial scale"},
                {"cluster.x", "0", "condition shift"},
                {"cluster.delta", "0", "condition slack"},
                {"cluster.n_samples", "10000", "field replicas"},
                {"cluster.noise_factor", "16", "white-noise cells per band scale"},
            };
            e.run = [](const config_map& cfg, const run_context& ctx) {
                const double gamma = get_double(cfg, "cluster.gamma");
                point_set K;
                {
                    const auto& s = get_raw(cfg, "cluster.points");
                    std::size_t pos = 0;
                    while (pos < s.size()) {
                        auto semi = s.find(';', pos);
                        if (semi == std::string::npos) semi = s.size();
                        const auto item = s.substr(pos, semi - pos);
                        const auto comma = item.find(',');
                        if (comma == std::string::npos)
                            throw config_error("cluster.points", "points must be x,y;x,y;...");
                        K.points.push_back({std::stod(item.substr(0, comma)),
                                            std::stod(item.substr(comma + 1))});
                        pos = semi + 1;
                    }
                }
                field_config fc;
                fc.noise_factor = static_cast<int>(get_int(cfg, "cluster.noise_factor"));
                const auto est = estimate_P(
                    K, static_cast<int>(get_int(cfg, "cluster.a")), get_double(cfg, "cluster.x"),
                    get_double(cfg, "cluster.delta"),
                    static_cast<int>(get_int(cfg, "cluster.n_samples")), ctx.seed, gamma,
                    ctx.threads, fc);
                csv_table t;
                t.name = "cluster_p.csv";
                t.columns = {"gamma", "k", "a", "x", "delta", "estimate", "se", "n_samples",
                             "seed"};
                t.rows.push_back({fmt(gamma), fmt(static_cast<int>(K.size())),
                                  get_raw(cfg, "cluster.a"), get_raw(cfg, "cluster.x"),
                                  get_raw(cfg, "cluster.delta"), fmt(est.value),
                                  fmt(est.std_error), fmt(est.n_samples),
                                  std::to_string(ctx.seed)});
                return std::vector<csv_table>{t};
            };
            v.push_back(std::move(e));
        }

        {
            experiment_def e;
            e.name = "u-estimate";
            e.description = "importance-sampled estimate of the singular configuration integral";
            e.keys = {
                {"u.gamma", "1.5", "coupling in (0,2)"},
                {"u.n", "1", "domain radius index (integration over B_n(0)^k)"},
                {"u.k", "2", "number of points"},
                {"u.x_values", "0,2,4", "condition shifts (common random numbers)"},
                {"u.delta", "0", "condition slack"},
                {"u.n_outer", "20000", "point configurations"},
                {"u.n_inner", "32", "field replicas per configuration"},
                {"u.r_min", "6.1e-6", "proposal radial floor"},
                {"u.noise_factor", "12", "white-noise cells per band scale"},
            };
            e.run = [](const config_map& cfg, const run_context& ctx) {
                const double gamma = get_double(cfg, "u.gamma");
                const auto xs = get_double_list(cfg, "u.x_values");
                u_sampler_config uc;
                uc.r_min = get_double(cfg, "u.r_min");
                uc.field_cfg.noise_factor = static_cast<int>(get_int(cfg, "u.noise_factor"));
                csv_table t;
                t.name = "u_estimate.csv";
                t.columns = {"k", "n", "x", "delta", "estimate", "se", "n_outer", "n_inner",
                             "seed"};
                const auto ests = estimate_u_multi(
                    static_cast<int>(get_int(cfg, "u.n")),
                    static_cast<int>(get_int(cfg, "u.k")), xs, gamma,
                    get_double(cfg, "u.delta"), static_cast<int>(get_int(cfg, "u.n_outer")),
                    static_cast<int>(get_int(cfg, "u.n_inner")), ctx.seed, ctx.threads, uc);
                for (std::size_t i = 0; i < xs.size(); ++i) {
                    t.rows.push_back({get_raw(cfg, "u.k"), get_raw(cfg, "u.n"), fmt(xs[i]),
                                      get_raw(cfg, "u.delta"), fmt(ests[i].value),
                                      fmt(ests[i].std_error), fmt(ests[i].n_outer),
                                      fmt(ests[i].n_inner), std::to_string(ctx.seed)});
                }
                return std::vector<csv_table>{t};
            };
            v.push_back(std::move(e));
        }

        {
            experiment_def e;
            e.name = "tutte";
            e.description = "Poisson-Voronoi tessellation and Tutte embedding of a disk domain";
            e.keys = pipeline_keys("0", "0", "192", "1.1");
            e.keys.push_back({"tutte.lambda_values", "30,60,120,240", "Poisson intensities"});
            e.keys.push_back({"tutte.n_replicas", "3", "replicas per intensity"});
            e.keys.push_back({"tutte.method", "linear_solve", "linear_solve or walk_mc"});
            e.keys.push_back({"tutte.n_walks", "100000", "walks for walk_mc"});
            e.keys.push_back({"tutte.domain_radius", "1.0", "disk domain radius"});
            e.run = [](const config_map& cfg, const run_context& ctx) {
                const auto pc = pipeline_from(cfg);
                const auto lambdas = get_double_list(cfg, "tutte.lambda_values");
                const int n_rep = static_cast<int>(get_int(cfg, "tutte.n_replicas"));
                const double R = get_double(cfg, "tutte.domain_radius");
                const auto& method_s = get_raw(cfg, "tutte.method");
                tutte_method method;
                if (method_s == "linear_solve")
                    method = tutte_method::linear_solve;
                else if (method_s == "walk_mc")
                    method = tutte_method::walk_mc;
                else
                    throw config_error("tutte.method", "method must be linear_solve or walk_mc");
                const int n_walks = static_cast<int>(get_int(cfg, "tutte.n_walks"));

                const double cal = exp_detail::pipeline_calibration(pc, ctx.seed, ctx.threads);
                csv_table summary;
                summary.name = "tutte_summary.csv";
                summary.columns = {"lambda", "replica", "n_sites", "n_boundary",
                                   "harmonic_residual", "rms_displacement"};
                csv_table emb_t;
                emb_t.name = "tutte_embedding.csv";
                emb_t.columns = {"lambda", "replica", "site", "x", "y", "u", "v",
                                 "is_boundary", "p"};
                csv_table edges_t;
                edges_t.name = "tutte_edges.csv";
                edges_t.columns = {"lambda", "replica", "site_i", "site_j"};

                for (double lambda : lambdas)
                    for (int r = 0; r < n_rep; ++r) {
                        const std::uint64_t rs = exp_detail::replica_seed(
                            ctx.seed, "tutte", static_cast<int>(lambda * 131) + r);
                        const auto f = exp_detail::make_field(pc, rs);
                        const auto g = exp_detail::make_graph(pc, f, cal);
                        const auto m = build_measure(f, pc.gamma, pc.epsilon(), pc.norm);
                        cell_mask domain(m.lat.nx, m.lat.ny);
                        domain.kind = "disk";
                        for (int j = 0; j < m.lat.ny; ++j)
                            for (int i = 0; i < m.lat.nx; ++i)
                                if (m.lat.pos(i, j).norm() <= R) domain.set(i, j);
                        const auto sites = poisson_sample(m, lambda, domain, rs ^ 0x5151);
                        if (sites.size() < 8) continue;
                        const auto tess = voronoi_partition(g, sites, domain);
                        if (tess.boundary_sites.size() < 3) continue;
                        embedding emb;
                        try {
                            emb = tutte_embedding(tess, method, n_walks, rs ^ 0xabcd);
                        } catch (const topology_error&) {
                            continue;
                        }
                        // RMS displacement after fixing the rotation to the
                        // first boundary site's true angle.
                        const int x0 = emb.boundary_order.front();
                        const double true_ang =
                            std::atan2(tess.sites[x0].y, tess.sites[x0].x);
                        const double emb_ang =
                            std::atan2(emb.positions[x0].y, emb.positions[x0].x);
                        const double rot = true_ang - emb_ang;
                        const double cr = std::cos(rot), sr = std::sin(rot);
                        double rms = 0.0;
                        int cnt = 0;
                        std::vector<std::uint8_t> present(tess.sites.size(), 0);
                        for (int lbl : tess.labels.v)
                            if (lbl >= 0) present[lbl] = 1;
                        for (std::size_t i = 0; i < tess.sites.size(); ++i) {
                            if (!present[i]) continue;
                            const vec2 e2{emb.positions[i].x * cr - emb.positions[i].y * sr,
                                          emb.positions[i].x * sr + emb.positions[i].y * cr};
                            const vec2 scaled{tess.sites[i].x / R, tess.sites[i].y / R};
                            rms += (e2 - scaled).x * (e2 - scaled).x +
                                   (e2 - scaled).y * (e2 - scaled).y;
                            ++cnt;
                            emb_t.rows.push_back({fmt(lambda), fmt(r), fmt(static_cast<int>(i)),
                                                  fmt(tess.sites[i].x), fmt(tess.sites[i].y),
                                                  fmt(e2.x), fmt(e2.y),
                                                  fmt(static_cast<int>(emb.is_boundary[i])),
                                                  std::string("nan")});
                        }
                        rms = std::sqrt(rms / std::max(cnt, 1));
                        for (const auto& [a, b] : tess.edges)
                            edges_t.rows.push_back({fmt(lambda), fmt(r), fmt(a), fmt(b)});
                        summary.rows.push_back({fmt(lambda), fmt(r),
                                                fmt(static_cast<int>(sites.size())),
                                                fmt(static_cast<int>(tess.boundary_sites.size())),
                                                fmt(emb.harmonic_residual), fmt(rms)});
                    }
                return std::vector<csv_table>{summary, emb_t, edges_t};
            };
            v.push_back(std::move(e));
        }

        {
            experiment_def e;
            e.name = "uk-euclidean";
            e.description = "flat singular configuration integral over disks";
            e.keys = {
                {"uk.gamma", "1", "coupling in (0,2)"},
                {"uk.k", "2", "number of points"},
                {"uk.r_values", "0.5,1", "disk radii"},
                {"uk.n_samples", "200000", "Monte Carlo samples"},
            };
            e.run = [](const config_map& cfg, const run_context& ctx) {
                const double gamma = get_double(cfg, "uk.gamma");
                const int k = static_cast<int>(get_int(cfg, "uk.k"));
                const auto rs = get_double_list(cfg, "uk.r_values");
                csv_table t;
                t.name = "uk_euclidean.csv";
                t.columns = {"k", "gamma", "r", "estimate", "se", "divergence_flag",
                             "n_samples"};
                for (double r : rs) {
                    const auto res =
                        euclidean_uk_mc(k, gamma, r, get_int(cfg, "uk.n_samples"), ctx.seed,
                                        ctx.threads);
                    t.rows.push_back({fmt(k), fmt(gamma), fmt(r), fmt(res.value),
                                      fmt(res.std_error), res.divergence_flag ? "1" : "0",
                                      fmt(res.n_samples)});
                }
                return std::vector<csv_table>{t};
            };
            v.push_back(std::move(e));
        }

        {
            experiment_def e;
            e.name = "tail-curve";
            e.description = "empirical tail curves of ball volumes";
            e.keys = pipeline_keys("1", "0", "128", "1.05");
            e.keys.push_back({"tail.kind", "euclidean_unit", "euclidean_unit or metric_unit"});
            e.keys.push_back(
                {"tail.thresholds", "0.018,0.05,0.14,0.37,1,2.7", "volume thresholds"});
            e.keys.push_back({"tail.n_replicas", "2000", "field replicas"});
            e.run = [](const config_map& cfg, const run_context& ctx) {
                const auto pc = pipeline_from(cfg);
                const auto& kind_s = get_raw(cfg, "tail.kind");
                ball_kind kind;
                if (kind_s == "euclidean_unit")
                    kind = ball_kind::euclidean_unit;
                else if (kind_s == "metric_unit")
                    kind = ball_kind::metric_unit;
                else
                    throw config_error("tail.kind", "kind must be euclidean_unit or metric_unit");
                const auto rows = tail_curve(pc, kind, get_double_list(cfg, "tail.thresholds"),
                                             static_cast<int>(get_int(cfg, "tail.n_replicas")),
                                             ctx.seed, ctx.threads);
                csv_table t;
                t.name = "tail_curve.csv";
                t.columns = {"threshold", "p_ge", "p_ge_se", "p_le", "p_le_se"};
                for (const auto& row : rows)
                    t.rows.push_back({fmt(row.threshold), fmt(row.p_ge), fmt(row.p_ge_se),
                                      fmt(row.p_le), fmt(row.p_le_se)});
                return std::vector<csv_table>{t};
            };
            v.push_back(std::move(e));
        }

        std::sort(v.begin(), v.end(),
                  [](const experiment_def& a, const experiment_def& b) { return a.name < b.name; });
        return v;
    }();
    return defs;
}

inline const experiment_def& find_experiment(const std::string& name) {
    for (const auto& e : experiment_registry())
        if (e.name == name) return e;
    throw config_error("experiment", "unknown experiment '" + name + "'");
}

/// Full effective configuration: experiment defaults overlaid with the user's
/// keys; unknown keys are errors.
inline config_map resolve_config(const config_map& user) {
    const auto it = user.find("experiment");
    if (it == user.end()) throw config_error("experiment", "missing key 'experiment'");
    const auto& def = find_experiment(it->second);
    config_map out;
    out["experiment"] = def.name;
    for (const auto& k : def.keys) out[k.key] = k.default_value;
    static const char* globals[] = {"seed", "threads"};
    for (const auto& [k, v] : user) {
        if (k == "experiment") continue;
        bool known = out.count(k) > 0;
        for (const char* gk : globals)
            if (k == gk) known = true;
        if (!known) throw config_error(k, "unknown key '" + k + "' (strict parsing)");
        out[k] = v;
    }
    if (!out.count("seed")) out["seed"] = "1";
    if (!out.count("threads")) out["threads"] = "0";  // 0 = hardware concurrency
    return out;
}

struct run_result {
    run_manifest manifest;
    std::vector<std::string> files;  // paths written, manifest last
};

/// Execute the named experiment: resolve the configuration, run with
/// per-replica streams, write CSVs and the manifest into out_dir.
inline run_result run_experiment(const config_map& user_cfg, const std::string& out_dir) {
    const config_map cfg = resolve_config(user_cfg);
    run_context ctx;
    ctx.seed = static_cast<std::uint64_t>(get_int(cfg, "seed"));
    const int threads_cfg = static_cast<int>(get_int(cfg, "threads"));
    ctx.threads = threads_cfg > 0 ? threads_cfg : default_threads();

    const auto& def = find_experiment(get_raw(cfg, "experiment"));
    const auto tables = def.run(cfg, ctx);

    run_manifest manifest;
    manifest.config = cfg;
    // Thread count is runtime environment, not an input that may change
    // results; hash the config without it so reruns at different widths
    // compare equal.
    config_map hashed = cfg;
    hashed.erase("threads");
    manifest.hash = config_hash(hashed);
    manifest.master_seed = ctx.seed;

    std::filesystem::create_directories(out_dir);
    run_result result;
    for (const auto& t : tables) {
        const std::string body = t.render();
        const auto path = std::filesystem::path(out_dir) / t.name;
        std::ofstream os(path, std::ios::binary);
        if (!os) throw error("cannot write " + path.string());
        os << body;
        manifest.outputs.push_back({t.name, hex64(fnv1a(body))});
        result.files.push_back(path.string());
    }
    const auto mpath =
        std::filesystem::path(out_dir) / (get_raw(cfg, "experiment") + ".manifest");
    {
        std::ofstream os(mpath, std::ios::binary);
        os << emit_manifest(manifest);
    }
    result.files.push_back(mpath.string());
    result.manifest = manifest;
    return result;
}

inline std::vector<std::string> list_experiments() {
    std::vector<std::string> names;
    for (const auto& e : experiment_registry()) names.push_back(e.name);
    return names;  // registry is sorted
}

}
