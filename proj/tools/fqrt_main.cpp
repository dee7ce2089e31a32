// Command-line front end: validate parameter files, evaluate the stationary
// point and sharing weight, integrate fluid trajectories, run the scaled
// simulator, and compare the two. Commands print JSON (or a short text
// report for `validate`) on stdout; with --out they also write a manifest
// capturing the resolved configuration before any result file.
//
// Exit codes: 0 success, 1 input error, 2 overload-assumption failure,
// 3 numerical failure.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fqrt/io.hpp"
#include "fqrt/model.hpp"
#include "fqrt/qbd.hpp"
#include "fqrt/sim.hpp"
#include "fqrt/solver.hpp"
#include "fqrt/stationary.hpp"

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

struct CommonOpts {
    std::string params_path;
    std::vector<std::string> overrides;
    std::string out_dir;
};

void add_common(CLI::App* sub, CommonOpts& c) {
    // --h is taken by the step-size option, so help is long-form only.
    sub->set_help_flag("--help", "print this help message");
    sub->add_option("--params", c.params_path, "model parameter JSON file")->required();
    sub->add_option("--set", c.overrides, "override a parameter, key=value");
    sub->add_option("--out", c.out_dir, "directory for result files");
}

fqrt::ModelParams load_params(const CommonOpts& c) {
    fqrt::ModelParams p = fqrt::read_params_file(c.params_path);
    fqrt::apply_overrides(p, c.overrides);
    return p;
}

ordered_json params_as_json(const fqrt::ModelParams& p) {
    return ordered_json::parse(fqrt::params_json_text(p));
}

// The manifest goes to disk before any result so a run is reproducible even
// when it dies halfway through.
void write_manifest(const CommonOpts& c, const std::string& command,
                    const fqrt::ModelParams& p, const ordered_json& options) {
    if (c.out_dir.empty()) return;
    std::filesystem::create_directories(c.out_dir);
    ordered_json m;
    m["command"] = command;
    m["version"] = fqrt::kToolVersion;
    m["params"] = params_as_json(p);
    m["options"] = options;
    fqrt::write_text_file((std::filesystem::path(c.out_dir) / "manifest.json").string(),
                          m.dump(2) + "\n");
}

void write_result(const CommonOpts& c, const std::string& name, const std::string& content) {
    if (c.out_dir.empty()) return;
    fqrt::write_text_file((std::filesystem::path(c.out_dir) / name).string(), content);
}

std::vector<double> parse_csv_doubles(const std::string& text, const std::string& what) {
    std::vector<double> out;
    std::string token;
    std::istringstream in(text);
    while (std::getline(in, token, ',')) {
        try {
            std::size_t pos = 0;
            out.push_back(std::stod(token, &pos));
            if (pos != token.size()) throw std::invalid_argument(token);
        } catch (const std::exception&) {
            throw std::invalid_argument("cannot parse " + what + " component \"" + token + "\"");
        }
    }
    return out;
}

fqrt::ExtendedState parse_x0(const std::string& text, const fqrt::ModelParams& p) {
    const std::vector<double> v = parse_csv_doubles(text, "--x0");
    fqrt::ExtendedState s;
    if (v.size() == 3) {
        // Restricted coordinates: both pools taken as fully busy.
        s.q1 = v[0];
        s.q2 = v[1];
        s.z12 = v[2];
        s.z11 = p.m1;
        s.z22 = std::max(0.0, p.m2 - v[2]);
    } else if (v.size() == 6) {
        s.q1 = v[0];
        s.q2 = v[1];
        s.z11 = v[2];
        s.z12 = v[3];
        s.z22 = v[4];
        s.z21 = v[5];
    } else {
        throw std::invalid_argument("--x0 needs q1,q2,z12 or q1,q2,z11,z12,z22,z21");
    }
    return s;
}

int run_validate(const CommonOpts& c) {
    const fqrt::ModelParams p = load_params(c);
    const fqrt::ValidationReport r = fqrt::validate_params(p);
    for (const std::string& d : r.diagnostics) {
        std::cout << d << "\n";
    }
    std::cout << "isolated queues: qa1=" << fqrt::format_shortest(r.isolation.qa1)
              << " qa2=" << fqrt::format_shortest(r.isolation.qa2)
              << " sa1=" << fqrt::format_shortest(r.isolation.sa1)
              << " sa2=" << fqrt::format_shortest(r.isolation.sa2) << "\n";
    std::cout << "overload assumption: theta1*(qa1-kappa)="
              << fqrt::format_shortest(r.assumption_lhs)
              << " vs mu12*sa2=" << fqrt::format_shortest(r.assumption_rhs) << " -> "
              << (r.assumption_ok ? "satisfied" : "VIOLATED") << "\n";
    if (!r.ok()) {
        std::cout << "parameters: INVALID\n";
        return 1;
    }
    std::cout << (r.ratio_ok ? "parameters: OK\n" : "parameters: OK (with warnings)\n");
    return r.assumption_ok ? 0 : 2;
}

int run_stationary(const CommonOpts& c) {
    const fqrt::ModelParams p = load_params(c);
    write_manifest(c, "stationary", p, ordered_json::object());
    const fqrt::StationaryReport rep = fqrt::stationary_point(p);
    const std::string text = fqrt::stationary_report_json(p, rep);
    write_result(c, "stationary.json", text);
    std::cout << text;
    return 0;
}

int run_pi(const CommonOpts& c, const std::string& x0_text, bool oracle) {
    const fqrt::ModelParams p = load_params(c);
    const fqrt::ExtendedState s = parse_x0(x0_text, p);
    const fqrt::FluidState x = s.restricted();
    ordered_json opts;
    opts["x0"] = {x.q1, x.q2, x.z12};
    opts["oracle"] = oracle;
    write_manifest(c, "pi", p, opts);
    const double value = oracle ? fqrt::truncated_oracle_pi12(x, p) : fqrt::pi12(x, p);
    ordered_json out;
    out["x0"] = {x.q1, x.q2, x.z12};
    out["method"] = oracle ? "truncated-oracle" : "matrix-geometric";
    out["region"] = fqrt::to_string(fqrt::classify(x, p));
    out["pi12"] = value;
    const std::string text = out.dump(2) + "\n";
    write_result(c, "pi.json", text);
    std::cout << text;
    return 0;
}

ordered_json solve_summary(const fqrt::Trajectory& traj, const fqrt::ModelParams& p) {
    ordered_json out;
    const fqrt::TrajectorySample& last = traj.samples.back();
    out["terminal"] = {{"q1", last.state.q1},   {"q2", last.state.q2},
                       {"z11", last.state.z11}, {"z12", last.state.z12},
                       {"z22", last.state.z22}, {"z21", last.state.z21}};
    out["s_entry_time"] = traj.s_entry_time ? json(*traj.s_entry_time) : json(nullptr);
    const std::optional<double> hit = fqrt::hitting_time(traj, p);
    out["hitting_time"] = hit ? json(*hit) : json(nullptr);

    std::map<std::string, long long> occupancy;
    for (const fqrt::TrajectorySample& s : traj.samples) {
        occupancy[s.region ? fqrt::to_string(*s.region) : "pre-S"]++;
    }
    ordered_json occ;
    for (const auto& [label, count] : occupancy) {
        occ[label] = static_cast<double>(count) * traj.h;
    }
    out["region_occupancy_time"] = occ;

    out["exp_fit"] = json(nullptr);
    try {
        const fqrt::StationaryReport rep = fqrt::stationary_point(p);
        const double from = hit.value_or(traj.s_entry_time.value_or(0.0));
        if (const auto fit = fqrt::fit_exponential_rate(traj, rep.x_star, from)) {
            out["exp_fit"] = {{"beta", fit->beta},
                              {"r_squared", fit->r_squared},
                              {"points", fit->points}};
        }
    } catch (const std::exception&) {
        // stationary point unavailable: leave the fit out
    }
    out["diagnostics"] = traj.diagnostics;
    return out;
}

int run_solve(const CommonOpts& c, double h, double t_end,
              const std::optional<std::string>& x0_text) {
    const fqrt::ModelParams p = load_params(c);
    fqrt::ExtendedState x0;
    if (x0_text) x0 = parse_x0(*x0_text, p);
    ordered_json opts;
    opts["h"] = h;
    opts["t_end"] = t_end;
    opts["x0"] = {x0.q1, x0.q2, x0.z11, x0.z12, x0.z22, x0.z21};
    write_manifest(c, "solve", p, opts);

    const fqrt::Trajectory traj = fqrt::solve_ivp(x0, p, {h, t_end});
    write_result(c, "trajectory.csv", fqrt::trajectory_csv(traj));
    const std::string text = solve_summary(traj, p).dump(2) + "\n";
    write_result(c, "summary.json", text);
    std::cout << text;
    return 0;
}

struct SimOpts {
    int n = 1000;
    std::uint64_t seed = 1;
    double t_end = 50.0;
    double sample_dt = 0.1;
    double threshold_c = 1.0;
    std::optional<long long> k12, k21, kappa_n;
    std::optional<std::string> window_text;
};

fqrt::SimConfig sim_config(const fqrt::ModelParams& p, const SimOpts& o) {
    fqrt::SimConfig cfg;
    cfg.params = p;
    cfg.n = o.n;
    cfg.seed = o.seed;
    cfg.t_end = o.t_end;
    cfg.sample_dt = o.sample_dt;
    cfg.threshold_c = o.threshold_c;
    cfg.k12 = o.k12;
    cfg.k21 = o.k21;
    cfg.kappa_n = o.kappa_n;
    return cfg;
}

ordered_json sim_options_json(const fqrt::SimConfig& resolved) {
    ordered_json o;
    o["n"] = resolved.n;
    o["seed"] = resolved.seed;
    o["t_end"] = resolved.t_end;
    o["sample_dt"] = resolved.sample_dt;
    o["k12"] = *resolved.k12;
    o["k21"] = *resolved.k21;
    o["kappa_n"] = *resolved.kappa_n;
    return o;
}

std::pair<double, double> parse_window(const std::string& text) {
    const std::vector<double> v = parse_csv_doubles(text, "--window");
    if (v.size() != 2) throw std::invalid_argument("--window needs begin,end");
    return {v[0], v[1]};
}

int run_simulate(const CommonOpts& c, const SimOpts& o) {
    const fqrt::ModelParams p = load_params(c);
    const fqrt::SimConfig cfg = fqrt::resolved_sim_config(sim_config(p, o));
    write_manifest(c, "simulate", p, sim_options_json(cfg));

    const fqrt::SimPath path = fqrt::simulate(cfg);
    write_result(c, "sim.csv", fqrt::sim_csv(path));

    ordered_json out;
    out["events"] = path.total_events;
    const fqrt::SimSample& last = path.samples.back();
    out["terminal"] = {{"q1", last.q1},   {"q2", last.q2},   {"z11", last.z11},
                       {"z12", last.z12}, {"z21", last.z21}, {"z22", last.z22}};
    if (o.window_text) {
        const auto [w0, w1] = parse_window(*o.window_text);
        const fqrt::DiffStats st = fqrt::difference_process_stats(path, w0, w1);
        out["window"] = {w0, w1};
        out["frac_d_positive"] = st.frac_d_positive;
        out["mean_queue_ratio"] = st.mean_queue_ratio;
        out["transitions"] = st.transitions;
    }
    const std::string text = out.dump(2) + "\n";
    write_result(c, "sim_summary.json", text);
    std::cout << text;
    return 0;
}

// Fluid state on the solver grid, linearly interpolated at time t.
fqrt::FluidState fluid_at(const fqrt::Trajectory& traj, double t) {
    const double pos = t / traj.h;
    const auto lo = std::min(static_cast<std::size_t>(std::max(0.0, std::floor(pos))),
                             traj.samples.size() - 1);
    const auto hi = std::min(lo + 1, traj.samples.size() - 1);
    const double w = std::clamp(pos - static_cast<double>(lo), 0.0, 1.0);
    const fqrt::FluidState a = traj.samples[lo].state.restricted();
    const fqrt::FluidState b = traj.samples[hi].state.restricted();
    return {a.q1 + w * (b.q1 - a.q1), a.q2 + w * (b.q2 - a.q2), a.z12 + w * (b.z12 - a.z12)};
}

double sup_deviation(const fqrt::Trajectory& traj, const fqrt::SimPath& path, double t_min) {
    double sup = 0.0;
    for (const fqrt::SimSample& s : path.samples) {
        if (s.t < t_min) continue;
        const fqrt::FluidState f = fluid_at(traj, s.t);
        sup = std::max({sup, std::abs(s.q1 - f.q1), std::abs(s.q2 - f.q2),
                        std::abs(s.z12 - f.z12)});
    }
    return sup;
}

double fluid_mean_pi(const fqrt::Trajectory& traj, double w0, double w1) {
    double sum = 0.0;
    long long count = 0;
    for (const fqrt::TrajectorySample& s : traj.samples) {
        if (s.t < w0 || s.t > w1 || !s.pi12) continue;
        sum += *s.pi12;
        ++count;
    }
    return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

int run_compare(const CommonOpts& c, const SimOpts& o, double h, double t_min, bool sweep,
                int sweep_seeds) {
    const fqrt::ModelParams p = load_params(c);
    ordered_json opts;
    opts["h"] = h;
    opts["t_end"] = o.t_end;
    opts["t_min"] = t_min;
    opts["n"] = o.n;
    opts["seed"] = o.seed;
    opts["sweep"] = sweep;
    write_manifest(c, "compare", p, opts);

    const fqrt::Trajectory traj = fqrt::solve_ivp({}, p, {h, o.t_end});

    ordered_json out;
    if (!sweep) {
        const fqrt::SimPath path = fqrt::simulate(fqrt::resolved_sim_config(sim_config(p, o)));
        out["n"] = o.n;
        out["seed"] = o.seed;
        out["sup_deviation"] = sup_deviation(traj, path, t_min);
        if (o.window_text) {
            const auto [w0, w1] = parse_window(*o.window_text);
            const fqrt::DiffStats st = fqrt::difference_process_stats(path, w0, w1);
            const double pi_fluid = fluid_mean_pi(traj, w0, w1);
            out["window"] = {w0, w1};
            out["pi_empirical"] = st.frac_d_positive;
            out["pi_fluid_mean"] = pi_fluid;
            out["pi_deviation"] = std::abs(st.frac_d_positive - pi_fluid);
            out["mean_queue_ratio"] = st.mean_queue_ratio;
        }
    } else {
        ordered_json runs = ordered_json::array();
        std::vector<double> medians;
        for (const int n : {100, 400, 1600}) {
            std::vector<double> devs;
            for (int s = 0; s < sweep_seeds; ++s) {
                SimOpts so = o;
                so.n = n;
                so.seed = o.seed + static_cast<std::uint64_t>(s);
                devs.push_back(
                    sup_deviation(traj, fqrt::simulate(fqrt::resolved_sim_config(
                                            sim_config(p, so))),
                                  t_min));
            }
            std::sort(devs.begin(), devs.end());
            const double median = devs[devs.size() / 2];
            medians.push_back(median);
            runs.push_back({{"n", n}, {"median_sup_deviation", median}, {"deviations", devs}});
        }
        out["sweep"] = runs;
        out["monotone_decreasing"] = std::is_sorted(medians.rbegin(), medians.rend()) &&
                                     medians.front() > medians.back();
    }
    const std::string text = out.dump(2) + "\n";
    write_result(c, "compare.json", text);
    std::cout << text;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fluid-limit and simulation toolkit for a two-class, two-pool service system "
                 "with queue-ratio overflow sharing"};
    app.set_help_flag("--help", "print this help message");
    app.require_subcommand(1);

    CommonOpts c_validate, c_stationary, c_pi, c_solve, c_sim, c_compare;
    std::string pi_x0;
    bool pi_oracle = false;
    double solve_h = 0.01, solve_t_end = 50.0;
    std::optional<std::string> solve_x0;
    SimOpts sim_opts, cmp_opts;
    double cmp_h = 0.01, cmp_t_min = 5.0;
    bool cmp_sweep = false;
    int cmp_sweep_seeds = 5;

    add_common(app.add_subcommand("validate", "check a parameter file"), c_validate);
    add_common(app.add_subcommand("stationary", "stationary point and stability certificates"),
               c_stationary);

    CLI::App* pi = app.add_subcommand("pi", "sharing weight at a state");
    add_common(pi, c_pi);
    pi->add_option("--x0", pi_x0, "state q1,q2,z12")->required();
    pi->add_flag("--oracle", pi_oracle, "use the truncated-generator solver");

    CLI::App* solve = app.add_subcommand("solve", "integrate the fluid dynamics");
    add_common(solve, c_solve);
    solve->add_option("--h", solve_h, "Euler step size");
    solve->add_option("--t-end", solve_t_end, "integration horizon");
    solve->add_option("--x0", solve_x0, "initial state (default: empty system)");

    CLI::App* sim = app.add_subcommand("simulate", "run the scaled stochastic model");
    add_common(sim, c_sim);
    sim->add_option("--n", sim_opts.n, "scale factor");
    sim->add_option("--seed", sim_opts.seed, "RNG seed");
    sim->add_option("--t-end", sim_opts.t_end, "simulation horizon");
    sim->add_option("--sample-dt", sim_opts.sample_dt, "output sampling period");
    sim->add_option("--k12", sim_opts.k12, "sharing threshold, pool 2 helping class 1");
    sim->add_option("--k21", sim_opts.k21, "sharing threshold, pool 1 helping class 2");
    sim->add_option("--kappa-n", sim_opts.kappa_n, "queue-1 shift in customers");
    sim->add_option("--threshold-c", sim_opts.threshold_c, "default-threshold prefactor");
    sim->add_option("--window", sim_opts.window_text,
                    "difference-process stats window, begin,end");

    CLI::App* cmp = app.add_subcommand("compare", "fluid trajectory vs simulation");
    add_common(cmp, c_compare);
    cmp->add_option("--n", cmp_opts.n, "scale factor");
    cmp->add_option("--seed", cmp_opts.seed, "RNG seed (sweep: first of the block)");
    cmp->add_option("--t-end", cmp_opts.t_end, "horizon for both runs");
    cmp->add_option("--sample-dt", cmp_opts.sample_dt, "simulation sampling period");
    cmp->add_option("--h", cmp_h, "Euler step size");
    cmp->add_option("--t-min", cmp_t_min, "ignore deviations before this time");
    cmp->add_option("--window", cmp_opts.window_text, "empirical-pi window, begin,end");
    cmp->add_flag("--sweep", cmp_sweep, "run the built-in n sweep {100,400,1600}");
    cmp->add_option("--sweep-seeds", cmp_sweep_seeds, "seeds per sweep point");

    int rc = 0;
    try {
        app.parse(argc, argv);
        if (app.got_subcommand("validate")) {
            rc = run_validate(c_validate);
        } else if (app.got_subcommand("stationary")) {
            rc = run_stationary(c_stationary);
        } else if (app.got_subcommand("pi")) {
            rc = run_pi(c_pi, pi_x0, pi_oracle);
        } else if (app.got_subcommand("solve")) {
            rc = run_solve(c_solve, solve_h, solve_t_end, solve_x0);
        } else if (app.got_subcommand("simulate")) {
            rc = run_simulate(c_sim, sim_opts);
        } else if (app.got_subcommand("compare")) {
            rc = run_compare(c_compare, cmp_opts, cmp_h, cmp_t_min, cmp_sweep, cmp_sweep_seeds);
        }
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const fqrt::AssumptionViolatedError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const fqrt::WindowTooShortError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const fqrt::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const fqrt::QbdError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const fqrt::SolverError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return rc;
}
