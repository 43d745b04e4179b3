// Copyright 2026 The mfsoc Authors
// SPDX-License-Identifier: Apache-2.0
//
// mfsoc command-line driver. Links only the C interface.

#include "mfsoc/mfsoc.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

namespace
{

constexpr int exit_ok = 0;
constexpr int exit_assumption = 1;
constexpr int exit_divergence = 2;
constexpr int exit_usage = 3;

int exit_code(mfsoc_status s)
{
    switch (s)
    {
    case MFSOC_OK:
        return exit_ok;
    case MFSOC_ERR_VALIDATION:
    case MFSOC_ERR_STRUCTURE:
    case MFSOC_ERR_GRID:
    case MFSOC_ERR_ADMISSIBILITY:
    case MFSOC_ERR_SUBCLASS:
        return exit_assumption;
    case MFSOC_ERR_USAGE:
    case MFSOC_ERR_IO:
        return exit_usage;
    default:
        return exit_divergence;
    }
}

// Thrown to unwind with a status after the message is printed.
struct Failure
{
    int code;
};

void check(mfsoc_status s)
{
    if (s == MFSOC_OK)
        return;
    std::cerr << "error [" << mfsoc_last_error_module() << "]";
    if (mfsoc_last_error_index() >= 0)
        std::cerr << " at index " << mfsoc_last_error_index();
    std::cerr << ": " << mfsoc_last_error() << "\n";
    throw Failure{exit_code(s)};
}

struct StringDeleter
{
    void operator()(char* s) const { mfsoc_string_free(s); }
};
using CString = std::unique_ptr<char, StringDeleter>;

std::string take(char* s)
{
    CString owned(s);
    return owned ? std::string(owned.get()) : std::string();
}

struct ScenarioDeleter
{
    void operator()(mfsoc_scenario* p) const { mfsoc_scenario_free(p); }
};
struct CCDeleter
{
    void operator()(mfsoc_cc* p) const { mfsoc_cc_free(p); }
};
struct PopulationDeleter
{
    void operator()(mfsoc_population* p) const { mfsoc_population_free(p); }
};
using ScenarioPtr = std::unique_ptr<mfsoc_scenario, ScenarioDeleter>;
using CCPtr = std::unique_ptr<mfsoc_cc, CCDeleter>;
using PopulationPtr = std::unique_ptr<mfsoc_population, PopulationDeleter>;

void write_file(const std::string& dir, const std::string& name, const std::string& text)
{
    std::filesystem::create_directories(dir);
    const std::filesystem::path p = std::filesystem::path(dir) / name;
    std::ofstream os(p, std::ios::binary);
    os << text;
    if (!os)
    {
        std::cerr << "error [cli]: cannot write " << p.string() << "\n";
        throw Failure{exit_usage};
    }
    std::cout << "wrote " << p.string() << "\n";
}

struct Common
{
    std::string scenario;
    std::string out = ".";
    double h = 0;
    int workers = 1;
};

struct SolverFlags
{
    std::string solver = "picard";
    mfsoc_picard_options po{};
};

ScenarioPtr load(const Common& c)
{
    mfsoc_scenario* sc = nullptr;
    check(mfsoc_scenario_load(c.scenario.c_str(), &sc));
    ScenarioPtr p(sc);
    if (c.h > 0)
        check(mfsoc_scenario_set_step(p.get(), c.h));
    return p;
}

std::string hash_of(const mfsoc_scenario* sc)
{
    char* s = nullptr;
    check(mfsoc_scenario_hash(sc, &s));
    return take(s);
}

CCPtr solve(const mfsoc_scenario* sc, const Common& c, SolverFlags f)
{
    mfsoc_cc* cc = nullptr;
    if (f.solver == "mean")
        check(mfsoc_cc_mean_solve(sc, &cc));
    else
    {
        f.po.workers = c.workers;
        check(mfsoc_cc_solve(sc, &f.po, &cc));
    }
    return CCPtr(cc);
}

void add_common(CLI::App* app, Common& c, bool needs_scenario = true)
{
    auto* opt = app->add_option("-s,--scenario", c.scenario, "scenario file (YAML or JSON)");
    if (needs_scenario)
        opt->required()->check(CLI::ExistingFile);
    app->add_option("-o,--out", c.out, "output directory")->capture_default_str();
    app->add_option("--step", c.h, "grid step override (0 keeps the scenario value)")->capture_default_str();
    app->add_option("-j,--workers", c.workers, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
}

void add_solver(CLI::App* app, SolverFlags& f)
{
    mfsoc_picard_options_default(&f.po);
    app->add_option("--solver", f.solver, "picard or mean (deterministic mean system)")
        ->capture_default_str()
        ->check(CLI::IsMember({"picard", "mean"}));
    app->add_option("--iters", f.po.max_iters, "Picard iteration cap")->capture_default_str();
    app->add_option("--tol", f.po.tol, "absolute residual tolerance")->capture_default_str();
    app->add_option("--rel-tol", f.po.rel_tol, "residual tolerance relative to the first residual")
        ->capture_default_str();
    app->add_option("--rho", f.po.rho, "discount rate in the residual norm (default: certificate rate if it passes, else 0)");
    app->add_option("--damping", f.po.damping, "weight of the new iterate")->capture_default_str();
    app->add_option("-M,--paths", f.po.paths, "Monte Carlo paths per type")->capture_default_str();
    app->add_option("--solver-seed", f.po.seed, "seed of the representative-agent ensemble")
        ->capture_default_str();
    app->add_option("--degree", f.po.degree, "regression basis degree")->capture_default_str();
    app->add_option("--ridge", f.po.ridge, "regression ridge")->capture_default_str();
}

std::vector<int> parse_sizes(const std::vector<int>& N)
{
    for (int n : N)
        if (n < 1)
        {
            std::cerr << "error [cli]: population sizes must be >= 1\n";
            throw Failure{exit_usage};
        }
    return N;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"mfsoc: mean-field social optimization with delays"};
    app.require_subcommand(1);

    Common common;
    SolverFlags solver;
    double r_min = 1e-8;
    double rho = std::nan("");
    int N = 100;
    std::vector<int> sizes = {64, 128, 256, 512, 1024, 2048};
    std::uint64_t seed = 1;
    int reps = 8;
    int agent = 0;
    double fd_step = 1e-3;
    std::string mix = "exact";
    std::string metric = "consistency";
    std::string mode = "riccati";

    auto* validate = app.add_subcommand("validate", "check the standing assumptions");
    add_common(validate, common);
    validate->add_option("--r-min", r_min, "lower bound for the control weight")->capture_default_str();

    auto* certify = app.add_subcommand("certify", "discounting certificate for the consistency system");
    add_common(certify, common);
    certify->add_option("--rho", rho, "use this discount rate instead of the selected one");

    auto* solve_cc = app.add_subcommand("solve-cc", "solve the consistency system by Picard iteration");
    add_common(solve_cc, common);
    add_solver(solve_cc, solver);

    auto* mean_solve = app.add_subcommand("mean-solve", "deterministic mean system (no diffusion)");
    add_common(mean_solve, common);

    auto* simulate = app.add_subcommand("simulate", "realized N-agent population");
    add_common(simulate, common);
    add_solver(simulate, solver);
    simulate->add_option("-N,--agents", N, "population size")->capture_default_str()->check(CLI::PositiveNumber);
    simulate->add_option("--seed", seed, "population seed")->capture_default_str();
    simulate->add_option("--mix", mix, "type assignment")->capture_default_str()->check(CLI::IsMember({"exact", "iid"}));

    auto* perturb = app.add_subcommand("perturb", "directional derivative of the social cost");
    add_common(perturb, common);
    add_solver(perturb, solver);
    perturb->add_option("-N,--agents", N, "population size")->capture_default_str()->check(CLI::PositiveNumber);
    perturb->add_option("--seed", seed, "population seed")->capture_default_str();
    perturb->add_option("--agent", agent, "perturbed agent")->capture_default_str();
    perturb->add_option("--fd-step", fd_step, "finite-difference step")->capture_default_str();

    auto* rates = app.add_subcommand("rates", "multi-N sweep with log-log slope fits");
    add_common(rates, common, false);
    add_solver(rates, solver);
    rates->add_option("--sizes", sizes, "population sizes")->capture_default_str();
    rates->add_option("--reps", reps, "replications per size")->capture_default_str()->check(CLI::PositiveNumber);
    rates->add_option("--seed", seed, "first population seed")->capture_default_str();
    rates->add_option("--metric", metric, "consistency, or synthetic (1/N, no scenario needed)")
        ->capture_default_str()
        ->check(CLI::IsMember({"consistency", "synthetic"}));

    auto* oracle = app.add_subcommand("oracle-compare", "gap tables against the Riccati or QP oracle");
    add_common(oracle, common);
    add_solver(oracle, solver);
    oracle->add_option("--mode", mode, "riccati or qp")->capture_default_str()->check(CLI::IsMember({"riccati", "qp"}));
    oracle->add_option("--sizes", sizes, "population sizes (qp mode)")->capture_default_str();
    oracle->add_option("--reps", reps, "replications per size (qp mode)")->capture_default_str();
    oracle->add_option("--seed", seed, "first population seed (qp mode)")->capture_default_str();

    auto* echo = app.add_subcommand("echo-scenario", "print the canonical JSON form of a scenario");
    add_common(echo, common);

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp& e)
    {
        return app.exit(e);
    }
    catch (const CLI::ParseError& e)
    {
        app.exit(e);
        return exit_usage;
    }

    try
    {
        if (*validate)
        {
            ScenarioPtr sc = load(common);
            int pass = 0;
            char* report = nullptr;
            check(mfsoc_scenario_validate(sc.get(), r_min, &pass, &report));
            std::cout << take(report);
            std::cout << (pass ? "all checks pass\n" : "assumption check failed\n");
            return pass ? exit_ok : exit_assumption;
        }
        if (*certify)
        {
            ScenarioPtr sc = load(common);
            int pass = 0;
            double modulus = 0;
            char* json = nullptr;
            const bool has_rho = !std::isnan(rho);
            check(mfsoc_certify(sc.get(), has_rho ? 1 : 0, has_rho ? rho : 0.0, &pass, &modulus, &json));
            const std::string text = take(json);
            write_file(common.out, "certificate.json", text + "\n");
            const auto j = nlohmann::json::parse(text);
            std::cout << "certificate: " << (pass ? "PASS" : "FAIL") << "  modulus=" << modulus
                      << "  branch=" << j.value("branch", std::string()) << "  dominant=" << j.value("dominant", std::string())
                      << "\n";
            return pass ? exit_ok : exit_assumption;
        }
        if (*solve_cc || *mean_solve)
        {
            ScenarioPtr sc = load(common);
            if (*mean_solve)
                solver.solver = "mean";
            CCPtr cc = solve(sc.get(), common, solver);
            char* csv = nullptr;
            char* json = nullptr;
            check(mfsoc_cc_meanfields_csv(cc.get(), &csv));
            check(mfsoc_cc_summary_json(cc.get(), &json));
            write_file(common.out, "cc_meanfields.csv", take(csv));
            write_file(common.out, "cc_summary.json", take(json) + "\n");
            char* diag = nullptr;
            check(mfsoc_cc_diagnostics_csv(cc.get(), &diag));
            write_file(common.out, "cc_diagnostics.csv", take(diag));
            const std::string grids = (std::filesystem::path(common.out) / "cc_grids.bin").string();
            check(mfsoc_cc_write_grids(cc.get(), grids.c_str()));
            std::cout << "wrote " << grids << "\n";
            std::cout << "iterations=" << mfsoc_cc_iterations(cc.get()) << " converged=" << mfsoc_cc_converged(cc.get())
                      << "\n";
            return exit_ok;
        }
        if (*simulate)
        {
            ScenarioPtr sc = load(common);
            CCPtr cc = solve(sc.get(), common, solver);
            mfsoc_population* raw = nullptr;
            check(mfsoc_population_simulate(cc.get(), N, mix == "iid" ? MFSOC_MIX_IID : MFSOC_MIX_EXACT, seed,
                                            common.workers, &raw));
            PopulationPtr pop(raw);
            char* csv = nullptr;
            check(mfsoc_population_csv(pop.get(), cc.get(), &csv));
            write_file(common.out, "population_metrics.csv", take(csv));
            double cs = 0;
            double cu = 0;
            check(mfsoc_population_consistency(pop.get(), cc.get(), &cs, &cu));
            std::cout.precision(10);
            std::cout << "social_cost=" << mfsoc_population_social_cost(pop.get()) << " state_gap=" << cs
                      << " control_gap=" << cu << " eps_N=" << mfsoc_population_mix_error(pop.get()) << "\n";
            return exit_ok;
        }
        if (*perturb)
        {
            ScenarioPtr sc = load(common);
            CCPtr cc = solve(sc.get(), common, solver);
            mfsoc_population* raw = nullptr;
            check(mfsoc_population_simulate(cc.get(), N, MFSOC_MIX_EXACT, seed, common.workers, &raw));
            PopulationPtr pop(raw);
            char* json = nullptr;
            check(mfsoc_perturb(cc.get(), pop.get(), agent, nullptr, fd_step, &json));
            const std::string text = take(json);
            write_file(common.out, "perturb.json", text + "\n");
            const auto j = nlohmann::json::parse(text);
            std::cout.precision(10);
            std::cout << "derivative=" << j["derivative"].get<double>()
                      << " finite_difference=" << j["finite_difference"].get<double>() << "\n";
            return exit_ok;
        }
        if (*rates)
        {
            sizes = parse_sizes(sizes);
            nlohmann::json out;
            std::vector<double> n(sizes.begin(), sizes.end());
            auto fit = [&](const std::vector<double>& m) {
                double slope = 0;
                double intercept = 0;
                double band = 0;
                check(mfsoc_rate_fit(n.data(), m.data(), static_cast<int>(n.size()), &slope, &intercept, &band));
                return nlohmann::json{{"slope", slope}, {"intercept", intercept}, {"band", band}, {"values", m}};
            };
            out["sizes"] = sizes;
            out["metric"] = metric;
            if (metric == "synthetic")
            {
                std::string hash = "none";
                if (!common.scenario.empty())
                    hash = hash_of(load(common).get());
                out["scenario_hash"] = hash;
                std::vector<double> m;
                for (double x : n)
                    m.push_back(1.0 / x);
                out["fits"]["synthetic"] = fit(m);
            }
            else
            {
                if (common.scenario.empty())
                {
                    std::cerr << "error [cli]: --scenario is required for the consistency metric\n";
                    return exit_usage;
                }
                ScenarioPtr sc = load(common);
                out["scenario_hash"] = hash_of(sc.get());
                out["reps"] = reps;
                out["seed"] = seed;
                CCPtr cc = solve(sc.get(), common, solver);
                std::vector<double> ms;
                std::vector<double> mu;
                for (int size : sizes)
                {
                    double s = 0;
                    double u = 0;
                    for (int r = 0; r < reps; ++r)
                    {
                        mfsoc_population* raw = nullptr;
                        check(mfsoc_population_simulate(cc.get(), size, MFSOC_MIX_EXACT,
                                                        seed + static_cast<std::uint64_t>(r), common.workers, &raw));
                        PopulationPtr pop(raw);
                        double cs = 0;
                        double cu = 0;
                        check(mfsoc_population_consistency(pop.get(), cc.get(), &cs, &cu));
                        s += cs;
                        u += cu;
                    }
                    ms.push_back(s / reps);
                    mu.push_back(u / reps);
                }
                out["fits"]["state"] = fit(ms);
                out["fits"]["control"] = fit(mu);
            }
            write_file(common.out, "rates_summary.json", out.dump(2) + "\n");
            for (auto& [name, f] : out["fits"].items())
                std::cout << name << ": slope=" << f["slope"].get<double>() << " band=" << f["band"].get<double>()
                          << "\n";
            return exit_ok;
        }
        if (*oracle)
        {
            ScenarioPtr sc = load(common);
            CCPtr cc = solve(sc.get(), common, solver);
            char* csv = nullptr;
            if (mode == "riccati")
            {
                double rel = 0;
                double p0 = 0;
                double gain0 = 0;
                check(mfsoc_oracle_riccati(cc.get(), &rel, &p0, &gain0, &csv));
                std::cout.precision(10);
                std::cout << "relative_l2=" << rel << " P0=" << p0 << " gain0=" << gain0 << "\n";
            }
            else
            {
                sizes = parse_sizes(sizes);
                std::vector<double> gaps(sizes.size());
                check(mfsoc_oracle_qp_gaps(cc.get(), sizes.data(), static_cast<int>(sizes.size()), reps, seed,
                                           common.workers, gaps.data(), &csv));
                std::cout.precision(10);
                for (std::size_t a = 0; a < sizes.size(); ++a)
                    std::cout << "N=" << sizes[a] << " mean_gap_per_agent=" << gaps[a] << "\n";
            }
            write_file(common.out, "oracle_gap.csv", take(csv));
            return exit_ok;
        }
        if (*echo)
        {
            ScenarioPtr sc = load(common);
            char* json = nullptr;
            check(mfsoc_scenario_canonical_json(sc.get(), &json));
            std::cout << take(json) << "\n";
            return exit_ok;
        }
    }
    catch (const Failure& f)
    {
        return f.code;
    }
    catch (const std::exception& e)
    {
        std::cerr << "error [cli]: " << e.what() << "\n";
        return exit_usage;
    }
    return exit_usage;
}
