// Copyright 2026 The mfsoc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mfsoc/mfsoc.h"

#include "mfsoc/ccfix.hpp"
#include "mfsoc/oracles.hpp"
#include "mfsoc/population.hpp"
#include "mfsoc/wellposedness.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

struct mfsoc_scenario
{
    mfsoc::Scenario sc;
    std::string hash;
};

struct mfsoc_cc
{
    mfsoc::CCSolution cc;
    std::string hash;
};

struct mfsoc_population
{
    mfsoc::PopulationRun run;
};

namespace
{

thread_local std::string last_error;
thread_local std::string last_module;
thread_local long last_index = -1;

void clear_error()
{
    last_error.clear();
    last_module.clear();
    last_index = -1;
}

mfsoc_status fail(mfsoc_status code, std::string module, std::string what, long index = -1)
{
    last_error = std::move(what);
    last_module = std::move(module);
    last_index = index;
    return code;
}

// Runs f, mapping exceptions onto status codes and the last-error slots.
template <class F>
mfsoc_status guarded(F&& f)
{
    clear_error();
    try
    {
        return f();
    }
    catch (const mfsoc::DivergenceError& e)
    {
        std::ostringstream os;
        os.precision(6);
        os << e.what() << "; residuals:";
        for (double r : e.history())
            os << ' ' << r;
        return fail(MFSOC_ERR_DIVERGENCE, e.module(), os.str(), e.index());
    }
    catch (const mfsoc::Error& e)
    {
        return fail(static_cast<mfsoc_status>(e.code()), e.module(), e.what(), e.index());
    }
    catch (const std::bad_alloc&)
    {
        return fail(MFSOC_ERR_INTERNAL, "capi", "out of memory");
    }
    catch (const std::exception& e)
    {
        return fail(MFSOC_ERR_INTERNAL, "capi", e.what());
    }
}

char* copy_string(const std::string& s)
{
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out)
        throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

mfsoc_status null_arg(const char* name)
{
    return fail(MFSOC_ERR_USAGE, "capi", std::string("null argument: ") + name);
}

mfsoc::Discretization discretize_scenario(const mfsoc::Scenario& sc)
{
    return mfsoc::discretize(sc, mfsoc::scenario_grid(sc));
}

}  // namespace

extern "C" {

const char* mfsoc_version(void)
{
    return "0.1.0";
}

const char* mfsoc_last_error(void)
{
    return last_error.c_str();
}

const char* mfsoc_last_error_module(void)
{
    return last_module.c_str();
}

long mfsoc_last_error_index(void)
{
    return last_index;
}

void mfsoc_string_free(char* s)
{
    std::free(s);
}

//---------------------------------------------------------------------------//
// Scenarios

mfsoc_status mfsoc_scenario_load(const char* path, mfsoc_scenario** out)
{
    return guarded([&] {
        if (!path || !out)
            return null_arg("path/out");
        auto h = std::make_unique<mfsoc_scenario>();
        h->sc = mfsoc::load_scenario_file(path);
        h->hash = mfsoc::scenario_hash(h->sc);
        *out = h.release();
        return MFSOC_OK;
    });
}

mfsoc_status mfsoc_scenario_parse(const char* text, mfsoc_scenario** out)
{
    return guarded([&] {
        if (!text || !out)
            return null_arg("text/out");
        auto h = std::make_unique<mfsoc_scenario>();
        h->sc = mfsoc::parse_scenario(text);
        h->hash = mfsoc::scenario_hash(h->sc);
        *out = h.release();
        return MFSOC_OK;
    });
}

void mfsoc_scenario_free(mfsoc_scenario* sc)
{
    delete sc;
}

mfsoc_status mfsoc_scenario_set_step(mfsoc_scenario* sc, double h)
{
    return guarded([&] {
        if (!sc)
            return null_arg("sc");
        if (!(h >= 0) || !std::isfinite(h))
            return fail(MFSOC_ERR_USAGE, "capi", "grid step must be finite and >= 0");
        if (h > 0)
            mfsoc::scenario_grid(sc->sc, h);
        sc->sc.h = h;
        sc->hash = mfsoc::scenario_hash(sc->sc);
        return MFSOC_OK;
    });
}

mfsoc_status mfsoc_scenario_hash(const mfsoc_scenario* sc, char** out)
{
    return guarded([&] {
        if (!sc || !out)
            return null_arg("sc/out");
        *out = copy_string(sc->hash);
        return MFSOC_OK;
    });
}

mfsoc_status mfsoc_scenario_canonical_json(const mfsoc_scenario* sc, char** out)
{
    return guarded([&] {
        if (!sc || !out)
            return null_arg("sc/out");
        *out = copy_string(mfsoc::canonical_json(sc->sc));
        return MFSOC_OK;
    });
}

mfsoc_status mfsoc_scenario_validate(const mfsoc_scenario* sc, double r_min, int* pass, char** report)
{
    return guarded([&] {
        if (!sc || !pass)
            return null_arg("sc/pass");
        mfsoc::ValidationReport rep = mfsoc::validate_scenario(sc->sc, r_min);
        *pass = rep.pass() ? 1 : 0;
        if (report)
            *report = copy_string("# scenario_hash=" + sc->hash + "\n" + rep.summary());
        return MFSOC_OK;
    });
}

//---------------------------------------------------------------------------//
// Certificate

mfsoc_status mfsoc_certify(const mfsoc_scenario* sc, int has_rho, double rho, int* pass, double* modulus,
                           char** json)
{
    return guarded([&] {
        if (!sc)
            return null_arg("sc");
        mfsoc::CertifyOptions opts;
        if (has_rho)
            opts.rho_override = rho;
        mfsoc::Certificate c = mfsoc::certify(sc->sc, opts);
        if (pass)
            *pass = c.pass ? 1 : 0;
        if (modulus)
            *modulus = c.modulus;
        if (json)
            *json = copy_string(mfsoc::certificate_json(c, sc->hash));
        return MFSOC_OK;
    });
}

mfsoc_status mfsoc_discount_root(double c, double delta, double rhs, double* out)
{
    return guarded([&] {
        if (!out)
            return null_arg("out");
        *out = mfsoc::solve_discount_root(c, delta, rhs);
        return MFSOC_OK;
    });
}

//---------------------------------------------------------------------------//
// Consistency-condition solutions

void mfsoc_picard_options_default(mfsoc_picard_options* opts)
{
    if (!opts)
        return;
    const mfsoc::PicardOptions d;
    opts->max_iters = d.max_iters;
    opts->tol = d.tol;
    opts->rel_tol = d.rel_tol;
    opts->rho = std::nan("");
    opts->damping = d.damping;
    opts->paths = d.M;
    opts->seed = d.seed;
    opts->antithetic = d.antithetic ? 1 : 0;
    opts->workers = d.workers;
    opts->degree = d.ce.degree;
    opts->ridge = d.ce.ridge;
}

mfsoc_status mfsoc_cc_solve(const mfsoc_scenario* sc, const mfsoc_picard_options* opts, mfsoc_cc** out)
{
    return guarded([&] {
        if (!sc || !out)
            return null_arg("sc/out");
        *out = nullptr;
        mfsoc::PicardOptions po;
        if (opts)
        {
            po.max_iters = opts->max_iters;
            po.tol = opts->tol;
            po.rel_tol = opts->rel_tol;
            po.rho = opts->rho;
            if (std::isnan(po.rho))
            {
                const mfsoc::Certificate cert = mfsoc::certify(sc->sc);
                po.rho = cert.pass ? cert.rho : 0.0;
            }
            po.damping = opts->damping;
            po.M = opts->paths;
            po.seed = opts->seed;
            po.antithetic = opts->antithetic != 0;
            po.workers = opts->workers;
            po.ce.degree = opts->degree;
            po.ce.ridge = opts->ridge;
        }
        auto h = std::make_unique<mfsoc_cc>();
        h->cc = mfsoc::picard_solve(discretize_scenario(sc->sc), po);
        h->hash = sc->hash;
        *out = h.release();
        return MFSOC_OK;
    });
}

mfsoc_status mfsoc_cc_mean_solve(const mfsoc_scenario* sc, mfsoc_cc** out)
{
    return guarded([&] {
        if (!sc || !out)
            return null_arg("sc/out");
        *out = nullptr;
        auto h = std::make_unique<mfsoc_cc>();
        h->cc = mfsoc::mean_system_solve(discretize_scenario(sc->sc));
        h->hash = sc->hash;
        *out = h.release();
        return MFSOC_OK;
    });
}

void mfsoc_cc_free(mfsoc_cc* cc)
{
    delete cc;
}

int mfsoc_cc_iterations(const mfsoc_cc* cc)
{
    return cc ? cc->cc.iterations : 0;
}

int mfsoc_cc_converged(const mfsoc_cc* cc)
{
    return cc && cc->cc.converged ? 1 : 0;
}

mfsoc_status mfsoc_cc_residuals(const mfsoc_cc* cc, double* buf, int cap, int* count)
{
    return guarded([&] {
        if (!cc || !count)
            return null_arg("cc/count");
        const auto& r = cc->cc.residuals;
        *count = static_cast<int>(r.size());
        for (int i = 0; buf && i < cap && i < *count; ++i)
            buf[i] = r[static_cast<std::size_t>(i)];
        return MFSOC_OK;
    });
}

mfsoc_status mfsoc_cc_meanfields_csv(const mfsoc_cc* cc, char** out)
{
    return guarded([&] {
        if (!cc || !out)
            return null_arg("cc/out");
        std::ostringstream os;
        mfsoc::write_meanfields_csv(cc->cc, cc->hash, os);
        *out = copy_string(os.str());
        return MFSOC_OK;
    });
}

mfsoc_status mfsoc_cc_diagnostics_csv(const mfsoc_cc* cc, char** out)
{
    return guarded([&] {
        if (!cc || !out)
            return null_arg("cc/out");
        std::ostringstream os;
        os << "# scenario_hash=" << cc->hash << '\n';
        mfsoc::write_diagnostics_csv(cc->cc.diag, os);
        *out = copy_string(os.str());
        return MFSOC_OK;
    });
}

mfsoc_status mfsoc_cc_write_grids(const mfsoc_cc* cc, const char* path)
{
    return guarded([&] {
        if (!cc || !path)
            return null_arg("cc/path");
        std::ofstream os(path, std::ios::binary);
        if (!os)
            return fail(MFSOC_ERR_IO, "capi", std::string("cannot write ") + path);
        const mfsoc::CCSolution& c = cc->cc;
        mfsoc::write_binary(c.xhat, os);
        mfsoc::write_binary(c.uhat, os);
        for (const auto& y : c.yhat)
            mfsoc::write_binary(y, os);
        for (const auto& z : c.zeta)
            mfsoc::write_binary(z, os);
        if (!os)
            return fail(MFSOC_ERR_IO, "capi", std::string("write failed for ") + path);
        return MFSOC_OK;
    });
}

mfsoc_status mfsoc_cc_summary_json(const mfsoc_cc* cc, char** out)
{
    return guarded([&] {
        if (!cc || !out)
            return null_arg("cc/out");
        *out = copy_string(mfsoc::cc_header_json(cc->cc, cc->hash));
        return MFSOC_OK;
    });
}

//---------------------------------------------------------------------------//
// Populations

mfsoc_status mfsoc_population_simulate(const mfsoc_cc* cc, int N, mfsoc_mix_policy policy, uint64_t seed,
                                       int workers, mfsoc_population** out)
{
    return guarded([&] {
        if (!cc || !out)
            return null_arg("cc/out");
        if (N < 1)
            return fail(MFSOC_ERR_USAGE, "capi", "population size must be >= 1");
        const mfsoc::MixPolicy mp =
            policy == MFSOC_MIX_IID ? mfsoc::MixPolicy::iid_sample : mfsoc::MixPolicy::exact_proportion;
        auto h = std::make_unique<mfsoc_population>();
        h->run = mfsoc::simulate_realized_population(cc->cc, N, mp, seed, workers);
        *out = h.release();
        return MFSOC_OK;
    });
}

void mfsoc_population_free(mfsoc_population* pop)
{
    delete pop;
}

double mfsoc_population_social_cost(const mfsoc_population* pop)
{
    return pop ? pop->run.social : std::nan("");
}

double mfsoc_population_mix_error(const mfsoc_population* pop)
{
    return pop ? pop->run.mix.eps_N : std::nan("");
}

mfsoc_status mfsoc_population_consistency(const mfsoc_population* pop, const mfsoc_cc* cc, double* state,
                                          double* control)
{
    return guarded([&] {
        if (!pop || !cc)
            return null_arg("pop/cc");
        mfsoc::ConsistencyMetrics m = mfsoc::consistency_error(pop->run, cc->cc);
        if (state)
            *state = m.state;
        if (control)
            *control = m.control;
        return MFSOC_OK;
    });
}

mfsoc_status mfsoc_population_csv(const mfsoc_population* pop, const mfsoc_cc* cc, char** out)
{
    return guarded([&] {
        if (!pop || !cc || !out)
            return null_arg("pop/cc/out");
        std::ostringstream os;
        mfsoc::write_population_csv(pop->run, mfsoc::consistency_error(pop->run, cc->cc), cc->hash, os);
        *out = copy_string(os.str());
        return MFSOC_OK;
    });
}

mfsoc_status mfsoc_perturb(const mfsoc_cc* cc, const mfsoc_population* pop, int agent, const double* values,
                           double step, char** json)
{
    return guarded([&] {
        if (!cc || !pop || !json)
            return null_arg("cc/pop/json");
        const mfsoc::Discretization& disc = cc->cc.disc;
        if (agent < 0 || agent >= pop->run.N)
            return fail(MFSOC_ERR_USAGE, "capi", "agent index out of range", agent);
        const int S = disc.grid.steps;
        const int d = disc.sc.d;
        mfsoc::Perturbation du;
        for (int i = 0; i < S; ++i)
        {
            mfsoc::Vec v = mfsoc::Vec::Zero(d);
            if (values)
                for (int c = 0; c < d; ++c)
                    v(c) = values[static_cast<std::size_t>(i) * static_cast<std::size_t>(d) + static_cast<std::size_t>(c)];
            else
                v(0) = 1.0 / std::sqrt(disc.grid.T);
            du.values.push_back(v);
        }
        mfsoc::DerivativeReport r = mfsoc::directional_derivative(cc->cc, pop->run, agent, du, step);
        nlohmann::json j;
        j["scenario_hash"] = cc->hash;
        j["N"] = pop->run.N;
        j["seed"] = pop->run.seed;
        j["agent"] = agent;
        j["derivative"] = r.derivative;
        j["finite_difference"] = r.fd;
        j["step"] = r.step;
        j["bracket"] = r.eps.bracket;
        j["total"] = r.eps.total;
        nlohmann::json eps = nlohmann::json::object();
        for (int k = 1; k <= 12; ++k)
            eps["eps" + std::to_string(k)] = r.eps.eps[static_cast<std::size_t>(k)];
        j["eps"] = eps;
        j["estimates"] = {{"est6", r.eps.est6}, {"est7", r.eps.est7}, {"est9", r.eps.est9}};
        j["consistency"] = {{"state", r.eps.consistency.state}, {"control", r.eps.consistency.control}};
        *json = copy_string(j.dump(2));
        return MFSOC_OK;
    });
}

mfsoc_status mfsoc_rate_fit(const double* N, const double* metric, int count, double* slope, double* intercept,
                            double* band)
{
    return guarded([&] {
        if (!N || !metric)
            return null_arg("N/metric");
        std::vector<double> n(N, N + count);
        std::vector<double> m(metric, metric + count);
        mfsoc::RateFit f = mfsoc::rate_fit(n, m);
        if (slope)
            *slope = f.slope;
        if (intercept)
            *intercept = f.intercept;
        if (band)
            *band = f.band;
        return MFSOC_OK;
    });
}

//---------------------------------------------------------------------------//
// Oracles

mfsoc_status mfsoc_oracle_riccati(const mfsoc_cc* cc, double* rel_l2, double* p0, double* gain0, char** csv)
{
    return guarded([&] {
        if (!cc)
            return null_arg("cc");
        mfsoc::RiccatiComparison rc = mfsoc::compare_riccati(cc->cc);
        if (rel_l2)
            *rel_l2 = rc.rel_l2;
        if (p0)
            *p0 = rc.riccati.P.front()(0, 0);
        if (gain0)
            *gain0 = rc.gain0(0, 0);
        if (csv)
        {
            std::ostringstream os;
            mfsoc::write_riccati_csv(rc, cc->hash, os);
            *csv = copy_string(os.str());
        }
        return MFSOC_OK;
    });
}

mfsoc_status mfsoc_oracle_qp_gaps(const mfsoc_cc* cc, const int* N, int n_count, int reps, uint64_t seed,
                                  int workers, double* mean_gap, char** csv)
{
    return guarded([&] {
        if (!cc || !N)
            return null_arg("cc/N");
        if (n_count < 1 || reps < 1)
            return fail(MFSOC_ERR_USAGE, "capi", "need at least one population size and one replication");
        std::vector<mfsoc::QPGap> rows;
        for (int a = 0; a < n_count; ++a)
        {
            double sum = 0;
            for (int r = 0; r < reps; ++r)
            {
                rows.push_back(mfsoc::qp_gap(cc->cc, N[a], seed + static_cast<uint64_t>(r), workers));
                sum += rows.back().gap;
            }
            if (mean_gap)
                mean_gap[a] = sum / reps;
        }
        if (csv)
        {
            std::ostringstream os;
            mfsoc::write_qp_gap_csv(rows, cc->hash, os);
            *csv = copy_string(os.str());
        }
        return MFSOC_OK;
    });
}

}  // extern "C"
