// Copyright 2026 The mfsoc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mfsoc/grid.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

namespace mfsoc
{

Error::Error(ErrorCode code, std::string module, std::string what, long index)
    : std::runtime_error("[" + module + "] " + what
                         + (index >= 0 ? " (index " + std::to_string(index) + ")" : ""))
    , code_(code)
    , module_(std::move(module))
    , index_(index)
{
}

double pairwise_sum(const double* x, std::size_t n, std::size_t stride)
{
    if (n <= 8)
    {
        double s = 0;
        for (std::size_t i = 0; i < n; ++i)
            s += x[i * stride];
        return s;
    }
    std::size_t half = n / 2;
    return pairwise_sum(x, half, stride) + pairwise_sum(x + half * stride, n - half, stride);
}

void parallel_for(std::size_t n, int workers,
                  const std::function<void(std::size_t, std::size_t)>& fn)
{
    if (n == 0)
        return;
    if (workers <= 1 || n < 2)
    {
        fn(0, n);
        return;
    }
    std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
    std::size_t chunk = (n + w - 1) / w;
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errs(w);
    for (std::size_t k = 0; k < w; ++k)
    {
        std::size_t b = k * chunk;
        std::size_t e = std::min(n, b + chunk);
        if (b >= e)
            break;
        pool.emplace_back([&, k, b, e] {
            try
            {
                fn(b, e);
            }
            catch (...)
            {
                errs[k] = std::current_exception();
            }
        });
    }
    for (auto& t : pool)
        t.join();
    for (auto& e : errs)
        if (e)
            std::rethrow_exception(e);
}

std::uint64_t mix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double spectral_norm(const Mat& m)
{
    if (m.size() == 0)
        return 0.0;
    Eigen::JacobiSVD<Mat> svd(m);
    return svd.singularValues()(0);
}

//---------------------------------------------------------------------------//

TimeGrid build_grid(double T, double h, double delta, double theta)
{
    if (!(T > 0) || !(h > 0))
        throw Error(ErrorCode::grid, "grid", "T and h must be positive");
    if (delta < 0 || theta < 0)
        throw Error(ErrorCode::grid, "grid", "delays must be nonnegative");
    auto exact = [h](double v, const char* name) {
        double r = v / h;
        double n = std::round(r);
        if (std::abs(r - n) > 1e-12 * std::max(1.0, std::abs(r)))
        {
            std::ostringstream os;
            os << name << "/h = " << r << " is not an integer";
            throw Error(ErrorCode::grid, "grid", os.str());
        }
        return static_cast<int>(n);
    };
    TimeGrid g;
    g.T = T;
    g.h = h;
    g.steps = exact(T, "T");
    if (g.steps < 1)
        throw Error(ErrorCode::grid, "grid", "need at least one step");
    g.m_delta = exact(delta, "delta");
    g.m_theta = exact(theta, "theta");
    g.history_len = std::max(g.m_delta, g.m_theta);
    return g;
}

//---------------------------------------------------------------------------//

PathEnsemble::PathEnsemble(const TimeGrid& grid, int M, int dim, PathKind kind)
    : grid_(grid), M_(M), dim_(dim), kind_(kind)
{
    std::size_t len = static_cast<std::size_t>(grid.history_len + grid.steps + 1);
    data_.assign(static_cast<std::size_t>(M) * len * static_cast<std::size_t>(dim), 0.0);
}

std::size_t PathEnsemble::offset(int p, int i) const
{
    std::size_t len = static_cast<std::size_t>(grid_.history_len + grid_.steps + 1);
    return (static_cast<std::size_t>(p) * len + static_cast<std::size_t>(i + grid_.history_len))
           * static_cast<std::size_t>(dim_);
}

Vec PathEnsemble::shifted_value(int p, int i, int lag) const
{
    int j = i + lag;
    if (j > grid_.steps)
        throw Error(ErrorCode::grid, "grid", "read beyond the stored horizon", j);
    if (j < -grid_.history_len)
        throw Error(ErrorCode::grid, "grid", "read before the stored history", j);
    return vec(p, j);
}

Vec PathEnsemble::mean(int i) const
{
    Vec out(dim_);
    std::size_t stride = static_cast<std::size_t>(grid_.history_len + grid_.steps + 1) * dim_;
    for (int c = 0; c < dim_; ++c)
        out(c) = pairwise_sum(at(0, i) + c, static_cast<std::size_t>(M_), stride) / M_;
    return out;
}

void PathEnsemble::set_all(int i, const Vec& v)
{
    for (int p = 0; p < M_; ++p)
        vec(p, i) = v;
}

//---------------------------------------------------------------------------//

std::uint64_t path_seed(std::uint64_t master, std::uint64_t path, std::uint64_t salt)
{
    return mix64(mix64(master ^ mix64(salt)) ^ path);
}

NoiseEnsemble make_noise(const TimeGrid& grid, int M, std::uint64_t seed, bool antithetic,
                         int workers)
{
    NoiseEnsemble n;
    n.M = M;
    n.steps = grid.steps;
    n.seed = seed;
    n.antithetic = antithetic;
    n.dW.assign(static_cast<std::size_t>(M) * grid.steps, 0.0);
    double sq = std::sqrt(grid.h);
    parallel_for(static_cast<std::size_t>(M), workers, [&](std::size_t b, std::size_t e) {
        for (std::size_t p = b; p < e; ++p)
        {
            double* row = n.dW.data() + p * grid.steps;
            if (antithetic && (p % 2 == 1))
            {
                // Pair partner may live in another chunk; regenerate it.
                std::mt19937_64 gen(path_seed(seed, p - 1));
                std::normal_distribution<double> nd;
                for (int i = 0; i < grid.steps; ++i)
                    row[i] = -sq * nd(gen);
                continue;
            }
            std::mt19937_64 gen(path_seed(seed, antithetic ? p : p));
            std::normal_distribution<double> nd;
            for (int i = 0; i < grid.steps; ++i)
                row[i] = sq * nd(gen);
        }
    });
    return n;
}

std::vector<double> window_mask(const TimeGrid& g, Window w)
{
    std::vector<double> m(static_cast<std::size_t>(g.steps + 1), 0.0);
    for (int i = 0; i <= g.steps; ++i)
    {
        bool in = false;
        switch (w)
        {
            case Window::to_T_minus_delta: in = i <= g.steps - g.m_delta; break;
            case Window::to_T_minus_theta: in = i <= g.steps - g.m_theta; break;
            case Window::from_theta: in = i >= g.m_theta; break;
            case Window::to_theta: in = i <= g.m_theta; break;
        }
        m[static_cast<std::size_t>(i)] = in ? 1.0 : 0.0;
    }
    return m;
}

double discounted_norm(const PathEnsemble& p, double rho)
{
    const TimeGrid& g = p.grid();
    std::vector<double> per(static_cast<std::size_t>(p.paths()));
    std::vector<double> w(static_cast<std::size_t>(g.steps));
    for (int i = 0; i < g.steps; ++i)
        w[static_cast<std::size_t>(i)] = std::exp(-rho * g.t(i)) * g.h;
    std::vector<double> terms(static_cast<std::size_t>(g.steps));
    for (int m = 0; m < p.paths(); ++m)
    {
        for (int i = 0; i < g.steps; ++i)
            terms[static_cast<std::size_t>(i)] = w[static_cast<std::size_t>(i)] * p.vec(m, i).squaredNorm();
        per[static_cast<std::size_t>(m)] = pairwise_sum(terms);
    }
    return std::sqrt(pairwise_sum(per) / p.paths());
}

void write_binary(const PathEnsemble& p, std::ostream& os)
{
    std::int64_t hdr[3] = {p.paths(), p.grid().steps, p.dim()};
    double h = p.grid().h;
    os.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
    os.write(reinterpret_cast<const char*>(&h), sizeof(h));
    for (int m = 0; m < p.paths(); ++m)
        os.write(reinterpret_cast<const char*>(p.at(m, 0)),
                 static_cast<std::streamsize>(sizeof(double)) * (p.grid().steps + 1) * p.dim());
}

PathEnsemble read_binary(std::istream& is, const TimeGrid& grid, PathKind kind)
{
    std::int64_t hdr[3];
    double h = 0;
    is.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
    is.read(reinterpret_cast<char*>(&h), sizeof(h));
    if (!is || hdr[1] != grid.steps || std::abs(h - grid.h) > 1e-15)
        throw Error(ErrorCode::io, "grid", "binary header does not match grid");
    PathEnsemble p(grid, static_cast<int>(hdr[0]), static_cast<int>(hdr[2]), kind);
    for (int m = 0; m < p.paths(); ++m)
        is.read(reinterpret_cast<char*>(p.at(m, 0)),
                static_cast<std::streamsize>(sizeof(double)) * (grid.steps + 1) * p.dim());
    if (!is)
        throw Error(ErrorCode::io, "grid", "truncated binary payload");
    return p;
}

void write_csv(const PathEnsemble& p, std::ostream& os)
{
    os << "path,step,t";
    for (int c = 0; c < p.dim(); ++c)
        os << ",v" << c;
    os << "\n";
    os.precision(17);
    for (int m = 0; m < p.paths(); ++m)
        for (int i = 0; i <= p.grid().steps; ++i)
        {
            os << m << "," << i << "," << p.grid().t(i);
            for (int c = 0; c < p.dim(); ++c)
                os << "," << p.at(m, i)[c];
            os << "\n";
        }
}

}  // namespace mfsoc
