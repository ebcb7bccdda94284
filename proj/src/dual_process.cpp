#include "retire/dual_process.hpp"

#include <cmath>
#include <thread>

#include "retire/error.hpp"

namespace retire {

PathRng::PathRng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x5eedu};
    engine_.seed(seq);
}

namespace {

double mean_drift(double t, double dt, const MarketEnvironment& env) {
    if (env.constant_rates()) return env.rho(0.0) - env.r(0.0);
    return (env.rho.integral(t, t + dt) - env.r.integral(t, t + dt)) / dt;
}

}  // namespace

double exact_step(double y, double t, double dt, double z, const MarketEnvironment& env) {
    if (!(y > 0.0)) throw ValidationError("exact_step needs y > 0");
    if (!(dt > 0.0)) throw ValidationError("exact_step needs dt > 0");
    const double th2 = env.theta_norm2();
    return y * std::exp((mean_drift(t, dt, env) - 0.5 * th2) * dt - std::sqrt(th2 * dt) * z);
}

double exact_step(double y, double t, double dt, const Eigen::VectorXd& z, const MarketEnvironment& env) {
    if (!(y > 0.0)) throw ValidationError("exact_step needs y > 0");
    if (!(dt > 0.0)) throw ValidationError("exact_step needs dt > 0");
    if (z.size() != env.theta().size()) throw ValidationError("exact_step: noise dimension mismatch");
    return y * std::exp((mean_drift(t, dt, env) - 0.5 * env.theta_norm2()) * dt - std::sqrt(dt) * env.theta().dot(z));
}

PathBundle simulate_paths(double y0, const std::vector<double>& grid, std::size_t n_paths, std::uint64_t seed,
                          const MarketEnvironment& env, unsigned threads) {
    if (!(y0 > 0.0)) throw ValidationError("simulate_paths needs y0 > 0");
    if (grid.size() < 2) throw ValidationError("simulate_paths needs at least two grid times");
    PathBundle b;
    b.times = grid;
    b.seed = seed;
    b.y.assign(n_paths, {});
    b.z.assign(n_paths, {});
    b.streams.resize(n_paths);
    auto work = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) {
            PathRng rng(seed, p);
            auto& z = b.z[p];
            auto& y = b.y[p];
            z.resize(grid.size() - 1);
            y.resize(grid.size());
            y[0] = y0;
            for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
                z[i] = rng.normal();
                y[i + 1] = exact_step(y[i], grid[i], grid[i + 1] - grid[i], z[i], env);
            }
            b.streams[p] = p;
        }
    };
    threads = std::max(1u, threads);
    if (threads == 1 || n_paths < 2) {
        work(0, n_paths);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (n_paths + threads - 1) / threads;
        for (unsigned k = 0; k < threads; ++k) {
            const std::size_t lo = k * chunk, hi = std::min(n_paths, lo + chunk);
            if (lo < hi) pool.emplace_back(work, lo, hi);
        }
        for (auto& th : pool) th.join();
    }
    return b;
}

PathBundle paths_from_increments(double y0, const std::vector<double>& grid,
                                 const std::vector<std::vector<double>>& z, const MarketEnvironment& env) {
    PathBundle b;
    b.times = grid;
    b.z = z;
    b.y.resize(z.size());
    b.streams.resize(z.size());
    for (std::size_t p = 0; p < z.size(); ++p) {
        if (z[p].size() + 1 != grid.size()) throw ValidationError("increment count must match grid steps");
        b.y[p].resize(grid.size());
        b.y[p][0] = y0;
        for (std::size_t i = 0; i + 1 < grid.size(); ++i)
            b.y[p][i + 1] = exact_step(b.y[p][i], grid[i], grid[i + 1] - grid[i], z[p][i], env);
        b.streams[p] = p;
    }
    return b;
}

PricePaths simulate_prices(const std::vector<double>& grid, const std::vector<Eigen::VectorXd>& dB,
                           const MarketEnvironment& env) {
    if (dB.size() + 1 != grid.size()) throw ValidationError("Brownian increments must match grid steps");
    const Eigen::Index n = static_cast<Eigen::Index>(env.dim());
    Eigen::VectorXd half_var(n);
    for (Eigen::Index i = 0; i < n; ++i) half_var(i) = 0.5 * env.sigma.row(i).squaredNorm();
    PricePaths out;
    out.log_bond.assign(1, 0.0);
    out.log_stocks.assign(1, Eigen::VectorXd::Zero(n));
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
        const double t = grid[k], dt = grid[k + 1] - t;
        const double rint = env.r.integral(t, t + dt);
        out.log_bond.push_back(out.log_bond.back() + rint);
        // raw drift b_i = mu_i + r
        const Eigen::VectorXd drift = (env.mu.array() * dt + rint - half_var.array() * dt).matrix();
        out.log_stocks.push_back(out.log_stocks.back() + drift + env.sigma * dB[k]);
    }
    return out;
}

std::vector<double> reconstruct_from_prices(const PricePaths& prices, const MarketEnvironment& env, double y_tau,
                                            const std::vector<double>& grid) {
    if (!env.constant_rates()) throw ValidationError("price reconstruction requires constant coefficients");
    if (!(y_tau > 0.0)) throw ValidationError("reconstruction needs Y(tau) > 0");
    if (prices.log_bond.size() != grid.size() || prices.log_stocks.size() != grid.size())
        throw ValidationError("price paths must match the grid");
    const double r = env.r(0.0), rho = env.rho(0.0);
    const Eigen::Index n = static_cast<Eigen::Index>(env.dim());
    Eigen::VectorXd b_adj(n);
    for (Eigen::Index i = 0; i < n; ++i) b_adj(i) = env.mu(i) + r - 0.5 * env.sigma.row(i).squaredNorm();
    const Eigen::RowVectorXd w = env.theta().transpose() * env.sigma.inverse();
    const double c = rho - r - 0.5 * env.theta_norm2() + w.dot(b_adj);
    std::vector<double> y(grid.size());
    const double ly = std::log(y_tau);
    for (std::size_t k = 0; k < grid.size(); ++k)
        y[k] = std::exp(ly + c / r * prices.log_bond[k] - w.dot(prices.log_stocks[k]));
    return y;
}

}  // namespace retire
