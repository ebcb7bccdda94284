#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <vector>

#include "retire/market.hpp"

namespace retire {

/// Independent normal stream for one path; identical regardless of which
/// thread or in which order paths are generated.
class PathRng {
public:
    PathRng(std::uint64_t seed, std::uint64_t stream);
    double normal() { return dist_(engine_); }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> dist_;
};

struct PathBundle {
    std::vector<double> times;
    std::vector<std::vector<double>> y;  // [path][time]
    std::vector<std::vector<double>> z;  // [path][step], standard normals driving theta.dB/|theta|
    std::uint64_t seed = 0;
    std::vector<std::uint64_t> streams;
};

/// One exact lognormal step of dY = Y((rho - r)dt - theta.dB) with z the
/// standardised draw of theta.dB/|theta|.
double exact_step(double y, double t, double dt, double z, const MarketEnvironment& env);

/// Same step driven by an n-dimensional standard normal vector.
double exact_step(double y, double t, double dt, const Eigen::VectorXd& z, const MarketEnvironment& env);

PathBundle simulate_paths(double y0, const std::vector<double>& grid, std::size_t n_paths, std::uint64_t seed,
                          const MarketEnvironment& env, unsigned threads = 1);

/// Paths driven by given increments z[path][step].
PathBundle paths_from_increments(double y0, const std::vector<double>& grid,
                                 const std::vector<std::vector<double>>& z, const MarketEnvironment& env);

/// Cumulative log prices of the bond and the n stocks along a grid, driven by
/// Brownian increments dB[step] (n-vectors), measured from grid[0].
struct PricePaths {
    std::vector<double> log_bond;                // log S0(t)/S0(t_0)
    std::vector<Eigen::VectorXd> log_stocks;     // log S_i(t)/S_i(t_0)
};

PricePaths simulate_prices(const std::vector<double>& grid, const std::vector<Eigen::VectorXd>& dB,
                           const MarketEnvironment& env);

/// Y along the grid from observed prices after tau (one-fund identity).
std::vector<double> reconstruct_from_prices(const PricePaths& prices, const MarketEnvironment& env, double y_tau,
                                            const std::vector<double>& grid);

}  // namespace retire
