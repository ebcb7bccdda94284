#include "retire/numerics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <map>
#include <mutex>
#include <sstream>

#include "retire/error.hpp"

namespace retire::num {

std::vector<double> linspace(double lo, double hi, std::size_t n) {
    std::vector<double> out(n);
    if (n == 1) {
        out[0] = lo;
        return out;
    }
    for (std::size_t i = 0; i < n; ++i) out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    out.back() = hi;
    return out;
}

std::vector<double> logspace(double lo, double hi, std::size_t n) {
    std::vector<double> out = linspace(std::log(lo), std::log(hi), n);
    for (double& v : out) v = std::exp(v);
    out.front() = lo;
    out.back() = hi;
    return out;
}

std::size_t insert_sorted(std::vector<double>& grid, double value, double rel_tol) {
    auto it = std::lower_bound(grid.begin(), grid.end(), value);
    const auto idx = static_cast<std::size_t>(it - grid.begin());
    const double tol = rel_tol * std::max(1.0, std::abs(value));
    if (it != grid.end() && std::abs(*it - value) <= tol) {
        *it = value;
        return idx;
    }
    if (it != grid.begin() && std::abs(*(it - 1) - value) <= tol) {
        *(it - 1) = value;
        return idx - 1;
    }
    grid.insert(it, value);
    return idx;
}

std::size_t bracket(std::span<const double> grid, double x) {
    if (grid.size() < 2) return 0;
    auto it = std::upper_bound(grid.begin(), grid.end(), x);
    std::size_t i = (it == grid.begin()) ? 0 : static_cast<std::size_t>(it - grid.begin()) - 1;
    return std::min(i, grid.size() - 2);
}

RootResult bisect(const std::function<double(double)>& f, double lo, double hi, double rel_tol, int max_iter) {
    double flo = f(lo), fhi = f(hi);
    if (flo == 0.0) return {lo, 0};
    if (fhi == 0.0) return {hi, 0};
    if ((flo > 0) == (fhi > 0)) {
        std::ostringstream msg;
        msg << "bisection bracket does not change sign: f(" << lo << ")=" << flo << ", f(" << hi << ")=" << fhi;
        throw SolverError(msg.str());
    }
    int it = 0;
    for (; it < max_iter; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double fm = f(mid);
        if (fm == 0.0) return {mid, it + 1};
        if ((fm > 0) == (flo > 0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if (hi - lo <= rel_tol * std::max(std::abs(lo), std::abs(hi))) break;
    }
    return {0.5 * (lo + hi), it};
}

const std::pair<std::vector<double>, std::vector<double>>& gauss_hermite_normal(std::size_t n) {
    static std::mutex mutex;
    static std::map<std::size_t, std::pair<std::vector<double>, std::vector<double>>> cache;
    std::lock_guard<std::mutex> lock(mutex);
    auto found = cache.find(n);
    if (found != cache.end()) return found->second;

    // Probabilists' Hermite recurrence: off-diagonal sqrt(k).
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t k = 1; k < n; ++k) {
        const double off = std::sqrt(static_cast<double>(k));
        jacobi(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k - 1)) = off;
        jacobi(static_cast<Eigen::Index>(k - 1), static_cast<Eigen::Index>(k)) = off;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
    std::vector<double> nodes(n), weights(n);
    for (std::size_t i = 0; i < n; ++i) {
        nodes[i] = eig.eigenvalues()(static_cast<Eigen::Index>(i));
        const double v0 = eig.eigenvectors()(0, static_cast<Eigen::Index>(i));
        weights[i] = v0 * v0;
    }
    return cache.emplace(n, std::make_pair(std::move(nodes), std::move(weights))).first->second;
}

double golden_section_min(const std::function<double(double)>& f, double lo, double hi, double tol, int max_iter) {
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - inv_phi * (hi - lo), x2 = lo + inv_phi * (hi - lo);
    double f1 = f(x1), f2 = f(x2);
    for (int i = 0; i < max_iter && (hi - lo) > tol * std::max(1.0, std::abs(lo) + std::abs(hi)); ++i) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    return 0.5 * (lo + hi);
}

double simpson(const std::function<double(double)>& f, double a, double b, int panels) {
    if (a == b) return 0.0;
    if (panels < 2) panels = 2;
    if (panels % 2) ++panels;
    const double h = (b - a) / panels;
    double sum = f(a) + f(b);
    for (int i = 1; i < panels; ++i) sum += f(a + i * h) * ((i % 2) ? 4.0 : 2.0);
    return sum * h / 3.0;
}

}  // namespace retire::num
