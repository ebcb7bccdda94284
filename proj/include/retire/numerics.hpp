#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <exception>
#include <functional>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace retire::num {

inline constexpr double kPi = 3.14159265358979323846;

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi); }

std::vector<double> linspace(double lo, double hi, std::size_t n);
std::vector<double> logspace(double lo, double hi, std::size_t n);

/// Inserts `value` into a sorted grid unless a node already lies within
/// `rel_tol` of it. Returns the index of the node equal to `value`.
std::size_t insert_sorted(std::vector<double>& grid, double value, double rel_tol = 1e-12);

/// Index i with grid[i] <= x < grid[i+1], clamped to [0, n-2].
std::size_t bracket(std::span<const double> grid, double x);

struct RootResult {
    double root = 0.0;
    int iterations = 0;
};

/// Bisection for a sign change of f on [lo, hi]. Throws SolverError with the
/// bracket values when f(lo) and f(hi) share a sign.
RootResult bisect(const std::function<double(double)>& f, double lo, double hi,
                  double rel_tol = 1e-14, int max_iter = 400);

/// Gauss-Hermite rule for E[f(Z)], Z ~ N(0,1): returns (nodes z_i, weights w_i)
/// with sum w_i = 1. Golub-Welsch on the Hermite Jacobi matrix, cached per n.
const std::pair<std::vector<double>, std::vector<double>>& gauss_hermite_normal(std::size_t n);

/// Golden-section minimisation on [lo, hi].
double golden_section_min(const std::function<double(double)>& f, double lo, double hi,
                          double tol = 1e-13, int max_iter = 200);

/// Adaptive Simpson quadrature for an N-vector integrand. Convergence is
/// judged on the largest component error relative to `scale` (per component).
template <std::size_t N>
class AdaptiveSimpson {
public:
    using Vec = std::array<double, N>;

    AdaptiveSimpson(double rel_tol, double abs_tol, int max_depth = 40)
        : rel_tol_(rel_tol), abs_tol_(abs_tol), max_depth_(max_depth) {}

    template <class F>
    Vec integrate(F&& f, double a, double b) {
        evaluations_ = 0;
        depth_limited_ = false;
        // Seed with a few uniform panels so narrow features are not skipped.
        constexpr int kPanels = 8;
        Vec total{};
        const double h = (b - a) / kPanels;
        for (int p = 0; p < kPanels; ++p) {
            const double lo = a + p * h, hi = (p + 1 == kPanels) ? b : lo + h;
            const double mid = 0.5 * (lo + hi);
            Vec flo = call(f, lo), fmid = call(f, mid), fhi = call(f, hi);
            Vec s = simpson(lo, hi, flo, fmid, fhi);
            Vec r = recurse(f, lo, hi, flo, fmid, fhi, s, abs_tol_ / kPanels, max_depth_);
            for (std::size_t i = 0; i < N; ++i) total[i] += r[i];
        }
        return total;
    }

    int evaluations() const { return evaluations_; }
    bool hit_depth_limit() const { return depth_limited_; }

private:
    template <class F>
    Vec call(F& f, double x) {
        ++evaluations_;
        return f(x);
    }

    static Vec simpson(double a, double b, const Vec& fa, const Vec& fm, const Vec& fb) {
        Vec s{};
        const double w = (b - a) / 6.0;
        for (std::size_t i = 0; i < N; ++i) s[i] = w * (fa[i] + 4.0 * fm[i] + fb[i]);
        return s;
    }

    template <class F>
    Vec recurse(F& f, double a, double b, const Vec& fa, const Vec& fm, const Vec& fb,
                const Vec& whole, double tol, int depth) {
        const double m = 0.5 * (a + b);
        const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
        Vec flm = call(f, lm), frm = call(f, rm);
        Vec left = simpson(a, m, fa, flm, fm);
        Vec right = simpson(m, b, fm, frm, fb);
        bool ok = true;
        for (std::size_t i = 0; i < N; ++i) {
            const double sum = left[i] + right[i];
            const double err = std::abs(sum - whole[i]);
            if (err > 15.0 * std::max(tol, rel_tol_ * std::abs(sum))) ok = false;
        }
        if (ok || depth <= 0) {
            if (!ok) depth_limited_ = true;
            Vec out{};
            for (std::size_t i = 0; i < N; ++i)
                out[i] = left[i] + right[i] + (left[i] + right[i] - whole[i]) / 15.0;
            return out;
        }
        Vec l = recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1);
        Vec r = recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
        for (std::size_t i = 0; i < N; ++i) l[i] += r[i];
        return l;
    }

    double rel_tol_;
    double abs_tol_;
    int max_depth_;
    int evaluations_ = 0;
    bool depth_limited_ = false;
};

/// Composite Simpson rule with `panels` (rounded up to even) subintervals.
double simpson(const std::function<double(double)>& f, double a, double b, int panels = 200);

/// Runs fn(i) for i in [0, n) on up to `threads` workers with a fixed
/// strided assignment; fn must only write to slot i.
template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& fn) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (unsigned k = 0; k < threads; ++k)
        pool.emplace_back([&, k] {
            try {
                for (std::size_t i = k; i < n; i += threads) fn(i);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace retire::num
