#include "retire/value_surface.hpp"

#include <algorithm>

#include "retire/error.hpp"
#include "retire/numerics.hpp"

namespace retire {

ValueSurface::ValueSurface(std::vector<double> t, std::vector<double> y, std::vector<double> value,
                           std::vector<double> dy, std::vector<double> dyy, std::string scheme)
    : t_(std::move(t)), y_(std::move(y)), v_(std::move(value)), dy_(std::move(dy)), dyy_(std::move(dyy)),
      scheme_(std::move(scheme)) {
    const std::size_t n = t_.size() * y_.size();
    if (t_.empty() || y_.size() < 2 || v_.size() != n || dy_.size() != n || dyy_.size() != n)
        throw ValidationError("value surface tables do not match the grid");
    for (std::size_t i = 1; i < t_.size(); ++i)
        if (!(t_[i] > t_[i - 1])) throw ValidationError("surface t-grid must be strictly increasing");
    for (std::size_t j = 1; j < y_.size(); ++j)
        if (!(y_[j] > y_[j - 1])) throw ValidationError("surface y-grid must be strictly increasing");
}

bool ValueSurface::contains(double t, double y) const {
    return t >= t_.front() && t <= t_.back() && y >= y_.front() && y <= y_.back();
}

ValueTriple ValueSurface::node(std::size_t i, std::size_t j) const {
    const std::size_t k = idx(i, j);
    return {v_[k], dy_[k], dyy_[k]};
}

ValueTriple ValueSurface::eval_row(std::size_t i, double y) const {
    const std::size_t j = num::bracket(y_, y);
    const double h = y_[j + 1] - y_[j];
    const double s = (y - y_[j]) / h;
    const std::size_t a = idx(i, j), b = idx(i, j + 1);
    const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
    const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
    // d/ds of the basis
    const double d00 = 6 * s * s - 6 * s, d10 = 3 * s * s - 4 * s + 1;
    const double d01 = -6 * s * s + 6 * s, d11 = 3 * s * s - 2 * s;
    ValueTriple out;
    out.value = h00 * v_[a] + h10 * h * dy_[a] + h01 * v_[b] + h11 * h * dy_[b];
    out.dy = h00 * dy_[a] + h10 * h * dyy_[a] + h01 * dy_[b] + h11 * h * dyy_[b];
    out.dyy = (d00 * dy_[a] + d10 * h * dyy_[a] + d01 * dy_[b] + d11 * h * dyy_[b]) / h;
    return out;
}

ValueTriple ValueSurface::eval(double t, double y) const {
    if (t_.size() == 1) return eval_row(0, y);
    const double tc = std::clamp(t, t_.front(), t_.back());
    const std::size_t i = num::bracket(t_, tc);
    const double w = (tc - t_[i]) / (t_[i + 1] - t_[i]);
    const ValueTriple lo = eval_row(i, y);
    if (w == 0.0) return lo;
    const ValueTriple hi = eval_row(i + 1, y);
    return {(1 - w) * lo.value + w * hi.value, (1 - w) * lo.dy + w * hi.dy, (1 - w) * lo.dyy + w * hi.dyy};
}

}  // namespace retire
