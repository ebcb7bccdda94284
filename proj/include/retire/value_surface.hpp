#pragma once

#include <memory>
#include <string>
#include <vector>

namespace retire {

struct ValueTriple {
    double value = 0.0;
    double dy = 0.0;
    double dyy = 0.0;
};

/// A function of (t, y) with first and second y-derivatives.
class DualValue {
public:
    virtual ~DualValue() = default;
    virtual ValueTriple eval(double t, double y) const = 0;
};

/// (t, y)-gridded values with derivative tables. Interpolation is linear in t;
/// in y the value uses cubic Hermite on (value, dy) and dy uses cubic Hermite
/// on (dy, dyy), whose derivative is reported as dyy.
class ValueSurface : public DualValue {
public:
    ValueSurface() = default;
    ValueSurface(std::vector<double> t, std::vector<double> y, std::vector<double> value, std::vector<double> dy,
                 std::vector<double> dyy, std::string scheme);

    ValueTriple eval(double t, double y) const override;
    ValueTriple node(std::size_t i, std::size_t j) const;
    /// Interpolation within time row i only.
    ValueTriple eval_row(std::size_t i, double y) const;
    bool contains(double t, double y) const;

    const std::vector<double>& t() const { return t_; }
    const std::vector<double>& y() const { return y_; }
    std::size_t nt() const { return t_.size(); }
    std::size_t ny() const { return y_.size(); }
    const std::string& scheme() const { return scheme_; }

    const std::vector<double>& values() const { return v_; }
    const std::vector<double>& dy_table() const { return dy_; }
    const std::vector<double>& dyy_table() const { return dyy_; }

private:
    std::size_t idx(std::size_t i, std::size_t j) const { return i * y_.size() + j; }

    std::vector<double> t_, y_, v_, dy_, dyy_;
    std::string scheme_;
};

}  // namespace retire
