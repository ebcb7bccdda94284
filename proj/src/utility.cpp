#include "retire/utility.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "retire/error.hpp"
#include "retire/numerics.hpp"

namespace retire {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool is_half_three_quarters(const PowerPairParams& p) { return p.alpha == 0.5 && p.beta == 0.75; }

double basic_only(double k, const PowerPairParams& p) { return std::pow(k, p.alpha) / p.alpha; }

double split_value(double k, double c, const PowerPairParams& p) {
    const double lux = std::max(k - c - p.a, 0.0);
    return std::pow(c, p.alpha) / p.alpha + std::pow(lux, p.beta) / p.beta;
}

double closed_form_basic(double k, double a) { return std::sqrt(k - a + 0.25) - 0.5; }

double branch_basic(double k, const PowerPairParams& p) {
    return is_half_three_quarters(p) ? closed_form_basic(k, p.a) : luxury_branch_basic(k, p);
}

EnvelopeData power_pair_envelope(const PowerPairParams& p) {
    EnvelopeData e;
    e.y_bar = std::pow((1.0 - p.beta) / (p.a * p.beta), 1.0 - p.beta);
    e.k_minus = std::pow(e.y_bar, 1.0 / (p.alpha - 1.0));
    e.k_plus = e.k_minus + p.a + std::pow(e.y_bar, 1.0 / (p.beta - 1.0));
    auto gap = [&](double k) { return split_value(k, branch_basic(k, p), p) - basic_only(k, p); };
    e.k0 = num::bisect(gap, p.a * (1.0 + 1e-12), 10.0 * e.k_plus, 1e-12).root;
    return e;
}

/// Upper concave hull of (k_i, v_i) by monotone chain.
TabulatedUtility upper_hull(const TabulatedUtility& t) {
    TabulatedUtility h;
    for (std::size_t i = 0; i < t.k.size(); ++i) {
        while (h.k.size() >= 2) {
            const std::size_t m = h.k.size();
            const double cross = (h.k[m - 1] - h.k[m - 2]) * (t.value[i] - h.value[m - 2]) -
                                 (h.value[m - 1] - h.value[m - 2]) * (t.k[i] - h.k[m - 2]);
            if (cross < 0.0) break;
            h.k.pop_back();
            h.value.pop_back();
        }
        h.k.push_back(t.k[i]);
        h.value.push_back(t.value[i]);
    }
    return h;
}

double interp_table(const TabulatedUtility& t, double k) {
    const std::size_t i = num::bracket(t.k, k);
    const double w = (k - t.k[i]) / (t.k[i + 1] - t.k[i]);
    return (1.0 - w) * t.value[i] + w * t.value[i + 1];
}

bool in_support(const PowerTerm& term, double y) {
    switch (term.support) {
        case PowerTerm::Support::All: return true;
        case PowerTerm::Support::Below: return y < term.cut;
        case PowerTerm::Support::AtOrAbove: return y >= term.cut;
    }
    return true;
}

void require_positive_y(double y) {
    if (!(y > 0.0)) throw ValidationError("marginal utility y must be positive");
}

/// Index of the hull vertex maximising v - k y; ties go to the smaller k.
/// Hull slopes decrease, so the answer is the first vertex whose right edge
/// has slope <= y.
std::size_t hull_argmax(const TabulatedUtility& h, double y) {
    std::size_t lo = 0, hi = h.k.size() - 1;
    while (lo < hi) {
        const std::size_t mid = (lo + hi) / 2;
        const double slope = (h.value[mid + 1] - h.value[mid]) / (h.k[mid + 1] - h.k[mid]);
        if (slope <= y)
            hi = mid;
        else
            lo = mid + 1;
    }
    return lo;
}

}  // namespace

UtilitySpec::UtilitySpec(Params p) : params_(std::move(p)) {
    if (auto* pp = std::get_if<PowerPairParams>(&params_)) {
        envelope_ = power_pair_envelope(*pp);
        const double ybar = envelope_.y_bar;
        const double ra = (1.0 - pp->alpha) / pp->alpha, rb = (1.0 - pp->beta) / pp->beta;
        dual_terms_ = {
            {ra, -pp->alpha / (1.0 - pp->alpha), PowerTerm::Support::All, 0.0},
            {rb, -pp->beta / (1.0 - pp->beta), PowerTerm::Support::Below, ybar},
            {-pp->a, 1.0, PowerTerm::Support::Below, ybar},
        };
    } else if (auto* ap = std::get_if<ApyParams>(&params_)) {
        const double cut = std::pow(ap->b0, -ap->psi);
        const double b0term = std::pow(ap->b0, 1.0 - ap->psi) / (1.0 - ap->psi);
        dual_terms_ = {
            {ap->phi / (1.0 - ap->phi), 1.0 - 1.0 / ap->phi, PowerTerm::Support::All, 0.0},
            {-ap->c0, 1.0, PowerTerm::Support::All, 0.0},
            {b0term, 0.0, PowerTerm::Support::AtOrAbove, cut},
            {ap->psi / (1.0 - ap->psi), 1.0 - 1.0 / ap->psi, PowerTerm::Support::Below, cut},
            {ap->b0, 1.0, PowerTerm::Support::Below, cut},
        };
    } else {
        hull_ = upper_hull(std::get<TabulatedUtility>(params_));
    }
}

UtilitySpec UtilitySpec::power_pair(double alpha, double beta, double a) {
    if (!(alpha > 0.0 && alpha < beta && beta < 1.0))
        throw ValidationError("power-pair utility needs 0 < alpha < beta < 1");
    if (!(a > 0.0)) throw ValidationError("luxury threshold a must be positive");
    return UtilitySpec(PowerPairParams{alpha, beta, a});
}

UtilitySpec UtilitySpec::apy(double phi, double psi, double c0, double b0) {
    if (!(phi > 0.0) || !(psi > 0.0) || phi == 1.0 || psi == 1.0)
        throw ValidationError("APY exponents phi, psi must be positive and different from 1");
    if (!(c0 >= 0.0)) throw ValidationError("APY subsistence level c0 must be nonnegative");
    if (!(b0 > 0.0)) throw ValidationError("APY luxury shift b0 must be positive");
    return UtilitySpec(ApyParams{phi, psi, c0, b0});
}

UtilitySpec UtilitySpec::tabulated(std::vector<double> k, std::vector<double> value) {
    if (k.size() < 2 || k.size() != value.size())
        throw ValidationError("tabulated utility needs at least two (k, value) pairs of equal length");
    for (std::size_t i = 1; i < k.size(); ++i) {
        if (!(k[i] > k[i - 1])) throw ValidationError("tabulated utility grid must be strictly increasing");
        if (!(value[i] > value[i - 1])) throw ValidationError("tabulated utility values must be strictly increasing");
    }
    if (k.front() < 0.0) throw ValidationError("tabulated utility grid must start at k >= 0");
    return UtilitySpec(TabulatedUtility{std::move(k), std::move(value)});
}

UtilityKind UtilitySpec::kind() const {
    if (std::holds_alternative<PowerPairParams>(params_)) return UtilityKind::PowerPair;
    if (std::holds_alternative<ApyParams>(params_)) return UtilityKind::Apy;
    return UtilityKind::Tabulated;
}

const PowerPairParams& UtilitySpec::power_pair_params() const {
    if (auto* p = std::get_if<PowerPairParams>(&params_)) return *p;
    throw ValidationError("utility is not of power-pair type");
}

const ApyParams& UtilitySpec::apy_params() const {
    if (auto* p = std::get_if<ApyParams>(&params_)) return *p;
    throw ValidationError("utility is not of APY type");
}

const TabulatedUtility& UtilitySpec::table() const {
    if (auto* p = std::get_if<TabulatedUtility>(&params_)) return *p;
    throw ValidationError("utility is not tabulated");
}

double UtilitySpec::two_good(double c, double g) const {
    if (c < 0.0 || g < 0.0) throw ValidationError("consumption rates must be nonnegative");
    switch (kind()) {
        case UtilityKind::PowerPair: {
            const auto& p = power_pair_params();
            return std::pow(c, p.alpha) / p.alpha + std::pow(std::max(g - p.a, 0.0), p.beta) / p.beta;
        }
        case UtilityKind::Apy: {
            const auto& p = apy_params();
            if (c < p.c0) return -std::numeric_limits<double>::infinity();
            return std::pow(c - p.c0, 1.0 - p.phi) / (1.0 - p.phi) + std::pow(g + p.b0, 1.0 - p.psi) / (1.0 - p.psi);
        }
        case UtilityKind::Tabulated: return total_utility(c + g, *this);
    }
    return kNaN;
}

std::string UtilitySpec::describe() const {
    std::ostringstream os;
    os.precision(10);
    switch (kind()) {
        case UtilityKind::PowerPair: {
            const auto& p = power_pair_params();
            os << "power_pair(alpha=" << p.alpha << ", beta=" << p.beta << ", a=" << p.a << ")";
            break;
        }
        case UtilityKind::Apy: {
            const auto& p = apy_params();
            os << "apy(phi=" << p.phi << ", psi=" << p.psi << ", c0=" << p.c0 << ", b0=" << p.b0 << ")";
            break;
        }
        case UtilityKind::Tabulated: os << "tabulated(" << table().k.size() << " points)"; break;
    }
    return os.str();
}

double luxury_branch_basic(double k, const PowerPairParams& p) {
    if (!(k > p.a)) throw ValidationError("luxury branch requires k > a");
    const double top = k - p.a;
    // log form of c^(alpha-1) - (k-c-a)^(beta-1), strictly decreasing in c
    auto foc = [&](double c) { return (p.alpha - 1.0) * std::log(c) - (p.beta - 1.0) * std::log(top - c); };
    const double lo = std::max(top * 1e-200, std::numeric_limits<double>::min());
    return num::bisect(foc, lo, top * (1.0 - 1e-16), 1e-15).root;
}

double total_utility(double k, const UtilitySpec& spec) {
    const ConsumptionSplit s = split_consumption(k, spec);
    if (spec.kind() == UtilityKind::Tabulated) return interp_table(spec.table(), k);
    return spec.two_good(s.c, s.g);
}

ConsumptionSplit split_consumption(double k, const UtilitySpec& spec) {
    if (!(k >= 0.0)) throw ValidationError("total consumption k must be nonnegative");
    switch (spec.kind()) {
        case UtilityKind::PowerPair: {
            const auto& p = spec.power_pair_params();
            const double k0 = envelope_breakpoints(spec).k0;
            if (k <= k0) return {k, 0.0};
            const double c = branch_basic(k, p);
            return {c, k - c};
        }
        case UtilityKind::Apy: {
            const auto& p = spec.apy_params();
            if (k < p.c0) throw ValidationError("APY utility is undefined below subsistence c0");
            if (k <= p.c0 + std::pow(p.b0, p.psi / p.phi)) return {k, 0.0};
            auto foc = [&](double c) { return -p.phi * std::log(c - p.c0) + p.psi * std::log(k - c + p.b0); };
            const double lo = p.c0 + (k - p.c0) * 1e-15, hi = k;
            const double c = num::bisect(foc, lo, hi, 1e-15).root;
            return {c, k - c};
        }
        case UtilityKind::Tabulated: {
            const auto& t = spec.table();
            if (k < t.k.front() || k > t.k.back()) throw ValidationError("k outside the tabulated utility grid");
            return {k, 0.0};
        }
    }
    return {kNaN, kNaN};
}

EnvelopeData envelope_breakpoints(const UtilitySpec& spec) {
    switch (spec.kind()) {
        case UtilityKind::PowerPair: return spec.envelope();
        case UtilityKind::Apy: {
            EnvelopeData e;
            e.degenerate = true;
            e.y_bar = std::pow(spec.apy_params().b0, -spec.apy_params().psi);
            e.k_minus = e.k_plus = e.k0 = kNaN;
            return e;
        }
        case UtilityKind::Tabulated: {
            const auto& t = spec.table();
            const auto& h = spec.hull();
            EnvelopeData e;
            e.degenerate = true;
            e.k_minus = e.k_plus = e.y_bar = e.k0 = kNaN;
            // first hull edge that skips sampled points
            for (std::size_t j = 0; j + 1 < h.k.size(); ++j) {
                const auto lo = std::lower_bound(t.k.begin(), t.k.end(), h.k[j]);
                const auto hi = std::lower_bound(t.k.begin(), t.k.end(), h.k[j + 1]);
                if (hi - lo > 1) {
                    e.degenerate = false;
                    e.k_minus = h.k[j];
                    e.k_plus = h.k[j + 1];
                    e.y_bar = (h.value[j + 1] - h.value[j]) / (h.k[j + 1] - h.k[j]);
                    break;
                }
            }
            return e;
        }
    }
    return {};
}

double concave_envelope(double k, const UtilitySpec& spec) {
    if (!(k >= 0.0)) throw ValidationError("total consumption k must be nonnegative");
    switch (spec.kind()) {
        case UtilityKind::PowerPair: {
            const EnvelopeData e = envelope_breakpoints(spec);
            if (k > e.k_minus && k < e.k_plus) return total_utility(e.k_minus, spec) + e.y_bar * (k - e.k_minus);
            return total_utility(k, spec);
        }
        case UtilityKind::Apy: return total_utility(k, spec);
        case UtilityKind::Tabulated: {
            const auto& h = spec.hull();
            if (k < h.k.front() || k > h.k.back()) throw ValidationError("k outside the tabulated utility grid");
            return interp_table(h, k);
        }
    }
    return kNaN;
}

double dual_h(double y, const UtilitySpec& spec) {
    require_positive_y(y);
    if (spec.kind() == UtilityKind::Tabulated) {
        const auto& h = spec.hull();
        const std::size_t i = hull_argmax(h, y);
        return h.value[i] - h.k[i] * y;
    }
    double sum = 0.0;
    for (const auto& term : spec.dual_terms())
        if (in_support(term, y)) sum += term.coef * std::pow(y, term.power);
    return sum;
}

double dual_h_neg_derivative(double y, const UtilitySpec& spec) {
    require_positive_y(y);
    if (spec.kind() == UtilityKind::Tabulated) return spec.hull().k[hull_argmax(spec.hull(), y)];
    double sum = 0.0;
    for (const auto& term : spec.dual_terms())
        if (in_support(term, y) && term.power != 0.0) sum -= term.coef * term.power * std::pow(y, term.power - 1.0);
    return sum;
}

double dual_h_second_derivative(double y, const UtilitySpec& spec) {
    require_positive_y(y);
    if (spec.kind() == UtilityKind::Tabulated) return 0.0;
    double sum = 0.0;
    for (const auto& term : spec.dual_terms())
        if (in_support(term, y)) sum += term.coef * term.power * (term.power - 1.0) * std::pow(y, term.power - 2.0);
    return sum;
}

KinkLimits dual_kink_limits(const UtilitySpec& spec) {
    KinkLimits out;
    switch (spec.kind()) {
        case UtilityKind::PowerPair: {
            const auto& p = spec.power_pair_params();
            const EnvelopeData e = envelope_breakpoints(spec);
            out.y_bar = e.y_bar;
            out.right = std::pow(e.y_bar, 1.0 / (p.alpha - 1.0));
            out.left = out.right + p.a + std::pow(e.y_bar, 1.0 / (p.beta - 1.0));
            return out;
        }
        case UtilityKind::Apy: {
            const auto& p = spec.apy_params();
            out.y_bar = std::pow(p.b0, -p.psi);
            out.right = p.c0 + std::pow(out.y_bar, -1.0 / p.phi);
            out.left = out.right + std::pow(out.y_bar, -1.0 / p.psi) - p.b0;
            return out;
        }
        case UtilityKind::Tabulated: {
            const EnvelopeData e = envelope_breakpoints(spec);
            out.y_bar = e.y_bar;
            out.left = e.k_plus;
            out.right = e.k_minus;
            return out;
        }
    }
    return out;
}

ConsumptionSplit split_from_dual(double y, const UtilitySpec& spec) {
    require_positive_y(y);
    switch (spec.kind()) {
        case UtilityKind::PowerPair: {
            const auto& p = spec.power_pair_params();
            const double ybar = spec.dual_terms()[1].cut;
            const double c = std::pow(y, 1.0 / (p.alpha - 1.0));
            const double g = y < ybar ? p.a + std::pow(y, 1.0 / (p.beta - 1.0)) : 0.0;
            return {c, g};
        }
        case UtilityKind::Apy: {
            const auto& p = spec.apy_params();
            const double cut = std::pow(p.b0, -p.psi);
            const double c = p.c0 + std::pow(y, -1.0 / p.phi);
            const double g = y < cut ? std::pow(y, -1.0 / p.psi) - p.b0 : 0.0;
            return {c, g};
        }
        case UtilityKind::Tabulated: return {dual_h_neg_derivative(y, spec), 0.0};
    }
    return {kNaN, kNaN};
}

LegendreResult numeric_legendre(const TabulatedUtility& table, double y) {
    require_positive_y(y);
    if (table.k.empty() || table.k.size() != table.value.size())
        throw ValidationError("numeric_legendre needs a nonempty table");
    std::size_t best = 0;
    double best_v = table.value[0] - table.k[0] * y;
    for (std::size_t i = 1; i < table.k.size(); ++i) {
        const double v = table.value[i] - table.k[i] * y;
        if (v > best_v) {
            best_v = v;
            best = i;
        }
    }
    LegendreResult r;
    r.value = best_v;
    r.argmax = table.k[best];
    r.on_edge = best == 0 || best + 1 == table.k.size();
    return r;
}

TabulatedUtility tabulate_total_utility(const UtilitySpec& spec, const std::vector<double>& k_grid) {
    TabulatedUtility t;
    t.k = k_grid;
    t.value.reserve(k_grid.size());
    for (double k : k_grid) t.value.push_back(total_utility(k, spec));
    return t;
}

}  // namespace retire
