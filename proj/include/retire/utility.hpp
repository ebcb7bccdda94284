#pragma once

#include <string>
#include <variant>
#include <vector>

namespace retire {

/// u(c, g) = c^alpha/alpha + ((g - a)^+)^beta/beta with 0 < alpha < beta < 1.
struct PowerPairParams {
    double alpha = 0.5;
    double beta = 0.75;
    double a = 10.0;  // luxury threshold, dollars/year
};

/// u(c, g) = (c - c0)^(1-phi)/(1-phi) + (g + b0)^(1-psi)/(1-psi), c >= c0.
struct ApyParams {
    double phi = 2.0;
    double psi = 0.5;
    double c0 = 1.0;  // subsistence basic consumption, dollars/year
    double b0 = 2.0;  // luxury shift, dollars/year
};

/// Sampled total utility on an increasing consumption grid.
struct TabulatedUtility {
    std::vector<double> k;
    std::vector<double> value;
};

enum class UtilityKind { PowerPair, Apy, Tabulated };

/// One additive piece of a dual function: coef * y^power, optionally
/// restricted to y < cut (Below) or y >= cut (AtOrAbove).
struct PowerTerm {
    enum class Support { All, Below, AtOrAbove };
    double coef = 0.0;
    double power = 0.0;
    Support support = Support::All;
    double cut = 0.0;
};

struct EnvelopeData {
    double k_minus = 0.0;  // left contact point of the envelope chord
    double k_plus = 0.0;   // right contact point
    double y_bar = 0.0;    // chord slope; kink of h
    double k0 = 0.0;       // where the luxury branch starts to win in u-bar
    bool degenerate = false;  // globally concave total utility: no chord
};

class UtilitySpec {
public:
    static UtilitySpec power_pair(double alpha, double beta, double a);
    static UtilitySpec apy(double phi, double psi, double c0, double b0);
    static UtilitySpec tabulated(std::vector<double> k, std::vector<double> value);

    UtilityKind kind() const;
    const PowerPairParams& power_pair_params() const;
    const ApyParams& apy_params() const;
    const TabulatedUtility& table() const;

    /// u(c, g) for the two-good variants.
    double two_good(double c, double g) const;

    /// h(y) as a sum of power terms (PowerPair and APY). Empty for Tabulated.
    const std::vector<PowerTerm>& dual_terms() const { return dual_terms_; }

    /// Upper concave hull of a tabulated utility (vertices), empty otherwise.
    const TabulatedUtility& hull() const { return hull_; }

    /// Envelope data cached at construction (PowerPair only).
    const EnvelopeData& envelope() const { return envelope_; }

    std::string describe() const;

private:
    using Params = std::variant<PowerPairParams, ApyParams, TabulatedUtility>;
    explicit UtilitySpec(Params p);

    Params params_;
    std::vector<PowerTerm> dual_terms_;
    TabulatedUtility hull_;
    EnvelopeData envelope_;
};

struct ConsumptionSplit {
    double c = 0.0;  // basic
    double g = 0.0;  // luxury
    double total() const { return c + g; }
};

/// One-sided limits of -h' at the kink y_bar.
struct KinkLimits {
    double y_bar = 0.0;
    double left = 0.0;   // y -> y_bar-, luxury branch on: k_plus
    double right = 0.0;  // y -> y_bar+, basic only: k_minus
};

struct LegendreResult {
    double value = 0.0;
    double argmax = 0.0;
    bool on_edge = false;  // maximiser is the first or last grid point
};

/// u-bar(k) = max over c + g = k of u(c, g).
double total_utility(double k, const UtilitySpec& spec);

/// Optimal basic/luxury split of a total consumption rate k.
ConsumptionSplit split_consumption(double k, const UtilitySpec& spec);

/// Interior root c(k) of c^(alpha-1) = (k - c - a)^(beta-1) on (0, k - a).
double luxury_branch_basic(double k, const PowerPairParams& p);

/// Chord data of the concave envelope of u-bar.
EnvelopeData envelope_breakpoints(const UtilitySpec& spec);

/// Smallest concave majorant of u-bar.
double concave_envelope(double k, const UtilitySpec& spec);

/// h(y) = sup_{k >= 0} (u-bar(k) - k y).
double dual_h(double y, const UtilitySpec& spec);

/// -h'(y): optimal total consumption at marginal utility y. At the kink the
/// basic-only (right) limit is returned; see dual_kink_limits.
double dual_h_neg_derivative(double y, const UtilitySpec& spec);

/// h''(y) away from the kink (PowerPair/APY only).
double dual_h_second_derivative(double y, const UtilitySpec& spec);

KinkLimits dual_kink_limits(const UtilitySpec& spec);

/// First-order-condition split at marginal utility y.
ConsumptionSplit split_from_dual(double y, const UtilitySpec& spec);

/// Brute-force conjugate: max over the table of u-bar(k) - k y.
LegendreResult numeric_legendre(const TabulatedUtility& table, double y);

/// Samples u-bar on a grid, for use with numeric_legendre.
TabulatedUtility tabulate_total_utility(const UtilitySpec& spec, const std::vector<double>& k_grid);

}  // namespace retire
