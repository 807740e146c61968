#pragma once

#include <cmath>
#include <string>

#include "qflow/errors.hpp"

namespace qflow {

/// Landau-de Gennes coefficients. Bulk: a, b, c. Elastic: L1..L4.
/// C1 is the interpolation constant entering eta2; it has no closed form
/// and is supplied by the caller.
struct LdGParams {
    double a = 0.0;
    double b = 0.0;
    double c = 1.0;
    double L1 = 1.0;
    double L2 = 0.0;
    double L3 = 0.0;
    double L4 = 0.0;
    double C1 = 1.0;

    [[nodiscard]] double zeta() const { return 2.0 * L1 + L2 + L3; }
    [[nodiscard]] bool bulk_admissible() const { return c > 0.0 && b >= 0.0; }
    [[nodiscard]] bool coercive() const { return L1 + L2 > 0.0 && L1 + L3 > 0.0; }
};

/// Throws unless c > 0, b >= 0 and (when requested) L1+L2 > 0, L1+L3 > 0.
inline void validate(const LdGParams& params, bool require_coercive = true) {
    require(params.c > 0.0, "bulk coefficient c must be positive");
    require(params.b >= 0.0, "bulk coefficient b must be non-negative");
    require(params.C1 > 0.0, "interpolation constant C1 must be positive");
    if (require_coercive) {
        require(params.coercive(), "coercivity requires L1+L2 > 0 and L1+L3 > 0");
    }
}

}  // namespace qflow
