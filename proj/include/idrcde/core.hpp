#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "idrcde/linalg.hpp"

namespace idrcde {

/// Bad user/config input (CLI exit code 2).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed or invalid data (CLI exit code 3).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numerical solver failure (CLI exit code 4).
struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Observations from a single-stage binary-action study: covariates,
/// action in {-1,+1}, outcome and treatment propensity per sample.
struct Dataset {
    std::size_t n = 0;   ///< sample count
    std::size_t p = 0;   ///< covariate dimension
    Matrix x;            ///< n x p covariates
    std::vector<int> a;  ///< actions, each -1 or +1
    Vector z;            ///< outcomes
    Vector propensity;   ///< P(A_i | X_i), each in (0, 1]
};

/// Returns a list of invariant violations ("row <i>: <what>"); empty means valid.
std::vector<std::string> validate_dataset(const Dataset& d);

/// Throws DataError when the dataset is invalid.
void require_valid(const Dataset& d);

enum class UtilityKind { identity, piecewise_linear, truncated_quadratic };

/// Nondecreasing concave utility with u(0)=0 and u(t) <= t.
///  - identity:            u(t) = t
///  - piecewise_linear:    u(t) = xi1*max(0,t) - xi2*max(0,-t),  0 <= xi1 < 1 < xi2
///  - truncated_quadratic: u(t) = t - t^2/(2 tau) for t <= tau, tau/2 otherwise
struct UtilitySpec {
    UtilityKind kind = UtilityKind::identity;
    double xi1 = 0.0;
    double xi2 = 2.0;
    double tau = 1.0;

    static UtilitySpec identity() { return {UtilityKind::identity, 0, 0, 0}; }
    static UtilitySpec piecewise_linear(double xi1, double xi2);
    static UtilitySpec truncated_quadratic(double tau);

    void validate() const;  ///< throws ConfigError on bad parameters
};

double utility_eval(const UtilitySpec& u, double t);

/// Linear decision rule d(x) = sign(beta^T x + beta0) with the bias pinned
/// to -1 or +1; sign(0) maps to +1.
struct RuleParams {
    Vector beta;
    int beta0 = 1;  ///< exactly -1 or +1
};

int decide(const RuleParams& rule, const Vector& x);

/// Affine allocation alpha(x) = b^T x + b0, optionally boxed to [-bound, bound]^{p+1}.
struct AllocParams {
    Vector b;
    double b0 = 0.0;
    double box_bound = 1e3;
};

double alloc_eval(const AllocParams& w, const Vector& x);

/// Reads/writes the dataset CSV with header `x1,...,xp,a,z,prop`.
Dataset read_dataset_csv(const std::string& path);
void write_dataset_csv(const Dataset& d, const std::string& path);

}  // namespace idrcde
