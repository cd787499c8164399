#pragma once

// Bounded Levenberg-Marquardt over the nonlinear variables with the albedos
// eliminated by exact linear sub-solves (variable projection).

#include <cstdint>
#include <vector>

#include "polinv/losses.h"
#include "polinv/pbrdf.h"

namespace polinv {

/// Vertex reliability flags.
enum VertexFlag : std::uint32_t {
    kFlagNone = 0,
    kFlagNoObservations = 1u << 0,
    kFlagEtaUnconstrained = 1u << 1,
    kFlagAzimuthUnconstrained = 1u << 2,
    kFlagSpecularFrozen = 1u << 3,
    kFlagOptimizerFailed = 1u << 4,
    kFlagRoughnessFrozen = 1u << 5,
};

struct VertexEstimate {
    PbrdfParams params;
    Vec3 normal = Vec3::UnitZ();
    LossValues residuals;
    std::uint32_t flags = kFlagNone;
};

/// Which nonlinear variables move.
struct FreeMask {
    bool eta = true;
    bool sigma_s = true;
    bool sigma_ss = true;
    bool normal = true;
    bool delta_theta_h = false;
};

struct FitBounds {
    ParamBounds params;
    double max_delta_theta_h = deg_to_rad(5.0);
    /// Largest tangent-plane normal update per step [rad].
    double max_normal_step = 0.2;
    /// Enforce σ_s <= σ_ss (projection), naming the broader lobe single
    /// scattering.
    bool ordered_lobes = true;
};

struct OptimizerOptions {
    int max_iterations = 200;
    double relative_tolerance = 1e-8;
    bool record_history = false;
};

struct FitReport {
    std::vector<double> cost_history;  // cost after every accepted step, initial first
    int iterations = 0;
    bool converged = false;
    bool failed = false;
    double initial_cost = 0.0;
    double final_cost = 0.0;
};

/// Minimizes the weighted total loss of `problem` from `init`. Albedos are
/// re-solved in closed form at every evaluation: ρ_d per channel (clamped to
/// [0, ρ_d max]) and (ρ_s, ρ_ss) jointly as a nonnegative least-squares
/// problem. Returns the final variables; the base normal is re-centered.
FitVariables fit_variables(const FitProblem& problem, const FitVariables& init,
                           const FreeMask& mask, const FitBounds& bounds,
                           const OptimizerOptions& options, FitReport* report = nullptr);

/// Closed-form albedos for fixed nonlinear variables (what fit_variables uses
/// internally); `fallback` supplies values for albedos with no data.
struct AlbedoSolution {
    Rgb rho_d = Rgb::Zero();
    double rho_s = 0.0;
    Rgb rho_ss = Rgb::Zero();
};
AlbedoSolution solve_albedos(const FitProblem& problem, const FitVariables& v,
                             const ParamBounds& bounds = {});

VertexEstimate optimize_vertex(const FitProblem& problem, const VertexEstimate& init,
                               const FreeMask& mask = {}, const FitBounds& bounds = {},
                               const OptimizerOptions& options = {}, FitReport* report = nullptr);

}  // namespace polinv
