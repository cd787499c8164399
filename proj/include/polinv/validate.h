#pragma once

// Built-in acceptance suite shared by `polinv validate` and the acceptance
// test binary.

#include <functional>
#include <string>
#include <vector>

#include "polinv/pbrdf.h"

namespace polinv {

struct CriterionResult {
    int id = 0;
    std::string name;
    std::string expected;
    std::string actual;
    bool pass = false;
    double seconds = 0.0;
};

struct ValidationOptions {
    /// Criteria to run (1..10); empty runs all of them.
    std::vector<int> criteria;
    /// Smaller scenes for a fast smoke run; the thresholds stay the same.
    bool quick = false;
    /// Mutation hook: closed forms used by the chain-vs-closed-form check.
    ClosedFormVariant closed_form = ClosedFormVariant::correct;
    int workers = 1;
    /// Receives one line per finished sub-run (closed-loop spheres etc.).
    std::function<void(const std::string&)> progress;
};

std::vector<CriterionResult> run_validation(const ValidationOptions& options);

/// Table of criterion / expected / actual / pass / seconds.
std::string format_report(const std::vector<CriterionResult>& results);

/// The reference material of the closed-loop spheres with index `eta`.
PbrdfParams reference_material(double eta);

/// Index-of-refraction values of the closed-loop spheres.
const std::vector<double>& reference_etas();

}  // namespace polinv
