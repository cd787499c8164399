#include "polinv/fit.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

#include <Eigen/Dense>
#include <ceres/jet.h>

#include "residuals.h"

namespace polinv {

namespace {

using detail::Row;
using AlbedoVec = Eigen::Matrix<double, kNumAlbedo, 1>;
using NlVec = Eigen::Matrix<double, kNumNonlinear, 1>;

constexpr double kInf = std::numeric_limits<double>::infinity();

struct AlbedoState {
    AlbedoVec value = AlbedoVec::Zero();
    std::array<bool, kNumAlbedo> free{};
};

// Box-constrained linear least squares over the seven albedos: ρ_d in
// [0, ρ_d max], ρ_s and ρ_ss nonnegative. The problem is tiny and strictly
// convex, so active sets are enumerated (warm state first) until one
// satisfies the KKT conditions. Albedos without data keep their fallback.
enum class Bound : std::uint8_t { free, lower, upper };
using BoundState = std::array<Bound, kNumAlbedo>;

AlbedoState solve_albedo_rows(const std::vector<Row<double>>& rows, const AlbedoVec& fallback,
                              double rho_d_max, BoundState* warm = nullptr) {
    using Mat7 = Eigen::Matrix<double, kNumAlbedo, kNumAlbedo>;
    Mat7 m = Mat7::Zero();
    AlbedoVec b = AlbedoVec::Zero();
    for (const auto& r : rows) {
        for (int p = 0; p < detail::kRowSlots; ++p) {
            const int cp = r.col[p];
            if (cp < 0) continue;
            b[cp] -= r.coef[p] * r.offset;
            for (int q = 0; q < detail::kRowSlots; ++q)
                if (r.col[q] >= 0) m(cp, r.col[q]) += r.coef[p] * r.coef[q];
        }
    }

    AlbedoState st;
    std::array<bool, kNumAlbedo> has_data{};
    int var[kNumAlbedo], nv = 0;
    for (int k = 0; k < kNumAlbedo; ++k) {
        has_data[k] = m(k, k) > 1e-300;
        if (has_data[k]) var[nv++] = k;
    }
    st.value = fallback;
    if (nv == 0) return st;

    // A relative ridge toward the fallback keeps collinear columns solvable.
    for (int i = 0; i < nv; ++i) {
        const double eps = 1e-12 * m(var[i], var[i]);
        m(var[i], var[i]) += eps;
        b[var[i]] += eps * fallback[var[i]];
    }
    const double hi_of[kNumAlbedo] = {rho_d_max, rho_d_max, rho_d_max, kInf, kInf, kInf, kInf};
    auto value_at = [&](int k, Bound bd) { return bd == Bound::upper ? hi_of[k] : 0.0; };

    auto objective = [&](const AlbedoVec& a) { return 0.5 * a.dot(m * a) - b.dot(a); };
    double best = kInf;
    AlbedoVec best_a = fallback;
    BoundState best_state{};
    // Returns true when `state` yields a KKT point; feasible points are also
    // tracked in case round-off defeats every KKT check.
    auto try_state = [&](const BoundState& state, AlbedoVec* out) {
        AlbedoVec a = fallback;
        int fi[kNumAlbedo], nf = 0;
        for (int i = 0; i < nv; ++i) {
            const int k = var[i];
            if (state[k] == Bound::free) fi[nf++] = k;
            else a[k] = value_at(k, state[k]);
        }
        if (nf > 0) {
            Eigen::MatrixXd ms(nf, nf);
            Eigen::VectorXd bs(nf);
            for (int i = 0; i < nf; ++i) {
                bs[i] = b[fi[i]];
                for (int k = 0; k < kNumAlbedo; ++k)
                    if (state[k] != Bound::free || !has_data[k]) bs[i] -= m(fi[i], k) * a[k];
                for (int j = 0; j < nf; ++j) ms(i, j) = m(fi[i], fi[j]);
            }
            const Eigen::VectorXd sol = ms.ldlt().solve(bs);
            if (!sol.allFinite()) return false;
            for (int i = 0; i < nf; ++i) {
                if (sol[i] < 0.0 || sol[i] > hi_of[fi[i]]) return false;
                a[fi[i]] = sol[i];
            }
        }
        if (const double f = objective(a); f < best) {
            best = f;
            best_a = a;
            best_state = state;
        }
        const AlbedoVec g = m * a - b;
        for (int i = 0; i < nv; ++i) {
            const int k = var[i];
            if (state[k] == Bound::lower && g[k] < -1e-12 * std::abs(b[k])) return false;
            if (state[k] == Bound::upper && g[k] > 1e-12 * std::abs(b[k])) return false;
        }
        *out = a;
        return true;
    };

    BoundState found{};
    bool ok = false;
    AlbedoVec a;
    if (warm) ok = try_state(*warm, &a), found = *warm;
    if (!ok) {
        found.fill(Bound::free);
        ok = try_state(found, &a);
    }
    if (!ok) {
        int choices = 1;
        for (int i = 0; i < nv; ++i) choices *= var[i] < detail::kColRhoS ? 3 : 2;
        for (int code = 0; code < choices && !ok; ++code) {
            BoundState state{};
            state.fill(Bound::free);
            int c = code;
            for (int i = 0; i < nv; ++i) {
                const int base = var[i] < detail::kColRhoS ? 3 : 2;
                state[var[i]] = static_cast<Bound>(c % base);
                c /= base;
            }
            if (try_state(state, &a)) {
                found = state;
                ok = true;
            }
        }
        if (!ok && best < kInf) {
            a = best_a;
            found = best_state;
            ok = true;
        } else if (!ok) {
            for (int i = 0; i < nv; ++i)
                a[var[i]] = std::clamp(fallback[var[i]], 0.0, hi_of[var[i]]);
        }
    }
    if (warm && ok) *warm = found;
    st.value = a;
    for (int i = 0; i < nv; ++i) st.free[var[i]] = ok && found[var[i]] == Bound::free;
    return st;
}

class Solver {
public:
    Solver(const FitProblem& pb, const FitBounds& bounds, const AlbedoVec& fallback)
        : pb_(pb), bounds_(bounds), fallback_(fallback) {}

    // Cost at nonlinear point `nl`, with albedos re-solved.
    double evaluate(const NlVec& nl, const Vec3& base, AlbedoState* albedo) {
        detail::build_rows(pb_, pb_.weights, nl.data(), base, rows_);
        *albedo = solve_albedo_rows(rows_, fallback_, bounds_.params.rho_d_max, &warm_);
        double cost = 0.0;
        for (const auto& r : rows_) {
            const double e = detail::row_value(r, albedo->value);
            cost += e * e;
        }
        return cost;
    }

    // Variable-projection Jacobian (Kaufman form) and residual vector.
    template <int N>
    void jacobian(const NlVec& nl, const Vec3& base, const std::array<int, kNumNonlinear>& free_idx,
                  const AlbedoState& albedo, Eigen::MatrixXd* jac, Eigen::VectorXd* res) {
        using J = ceres::Jet<double, N>;
        J x[kNumNonlinear];
        for (int k = 0; k < kNumNonlinear; ++k) x[k] = J(nl[k]);
        for (int s = 0; s < N; ++s) x[free_idx[s]] = J(nl[free_idx[s]], s);
        std::vector<Row<J>> rows;
        rows.reserve(rows_.size());
        detail::build_rows(pb_, pb_.weights, x, base, rows);

        const int m = static_cast<int>(rows.size());
        jac->resize(m, N);
        res->resize(m);
        int nf = 0, slot_of[kNumAlbedo];
        for (int k = 0; k < kNumAlbedo; ++k) slot_of[k] = albedo.free[k] ? nf++ : -1;
        Eigen::MatrixXd c = Eigen::MatrixXd::Zero(m, nf);
        for (int j = 0; j < m; ++j) {
            const J e = detail::row_value(rows[j], albedo.value);
            (*res)[j] = e.a;
            for (int s = 0; s < N; ++s) (*jac)(j, s) = e.v[s];
            for (int t = 0; t < detail::kRowSlots; ++t) {
                const int col = rows[j].col[t];
                if (col >= 0 && slot_of[col] >= 0) c(j, slot_of[col]) += rows[j].coef[t].a;
            }
        }
        if (nf > 0) {
            const Eigen::MatrixXd ctc = c.transpose() * c;
            const double ridge = 1e-14 * std::max(ctc.trace(), 1e-300);
            const Eigen::MatrixXd proj =
                (ctc + ridge * Eigen::MatrixXd::Identity(nf, nf)).ldlt().solve(c.transpose() * *jac);
            jac->noalias() -= c * proj;
        }
    }

private:
    const FitProblem& pb_;
    const FitBounds& bounds_;
    AlbedoVec fallback_;
    std::vector<Row<double>> rows_;
    BoundState warm_ = [] {
        BoundState s;
        s.fill(Bound::free);
        return s;
    }();
};

Vec3 normal_from(const Vec3& base, double u, double v) {
    const auto [t1, t2] = tangent_basis(base);
    return (base + u * t1 + v * t2).normalized();
}

}  // namespace

AlbedoSolution solve_albedos(const FitProblem& problem, const FitVariables& v,
                             const ParamBounds& bounds) {
    std::vector<Row<double>> rows;
    detail::build_rows(problem, problem.weights, v.x.data(), v.base_normal, rows);
    const AlbedoState st = solve_albedo_rows(rows, v.x.tail<kNumAlbedo>(), bounds.rho_d_max);
    AlbedoSolution out;
    out.rho_d = st.value.head<3>().array();
    out.rho_s = st.value[3];
    out.rho_ss = st.value.tail<3>().array();
    return out;
}

FitVariables fit_variables(const FitProblem& problem, const FitVariables& init,
                           const FreeMask& mask, const FitBounds& bounds,
                           const OptimizerOptions& options, FitReport* report) {
    FitReport local;
    FitReport& rep = report ? *report : local;
    rep = FitReport{};

    const ParamBounds& pb = bounds.params;
    NlVec lo, hi;
    lo << pb.eta_min, pb.sigma_min, pb.sigma_min, -kInf, -kInf, -bounds.max_delta_theta_h;
    hi << pb.eta_max, pb.sigma_max, pb.sigma_max, kInf, kInf, bounds.max_delta_theta_h;
    std::array<bool, kNumNonlinear> is_free{mask.eta, mask.sigma_s, mask.sigma_ss,
                                            mask.normal && !problem.per_sample_normals,
                                            mask.normal && !problem.per_sample_normals,
                                            mask.delta_theta_h && problem.terms.theta_h_offset};

    FitVariables cur = init;
    cur.base_normal = init.normal();
    cur.x[kNormalU] = cur.x[kNormalV] = 0.0;
    // Keeps σ_s <= σ_ss: the two lobes are otherwise interchangeable up to
    // the colour of the fainter one.
    auto order_lobes = [&](NlVec& v) {
        if (!bounds.ordered_lobes || v[kSigmaS] <= v[kSigmaSs]) return;
        if (is_free[kSigmaS] && is_free[kSigmaSs])
            v[kSigmaS] = v[kSigmaSs] = 0.5 * (v[kSigmaS] + v[kSigmaSs]);
        else if (is_free[kSigmaS])
            v[kSigmaS] = v[kSigmaSs];
        else if (is_free[kSigmaSs])
            v[kSigmaSs] = v[kSigmaS];
    };
    NlVec nl = cur.x.head<kNumNonlinear>();
    nl = nl.cwiseMax(lo).cwiseMin(hi);
    order_lobes(nl);

    Solver solver(problem, bounds, cur.x.tail<kNumAlbedo>());
    AlbedoState albedo;
    double cost = solver.evaluate(nl, cur.base_normal, &albedo);
    rep.initial_cost = cost;
    if (!std::isfinite(cost)) {
        rep.failed = true;
        rep.final_cost = cost;
        return init;
    }
    if (options.record_history) rep.cost_history.push_back(cost);

    double mu = 1e-3;
    bool need_jacobian = true;
    Eigen::MatrixXd jac;
    Eigen::VectorXd res;
    std::array<int, kNumNonlinear> free_idx{};
    int n_free = 0;
    for (int k = 0; k < kNumNonlinear; ++k)
        if (is_free[k]) free_idx[n_free++] = k;

    Eigen::VectorXd grad;
    Eigen::MatrixXd hess;
    while (n_free > 0 && rep.iterations < options.max_iterations) {
        if (need_jacobian) {
            switch (n_free) {
                case 1: solver.jacobian<1>(nl, cur.base_normal, free_idx, albedo, &jac, &res); break;
                case 2: solver.jacobian<2>(nl, cur.base_normal, free_idx, albedo, &jac, &res); break;
                case 3: solver.jacobian<3>(nl, cur.base_normal, free_idx, albedo, &jac, &res); break;
                case 4: solver.jacobian<4>(nl, cur.base_normal, free_idx, albedo, &jac, &res); break;
                case 5: solver.jacobian<5>(nl, cur.base_normal, free_idx, albedo, &jac, &res); break;
                default: solver.jacobian<6>(nl, cur.base_normal, free_idx, albedo, &jac, &res); break;
            }
            grad = jac.transpose() * res;
            hess = jac.transpose() * jac;
            need_jacobian = false;
            if (grad.cwiseAbs().maxCoeff() <= 1e-15 * std::max(cost, 1e-300)) {
                rep.converged = true;
                break;
            }
        }
        ++rep.iterations;

        // Variables pinned at a bound with the gradient pushing outward stay put.
        std::vector<int> act;
        for (int s = 0; s < n_free; ++s) {
            const int k = free_idx[s];
            const bool at_lo = nl[k] <= lo[k] && grad[s] > 0.0;
            const bool at_hi = nl[k] >= hi[k] && grad[s] < 0.0;
            if (!at_lo && !at_hi) act.push_back(s);
        }
        if (act.empty()) {
            rep.converged = true;
            break;
        }
        const int na = static_cast<int>(act.size());
        Eigen::MatrixXd h(na, na);
        Eigen::VectorXd g(na);
        double max_diag = 0.0;
        for (int i = 0; i < na; ++i) max_diag = std::max(max_diag, hess(act[i], act[i]));
        for (int i = 0; i < na; ++i) {
            g[i] = grad[act[i]];
            for (int j = 0; j < na; ++j) h(i, j) = hess(act[i], act[j]);
            h(i, i) += mu * std::max(hess(act[i], act[i]), 1e-9 * max_diag + 1e-300);
        }
        const Eigen::VectorXd step = h.ldlt().solve(-g);

        NlVec trial = nl;
        double normal_step = 0.0;
        for (int i = 0; i < na; ++i) {
            const int k = free_idx[act[i]];
            if (k == kNormalU || k == kNormalV) normal_step += step[i] * step[i];
        }
        const double normal_scale =
            normal_step > bounds.max_normal_step * bounds.max_normal_step
                ? bounds.max_normal_step / std::sqrt(normal_step)
                : 1.0;
        for (int i = 0; i < na; ++i) {
            const int k = free_idx[act[i]];
            const double d = (k == kNormalU || k == kNormalV) ? step[i] * normal_scale : step[i];
            trial[k] = std::clamp(nl[k] + d, lo[k], hi[k]);
        }
        order_lobes(trial);

        AlbedoState trial_albedo;
        const double trial_cost = step.allFinite()
                                      ? solver.evaluate(trial, cur.base_normal, &trial_albedo)
                                      : kInf;
        if (std::isfinite(trial_cost) && trial_cost < cost) {
            const double rel = (cost - trial_cost) / std::max(cost, 1e-300);
            cost = trial_cost;
            albedo = trial_albedo;
            // Re-center the tangent parameterization on the accepted normal.
            cur.base_normal = normal_from(cur.base_normal, trial[kNormalU], trial[kNormalV]);
            trial[kNormalU] = trial[kNormalV] = 0.0;
            nl = trial;
            mu = std::max(mu * 0.3, 1e-12);
            need_jacobian = true;
            if (options.record_history) rep.cost_history.push_back(cost);
            if (rel < options.relative_tolerance) {
                rep.converged = true;
                break;
            }
        } else {
            mu *= 4.0;
            if (mu > 1e12) {
                rep.converged = true;
                break;
            }
        }
    }

    // Albedos at the final point (the solver state already matches `nl`).
    cur.x.head<kNumNonlinear>() = nl;
    cur.x.tail<kNumAlbedo>() = albedo.value;
    rep.final_cost = cost;
    if (n_free == 0) rep.converged = true;
    return cur;
}

VertexEstimate optimize_vertex(const FitProblem& problem, const VertexEstimate& init,
                               const FreeMask& mask, const FitBounds& bounds,
                               const OptimizerOptions& options, FitReport* report) {
    FitReport local;
    FitReport& rep = report ? *report : local;
    VertexEstimate out = init;
    if (problem.samples.empty() && problem.virtuals.empty()) {
        out.flags |= kFlagNoObservations;
        return out;
    }
    const FitVariables fitted =
        fit_variables(problem, FitVariables::from(init.params, init.normal), mask, bounds, options, &rep);
    if (rep.failed) {
        out.flags |= kFlagOptimizerFailed;
        return out;
    }
    out.params = fitted.params();
    out.normal = fitted.normal();
    out.residuals = evaluate_losses(problem, fitted);

    bool any_dop = false, any_azimuth = false, any_spec = !problem.virtuals.empty();
    for (const auto& s : problem.samples) {
        any_dop = any_dop || s.obs.dop_reliable;
        any_azimuth = any_azimuth || (s.obs.azimuth_reliable && s.w_p > 0.0);
        any_spec = true;
    }
    if (!any_dop) out.flags |= kFlagEtaUnconstrained;
    if (!any_azimuth) out.flags |= kFlagAzimuthUnconstrained;
    if (!any_spec) out.flags |= kFlagSpecularFrozen;
    return out;
}

}  // namespace polinv
