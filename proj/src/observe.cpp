#include "polinv/observe.h"

#include <cmath>

namespace polinv {

Decomposition decompose(const VertexObservation& obs) {
    return {2.0 * obs.i90, obs.i135 - obs.i45, obs.i0 - obs.i90};
}

Rgb beta_observation(const Rgb& i_s, const Rgb& predicted_specular, const Rgb& predicted_ss) {
    return i_s - predicted_specular - predicted_ss;
}

double diffuse_polarization_magnitude(const Rgb& i_alpha, const Rgb& i_beta) {
    return std::hypot(i_alpha.mean(), i_beta.mean());
}

double estimate_dop(const Rgb& i_d, const Rgb& i_alpha, const Rgb& i_beta) {
    const double denom = (i_d + i_beta).mean();
    if (!(denom > 0.0)) return 0.0;
    return diffuse_polarization_magnitude(i_alpha, i_beta) / denom;
}

double observed_azimuth(const Rgb& i_alpha, const Rgb& i_beta) {
    // + 0.0 turns -0.0 into +0.0 so the axis case lands on +π/2.
    const double y = -i_alpha.mean() + 0.0;
    return 0.5 * std::atan2(y, i_beta.mean());
}

ReliabilityThresholds default_thresholds(double max_mean_i_d) {
    return {0.03 * max_mean_i_d, 1e-4 * max_mean_i_d};
}

PolarObservables make_observables(const VertexObservation& obs, const Rgb& predicted_specular,
                                  const Rgb& predicted_ss, const ReliabilityThresholds& t) {
    const Decomposition d = decompose(obs);
    PolarObservables o;
    o.i_d = d.i_d;
    o.i_alpha = d.i_alpha;
    o.i_s = d.i_s;
    o.i_beta = beta_observation(d.i_s, predicted_specular, predicted_ss);
    o.gamma = diffuse_polarization_magnitude(o.i_alpha, o.i_beta);
    o.dop = estimate_dop(o.i_d, o.i_alpha, o.i_beta);
    o.phi_obs = observed_azimuth(o.i_alpha, o.i_beta);
    // A purely diffuse residual with DoP <= 1/2 keeps |i_beta| <= i_d and
    // Γ <= i_d + i_beta; anything else is dominated by unexplained specular.
    // A specular correction larger than the remaining Γ would let small
    // prediction errors dominate the polarization signal.
    const double id = o.i_d.mean();
    const double correction = std::abs((predicted_specular + predicted_ss).mean());
    const bool consistent = std::abs(o.i_beta.mean()) <= id && o.gamma <= id + o.i_beta.mean() &&
                            correction <= o.gamma;
    o.dop_reliable = consistent && id >= t.darkness && id + o.i_beta.mean() > 0.0;
    o.azimuth_reliable = consistent && o.gamma > t.gamma_floor;
    return o;
}

}  // namespace polinv
