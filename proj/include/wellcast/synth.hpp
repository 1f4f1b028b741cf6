#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "wellcast/date.hpp"
#include "wellcast/error.hpp"
#include "wellcast/features.hpp"
#include "wellcast/ingest.hpp"
#include "wellcast/rng.hpp"

namespace wellcast::synth {

/// Reservoir and well parameters for the synthetic generator. q_o_max and
/// q_w_max are the IPR maximum rates at full drawdown.
struct WellPhysics {
    double p_res_initial = 4931.3;  ///< psi
    double decline_rate = 0.3;      ///< psi/day
    double q_o_max = 1000.0;
    double q_w_max = 600.0;
    double noise_std = 10.0;
    std::uint64_t seed = 42;

    /// Base flowing pressure as a fraction of initial reservoir pressure.
    double bhp_fraction = 0.55;
    /// Every `bhp_period` days the base flowing pressure is redrawn uniformly
    /// in bhp_fraction +/- bhp_jitter. Zero keeps it constant.
    std::size_t bhp_period = 0;
    double bhp_jitter = 0.0;

    /// Water cut ramps linearly between these fractions of q_w_max.
    double water_cut_start = 0.05;
    double water_cut_end = 0.60;
    /// Gas-oil ratio drifts linearly between these values.
    double gor_start = 150.0;
    double gor_end = 220.0;

    Date start = Date::from_ymd(2008, 1, 1);
    std::string rate_unit = "m3/day";
    std::string pressure_unit = "psi";

    void validate() const {
        if (!(q_o_max > 0.0)) throw GeneratorError("q_o_max must be positive");
        if (!(p_res_initial > 0.0)) throw GeneratorError("p_res_initial must be positive");
        if (!(decline_rate >= 0.0)) throw GeneratorError("decline_rate must be >= 0");
        if (!(noise_std >= 0.0)) throw GeneratorError("noise_std must be >= 0");
        if (!(q_w_max >= 0.0)) throw GeneratorError("q_w_max must be >= 0");
        if (!(bhp_fraction >= 0.0 && bhp_fraction <= 1.0)) {
            throw GeneratorError("bhp_fraction must be in [0, 1]");
        }
    }
};

/// Operational event: from `day` on the flowing pressure moves by
/// `bhp_shift`, and the well is shut in for `shut_in_days` days.
struct Intervention {
    std::size_t day = 0;
    double bhp_shift = 0.0;
    std::size_t shut_in_days = 0;
};

/// Generates historical (`*_H`, noisy) and simulated (noise-free) columns.
inline SeriesFrame generate_well(const WellPhysics& physics, const std::vector<Intervention>& schedule,
                                 std::size_t n_days) {
    physics.validate();
    if (n_days < 2) throw GeneratorError("n_days must be >= 2");
    for (const Intervention& iv : schedule) {
        if (iv.day >= n_days) {
            throw GeneratorError("intervention day " + std::to_string(iv.day) +
                                 " outside series of " + std::to_string(n_days) + " days");
        }
    }

    Rng rng(physics.seed);
    std::vector<double> base(n_days, physics.bhp_fraction * physics.p_res_initial);
    if (physics.bhp_period > 0) {
        double level = base[0];
        for (std::size_t t = 0; t < n_days; ++t) {
            if (t % physics.bhp_period == 0) {
                level = physics.p_res_initial *
                        rng.uniform(physics.bhp_fraction - physics.bhp_jitter,
                                    physics.bhp_fraction + physics.bhp_jitter);
            }
            base[t] = level;
        }
    }

    std::vector<double> opr(n_days), wpr(n_days), gpr(n_days), bhp(n_days);
    std::vector<double> opr_h(n_days), wpr_h(n_days), gpr_h(n_days);
    const double span = static_cast<double>(n_days - 1);
    for (std::size_t t = 0; t < n_days; ++t) {
        const double frac = static_cast<double>(t) / span;
        const double p_res = std::max(0.0, physics.p_res_initial - physics.decline_rate * static_cast<double>(t));
        double p_wf = base[t];
        bool shut_in = false;
        for (const Intervention& iv : schedule) {
            if (t >= iv.day) p_wf += iv.bhp_shift;
            if (t >= iv.day && t < iv.day + iv.shut_in_days) shut_in = true;
        }
        p_wf = std::clamp(p_wf, 0.0, p_res);

        double oil = 0.0, water = 0.0;
        if (shut_in || p_res <= 0.0) {
            p_wf = p_res;  // shut-in pressure builds up to reservoir pressure
        } else {
            const double cut = physics.water_cut_start + (physics.water_cut_end - physics.water_cut_start) * frac;
            oil = physics.q_o_max * features::wiggins_oil_ratio(p_wf, p_res);
            water = physics.q_w_max * cut * features::wiggins_water_ratio(p_wf, p_res);
        }
        const double gor = physics.gor_start + (physics.gor_end - physics.gor_start) * frac;

        opr[t] = oil;
        wpr[t] = water;
        gpr[t] = gor * oil;
        bhp[t] = p_wf;

        // Draw noise every day, shut-in or not, so the stream stays aligned.
        const double e_oil = physics.noise_std > 0.0 ? rng.normal(0.0, physics.noise_std) : 0.0;
        const double e_water = physics.noise_std > 0.0 ? rng.normal(0.0, physics.noise_std) : 0.0;
        opr_h[t] = oil > 0.0 ? std::max(0.0, oil + e_oil) : 0.0;
        wpr_h[t] = water > 0.0 ? std::max(0.0, water + e_water) : 0.0;
        gpr_h[t] = gor * opr_h[t];
    }

    std::vector<Date> index(n_days);
    for (std::size_t t = 0; t < n_days; ++t) index[t] = physics.start + static_cast<int>(t);
    SeriesFrame frame(std::move(index));
    const std::string& ru = physics.rate_unit;
    frame.add_column("OPR_H", opr_h, ru);
    frame.add_column("WPR_H", wpr_h, ru);
    frame.add_column("GPR_H", gpr_h, ru);
    frame.add_column("BHP_H", bhp, physics.pressure_unit);
    frame.add_column("OPR", opr, ru);
    frame.add_column("WPR", wpr, ru);
    frame.add_column("GPR", gpr, ru);
    frame.add_column("BHP", bhp, physics.pressure_unit);
    return frame;
}

}  // namespace wellcast::synth
