#pragma once

namespace rydgate {

// Rydberg decay and static position noise. Branch fractions split the total
// per-step decay probability between |r>->|0>, |r>->|1> and leakage.
struct NoiseModel {
    double decay_rate_per_us = 0.0;  // gamma = 1 / lifetime
    double branch_to_0 = 0.1354;
    double branch_to_1 = 0.2504;
    double branch_leak = 0.6142;
    double sigma_x_um = 0.0;
    double sigma_y_um = 0.0;
    double sigma_z_um = 0.0;

    // 88 us lifetime, sigma_xy = 0.014 um, sigma_z = 0.16 um.
    static NoiseModel defaults();
    static NoiseModel ideal() { return {}; }

    bool has_motion() const { return sigma_x_um > 0.0 || sigma_y_um > 0.0 || sigma_z_um > 0.0; }
    bool has_decay() const { return decay_rate_per_us > 0.0; }

    // Throws InvalidArgument on negative widths/rates or branches not summing to 1.
    void validate() const;
};

}  // namespace rydgate
