#pragma once

#include <vector>

namespace rydgate {

// Per-segment drive amplitudes |Omega_k| in rad/us, sampled at segment midpoints.
struct Envelope {
    std::vector<double> amplitude;
};

// Piecewise-constant global drive: fixed amplitude envelope, learnable phases.
// Ramps live inside the gate duration.
struct PulseSchedule {
    double duration_ns = 0.0;
    int n_segments = 0;
    std::vector<double> phases;  // rad, one per segment
    double ramp_ns = 0.0;        // 0 gives a flat-top envelope
    double omega_max = 0.0;      // rad/us

    double segment_ns() const { return duration_ns / n_segments; }
    double segment_us() const { return duration_ns * 1e-3 / n_segments; }

    // Throws InvalidArgument if any field violates the schedule invariants.
    void validate() const;
};

struct SegmentDrive {
    double amplitude;  // rad/us
    double phase;      // rad
};

// Fraction of omega_max at time t_ns. Gaussian edges of width ramp/3 reach the
// flat top at t = ramp and mirror at the end of the gate.
double ramp_profile(double t_ns, double duration_ns, double ramp_ns);

// Envelope sampled at segment midpoints; symmetric segment-by-segment.
Envelope build_envelope(double duration_ns, int n_segments, double omega_max, double ramp_ns);

Envelope envelope_of(const PulseSchedule& schedule);

// Throws std::out_of_range for k outside [0, n_segments).
SegmentDrive segment_drive(const PulseSchedule& schedule, const Envelope& envelope, int k);
SegmentDrive segment_drive(const PulseSchedule& schedule, int k);

PulseSchedule make_schedule(double duration_ns, int n_segments, double omega_max, double ramp_ns,
                            std::vector<double> phases = {});

}  // namespace rydgate
