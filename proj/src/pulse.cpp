#include "rydgate/pulse.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "rydgate/errors.hpp"

namespace rydgate {

namespace {

void check_envelope_args(double duration_ns, int n_segments, double omega_max, double ramp_ns) {
    if (!(duration_ns > 0.0) || !std::isfinite(duration_ns)) {
        throw InvalidArgument("pulse duration must be positive");
    }
    if (n_segments < 3) {
        throw InvalidArgument("pulse needs at least 3 segments");
    }
    if (!(omega_max >= 0.0) || !std::isfinite(omega_max)) {
        throw InvalidArgument("omega_max must be non-negative");
    }
    if (!(ramp_ns >= 0.0)) {
        throw InvalidArgument("ramp time must be non-negative");
    }
    if (!(duration_ns > 2.0 * ramp_ns)) {
        throw InvalidArgument("pulse duration must exceed twice the ramp time");
    }
}

}  // namespace

void PulseSchedule::validate() const {
    check_envelope_args(duration_ns, n_segments, omega_max, ramp_ns);
    if (phases.size() != static_cast<std::size_t>(n_segments)) {
        throw InvalidArgument("phase count " + std::to_string(phases.size()) +
                              " does not match n_segments " + std::to_string(n_segments));
    }
    for (double phi : phases) {
        if (!std::isfinite(phi)) {
            throw InvalidArgument("pulse phases must be finite");
        }
    }
}

double ramp_profile(double t_ns, double duration_ns, double ramp_ns) {
    if (ramp_ns <= 0.0) {
        return 1.0;
    }
    const double edge_distance = std::min(t_ns, duration_ns - t_ns);
    if (edge_distance >= ramp_ns) {
        return 1.0;
    }
    const double sigma = ramp_ns / 3.0;
    const double x = (edge_distance - ramp_ns) / sigma;
    return std::exp(-0.5 * x * x);
}

Envelope build_envelope(double duration_ns, int n_segments, double omega_max, double ramp_ns) {
    check_envelope_args(duration_ns, n_segments, omega_max, ramp_ns);
    const double dt = duration_ns / n_segments;
    Envelope env;
    env.amplitude.resize(n_segments);
    for (int k = 0; k < n_segments; ++k) {
        // Index-mirrored midpoint so the envelope is exactly symmetric.
        const int m = std::min(k, n_segments - 1 - k);
        const double t_mid = (m + 0.5) * dt;
        env.amplitude[k] = omega_max * ramp_profile(t_mid, duration_ns, ramp_ns);
    }
    return env;
}

Envelope envelope_of(const PulseSchedule& schedule) {
    return build_envelope(schedule.duration_ns, schedule.n_segments, schedule.omega_max,
                          schedule.ramp_ns);
}

SegmentDrive segment_drive(const PulseSchedule& schedule, const Envelope& envelope, int k) {
    if (k < 0 || k >= schedule.n_segments || k >= static_cast<int>(schedule.phases.size()) ||
        k >= static_cast<int>(envelope.amplitude.size())) {
        throw std::out_of_range("segment index " + std::to_string(k) + " out of range");
    }
    return {envelope.amplitude[k], schedule.phases[k]};
}

SegmentDrive segment_drive(const PulseSchedule& schedule, int k) {
    return segment_drive(schedule, envelope_of(schedule), k);
}

PulseSchedule make_schedule(double duration_ns, int n_segments, double omega_max, double ramp_ns,
                            std::vector<double> phases) {
    PulseSchedule s;
    s.duration_ns = duration_ns;
    s.n_segments = n_segments;
    s.omega_max = omega_max;
    s.ramp_ns = ramp_ns;
    s.phases = phases.empty() ? std::vector<double>(std::max(n_segments, 0), 0.0) : std::move(phases);
    s.validate();
    return s;
}

}  // namespace rydgate
