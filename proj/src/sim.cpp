#include "rflight/sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rflight {

void UavParams::validate() const {
    auto bad = [](const char* what) {
        throw ConfigError(std::string("sim: ") + what + " must be positive");
    };
    if (mass <= 0.0) bad("mass");
    if (arm_length <= 0.0) bad("arm_length");
    if (inertia_xx <= 0.0 || inertia_yy <= 0.0 || inertia_zz <= 0.0) bad("inertia");
    if (dt <= 0.0) bad("dt");
    if (omega_max <= 0.0) bad("omega_max");
    if (thrust_max <= 0.0) bad("thrust_max");
    if (rate_ramp_time <= 0.0) bad("rate_ramp_time");
}

bool UavState::all_finite() const {
    for (int i = 0; i < 3; ++i)
        if (!std::isfinite(pos[i]) || !std::isfinite(vel[i]) || !std::isfinite(ang[i]) ||
            !std::isfinite(rates[i]))
            return false;
    return std::isfinite(t);
}

StateDeriv dynamics_deriv(const UavState& s, const Thrusts& u, const UavParams& p) {
    const double T = u.total();
    const double cphi = std::cos(s.ang[0]), sphi = std::sin(s.ang[0]);
    const double cth = std::cos(s.ang[1]), sth = std::sin(s.ang[1]);
    const double cpsi = std::cos(s.ang[2]), spsi = std::sin(s.ang[2]);

    StateDeriv d;
    d.acc[0] = T * (cphi * sth * cpsi + sphi * spsi) / p.mass;
    d.acc[1] = T * (cphi * sth * spsi - sphi * cpsi) / p.mass;
    d.acc[2] = T * cphi * cth / p.mass - p.gravity;
    d.rate_dot[0] = (u.T[1] - u.T[3]) * p.arm_length / p.inertia_xx;
    d.rate_dot[1] = (u.T[2] - u.T[0]) * p.arm_length / p.inertia_yy;
    d.rate_dot[2] = p.torque_coeff * (u.T[0] - u.T[1] + u.T[2] - u.T[3]) / p.inertia_zz;
    return d;
}

UavState step_dynamics(const UavState& s, const Thrusts& u, const UavParams& p) {
    if (!s.all_finite()) {
        std::ostringstream os;
        os << "step_dynamics: non-finite input state at t=" << s.t
           << " (upstream produced NaN/inf)";
        throw NumericError(os.str());
    }
    const StateDeriv d = dynamics_deriv(s, u, p);
    UavState n = s;
    for (int i = 0; i < 3; ++i) {
        n.rates[i] = std::clamp(s.rates[i] + d.rate_dot[i] * p.dt, -p.omega_max, p.omega_max);
        n.ang[i] = s.ang[i] + n.rates[i] * p.dt;
        n.vel[i] = s.vel[i] + d.acc[i] * p.dt;
        n.pos[i] = s.pos[i] + n.vel[i] * p.dt;
    }
    n.t = s.t + p.dt;
    return n;
}

double max_thrust_diff(const UavParams& p, double inertia) {
    // Per-step rate increment cap: omega_max * dt / rate_ramp_time, so the
    // full rate range takes at least rate_ramp_time to traverse.
    const double max_rate_step = p.omega_max * p.dt / p.rate_ramp_time;
    return max_rate_step * inertia / (p.arm_length * p.dt);
}

Thrusts clamp_action(const std::array<double, 4>& raw, const UavParams& p) {
    Thrusts out;
    for (int i = 0; i < 4; ++i) {
        const double r = std::clamp(raw[i], -1.0, 1.0);
        out.T[i] = 0.5 * (r + 1.0) * p.thrust_max;
    }
    // Shrink opposing-rotor differences about their midpoint, then re-clamp.
    auto clip_pair = [&p](double& a, double& b, double max_diff) {
        const double diff = a - b;
        if (std::abs(diff) > max_diff) {
            const double mid = 0.5 * (a + b);
            const double half = 0.5 * (diff > 0.0 ? max_diff : -max_diff);
            a = mid + half;
            b = mid - half;
        }
        a = std::clamp(a, 0.0, p.thrust_max);
        b = std::clamp(b, 0.0, p.thrust_max);
    };
    clip_pair(out.T[1], out.T[3], max_thrust_diff(p, p.inertia_xx));
    clip_pair(out.T[2], out.T[0], max_thrust_diff(p, p.inertia_yy));
    return out;
}

void ReferenceTrajectory::validate() const {
    if (goal_radius <= 0.0) throw ConfigError("trajectory: goal_radius must be positive");
    if (safety_radius < goal_radius)
        throw ConfigError("trajectory: safety_radius must be >= goal_radius");
    for (const Segment& seg : segments)
        if (seg.duration < 0.0) throw ConfigError("trajectory: segment duration must be >= 0");
}

ReferenceTrajectory ReferenceTrajectory::hold_at(const Vec3& goal, double goal_radius,
                                                 double safety_radius) {
    ReferenceTrajectory traj;
    traj.start = goal;
    traj.goal = goal;
    traj.goal_radius = goal_radius;
    traj.safety_radius = safety_radius;
    return traj;
}

ReferenceTrajectory ReferenceTrajectory::transit(const Vec3& start, const Vec3& goal,
                                                 double transit_time, double goal_radius,
                                                 double safety_radius) {
    ReferenceTrajectory traj;
    traj.start = start;
    traj.goal = goal;
    traj.goal_radius = goal_radius;
    traj.safety_radius = safety_radius;
    if (transit_time > 0.0) {
        Segment seg;
        for (int i = 0; i < 3; ++i) seg.velocity[i] = (goal[i] - start[i]) / transit_time;
        seg.duration = transit_time;
        traj.segments.push_back(seg);
    }
    return traj;
}

Vec3 reference_position(const ReferenceTrajectory& traj, double t) {
    Vec3 p = traj.start;
    double remaining = std::max(t, 0.0);
    for (const auto& seg : traj.segments) {
        const double dt = std::min(remaining, seg.duration);
        for (int i = 0; i < 3; ++i) p[i] += seg.velocity[i] * dt;
        remaining -= dt;
        if (remaining <= 0.0) break;
    }
    // Past the last segment the reference holds its final position.
    return p;
}

bool safety_verdict(const UavState& s, const ReferenceTrajectory& traj, double t) {
    const Vec3 ref = reference_position(traj, t);
    const Vec3 dev{s.pos[0] - ref[0], s.pos[1] - ref[1], s.pos[2] - ref[2]};
    return norm3(dev) <= traj.safety_radius;
}

bool detect_crash(const UavState& s, const CrashBounds& b) {
    if (!s.all_finite()) return true;
    if (s.pos[2] < b.floor_z) return true;
    const double tilt = std::sqrt(s.ang[0] * s.ang[0] + s.ang[1] * s.ang[1]);
    if (tilt > b.tilt_max) return true;
    for (int i = 0; i < 3; ++i)
        if (std::abs(s.pos[i]) > b.arena_half_extent) return true;
    return false;
}

} // namespace rflight
