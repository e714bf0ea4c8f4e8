#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "rflight/errors.hpp"

namespace rflight {

using Vec3 = std::array<double, 3>;

inline double norm3(const Vec3& v) {
    return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
}

// Physical parameters of the quadrotor plus integration settings.
struct UavParams {
    double mass = 0.5;         // kg
    double arm_length = 0.2;   // m, center to rotor
    double inertia_xx = 5e-3;  // kg m^2
    double inertia_yy = 5e-3;
    double inertia_zz = 9e-3;
    double gravity = 9.81;        // m/s^2
    double torque_coeff = 0.016;  // N m yaw torque per N thrust
    double thrust_max = 2.45;     // N per rotor, hover at ~50% throttle
    double dt = 0.004;            // s
    double omega_max = 10.0;      // rad/s body-rate bound
    double rate_ramp_time = 0.2;  // s, full rate range traversal under max thrust split

    void validate() const;
};

// True physical state. Angles are Euler (roll, pitch, yaw); body rates are
// treated as the Euler-angle rates (small-angle kinematics).
struct UavState {
    Vec3 pos{0.0, 0.0, 0.0};    // m
    Vec3 vel{0.0, 0.0, 0.0};    // m/s
    Vec3 ang{0.0, 0.0, 0.0};    // rad (phi, theta, psi)
    Vec3 rates{0.0, 0.0, 0.0};  // rad/s
    double t = 0.0;             // s

    bool all_finite() const;
};

// Per-rotor thrusts, each within [0, thrust_max].
struct Thrusts {
    std::array<double, 4> T{0.0, 0.0, 0.0, 0.0};
    double total() const { return T[0] + T[1] + T[2] + T[3]; }
};

// Time derivative of the state under the rigid-body model:
//   m x'' = (sum T)(cos(phi) sin(theta) cos(psi) + sin(phi) sin(psi))
//   m y'' = (sum T)(cos(phi) sin(theta) sin(psi) - sin(phi) cos(psi))
//   m z'' = (sum T) cos(phi) cos(theta) - m g
//   Ixx p' = (T2 - T4) l
//   Iyy q' = (T3 - T1) l
//   Izz r' = tau1 - tau2 + tau3 - tau4,  tau_i = k_tau T_i
struct StateDeriv {
    Vec3 acc{0.0, 0.0, 0.0};       // m/s^2
    Vec3 rate_dot{0.0, 0.0, 0.0};  // rad/s^2
};

StateDeriv dynamics_deriv(const UavState& s, const Thrusts& u, const UavParams& p);

// Advances the state one dt with semi-implicit Euler: rates then angles,
// velocities then positions. Body rates are clamped to omega_max.
// Throws NumericError on a non-finite input state.
UavState step_dynamics(const UavState& s, const Thrusts& u, const UavParams& p);

// Maps a normalized action in [-1,1]^4 to rotor thrusts in [0, thrust_max],
// then clips |T2-T4| and |T3-T1| so the per-step body-rate increment stays
// within omega_max * dt / rate_ramp_time (the rate bound itself is enforced
// by step_dynamics). Saturating, never throws.
Thrusts clamp_action(const std::array<double, 4>& raw, const UavParams& p);

// Largest allowed |T2-T4| (== |T3-T1| bound with inertia_yy) in clamp_action.
double max_thrust_diff(const UavParams& p, double inertia);

// Time-parameterized reference: p(t) = p0 + integral of a piecewise-constant
// velocity profile; holds the final position beyond the last segment.
struct ReferenceTrajectory {
    struct Segment {
        Vec3 velocity{0.0, 0.0, 0.0};  // m/s
        double duration = 0.0;         // s
    };
    Vec3 start{0.0, 0.0, 0.0};
    std::vector<Segment> segments;
    Vec3 goal{0.0, 0.0, 0.0};
    double goal_radius = 0.1;    // m, episode termination ball
    double safety_radius = 5.0;  // m, mission success / safety bound

    void validate() const;

    // Constant reference pinned at the goal.
    static ReferenceTrajectory hold_at(const Vec3& goal, double goal_radius,
                                       double safety_radius);
    // Straight line start -> goal over transit_time seconds, then hold.
    static ReferenceTrajectory transit(const Vec3& start, const Vec3& goal,
                                       double transit_time, double goal_radius,
                                       double safety_radius);
};

Vec3 reference_position(const ReferenceTrajectory& traj, double t);

// Safe iff the deviation from the reference is within the safety radius
// (closed bound: deviation == radius is safe).
bool safety_verdict(const UavState& s, const ReferenceTrajectory& traj, double t);

struct CrashBounds {
    double floor_z = 0.0;              // m, crash below
    double tilt_max = 1.0471975511965976;  // rad (60 deg) on sqrt(phi^2 + theta^2)
    double arena_half_extent = 50.0;   // m, |x|,|y|,|z| box
};

bool detect_crash(const UavState& s, const CrashBounds& b);

} // namespace rflight
