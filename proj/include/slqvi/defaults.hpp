#pragma once

#include <cstddef>
#include <cstdint>

// Every tunable default in one place; algorithm structs and the experiment
// config layer both read from here.
namespace slqvi::defaults {

// simulation
inline constexpr double dt = 1e-3;
inline constexpr std::size_t paths = 1000;
inline constexpr std::uint64_t seed = 0;

// data collection
inline constexpr std::size_t intervals = 20;
inline constexpr double interval_length = 0.1;
inline constexpr double exploration_amplitude = 1.0;
inline constexpr double exploration_noise_ratio = 0.01;
inline constexpr double rank_tol = 1e-8;

// value iteration
inline constexpr double step_a = 1.0;
inline constexpr double step_b = 0.0;
inline constexpr double step_gamma = 0.7;
inline constexpr double trust_growth = 2.0;
inline constexpr double trust_radius_factor = 10.0;  // r0 = factor * (1 + |Q|_F)
inline constexpr double stop_tol = 1e-5;
inline constexpr std::size_t max_iter = 1'000'000;

// Riccati flow
inline constexpr double oracle_t_end = 200.0;
inline constexpr double oracle_rtol = 1e-10;
inline constexpr double pd_floor = 1e-10;

// reporting
inline constexpr double verify_threshold = 1e-2;

}  // namespace slqvi::defaults
