#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace roomprobe::ppo {

/// Sum of gamma^i * r_i.
double discounted_return(const std::vector<double>& rewards, double gamma);

/// Generalized advantage estimation over one worker's rollout window.
/// delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t), with
/// V(s_T) = bootstrap_value; the exponentially weighted sum stops at
/// episode boundaries. Returns (advantages, value_targets = A + V).
std::pair<std::vector<double>, std::vector<double>> compute_gae(const std::vector<double>& rewards,
                                                                const std::vector<double>& values,
                                                                const std::vector<uint8_t>& dones,
                                                                double bootstrap_value, double gamma, double lambda);

/// In-place batch normalization to mean 0, std 1 (eps 1e-8).
void normalize_advantages(std::vector<float>& advantages);

}  // namespace roomprobe::ppo
