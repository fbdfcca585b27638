#include "roomprobe/ppo/gae.hpp"

#include <cmath>
#include <stdexcept>

namespace roomprobe::ppo {

double discounted_return(const std::vector<double>& rewards, double gamma) {
  double acc = 0.0;
  double g = 1.0;
  for (double r : rewards) {
    if (!std::isfinite(r)) throw std::invalid_argument("discounted_return: non-finite reward");
    acc += g * r;
    g *= gamma;
  }
  return acc;
}

std::pair<std::vector<double>, std::vector<double>> compute_gae(const std::vector<double>& rewards,
                                                                const std::vector<double>& values,
                                                                const std::vector<uint8_t>& dones,
                                                                double bootstrap_value, double gamma, double lambda) {
  const size_t T = rewards.size();
  if (values.size() != T || dones.size() != T)
    throw std::invalid_argument("compute_gae: length mismatch (rewards " + std::to_string(T) + ", values " +
                                std::to_string(values.size()) + ", dones " + std::to_string(dones.size()) + ")");
  std::vector<double> adv(T), targets(T);
  double running = 0.0;
  for (size_t i = T; i-- > 0;) {
    const double next_v = (i + 1 < T) ? values[i + 1] : bootstrap_value;
    const double not_done = dones[i] ? 0.0 : 1.0;
    const double delta = rewards[i] + gamma * next_v * not_done - values[i];
    running = delta + gamma * lambda * not_done * running;
    adv[i] = running;
    targets[i] = adv[i] + values[i];
  }
  return {std::move(adv), std::move(targets)};
}

void normalize_advantages(std::vector<float>& advantages) {
  if (advantages.empty()) return;
  double mean = 0.0;
  for (float a : advantages) mean += a;
  mean /= static_cast<double>(advantages.size());
  double var = 0.0;
  for (float a : advantages) var += (a - mean) * (a - mean);
  var /= static_cast<double>(advantages.size());
  const double inv = 1.0 / (std::sqrt(var) + 1e-8);
  for (float& a : advantages) a = static_cast<float>((a - mean) * inv);
}

}  // namespace roomprobe::ppo
