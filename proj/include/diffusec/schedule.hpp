#pragma once

#include "diffusec/error.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace diffusec {

/// Forward-process variances beta_t for t = 1..T with alpha_t = 1 - beta_t and the running
/// product alpha_bar_t. The reverse step uses sigma_t^2 = beta_t.
class NoiseSchedule {
  public:
	/// Linear interpolation of beta from beta_start (t = 1) to beta_end (t = T).
	static NoiseSchedule linear(int steps, double beta_start, double beta_end) {
		if (steps < 2) throw ConfigError("schedule needs at least 2 steps");
		if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
			throw ConfigError("schedule needs 0 < beta_start <= beta_end < 1");
		NoiseSchedule s;
		s.m_beta_start = beta_start;
		s.m_beta_end = beta_end;
		s.m_beta.resize(std::size_t(steps));
		s.m_alpha_bar.resize(std::size_t(steps));
		double prod = 1.0;
		for (int i = 0; i < steps; ++i) {
			const double b = beta_start + (beta_end - beta_start) * double(i) / double(steps - 1);
			s.m_beta[std::size_t(i)] = b;
			prod *= 1.0 - b;
			s.m_alpha_bar[std::size_t(i)] = prod;
		}
		return s;
	}

	/// Defaults: T = 1000, beta linear from 1e-4 to 0.02.
	static NoiseSchedule standard() { return linear(1000, 1e-4, 0.02); }

	int steps() const noexcept { return int(m_beta.size()); }
	double beta_start() const noexcept { return m_beta_start; }
	double beta_end() const noexcept { return m_beta_end; }

	double beta(int t) const { return m_beta[index(t)]; }
	double alpha(int t) const { return 1.0 - m_beta[index(t)]; }
	double alpha_bar(int t) const { return m_alpha_bar[index(t)]; }
	double sigma(int t) const { return std::sqrt(beta(t)); }

  private:
	std::size_t index(int t) const {
		if (t < 1 || t > steps())
			throw TimestepError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(steps()) + "]");
		return std::size_t(t - 1);
	}

	double m_beta_start = 0, m_beta_end = 0;
	std::vector<double> m_beta;
	std::vector<double> m_alpha_bar;
};

inline NoiseSchedule build_schedule(int steps, double beta_start, double beta_end) {
	return NoiseSchedule::linear(steps, beta_start, beta_end);
}

struct PlanLimits {
	int t_d_max = 50;
	int t_plus_max = 50;
	int total_steps = 1000;

	void validate() const {
		if (t_d_max < 2 || t_plus_max < 0) throw ConfigError("plan limits out of range");
		if (!(t_d_max + t_plus_max < total_steps))
			throw ConfigError("plan limits need t_d_max + t_plus_max < T");
	}
};

/// Diffusing steps t_D and extra reverse ("plus") steps t_plus; the receiver runs
/// t_P = t_D + t_plus reverse steps. Only obtainable through make(), which enforces
/// 1 <= t_D, 0 <= t_plus <= t_plus_max, t_D + t_plus < t_d_max.
class TimestepPlan {
  public:
	static TimestepPlan make(int t_d, int t_plus, const PlanLimits& limits = {}) {
		limits.validate();
		if (t_d < 1 || t_d > limits.t_d_max)
			throw PlanError("t_D = " + std::to_string(t_d) + " outside [1, " + std::to_string(limits.t_d_max) + "]");
		if (t_plus < 0 || t_plus > limits.t_plus_max)
			throw PlanError("t_plus = " + std::to_string(t_plus) + " outside [0, " +
			                std::to_string(limits.t_plus_max) + "]");
		if (!(t_d + t_plus < limits.t_d_max))
			throw PlanError("t_D + t_plus = " + std::to_string(t_d + t_plus) + " must stay below " +
			                std::to_string(limits.t_d_max));
		return TimestepPlan(t_d, t_plus);
	}

	static bool valid(int t_d, int t_plus, const PlanLimits& limits = {}) {
		return t_d >= 1 && t_d <= limits.t_d_max && t_plus >= 0 && t_plus <= limits.t_plus_max &&
		       t_d + t_plus < limits.t_d_max;
	}

	int t_d() const noexcept { return m_t_d; }
	int t_plus() const noexcept { return m_t_plus; }
	int t_p() const noexcept { return m_t_d + m_t_plus; }

	bool operator==(const TimestepPlan&) const = default;

  private:
	TimestepPlan(int t_d, int t_plus) : m_t_d(t_d), m_t_plus(t_plus) {}

	int m_t_d;
	int m_t_plus;
};

} // namespace diffusec
