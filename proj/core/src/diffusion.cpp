#include "mvr/diffusion.hpp"

#include <cmath>

namespace mvr {

NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw ContractError("make_schedule: T must be positive");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw ContractError("make_schedule: need 0 < beta_start <= beta_end < 1");

    NoiseSchedule s;
    s.T = T;
    s.betas.resize(static_cast<size_t>(T));
    s.alphas.resize(static_cast<size_t>(T));
    s.alpha_bars.resize(static_cast<size_t>(T));
    double bar = 1.0;
    for (int i = 0; i < T; ++i) {
        const double f = (T > 1) ? static_cast<double>(i) / (T - 1) : 0.0;
        const double beta = beta_start + (beta_end - beta_start) * f;
        s.betas[static_cast<size_t>(i)] = beta;
        s.alphas[static_cast<size_t>(i)] = 1.0 - beta;
        bar *= 1.0 - beta;
        s.alpha_bars[static_cast<size_t>(i)] = bar;
    }

    // A usable schedule starts essentially at the data and ends essentially
    // at pure noise; anything else silently breaks training and sampling.
    if (!(s.alpha_bars.front() > 0.99))
        throw ContractError("make_schedule: alpha_bar[0] <= 0.99 (beta_start too large)");
    if (!(s.alpha_bars.back() < 0.05))
        throw ContractError("make_schedule: alpha_bar[T-1] >= 0.05 (schedule too short or mild)");
    return s;
}

NoiseSchedule desk_schedule() { return make_schedule(200, 5e-4, 0.032); }

std::vector<int> sampler_timesteps(const NoiseSchedule& sched, int n_steps) {
    if (sched.T < 1) throw ContractError("sampler_timesteps: empty schedule");
    if (n_steps < 1 || n_steps > sched.T)
        throw ContractError("sampler_timesteps: n_steps must be in [1, T]");

    std::vector<int> taus(static_cast<size_t>(n_steps));
    if (n_steps == 1) {
        taus[0] = sched.T - 1;
        return taus;
    }
    // Descending linspace over [0, T-1]; spacing >= 1 keeps the rounded
    // values strictly decreasing.
    for (int j = 0; j < n_steps; ++j)
        taus[static_cast<size_t>(j)] = static_cast<int>(std::llround(
            static_cast<double>(sched.T - 1) * (n_steps - 1 - j) / (n_steps - 1)));
    return taus;
}

template <typename S>
Tensor<S> q_sample(const Tensor<S>& x0, int k, const Tensor<S>& eps,
                   const NoiseSchedule& sched) {
    if (!x0.same_shape(eps)) throw ContractError("q_sample: x0/eps shape mismatch");
    if (k < 0 || k >= sched.T) throw ContractError("q_sample: timestep out of range");
    const double ab = sched.alpha_bars[static_cast<size_t>(k)];
    const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    Tensor<S> out(x0.shape());
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = static_cast<S>(a * static_cast<double>(x0[i]) +
                                b * static_cast<double>(eps[i]));
    return out;
}

template Tensor<float> q_sample(const Tensor<float>&, int, const Tensor<float>&,
                                const NoiseSchedule&);
template Tensor<double> q_sample(const Tensor<double>&, int, const Tensor<double>&,
                                 const NoiseSchedule&);

}  // namespace mvr
