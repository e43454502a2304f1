#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "mvr/errors.hpp"
#include "mvr/rng.hpp"
#include "mvr/tensor.hpp"

namespace mvr {

/// Linear-beta DDPM noise schedule.  alpha_bars[k] is the cumulative product
/// of (1 - beta) through step k; it decreases strictly from near 1 toward 0.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> betas;
    std::vector<double> alphas;
    std::vector<double> alpha_bars;
};

/// Linear interpolation of betas over T steps.  Requires
/// 0 < beta_start <= beta_end < 1.
NoiseSchedule make_schedule(int T, double beta_start, double beta_end);

/// Desk-scale default: T = 200, beta in [5e-4, 0.032] (alpha_bar endpoints
/// match the full-scale T = 1000, [1e-4, 0.02] schedule's character:
/// alpha_bar_0 > 0.99, alpha_bar_{T-1} < 0.05).
NoiseSchedule desk_schedule();

/// How to run the reverse process.
struct SamplerSpec {
    enum class Kind {
        Ancestral,      // DDPM posterior steps with fresh noise (eta = 1)
        Deterministic,  // DDIM eta = 0
    };
    Kind kind = Kind::Deterministic;
    int n_steps = 50;  // 1..T, uniformly strided subset of timesteps
    uint64_t seed = 0;
};

/// Forward process: x^k = sqrt(alpha_bar_k) x0 + sqrt(1 - alpha_bar_k) eps.
template <typename S>
Tensor<S> q_sample(const Tensor<S>& x0, int k, const Tensor<S>& eps,
                   const NoiseSchedule& sched);

/// The uniformly strided descending timestep subset used by the samplers:
/// n_steps values from T-1 down, always starting at T-1 (n_steps = T gives
/// every step).  Exposed for tests.
std::vector<int> sampler_timesteps(const NoiseSchedule& sched, int n_steps);

template <typename S>
struct TrainingLoss {
    double loss = 0;  // mean squared eps error over every latent element
    int k = 0;        // the timestep drawn for this set (shared by all views)
};

/// Eq.-2 objective on one view set: draws a single timestep k ~ U{0..T-1}
/// shared by every view of the set and per-element unit Gaussian noise,
/// forms x^k = q_sample(x0, k, eps), and returns mean((model(x^k, cond, k)
/// - eps)^2).  With backprop = true, also accumulates parameter gradients
/// of the loss into the model.
///
/// An optional element mask (same shape as x0, entries in {0, 1}) restricts
/// both the mean and the gradient to the selected elements: masked-out
/// positions contribute nothing to the loss and receive an exactly-zero
/// output gradient.  Used by tasks whose targets have invalid pixels
/// (e.g. missing depth).  A mask selecting no elements is an error.
///
/// Model needs: Tensor<S> forward(const Tensor<S>&, const Tensor<S>&, int)
/// and (for backprop) backward(const Tensor<S>&).
template <typename S, typename Model>
TrainingLoss<S> training_loss(Model& model, const Tensor<S>& x0, const Tensor<S>& cond,
                              const NoiseSchedule& sched, Rng& rng, bool backprop = false,
                              const Tensor<S>* mask = nullptr) {
    const bool aligned = x0.ndim() == 4 && cond.ndim() == 4 && x0.dim(0) == cond.dim(0) &&
                         x0.dim(2) == cond.dim(2) && x0.dim(3) == cond.dim(3);
    if (!aligned)
        throw ContractError("training_loss: x0/cond view count or spatial shape mismatch");
    if (sched.T < 1) throw ContractError("training_loss: empty schedule");
    if (mask != nullptr && !mask->same_shape(x0))
        throw ContractError("training_loss: mask shape mismatch");

    // One k for the whole set: the model denoises the views jointly, so all
    // of them must sit at the same noise level.
    const int k = static_cast<int>(rng.uniform_int(sched.T));
    Tensor<S> eps(x0.shape());
    for (int64_t i = 0; i < eps.numel(); ++i) eps[i] = static_cast<S>(rng.normal());

    const Tensor<S> noisy = q_sample(x0, k, eps, sched);
    const Tensor<S> eps_hat = model.forward(noisy, cond, k);
    if (!eps_hat.same_shape(x0))
        throw ContractError("training_loss: model output shape mismatch");

    double loss = 0;
    double weight = 0;
    for (int64_t i = 0; i < eps.numel(); ++i) {
        const double w = mask ? static_cast<double>((*mask)[i]) : 1.0;
        const double d = static_cast<double>(eps_hat[i]) - static_cast<double>(eps[i]);
        loss += w * (d * d);
        weight += w;
    }
    if (weight <= 0.0) throw ContractError("training_loss: mask selects no elements");
    const double inv_n = 1.0 / weight;
    loss *= inv_n;

    if (backprop) {
        Tensor<S> d_out(eps.shape());
        for (int64_t i = 0; i < eps.numel(); ++i) {
            const double w = mask ? static_cast<double>((*mask)[i]) : 1.0;
            d_out[i] = static_cast<S>(2.0 * inv_n * w *
                                      (static_cast<double>(eps_hat[i]) - eps[i]));
        }
        if constexpr (requires { model.backward(d_out); })
            model.backward(d_out);
        else
            throw ContractError("training_loss: model cannot backpropagate");
    }
    return {loss, k};
}

/// Reverse process: starts from unit Gaussian x^{T-1} with shape
/// [cond views, out_channels, cond h, cond w] and walks the strided
/// timestep subset down to x0.  Both kinds share the epsilon-prediction
/// update through the x0 estimate
///   x0_hat = (x - sqrt(1 - ab_t) eps_hat) / sqrt(ab_t);
/// the deterministic kind (DDIM eta = 0) moves to
///   sqrt(ab_s) x0_hat + sqrt(1 - ab_s) eps_hat,
/// the ancestral kind (eta = 1) adds the DDPM posterior noise
///   sigma^2 = (1 - ab_s) / (1 - ab_t) * (1 - ab_t / ab_s),
/// which reduces to the textbook DDPM step when every timestep is used.
/// The final step emits x0_hat directly (no noise).  Deterministic in
/// (model, cond, spec.seed).
template <typename S, typename Model>
Tensor<S> sample(Model& model, const Tensor<S>& cond, const SamplerSpec& spec,
                 const NoiseSchedule& sched, int out_channels) {
    if (cond.ndim() != 4) throw ContractError("sample: cond must be [N, C, H, W]");
    if (out_channels < 1) throw ContractError("sample: out_channels must be positive");
    const std::vector<int> taus = sampler_timesteps(sched, spec.n_steps);

    Rng rng(hash_combine(spec.seed, 0x73616d706c65ull));  // sampler stream
    Tensor<S> x({cond.dim(0), out_channels, cond.dim(2), cond.dim(3)});
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = static_cast<S>(rng.normal());

    for (size_t j = 0; j < taus.size(); ++j) {
        const int t = taus[j];
        const int s = (j + 1 < taus.size()) ? taus[j + 1] : -1;
        const double ab_t = sched.alpha_bars[static_cast<size_t>(t)];
        const Tensor<S> eps_hat = model.forward(x, cond, t);

        const double inv_sqrt_ab = 1.0 / std::sqrt(ab_t);
        const double noise_t = std::sqrt(1.0 - ab_t);
        if (s < 0) {
            for (int64_t i = 0; i < x.numel(); ++i)
                x[i] = static_cast<S>((static_cast<double>(x[i]) - noise_t * eps_hat[i]) *
                                      inv_sqrt_ab);
            break;
        }
        const double ab_s = sched.alpha_bars[static_cast<size_t>(s)];
        double sigma2 = 0.0;
        if (spec.kind == SamplerSpec::Kind::Ancestral)
            sigma2 = (1.0 - ab_s) / (1.0 - ab_t) * (1.0 - ab_t / ab_s);
        const double to_x0 = std::sqrt(ab_s);
        const double to_eps = std::sqrt(std::max(0.0, 1.0 - ab_s - sigma2));
        const double to_noise = std::sqrt(std::max(0.0, sigma2));
        for (int64_t i = 0; i < x.numel(); ++i) {
            const double x0_hat = (static_cast<double>(x[i]) - noise_t * eps_hat[i]) *
                                  inv_sqrt_ab;
            double next = to_x0 * x0_hat + to_eps * static_cast<double>(eps_hat[i]);
            if (spec.kind == SamplerSpec::Kind::Ancestral) next += to_noise * rng.normal();
            x[i] = static_cast<S>(next);
        }
    }
    return x;
}

}  // namespace mvr
