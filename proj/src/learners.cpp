#include "metaexplore/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace metaexplore {

const char* to_string(OptimizerKind kind)
{
    return kind == OptimizerKind::adam ? "adam" : "sgd";
}

OptimizerKind optimizer_kind_from_string(const std::string& name)
{
    if (name == "sgd") return OptimizerKind::sgd;
    if (name == "adam") return OptimizerKind::adam;
    throw std::invalid_argument("unknown optimizer '" + name + "'");
}

GradientAscent::GradientAscent(OptimizerConfig cfg, std::size_t size) : cfg_(cfg)
{
    if (cfg_.kind == OptimizerKind::adam) {
        m_.assign(size, 0.0);
        v_.assign(size, 0.0);
    }
}

void GradientAscent::step(std::vector<double>& params, std::span<const double> grad)
{
    if (grad.size() != params.size()) {
        throw std::invalid_argument("optimizer: gradient length mismatch");
    }
    if (cfg_.kind == OptimizerKind::sgd) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            params[i] += cfg_.learning_rate * grad[i];
        }
        return;
    }
    if (m_.size() != params.size()) {
        m_.assign(params.size(), 0.0);
        v_.assign(params.size(), 0.0);
        t_ = 0;
    }
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
        v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
        params[i] += cfg_.learning_rate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.epsilon);
    }
}

void PolicySamples::push(std::span<const double> obs, int action, double reward, bool credit)
{
    if (obs.size() != obs_dim) {
        throw std::invalid_argument("PolicySamples: observation dimension mismatch");
    }
    observations.insert(observations.end(), obs.begin(), obs.end());
    actions.push_back(action);
    rewards.push_back(reward);
    credited.push_back(credit ? 1 : 0);
}

void PolicySamples::clear()
{
    observations.clear();
    actions.clear();
    rewards.clear();
    credited.clear();
}

std::vector<double> returns_to_go(std::span<const double> rewards)
{
    std::vector<double> g(rewards.size());
    double acc = 0.0;
    for (std::size_t t = rewards.size(); t-- > 0;) {
        acc += rewards[t];
        g[t] = acc;
    }
    return g;
}

std::vector<double> reinforce_gradient(const PolicySamples& samples, const PolicyParams& params,
                                       bool baseline, PolicyEvaluator* evaluator)
{
    if (samples.size() == 0) {
        throw std::invalid_argument("REINFORCE needs a non-empty trajectory");
    }
    PolicyEvaluator local(params.spec);
    PolicyEvaluator& ev = evaluator != nullptr ? *evaluator : local;

    const auto g = returns_to_go(samples.rewards);
    double b = 0.0;
    if (baseline) {
        double total = 0.0;
        std::size_t n = 0;
        for (std::size_t t = 0; t < g.size(); ++t) {
            if (samples.credited[t]) {
                total += g[t];
                ++n;
            }
        }
        b = n > 0 ? total / static_cast<double>(n) : 0.0;
    }
    std::vector<double> grad(params.values.size(), 0.0);
    for (std::size_t t = 0; t < samples.size(); ++t) {
        if (!samples.credited[t]) {
            continue;
        }
        const double weight = g[t] - b;
        if (weight != 0.0) {
            ev.accumulate_grad_log_prob(params, samples.obs(t), samples.actions[t], weight, grad);
        }
    }
    return grad;
}

PolicyParams reinforce_update(const std::vector<TransitionRecord>& trajectory,
                              const PolicyParams& params, double learning_rate, bool baseline)
{
    if (trajectory.empty()) {
        throw std::invalid_argument("reinforce_update: empty trajectory");
    }
    PolicySamples samples(trajectory.front().s.size());
    for (const auto& rec : trajectory) {
        samples.push(rec.s, rec.a_executed, rec.r);
    }
    const auto grad = reinforce_gradient(samples, params, baseline);
    PolicyParams out = params;
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        out.values[i] += learning_rate * grad[i];
    }
    return out;
}

void GaeConfig::validate() const
{
    if (!(gamma > 0.0 && gamma <= 1.0)) {
        throw std::invalid_argument("GAE gamma must lie in (0, 1]");
    }
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw std::invalid_argument("GAE lambda must lie in [0, 1]");
    }
}

std::vector<double> compute_gae(std::span<const double> rewards, std::span<const double> values,
                                const GaeConfig& cfg)
{
    if (values.size() != rewards.size() + 1) {
        throw std::invalid_argument("compute_gae: expected " + std::to_string(rewards.size() + 1) +
                                    " values, got " + std::to_string(values.size()));
    }
    std::vector<std::uint8_t> continues(rewards.size(), 1);
    return compute_gae(rewards, values.first(rewards.size()), values.subspan(1), continues, cfg);
}

std::vector<double> compute_gae(std::span<const double> rewards, std::span<const double> values,
                                std::span<const double> next_values,
                                std::span<const std::uint8_t> continues, const GaeConfig& cfg)
{
    cfg.validate();
    const std::size_t n = rewards.size();
    if (values.size() != n || next_values.size() != n || continues.size() != n) {
        throw std::invalid_argument("compute_gae: sequence length mismatch");
    }
    std::vector<double> adv(n);
    double next_adv = 0.0;
    for (std::size_t t = n; t-- > 0;) {
        const double delta = rewards[t] + cfg.gamma * next_values[t] - values[t];
        const double carry = continues[t] ? cfg.gamma * cfg.lambda * next_adv : 0.0;
        adv[t] = delta + carry;
        next_adv = adv[t];
    }
    return adv;
}

void PpoConfig::validate() const
{
    if (!(clip_alpha > 0.0)) {
        throw std::invalid_argument("PPO clip_alpha must be positive");
    }
    if (minibatch_size < 1 || epochs_per_update < 1) {
        throw std::invalid_argument("PPO minibatch size and epochs must be positive");
    }
    if (agent_buffer_len < 1 || advisor_buffer_len < 1) {
        throw std::invalid_argument("PPO buffer lengths must be positive");
    }
    if (!(learning_rate >= 0.0) || !(value_learning_rate >= 0.0) || !(value_loss_weight >= 0.0)) {
        throw std::invalid_argument("PPO learning rates and value weight must be non-negative");
    }
    gae.validate();
}

bool PpoConfig::buffer_ratio_ok() const
{
    return advisor_buffer_len >= 2 * agent_buffer_len;
}

void PpoBatch::push(std::span<const double> s, int action, double reward,
                    std::span<const double> s_next, bool is_terminal, bool credit)
{
    if (s.size() != obs_dim || s_next.size() != obs_dim) {
        throw std::invalid_argument("PpoBatch: observation dimension mismatch");
    }
    observations.insert(observations.end(), s.begin(), s.end());
    next_observations.insert(next_observations.end(), s_next.begin(), s_next.end());
    actions.push_back(action);
    rewards.push_back(reward);
    advantages.push_back(0.0);
    old_log_probs.push_back(0.0);
    terminal.push_back(is_terminal ? 1 : 0);
    credited.push_back(credit ? 1 : 0);
}

void fill_old_log_probs(PpoBatch& batch, const PolicyParams& policy_old)
{
    PolicyEvaluator ev(policy_old.spec);
    for (std::size_t t = 0; t < batch.size(); ++t) {
        batch.old_log_probs[t] = ev.log_prob(policy_old, batch.obs(t), batch.actions[t]);
    }
}

namespace {

PpoObjective evaluate_objective(const PpoBatch& batch, std::span<const std::size_t> indices,
                                const PolicyParams& policy, const PolicyParams& value,
                                const PpoConfig& cfg, PolicyEvaluator& pol_ev,
                                PolicyEvaluator& val_ev)
{
    PpoObjective out;
    out.policy_grad.assign(policy.values.size(), 0.0);
    out.value_grad.assign(value.values.size(), 0.0);
    if (indices.empty()) {
        return out;
    }
    std::size_t credited = 0;
    for (auto idx : indices) {
        credited += batch.credited[idx] ? 1 : 0;
    }
    const double gamma = cfg.gae.gamma;
    const double inv_all = 1.0 / static_cast<double>(indices.size());
    const double inv_cred = credited > 0 ? 1.0 / static_cast<double>(credited) : 0.0;

    for (auto idx : indices) {
        if (batch.credited[idx]) {
            const double lp = pol_ev.log_prob(policy, batch.obs(idx), batch.actions[idx]);
            const double ratio = std::exp(lp - batch.old_log_probs[idx]);
            if (!std::isfinite(ratio)) {
                throw NumericalFailure("PPO probability ratio is not finite", idx);
            }
            const double adv = batch.advantages[idx];
            const double clipped = std::clamp(ratio, 1.0 - cfg.clip_alpha, 1.0 + cfg.clip_alpha);
            const double unclipped_term = ratio * adv;
            const double clipped_term = clipped * adv;
            out.surrogate += std::min(unclipped_term, clipped_term) * inv_cred;
            // The unclipped branch carries the gradient unless the clipped one is
            // strictly smaller, in which case the surrogate is flat in theta.
            if (unclipped_term <= clipped_term) {
                pol_ev.accumulate_grad_log_prob(policy, batch.obs(idx), batch.actions[idx],
                                                inv_cred * adv * ratio, out.policy_grad);
            }
        }
        const double v_next = batch.terminal[idx] ? 0.0 : val_ev.value(value, batch.next_obs(idx));
        const double v_now = val_ev.value(value, batch.obs(idx));
        const double err = batch.rewards[idx] + gamma * v_next - v_now;
        if (!std::isfinite(err)) {
            throw NumericalFailure("PPO value error is not finite", idx);
        }
        out.value_loss += err * err * inv_all;
        // d/dw of -weight * err^2 = -2 weight err (gamma dV(s') - dV(s)).
        const double coef = -2.0 * cfg.value_loss_weight * err * inv_all;
        if (!batch.terminal[idx]) {
            val_ev.accumulate_value_grad(value, batch.next_obs(idx), coef * gamma, out.value_grad);
        }
        val_ev.accumulate_value_grad(value, batch.obs(idx), -coef, out.value_grad);
    }
    out.objective = out.surrogate - cfg.value_loss_weight * out.value_loss;
    return out;
}

} // namespace

PpoObjective ppo_objective(const PpoBatch& batch, std::span<const std::size_t> indices,
                           const PolicyParams& policy, const PolicyParams& value,
                           const PpoConfig& cfg)
{
    PolicyEvaluator pol_ev(policy.spec);
    PolicyEvaluator val_ev(value.spec);
    return evaluate_objective(batch, indices, policy, value, cfg, pol_ev, val_ev);
}

PpoObjective ppo_objective(PpoBatch batch, const PolicyParams& policy,
                           const PolicyParams& policy_old, const PolicyParams& value,
                           const PpoConfig& cfg)
{
    fill_old_log_probs(batch, policy_old);
    std::vector<std::size_t> idx(batch.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return ppo_objective(batch, idx, policy, value, cfg);
}

void ppo_update(PpoBatch batch, PolicyParams& policy, PolicyParams& value, const PpoConfig& cfg,
                Rng& rng, GradientAscent* policy_opt, GradientAscent* value_opt)
{
    cfg.validate();
    if (batch.size() == 0) {
        return;
    }
    fill_old_log_probs(batch, policy);

    if (cfg.normalize_advantages) {
        double mean = 0.0;
        std::size_t n = 0;
        for (std::size_t t = 0; t < batch.size(); ++t) {
            if (batch.credited[t]) {
                mean += batch.advantages[t];
                ++n;
            }
        }
        if (n > 1) {
            mean /= static_cast<double>(n);
            double var = 0.0;
            for (std::size_t t = 0; t < batch.size(); ++t) {
                if (batch.credited[t]) {
                    var += (batch.advantages[t] - mean) * (batch.advantages[t] - mean);
                }
            }
            const double sd = std::sqrt(var / static_cast<double>(n - 1));
            for (auto& a : batch.advantages) {
                a = (a - mean) / (sd + 1e-8);
            }
        }
    }

    GradientAscent local_pol({cfg.optimizer, cfg.learning_rate}, policy.values.size());
    GradientAscent local_val({cfg.optimizer, cfg.value_learning_rate}, value.values.size());
    GradientAscent& pol_opt = policy_opt != nullptr ? *policy_opt : local_pol;
    GradientAscent& val_opt = value_opt != nullptr ? *value_opt : local_val;

    PolicyEvaluator pol_ev(policy.spec);
    PolicyEvaluator val_ev(value.spec);
    std::vector<std::size_t> order(batch.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto mb = static_cast<std::size_t>(cfg.minibatch_size);
    for (int epoch = 0; epoch < cfg.epochs_per_update; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[rng.uniform_index(i)]);
        }
        for (std::size_t start = 0; start < order.size(); start += mb) {
            const auto len = std::min(mb, order.size() - start);
            const auto slice = std::span<const std::size_t>(order).subspan(start, len);
            const auto obj = evaluate_objective(batch, slice, policy, value, cfg, pol_ev, val_ev);
            pol_opt.step(policy.values, obj.policy_grad);
            val_opt.step(value.values, obj.value_grad);
        }
    }
}

} // namespace metaexplore
