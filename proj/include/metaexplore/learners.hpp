#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "metaexplore/core.hpp"
#include "metaexplore/policy.hpp"
#include "metaexplore/rng.hpp"

namespace metaexplore {

// Raised when a ratio or loss becomes non-finite; carries the offending record.
class NumericalFailure : public std::runtime_error {
public:
    NumericalFailure(const std::string& what, std::size_t record)
        : std::runtime_error(what + " (record " + std::to_string(record) + ")"), record_(record)
    {
    }
    std::size_t record() const { return record_; }

private:
    std::size_t record_;
};

enum class OptimizerKind { sgd, adam };

const char* to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(const std::string& name);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::sgd;
    double learning_rate = 3e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Gradient ascent on a flat parameter vector. The Adam variant keeps its
// moment estimates across calls.
class GradientAscent {
public:
    GradientAscent(OptimizerConfig cfg, std::size_t size);

    void step(std::vector<double>& params, std::span<const double> grad);
    const OptimizerConfig& config() const { return cfg_; }

private:
    OptimizerConfig cfg_;
    std::vector<double> m_;
    std::vector<double> v_;
    long long t_ = 0;
};

// On-policy samples in a flat layout. `credited` selects which steps add a
// score-function term; all steps contribute rewards to the returns.
struct PolicySamples {
    std::size_t obs_dim = 0;
    std::vector<double> observations;
    std::vector<int> actions;
    std::vector<double> rewards;
    std::vector<std::uint8_t> credited;

    explicit PolicySamples(std::size_t dim = 0) : obs_dim(dim) {}

    void push(std::span<const double> obs, int action, double reward, bool credit = true);
    void clear();
    std::size_t size() const { return actions.size(); }
    std::span<const double> obs(std::size_t t) const
    {
        return std::span<const double>(observations).subspan(t * obs_dim, obs_dim);
    }
};

// G_t = sum_{t' >= t} r_t' (undiscounted).
std::vector<double> returns_to_go(std::span<const double> rewards);

// sum_t (G_t - b) grad log pi(a_t | s_t) over credited steps, where b is the
// mean of G_t over credited steps when `baseline` is set and 0 otherwise.
std::vector<double> reinforce_gradient(const PolicySamples& samples, const PolicyParams& params,
                                       bool baseline, PolicyEvaluator* evaluator = nullptr);

// params + learning_rate * reinforce_gradient(...) using (s, a_executed, r) of
// each record. Throws on an empty trajectory.
PolicyParams reinforce_update(const std::vector<TransitionRecord>& trajectory,
                              const PolicyParams& params, double learning_rate,
                              bool baseline = true);

struct GaeConfig {
    double gamma = 0.99;
    double lambda = 0.95;

    void validate() const;
};

// values has one more entry than rewards: V(s_0..s_l) with the bootstrap last
// (0 for a terminal end). A_t = delta_t + gamma * lambda * A_{t+1}.
std::vector<double> compute_gae(std::span<const double> rewards, std::span<const double> values,
                                const GaeConfig& cfg);

// Segmented form for buffers that span trajectory boundaries:
// delta_t = r_t + gamma * next_values[t] - values[t], and the recursion is cut
// wherever continues[t] is 0.
std::vector<double> compute_gae(std::span<const double> rewards, std::span<const double> values,
                                std::span<const double> next_values,
                                std::span<const std::uint8_t> continues, const GaeConfig& cfg);

struct PpoConfig {
    double clip_alpha = 0.2;
    int minibatch_size = 32;
    int epochs_per_update = 4;
    double learning_rate = 3e-3;
    double value_learning_rate = 3e-3;
    OptimizerKind optimizer = OptimizerKind::sgd;
    int agent_buffer_len = 128;
    int advisor_buffer_len = 256;
    double value_loss_weight = 1.0;
    bool normalize_advantages = true;
    GaeConfig gae;

    void validate() const;
    // True when advisor_buffer_len >= 2 * agent_buffer_len.
    bool buffer_ratio_ok() const;
};

struct PpoBatch {
    std::size_t obs_dim = 0;
    std::vector<double> observations;
    std::vector<double> next_observations;
    std::vector<int> actions;
    std::vector<double> rewards;
    std::vector<double> advantages;
    std::vector<double> old_log_probs;
    std::vector<std::uint8_t> terminal; // V(s') taken as 0 in the value term
    std::vector<std::uint8_t> credited; // enters the clipped surrogate

    explicit PpoBatch(std::size_t dim = 0) : obs_dim(dim) {}

    std::size_t size() const { return actions.size(); }
    std::span<const double> obs(std::size_t t) const
    {
        return std::span<const double>(observations).subspan(t * obs_dim, obs_dim);
    }
    std::span<const double> next_obs(std::size_t t) const
    {
        return std::span<const double>(next_observations).subspan(t * obs_dim, obs_dim);
    }
    void push(std::span<const double> s, int action, double reward, std::span<const double> s_next,
              bool is_terminal, bool credit = true);
};

struct PpoObjective {
    double objective = 0.0;
    double surrogate = 0.0;
    double value_loss = 0.0;
    std::vector<double> policy_grad;
    std::vector<double> value_grad;
};

// J = mean_credited[min(r A, clip(r, 1-alpha, 1+alpha) A)]
//     - w * mean[(R + gamma V(s') - V(s))^2]
// with r = pi_new(a|s) / pi_old(a|s) from the batch's old log-probabilities.
// Gradients are exact for this J, including the V(s') dependence.
PpoObjective ppo_objective(const PpoBatch& batch, std::span<const std::size_t> indices,
                           const PolicyParams& policy, const PolicyParams& value,
                           const PpoConfig& cfg);

// Overload that computes old log-probabilities from params_old.
PpoObjective ppo_objective(PpoBatch batch, const PolicyParams& policy,
                           const PolicyParams& policy_old, const PolicyParams& value,
                           const PpoConfig& cfg);

void fill_old_log_probs(PpoBatch& batch, const PolicyParams& policy_old);

// epochs_per_update passes of shuffled minibatch ascent on ppo_objective.
// Old log-probabilities are taken from `policy` on entry. Optimizers may be
// passed to keep Adam state between updates.
void ppo_update(PpoBatch batch, PolicyParams& policy, PolicyParams& value, const PpoConfig& cfg,
                Rng& rng, GradientAscent* policy_opt = nullptr,
                GradientAscent* value_opt = nullptr);

} // namespace metaexplore
