#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "metaexplore/core.hpp"
#include "metaexplore/environment.hpp"
#include "metaexplore/learners.hpp"
#include "metaexplore/parallel.hpp"
#include "metaexplore/policy.hpp"

namespace metaexplore {

enum class LearnerAlgo { reinforce, ppo };

const char* to_string(LearnerAlgo algo);
LearnerAlgo learner_algo_from_string(const std::string& name);

// Which advisor suggestions receive credit in the advisor's update.
enum class CreditMode { explored_only, all_steps };

// Span of the advisor's REINFORCE return-to-go.
enum class ReturnHorizon { lifetime, episode };

const char* to_string(CreditMode mode);
CreditMode credit_mode_from_string(const std::string& name);
const char* to_string(ReturnHorizon horizon);
ReturnHorizon return_horizon_from_string(const std::string& name);

struct NetworkConfig {
    std::vector<int> hidden{64};
    HeadKind head = HeadKind::softmax;
    double init_scale = 1.0;
    double output_init_scale = 1.0;
};

// Policy spec for a finite action set. A factored head needs a power-of-two
// action count and uses log2(num_actions) output bits.
MlpSpec make_policy_spec(const NetworkConfig& net, int input_dim, int num_actions);
MlpSpec make_value_spec(const NetworkConfig& net, int input_dim);

struct LearnerConfig {
    LearnerAlgo algo = LearnerAlgo::reinforce;
    NetworkConfig network;
    double learning_rate = 3e-3;
    OptimizerKind optimizer = OptimizerKind::sgd;
    bool baseline = true;
    PpoConfig ppo;
};

struct AdvisorConfig {
    LearnerConfig learner;
    bool observe_episode_index = false;
    CreditMode credit = CreditMode::explored_only;
    ReturnHorizon horizon = ReturnHorizon::lifetime;
};

struct AdvisorRunConfig {
    int meta_episodes = 60;
    LifetimeConfig lifetime{200, 200};
    EpsilonSchedule schedule;
    LearnerConfig agent;
    AdvisorConfig advisor;
    int n_parallel_tasks = 1;
    // > 0: d_C is replaced by the uniform distribution over this many tasks
    // drawn once from the class. 0: a fresh task for every lifetime.
    int num_training_tasks = 0;
    std::uint64_t seed = 0;
    int checkpoint_every = 0;
    Execution execution = Execution::parallel;

    void validate() const;
};

// The exploration policy mu. Without parameters it is the uniform random
// exploration baseline.
struct AdvisorPolicy {
    std::optional<PolicyParams> params;
    bool observe_episode_index = false;
    int episodes = 1;

    static AdvisorPolicy uniform() { return {}; }
    bool learned() const { return params.has_value(); }
    // Network input for observation obs in episode i.
    void features(std::span<const double> obs, int episode, std::vector<double>& out) const;
};

// Agent memory M: a flat parameter payload plus the immutable snapshot M0 it
// is reset to on every new task.
enum class MemoryKind { tabular_q, mlp_params };

class AgentMemory {
public:
    AgentMemory(MemoryKind kind, std::vector<double> initial);

    MemoryKind kind() const { return kind_; }
    const std::vector<double>& initial_snapshot() const { return initial_; }
    std::vector<double>& payload() { return payload_; }
    const std::vector<double>& payload() const { return payload_; }
    void reset() { payload_ = initial_; }
    bool finite() const;

private:
    MemoryKind kind_;
    std::vector<double> initial_;
    std::vector<double> payload_;
};

// The task-specific learner whose exploitation policy pi is trained during a
// lifetime. It learns from executed transitions.
class Agent {
public:
    virtual ~Agent() = default;

    virtual int act(std::span<const double> obs, Rng& rng) = 0;
    // episode_end is set on the last transition of an episode (termination or
    // the step cap); done only on termination.
    virtual void observe(std::span<const double> obs, int action, double reward,
                         std::span<const double> next_obs, bool done, bool episode_end) = 0;
    virtual const PolicyParams& policy() const = 0;
};

// Builds an agent whose memory starts at `initial` (policy) and, for PPO,
// `initial_value`. Learner updates draw from learner_rng.
std::unique_ptr<Agent> make_agent(const LearnerConfig& cfg, const PolicyParams& initial,
                                  const std::optional<PolicyParams>& initial_value,
                                  Rng learner_rng);

// M0 for a run: fixed across tasks, drawn from the run's agent-init substream.
struct AgentInit {
    PolicyParams policy;
    std::optional<PolicyParams> value;
};

AgentInit make_agent_init(const LearnerConfig& cfg, int obs_dim, int num_actions, Rng& rng);

struct LifetimeResult {
    std::vector<double> episode_returns;
    std::vector<int> episode_lengths;
    std::vector<double> explored_fraction;
    // Per episode: poor actions among explored steps (NaN when nothing was
    // explored). Empty for classes without poor actions.
    std::vector<double> poor_action_rate;
    long long explored_steps = 0;
    long long poor_explored_steps = 0;
    double lifetime_return = 0.0;
    std::vector<TransitionRecord> trajectory;
    bool valid = true;
    std::string failure;

    double total_explored_fraction() const;
    // Poor actions among all explored steps of the lifetime; NaN if untracked.
    double total_poor_action_rate() const;
};

struct LifetimeOptions {
    bool record_trajectory = true;
};

// One agent lifetime on `task`: memory reset to M0, then I episodes of at
// most T steps, each step gating the advisor's suggestion against the agent's
// action with eps_i.
LifetimeResult run_agent_lifetime(const Task& task, const AdvisorPolicy& mu, const LearnerConfig& agent,
                                  const AgentInit& agent_init, const LifetimeConfig& lifetime,
                                  const EpsilonSchedule& schedule, Rng rng,
                                  const LifetimeOptions& options = {});

// Same process without an advisor: the agent's own action is always executed.
// Uses the same substreams as run_agent_lifetime.
LifetimeResult run_agent_only_lifetime(const Task& task, const LearnerConfig& agent,
                                       const AgentInit& agent_init, const LifetimeConfig& lifetime,
                                       Rng rng);

struct LifetimeJob {
    const Task* task = nullptr;
    const AdvisorPolicy* mu = nullptr;
    Rng rng;
};

// Data-parallel kernel over independent lifetimes. Serial and parallel
// execution produce identical results.
std::vector<LifetimeResult> run_lifetimes(std::span<const LifetimeJob> jobs, const LearnerConfig& agent,
                                          const AgentInit& agent_init, const LifetimeConfig& lifetime,
                                          const EpsilonSchedule& schedule, const LifetimeOptions& options,
                                          Execution exec);

// REINFORCE gradient of the advisor's objective from one lifetime.
std::vector<double> advisor_reinforce_gradient(const LifetimeResult& result, const AdvisorPolicy& mu,
                                               const AdvisorConfig& cfg);

struct MetaEpisodeMetrics {
    int meta_episode = 0;
    int worker = 0;
    std::string task_id;
    double lifetime_return = 0.0;
    double ep_return_first = 0.0;
    double ep_return_last = 0.0;
    double ep_return_mean = 0.0;
    double explored_fraction = 0.0;
    std::optional<double> poor_action_rate;
    bool valid = true;
};

MetaEpisodeMetrics summarize_lifetime(const LifetimeResult& r, int meta_episode, int worker,
                                      const std::string& task_id);

struct TrainingResult {
    PolicyParams mu;
    std::optional<PolicyParams> mu_value;
    AgentInit agent_init;
    std::vector<Task> training_tasks;
    std::vector<MetaEpisodeMetrics> metrics;
    std::vector<std::string> warnings;
};

struct TrainingHooks {
    std::function<void(int meta_episode, const PolicyParams& mu)> on_checkpoint;
    std::function<void(const MetaEpisodeMetrics&)> on_metrics;
};

TrainingResult train_advisor_reinforce(const ProblemClass& pc, const AdvisorRunConfig& cfg,
                                       const TrainingHooks& hooks = {});

// Workers advance in (advisor step k, worker index) order; advisor records
// enter the shared buffer in that order and mu is updated every n records.
TrainingResult train_advisor_ppo(const ProblemClass& pc, const AdvisorRunConfig& cfg,
                                 const TrainingHooks& hooks = {});

TrainingResult train_advisor(const ProblemClass& pc, const AdvisorRunConfig& cfg,
                             const TrainingHooks& hooks = {});

struct EvaluationConfig {
    LifetimeConfig lifetime{200, 200};
    EpsilonSchedule schedule;
    LearnerConfig agent;
    int repeats = 1;
    Execution execution = Execution::parallel;
};

struct PairedLifetime {
    std::string task_id;
    int repeat = 0;
    LifetimeResult advisor;
    LifetimeResult random;
};

struct ComparisonReport {
    std::vector<PairedLifetime> pairs;
    std::vector<double> advisor_returns;
    std::vector<double> random_returns;
    std::vector<double> differences;
    double advisor_mean = 0.0;
    double random_mean = 0.0;
    double advisor_se = 0.0;
    double random_se = 0.0;
    double difference_mean = 0.0;
    double difference_se = 0.0;
    // Per-episode means across pairs (learning curves).
    std::vector<double> advisor_curve;
    std::vector<double> random_curve;
    std::vector<double> advisor_poor_curve;
    std::vector<double> random_poor_curve;
};

// Paired lifetimes on the given tasks: each pair shares every random substream
// and differs only in the exploration policy (learned vs uniform).
ComparisonReport evaluate_exploration(const AdvisorPolicy& mu, std::span<const Task> tasks,
                                      const AgentInit& agent_init, const EvaluationConfig& cfg, Rng rng);

// Draws n_tasks tasks from the class with rng and evaluates on them.
ComparisonReport evaluate_exploration(const AdvisorPolicy& mu, const ProblemClass& pc, int n_tasks,
                                      const AgentInit& agent_init, const EvaluationConfig& cfg, Rng rng);

// mu alone, sampled at every step, no agent and no learning.
std::vector<double> exploration_only_rollout(const AdvisorPolicy& mu, const Task& task, int episodes,
                                             int steps, Rng rng);

// Trains the agent on one task with uniform random exploration under the
// schedule. Returns the exploitation policy snapshot with the best trailing
// 20-episode mean return.
PolicyParams train_exploitation_policy(const Task& task, const LearnerConfig& agent,
                                       const AgentInit& agent_init, const LifetimeConfig& lifetime,
                                       const EpsilonSchedule& schedule, Rng rng);

// Runs a fixed policy with no exploration and no learning. Greedy takes the
// most probable action instead of sampling.
std::vector<double> exploitation_rollout(const PolicyParams& pi, const Task& task, int episodes, int steps,
                                         bool greedy, Rng rng);

double mean(std::span<const double> v);
double standard_error(std::span<const double> v);

} // namespace metaexplore
