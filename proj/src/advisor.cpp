#include "metaexplore/advisor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace metaexplore {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

} // namespace

const char* to_string(LearnerAlgo algo)
{
    return algo == LearnerAlgo::ppo ? "ppo" : "reinforce";
}

LearnerAlgo learner_algo_from_string(const std::string& name)
{
    if (name == "reinforce") return LearnerAlgo::reinforce;
    if (name == "ppo") return LearnerAlgo::ppo;
    throw std::invalid_argument("unknown learner algorithm '" + name + "'");
}

const char* to_string(CreditMode mode)
{
    return mode == CreditMode::all_steps ? "all_steps" : "explored_only";
}

CreditMode credit_mode_from_string(const std::string& name)
{
    if (name == "explored_only") return CreditMode::explored_only;
    if (name == "all_steps") return CreditMode::all_steps;
    throw std::invalid_argument("unknown credit mode '" + name + "'");
}

const char* to_string(ReturnHorizon horizon)
{
    return horizon == ReturnHorizon::episode ? "episode" : "lifetime";
}

ReturnHorizon return_horizon_from_string(const std::string& name)
{
    if (name == "lifetime") return ReturnHorizon::lifetime;
    if (name == "episode") return ReturnHorizon::episode;
    throw std::invalid_argument("unknown return horizon '" + name + "'");
}

MlpSpec make_policy_spec(const NetworkConfig& net, int input_dim, int num_actions)
{
    MlpSpec spec;
    spec.input_dim = input_dim;
    spec.hidden = net.hidden;
    spec.head = net.head;
    spec.init_scale = net.init_scale;
    spec.output_init_scale = net.output_init_scale;
    switch (net.head) {
    case HeadKind::softmax:
        spec.output_dim = num_actions;
        break;
    case HeadKind::factored_bernoulli: {
        const auto n = static_cast<unsigned>(num_actions);
        if (num_actions < 2 || !std::has_single_bit(n)) {
            throw std::invalid_argument("factored head needs a power-of-two action count");
        }
        spec.output_dim = std::countr_zero(n);
        break;
    }
    case HeadKind::scalar:
        throw std::invalid_argument("a policy network cannot use a scalar head");
    }
    spec.validate();
    return spec;
}

MlpSpec make_value_spec(const NetworkConfig& net, int input_dim)
{
    MlpSpec spec;
    spec.input_dim = input_dim;
    spec.hidden = net.hidden;
    spec.head = HeadKind::scalar;
    spec.output_dim = 1;
    spec.init_scale = net.init_scale;
    spec.output_init_scale = net.output_init_scale;
    spec.validate();
    return spec;
}

void AdvisorRunConfig::validate() const
{
    if (meta_episodes < 1) {
        throw std::invalid_argument("meta_episodes must be at least 1");
    }
    if (n_parallel_tasks < 1) {
        throw std::invalid_argument("n_parallel_tasks must be at least 1");
    }
    if (num_training_tasks < 0) {
        throw std::invalid_argument("num_training_tasks must be non-negative");
    }
    if (checkpoint_every < 0) {
        throw std::invalid_argument("checkpoint_every must be non-negative");
    }
    lifetime.validate();
    schedule.validate();
    if (agent.algo == LearnerAlgo::ppo) {
        agent.ppo.validate();
    }
    if (advisor.learner.algo == LearnerAlgo::ppo) {
        advisor.learner.ppo.validate();
    }
}

void AdvisorPolicy::features(std::span<const double> obs, int episode, std::vector<double>& out) const
{
    out.assign(obs.begin(), obs.end());
    if (observe_episode_index) {
        out.push_back(static_cast<double>(episode) / static_cast<double>(std::max(episodes, 1)));
    }
}

AgentMemory::AgentMemory(MemoryKind kind, std::vector<double> initial)
    : kind_(kind), initial_(std::move(initial)), payload_(initial_)
{
    if (!finite()) {
        throw std::invalid_argument("agent memory must be finite");
    }
}

bool AgentMemory::finite() const
{
    return std::all_of(payload_.begin(), payload_.end(), [](double v) { return std::isfinite(v); });
}

namespace {

class ReinforceAgent final : public Agent {
public:
    ReinforceAgent(const LearnerConfig& cfg, const PolicyParams& initial)
        : cfg_(cfg),
          policy_(initial),
          eval_(initial.spec),
          opt_({cfg.optimizer, cfg.learning_rate}, initial.values.size()),
          samples_(static_cast<std::size_t>(initial.spec.input_dim))
    {
    }

    int act(std::span<const double> obs, Rng& rng) override { return eval_.sample(policy_, obs, rng); }

    void observe(std::span<const double> obs, int action, double reward, std::span<const double>,
                 bool, bool episode_end) override
    {
        samples_.push(obs, action, reward);
        if (episode_end) {
            const auto grad = reinforce_gradient(samples_, policy_, cfg_.baseline, &eval_);
            opt_.step(policy_.values, grad);
            check_finite(policy_.values);
            samples_.clear();
        }
    }

    const PolicyParams& policy() const override { return policy_; }

private:
    static void check_finite(const std::vector<double>& v)
    {
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!std::isfinite(v[i])) {
                throw NumericalFailure("agent parameters became non-finite", i);
            }
        }
    }

    LearnerConfig cfg_;
    PolicyParams policy_;
    PolicyEvaluator eval_;
    GradientAscent opt_;
    PolicySamples samples_;
};

class PpoAgent final : public Agent {
public:
    PpoAgent(const LearnerConfig& cfg, const PolicyParams& initial, const PolicyParams& initial_value,
             Rng rng)
        : cfg_(cfg.ppo),
          policy_(initial),
          value_(initial_value),
          eval_(initial.spec),
          value_eval_(initial_value.spec),
          rng_(rng),
          policy_opt_({cfg.optimizer, cfg.learning_rate}, initial.values.size()),
          value_opt_({cfg.optimizer, cfg.ppo.value_learning_rate}, initial_value.values.size()),
          buffer_(static_cast<std::size_t>(initial.spec.input_dim))
    {
        cfg_.optimizer = cfg.optimizer;
        cfg_.learning_rate = cfg.learning_rate;
        cfg_.validate();
    }

    int act(std::span<const double> obs, Rng& rng) override { return eval_.sample(policy_, obs, rng); }

    void observe(std::span<const double> obs, int action, double reward, std::span<const double> next_obs,
                 bool done, bool episode_end) override
    {
        buffer_.push(obs, action, reward, next_obs, done);
        episode_end_.push_back(episode_end ? 1 : 0);
        if (buffer_.size() >= static_cast<std::size_t>(cfg_.agent_buffer_len)) {
            update();
        }
    }

    const PolicyParams& policy() const override { return policy_; }

private:
    void update()
    {
        const std::size_t n = buffer_.size();
        std::vector<double> values(n), next_values(n);
        std::vector<std::uint8_t> continues(n);
        for (std::size_t t = 0; t < n; ++t) {
            values[t] = value_eval_.value(value_, buffer_.obs(t));
            next_values[t] = buffer_.terminal[t] ? 0.0 : value_eval_.value(value_, buffer_.next_obs(t));
            continues[t] = (episode_end_[t] || t + 1 == n) ? 0 : 1;
        }
        buffer_.advantages = compute_gae(buffer_.rewards, values, next_values, continues, cfg_.gae);
        ppo_update(std::move(buffer_), policy_, value_, cfg_, rng_, &policy_opt_, &value_opt_);
        buffer_ = PpoBatch(static_cast<std::size_t>(policy_.spec.input_dim));
        episode_end_.clear();
    }

    PpoConfig cfg_;
    PolicyParams policy_;
    PolicyParams value_;
    PolicyEvaluator eval_;
    PolicyEvaluator value_eval_;
    Rng rng_;
    GradientAscent policy_opt_;
    GradientAscent value_opt_;
    PpoBatch buffer_;
    std::vector<std::uint8_t> episode_end_;
};

} // namespace

std::unique_ptr<Agent> make_agent(const LearnerConfig& cfg, const PolicyParams& initial,
                                  const std::optional<PolicyParams>& initial_value, Rng learner_rng)
{
    if (cfg.algo == LearnerAlgo::reinforce) {
        return std::make_unique<ReinforceAgent>(cfg, initial);
    }
    if (!initial_value) {
        throw std::invalid_argument("a PPO agent needs an initial value network");
    }
    return std::make_unique<PpoAgent>(cfg, initial, *initial_value, learner_rng);
}

AgentInit make_agent_init(const LearnerConfig& cfg, int obs_dim, int num_actions, Rng& rng)
{
    AgentInit init{PolicyParams::random(make_policy_spec(cfg.network, obs_dim, num_actions), rng), {}};
    if (cfg.algo == LearnerAlgo::ppo) {
        init.value = PolicyParams::random(make_value_spec(cfg.network, obs_dim), rng);
    }
    return init;
}

double LifetimeResult::total_explored_fraction() const
{
    long long steps = 0;
    for (int len : episode_lengths) {
        steps += len;
    }
    return steps > 0 ? static_cast<double>(explored_steps) / static_cast<double>(steps) : 0.0;
}

double LifetimeResult::total_poor_action_rate() const
{
    if (poor_action_rate.empty() || explored_steps == 0) {
        return kNaN;
    }
    return static_cast<double>(poor_explored_steps) / static_cast<double>(explored_steps);
}

namespace {

// Step-at-a-time lifetime so that several lifetimes can advance in lockstep.
class LifetimeRunner {
public:
    LifetimeRunner(const Task& task, const LearnerConfig& agent, const AgentInit& init,
                   const LifetimeConfig& lifetime, const EpsilonSchedule& schedule, Rng rng,
                   bool record_trajectory, bool gated)
        : env_(make_environment(task)),
          lifetime_(lifetime),
          schedule_(schedule),
          gate_rng_(rng.substream("gating")),
          env_rng_(rng.substream("env")),
          agent_rng_(rng.substream("agent-policy")),
          advisor_rng_(rng.substream("advisor-policy")),
          record_(record_trajectory),
          gated_(gated),
          obs_(env_->observation_dim()),
          next_(env_->observation_dim())
    {
        lifetime_.validate();
        schedule_.validate();
        if (init.policy.spec.input_dim != static_cast<int>(env_->observation_dim())
            || init.policy.spec.num_actions() != env_->num_actions()) {
            throw std::invalid_argument("agent network does not match the task's spaces");
        }
        agent_ = make_agent(agent, init.policy, init.value, rng.substream("learner"));
        result_.episode_returns.reserve(static_cast<std::size_t>(lifetime_.episodes));
    }

    bool finished() const { return finished_; }
    std::size_t episodes_completed() const { return result_.episode_returns.size(); }
    const std::vector<double>& episode_returns() const { return result_.episode_returns; }
    const TransitionRecord& last() const { return last_; }
    const PolicyParams& policy() const { return agent_->policy(); }
    int num_actions() const { return env_->num_actions(); }

    // Advances one step. Returns false if the lifetime ended without producing
    // a record (numerical failure).
    bool step(const AdvisorPolicy& mu)
    {
        if (finished_) {
            return false;
        }
        try {
            advance(mu);
            return true;
        } catch (const NumericalFailure& e) {
            fail(e.what());
        } catch (const std::domain_error& e) {
            fail(e.what());
        }
        return false;
    }

    LifetimeResult take() { return std::move(result_); }

private:
    int suggest(const AdvisorPolicy& mu)
    {
        if (!mu.learned()) {
            return static_cast<int>(advisor_rng_.uniform_index(static_cast<std::size_t>(env_->num_actions())));
        }
        if (!mu_eval_ || !(mu_eval_spec_ == mu.params->spec)) {
            mu_eval_ = std::make_unique<PolicyEvaluator>(mu.params->spec);
            mu_eval_spec_ = mu.params->spec;
        }
        mu.features(obs_, episode_, features_);
        return mu_eval_->sample(*mu.params, features_, advisor_rng_);
    }

    void advance(const AdvisorPolicy& mu)
    {
        if (t_ == 0) {
            epsilon_ = schedule_.at(episode_);
            env_->reset(env_rng_);
            env_->observe(obs_);
            ep_return_ = 0.0;
            ep_explored_ = 0;
            ep_poor_ = 0;
        }
        const int u = gated_ ? suggest(mu) : 0;
        const int a = agent_->act(obs_, agent_rng_);
        const GateResult g = gated_ ? gate_action(u, a, epsilon_, gate_rng_) : GateResult{a, false};
        const StepOutcome out = env_->step(g.executed, env_rng_);
        env_->observe(next_);

        last_.s = obs_;
        last_.u_suggested = gated_ ? u : g.executed;
        last_.a_executed = g.executed;
        last_.explored = g.explored;
        last_.r = out.reward;
        last_.s_next = next_;
        last_.done = out.done;
        last_.episode = episode_;
        last_.k = advisor_timestep(episode_, t_, lifetime_.steps);
        if (record_) {
            result_.trajectory.push_back(last_);
        }

        ep_return_ += out.reward;
        if (g.explored) {
            ++ep_explored_;
            if (env_->tracks_poor_actions() && env_->is_poor(g.executed)) {
                ++ep_poor_;
            }
        }
        ++t_;
        const bool episode_end = out.done || t_ == lifetime_.steps;
        agent_->observe(obs_, g.executed, out.reward, next_, out.done, episode_end);
        std::swap(obs_, next_);
        if (episode_end) {
            close_episode();
            ++episode_;
            t_ = 0;
            if (episode_ == lifetime_.episodes) {
                finished_ = true;
            }
        }
    }

    void close_episode()
    {
        result_.episode_returns.push_back(ep_return_);
        result_.episode_lengths.push_back(t_);
        result_.explored_fraction.push_back(static_cast<double>(ep_explored_) / static_cast<double>(t_));
        if (env_->tracks_poor_actions()) {
            result_.poor_action_rate.push_back(
                ep_explored_ > 0 ? static_cast<double>(ep_poor_) / static_cast<double>(ep_explored_) : kNaN);
        }
        result_.explored_steps += ep_explored_;
        result_.poor_explored_steps += ep_poor_;
        result_.lifetime_return += ep_return_;
    }

    void fail(const std::string& what)
    {
        result_.valid = false;
        result_.failure = what;
        finished_ = true;
    }

    std::unique_ptr<Environment> env_;
    std::unique_ptr<Agent> agent_;
    LifetimeConfig lifetime_;
    EpsilonSchedule schedule_;
    Rng gate_rng_;
    Rng env_rng_;
    Rng agent_rng_;
    Rng advisor_rng_;
    bool record_;
    bool gated_;
    std::unique_ptr<PolicyEvaluator> mu_eval_;
    MlpSpec mu_eval_spec_;
    std::vector<double> obs_;
    std::vector<double> next_;
    std::vector<double> features_;
    int episode_ = 0;
    int t_ = 0;
    double epsilon_ = 0.0;
    double ep_return_ = 0.0;
    int ep_explored_ = 0;
    int ep_poor_ = 0;
    bool finished_ = false;
    TransitionRecord last_;
    LifetimeResult result_;
};

void check_advisor(const AdvisorPolicy& mu, const Task& task)
{
    if (!mu.learned()) {
        return;
    }
    const auto dim = static_cast<int>(task_state_space(task).dimension) + (mu.observe_episode_index ? 1 : 0);
    if (mu.params->spec.input_dim != dim || mu.params->spec.num_actions() != task_num_actions(task)) {
        throw std::invalid_argument("advisor network does not match the task's spaces");
    }
}

} // namespace

LifetimeResult run_agent_lifetime(const Task& task, const AdvisorPolicy& mu, const LearnerConfig& agent,
                                  const AgentInit& agent_init, const LifetimeConfig& lifetime,
                                  const EpsilonSchedule& schedule, Rng rng, const LifetimeOptions& options)
{
    check_advisor(mu, task);
    LifetimeRunner runner(task, agent, agent_init, lifetime, schedule, rng, options.record_trajectory, true);
    while (!runner.finished()) {
        runner.step(mu);
    }
    return runner.take();
}

LifetimeResult run_agent_only_lifetime(const Task& task, const LearnerConfig& agent,
                                       const AgentInit& agent_init, const LifetimeConfig& lifetime, Rng rng)
{
    LifetimeRunner runner(task, agent, agent_init, lifetime, EpsilonSchedule{0.0, 1.0}, rng, true, false);
    const AdvisorPolicy none;
    while (!runner.finished()) {
        runner.step(none);
    }
    return runner.take();
}

std::vector<LifetimeResult> run_lifetimes(std::span<const LifetimeJob> jobs, const LearnerConfig& agent,
                                          const AgentInit& agent_init, const LifetimeConfig& lifetime,
                                          const EpsilonSchedule& schedule, const LifetimeOptions& options,
                                          Execution exec)
{
    std::vector<LifetimeResult> out(jobs.size());
    for_each_index(jobs.size(), exec, [&](std::size_t j) {
        out[j] = run_agent_lifetime(*jobs[j].task, *jobs[j].mu, agent, agent_init, lifetime, schedule,
                                    jobs[j].rng, options);
    });
    return out;
}

std::vector<double> advisor_reinforce_gradient(const LifetimeResult& result, const AdvisorPolicy& mu,
                                               const AdvisorConfig& cfg)
{
    if (!mu.learned()) {
        throw std::invalid_argument("advisor gradient needs a parameterized advisor");
    }
    const auto& traj = result.trajectory;
    std::vector<double> grad(mu.params->values.size(), 0.0);
    if (traj.empty()) {
        return grad;
    }

    std::vector<double> g(traj.size());
    double acc = 0.0;
    for (std::size_t n = traj.size(); n-- > 0;) {
        const bool cut = cfg.horizon == ReturnHorizon::episode
                         && (n + 1 == traj.size() || traj[n + 1].episode != traj[n].episode);
        if (cut) {
            acc = 0.0;
        }
        acc += traj[n].r;
        g[n] = acc;
    }

    auto credited = [&](const TransitionRecord& rec) {
        return cfg.credit == CreditMode::all_steps || rec.explored;
    };
    double b = 0.0;
    if (cfg.learner.baseline) {
        std::size_t count = 0;
        for (std::size_t n = 0; n < traj.size(); ++n) {
            if (credited(traj[n])) {
                b += g[n];
                ++count;
            }
        }
        b = count > 0 ? b / static_cast<double>(count) : 0.0;
    }

    PolicyEvaluator eval(mu.params->spec);
    std::vector<double> x;
    for (std::size_t n = 0; n < traj.size(); ++n) {
        if (!credited(traj[n])) {
            continue;
        }
        mu.features(traj[n].s, traj[n].episode, x);
        eval.accumulate_grad_log_prob(*mu.params, x, traj[n].u_suggested, g[n] - b, grad);
    }
    return grad;
}

MetaEpisodeMetrics summarize_lifetime(const LifetimeResult& r, int meta_episode, int worker,
                                      const std::string& task_id)
{
    MetaEpisodeMetrics m;
    m.meta_episode = meta_episode;
    m.worker = worker;
    m.task_id = task_id;
    m.lifetime_return = r.lifetime_return;
    m.valid = r.valid;
    if (r.episode_returns.empty()) {
        m.ep_return_first = m.ep_return_last = m.ep_return_mean = kNaN;
    } else {
        m.ep_return_first = r.episode_returns.front();
        m.ep_return_last = r.episode_returns.back();
        m.ep_return_mean = r.lifetime_return / static_cast<double>(r.episode_returns.size());
    }
    m.explored_fraction = r.total_explored_fraction();
    if (!r.poor_action_rate.empty()) {
        const double rate = r.total_poor_action_rate();
        if (std::isfinite(rate)) {
            m.poor_action_rate = rate;
        }
    }
    return m;
}

namespace {

struct TrainingSetup {
    Rng root;
    AgentInit agent_init;
    AdvisorPolicy mu;
    std::optional<PolicyParams> mu_value;
    std::vector<Task> training_tasks;
    int obs_dim = 0;
};

TrainingSetup prepare_training(const ProblemClass& pc, const AdvisorRunConfig& cfg)
{
    cfg.validate();
    pc.validate();
    TrainingSetup s{Rng(cfg.seed), {}, {}, {}, {}, 0};
    s.obs_dim = static_cast<int>(pc.state_space.dimension);
    Rng agent_rng = s.root.substream("agent-init");
    s.agent_init = make_agent_init(cfg.agent, s.obs_dim, pc.num_actions, agent_rng);

    Rng advisor_rng = s.root.substream("advisor-init");
    s.mu.observe_episode_index = cfg.advisor.observe_episode_index;
    s.mu.episodes = cfg.lifetime.episodes;
    const int in_dim = s.obs_dim + (cfg.advisor.observe_episode_index ? 1 : 0);
    s.mu.params = PolicyParams::random(make_policy_spec(cfg.advisor.learner.network, in_dim, pc.num_actions),
                                       advisor_rng);
    if (cfg.advisor.learner.algo == LearnerAlgo::ppo) {
        s.mu_value = PolicyParams::random(make_value_spec(cfg.advisor.learner.network, in_dim), advisor_rng);
    }
    if (cfg.num_training_tasks > 0) {
        Rng task_rng = s.root.substream("tasks");
        s.training_tasks = sample_tasks(pc, cfg.num_training_tasks, task_rng);
    }
    return s;
}

// Task for lifetime slot (meta_episode, worker): a uniform pick from the fixed
// training set, or a fresh draw from d_C.
Task pick_task(const ProblemClass& pc, const TrainingSetup& s, const AdvisorRunConfig& cfg, int meta_episode,
               int worker)
{
    const auto slot = static_cast<std::uint64_t>(meta_episode) * static_cast<std::uint64_t>(cfg.n_parallel_tasks)
                      + static_cast<std::uint64_t>(worker);
    Rng rng = s.root.substream("task-pick", slot);
    if (!s.training_tasks.empty()) {
        return s.training_tasks[rng.uniform_index(s.training_tasks.size())];
    }
    return sample_task(pc, rng);
}

Rng lifetime_rng(const TrainingSetup& s, const AdvisorRunConfig& cfg, int meta_episode, int worker)
{
    const auto slot = static_cast<std::uint64_t>(meta_episode) * static_cast<std::uint64_t>(cfg.n_parallel_tasks)
                      + static_cast<std::uint64_t>(worker);
    return s.root.substream("lifetime", slot);
}

void emit(TrainingResult& out, const TrainingHooks& hooks, MetaEpisodeMetrics m)
{
    if (hooks.on_metrics) {
        hooks.on_metrics(m);
    }
    out.metrics.push_back(std::move(m));
}

void maybe_checkpoint(const TrainingHooks& hooks, const AdvisorRunConfig& cfg, int meta_episode,
                      const PolicyParams& mu)
{
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && (meta_episode + 1) % cfg.checkpoint_every == 0) {
        hooks.on_checkpoint(meta_episode, mu);
    }
}

} // namespace

TrainingResult train_advisor_reinforce(const ProblemClass& pc, const AdvisorRunConfig& cfg,
                                       const TrainingHooks& hooks)
{
    if (cfg.advisor.learner.algo != LearnerAlgo::reinforce) {
        throw std::invalid_argument("train_advisor_reinforce needs advisor algo 'reinforce'");
    }
    TrainingSetup s = prepare_training(pc, cfg);
    TrainingResult out;
    GradientAscent opt({cfg.advisor.learner.optimizer, cfg.advisor.learner.learning_rate},
                       s.mu.params->values.size());

    const auto workers = static_cast<std::size_t>(cfg.n_parallel_tasks);
    std::vector<Task> tasks(workers);
    std::vector<LifetimeResult> results(workers);
    std::vector<std::vector<double>> grads(workers);
    for (int m = 0; m < cfg.meta_episodes; ++m) {
        for (std::size_t w = 0; w < workers; ++w) {
            tasks[w] = pick_task(pc, s, cfg, m, static_cast<int>(w));
        }
        for_each_index(workers, cfg.execution, [&](std::size_t w) {
            results[w] = run_agent_lifetime(tasks[w], s.mu, cfg.agent, s.agent_init, cfg.lifetime, cfg.schedule,
                                            lifetime_rng(s, cfg, m, static_cast<int>(w)));
            grads[w] = results[w].valid ? advisor_reinforce_gradient(results[w], s.mu, cfg.advisor)
                                        : std::vector<double>{};
            results[w].trajectory.clear();
            results[w].trajectory.shrink_to_fit();
        });

        std::vector<double> total(s.mu.params->values.size(), 0.0);
        int valid = 0;
        for (std::size_t w = 0; w < workers; ++w) {
            if (!results[w].valid) {
                continue;
            }
            ++valid;
            for (std::size_t p = 0; p < total.size(); ++p) {
                total[p] += grads[w][p];
            }
        }
        if (valid > 0) {
            for (auto& v : total) {
                v /= static_cast<double>(valid);
            }
            opt.step(s.mu.params->values, total);
        }
        for (std::size_t w = 0; w < workers; ++w) {
            emit(out, hooks, summarize_lifetime(results[w], m, static_cast<int>(w), tasks[w].id));
        }
        maybe_checkpoint(hooks, cfg, m, *s.mu.params);
    }

    out.mu = *s.mu.params;
    out.agent_init = std::move(s.agent_init);
    out.training_tasks = std::move(s.training_tasks);
    return out;
}

namespace {

struct AdvisorSample {
    int worker = 0;
    std::vector<double> x;
    std::vector<double> x_next;
    int u = 0;
    double r = 0.0;
    bool terminal = false;
    bool credited = true;
};

void ppo_advisor_update(std::vector<AdvisorSample>& buffer, std::size_t n, PolicyParams& mu,
                        PolicyParams& value, const PpoConfig& cfg, Rng& rng, GradientAscent& popt,
                        GradientAscent& vopt)
{
    PolicyEvaluator veval(value.spec);
    PpoBatch batch(static_cast<std::size_t>(mu.spec.input_dim));
    std::vector<double> values(n), next_values(n);
    for (std::size_t j = 0; j < n; ++j) {
        const auto& smp = buffer[j];
        batch.push(smp.x, smp.u, smp.r, smp.x_next, smp.terminal, smp.credited);
        values[j] = veval.value(value, smp.x);
        next_values[j] = smp.terminal ? 0.0 : veval.value(value, smp.x_next);
    }

    // GAE runs over each worker's own subsequence of the buffer.
    batch.advantages.assign(n, 0.0);
    std::vector<std::vector<std::size_t>> by_worker;
    for (std::size_t j = 0; j < n; ++j) {
        const auto w = static_cast<std::size_t>(buffer[j].worker);
        if (by_worker.size() <= w) {
            by_worker.resize(w + 1);
        }
        by_worker[w].push_back(j);
    }
    for (const auto& idx : by_worker) {
        if (idx.empty()) {
            continue;
        }
        std::vector<double> r(idx.size()), v(idx.size()), nv(idx.size());
        std::vector<std::uint8_t> cont(idx.size());
        for (std::size_t q = 0; q < idx.size(); ++q) {
            r[q] = batch.rewards[idx[q]];
            v[q] = values[idx[q]];
            nv[q] = next_values[idx[q]];
            cont[q] = (buffer[idx[q]].terminal || q + 1 == idx.size()) ? 0 : 1;
        }
        const auto adv = compute_gae(r, v, nv, cont, cfg.gae);
        for (std::size_t q = 0; q < idx.size(); ++q) {
            batch.advantages[idx[q]] = adv[q];
        }
    }
    ppo_update(std::move(batch), mu, value, cfg, rng, &popt, &vopt);
    buffer.erase(buffer.begin(), buffer.begin() + static_cast<std::ptrdiff_t>(n));
}

} // namespace

TrainingResult train_advisor_ppo(const ProblemClass& pc, const AdvisorRunConfig& cfg,
                                 const TrainingHooks& hooks)
{
    if (cfg.advisor.learner.algo != LearnerAlgo::ppo) {
        throw std::invalid_argument("train_advisor_ppo needs advisor algo 'ppo'");
    }
    TrainingSetup s = prepare_training(pc, cfg);
    TrainingResult out;

    PpoConfig ppo = cfg.advisor.learner.ppo;
    ppo.optimizer = cfg.advisor.learner.optimizer;
    ppo.learning_rate = cfg.advisor.learner.learning_rate;
    if (cfg.agent.algo == LearnerAlgo::ppo
        && ppo.advisor_buffer_len < 2 * cfg.agent.ppo.agent_buffer_len) {
        out.warnings.push_back("advisor buffer n=" + std::to_string(ppo.advisor_buffer_len)
                               + " is below twice the agent buffer l="
                               + std::to_string(cfg.agent.ppo.agent_buffer_len));
    }

    PolicyParams& mu = *s.mu.params;
    PolicyParams& value = *s.mu_value;
    GradientAscent popt({ppo.optimizer, ppo.learning_rate}, mu.values.size());
    GradientAscent vopt({ppo.optimizer, ppo.value_learning_rate}, value.values.size());
    Rng update_rng = s.root.substream("advisor-update");
    const auto n = static_cast<std::size_t>(ppo.advisor_buffer_len);
    const bool explored_only = cfg.advisor.credit == CreditMode::explored_only;

    const auto workers = static_cast<std::size_t>(cfg.n_parallel_tasks);
    std::vector<AdvisorSample> buffer;
    for (int m = 0; m < cfg.meta_episodes; ++m) {
        std::vector<Task> tasks(workers);
        std::vector<std::unique_ptr<LifetimeRunner>> runners(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            tasks[w] = pick_task(pc, s, cfg, m, static_cast<int>(w));
            check_advisor(s.mu, tasks[w]);
            runners[w] = std::make_unique<LifetimeRunner>(tasks[w], cfg.agent, s.agent_init, cfg.lifetime,
                                                          cfg.schedule,
                                                          lifetime_rng(s, cfg, m, static_cast<int>(w)), false,
                                                          true);
        }
        std::vector<std::optional<AdvisorSample>> pending(workers);
        std::vector<std::uint8_t> produced(workers);

        bool active = true;
        while (active) {
            for_each_index(workers, cfg.execution, [&](std::size_t w) {
                produced[w] = runners[w]->step(s.mu) ? 1 : 0;
            });
            active = false;
            for (std::size_t w = 0; w < workers; ++w) {
                auto& runner = *runners[w];
                if (produced[w]) {
                    const auto& rec = runner.last();
                    AdvisorSample cur;
                    cur.worker = static_cast<int>(w);
                    s.mu.features(rec.s, rec.episode, cur.x);
                    cur.u = rec.u_suggested;
                    cur.r = rec.r;
                    cur.credited = !explored_only || rec.explored;
                    if (pending[w]) {
                        pending[w]->x_next = cur.x;
                        buffer.push_back(std::move(*pending[w]));
                    }
                    pending[w] = std::move(cur);
                }
                if (runner.finished() && pending[w]) {
                    pending[w]->terminal = true;
                    pending[w]->x_next = pending[w]->x;
                    buffer.push_back(std::move(*pending[w]));
                    pending[w].reset();
                }
                active = active || !runner.finished();
            }
            while (buffer.size() >= n) {
                ppo_advisor_update(buffer, n, mu, value, ppo, update_rng, popt, vopt);
            }
        }
        for (std::size_t w = 0; w < workers; ++w) {
            emit(out, hooks, summarize_lifetime(runners[w]->take(), m, static_cast<int>(w), tasks[w].id));
        }
        maybe_checkpoint(hooks, cfg, m, mu);
    }

    out.mu = mu;
    out.mu_value = value;
    out.agent_init = std::move(s.agent_init);
    out.training_tasks = std::move(s.training_tasks);
    return out;
}

TrainingResult train_advisor(const ProblemClass& pc, const AdvisorRunConfig& cfg, const TrainingHooks& hooks)
{
    if (cfg.advisor.learner.algo == LearnerAlgo::ppo) {
        return train_advisor_ppo(pc, cfg, hooks);
    }
    return train_advisor_reinforce(pc, cfg, hooks);
}

double mean(std::span<const double> v)
{
    if (v.empty()) {
        return kNaN;
    }
    double s = 0.0;
    for (double x : v) {
        s += x;
    }
    return s / static_cast<double>(v.size());
}

double standard_error(std::span<const double> v)
{
    if (v.size() < 2) {
        return 0.0;
    }
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) {
        ss += (x - m) * (x - m);
    }
    return std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
}

namespace {

std::vector<double> curve(const std::vector<PairedLifetime>& pairs, bool advisor, bool poor, int episodes)
{
    std::vector<double> out(static_cast<std::size_t>(episodes), kNaN);
    for (int e = 0; e < episodes; ++e) {
        double sum = 0.0;
        int count = 0;
        for (const auto& p : pairs) {
            const auto& r = advisor ? p.advisor : p.random;
            const auto& series = poor ? r.poor_action_rate : r.episode_returns;
            if (static_cast<std::size_t>(e) < series.size() && std::isfinite(series[static_cast<std::size_t>(e)])) {
                sum += series[static_cast<std::size_t>(e)];
                ++count;
            }
        }
        if (count > 0) {
            out[static_cast<std::size_t>(e)] = sum / count;
        }
    }
    return out;
}

} // namespace

ComparisonReport evaluate_exploration(const AdvisorPolicy& mu, std::span<const Task> tasks,
                                      const AgentInit& agent_init, const EvaluationConfig& cfg, Rng rng)
{
    if (tasks.empty()) {
        throw std::invalid_argument("evaluate_exploration needs at least one task");
    }
    if (cfg.repeats < 1) {
        throw std::invalid_argument("evaluate_exploration needs at least one repeat");
    }
    const AdvisorPolicy uniform = AdvisorPolicy::uniform();
    std::vector<LifetimeJob> jobs;
    for (std::size_t j = 0; j < tasks.size(); ++j) {
        for (int r = 0; r < cfg.repeats; ++r) {
            const Rng pair_rng = rng.substream("pair", j * static_cast<std::size_t>(cfg.repeats)
                                                           + static_cast<std::size_t>(r));
            jobs.push_back({&tasks[j], &mu, pair_rng});
            jobs.push_back({&tasks[j], &uniform, pair_rng});
        }
    }
    auto results = run_lifetimes(jobs, cfg.agent, agent_init, cfg.lifetime, cfg.schedule,
                                 LifetimeOptions{false}, cfg.execution);

    ComparisonReport rep;
    for (std::size_t j = 0; j < tasks.size(); ++j) {
        for (int r = 0; r < cfg.repeats; ++r) {
            const std::size_t slot = 2 * (j * static_cast<std::size_t>(cfg.repeats) + static_cast<std::size_t>(r));
            PairedLifetime p{tasks[j].id, r, std::move(results[slot]), std::move(results[slot + 1])};
            if (p.advisor.valid && p.random.valid) {
                rep.advisor_returns.push_back(p.advisor.lifetime_return);
                rep.random_returns.push_back(p.random.lifetime_return);
                rep.differences.push_back(p.advisor.lifetime_return - p.random.lifetime_return);
            }
            rep.pairs.push_back(std::move(p));
        }
    }
    rep.advisor_mean = mean(rep.advisor_returns);
    rep.random_mean = mean(rep.random_returns);
    rep.advisor_se = standard_error(rep.advisor_returns);
    rep.random_se = standard_error(rep.random_returns);
    rep.difference_mean = mean(rep.differences);
    rep.difference_se = standard_error(rep.differences);
    rep.advisor_curve = curve(rep.pairs, true, false, cfg.lifetime.episodes);
    rep.random_curve = curve(rep.pairs, false, false, cfg.lifetime.episodes);
    rep.advisor_poor_curve = curve(rep.pairs, true, true, cfg.lifetime.episodes);
    rep.random_poor_curve = curve(rep.pairs, false, true, cfg.lifetime.episodes);
    return rep;
}

ComparisonReport evaluate_exploration(const AdvisorPolicy& mu, const ProblemClass& pc, int n_tasks,
                                      const AgentInit& agent_init, const EvaluationConfig& cfg, Rng rng)
{
    if (n_tasks < 1) {
        throw std::invalid_argument("evaluate_exploration needs n_tasks >= 1");
    }
    Rng task_rng = rng.substream("eval-tasks");
    const auto tasks = sample_tasks(pc, n_tasks, task_rng);
    return evaluate_exploration(mu, std::span<const Task>(tasks), agent_init, cfg, rng.substream("eval-lifetimes"));
}

std::vector<double> exploration_only_rollout(const AdvisorPolicy& mu, const Task& task, int episodes, int steps,
                                             Rng rng)
{
    LifetimeConfig{episodes, steps}.validate();
    check_advisor(mu, task);
    auto env = make_environment(task);
    Rng env_rng = rng.substream("env");
    Rng mu_rng = rng.substream("advisor-policy");
    std::optional<PolicyEvaluator> eval;
    if (mu.learned()) {
        eval.emplace(mu.params->spec);
    }
    std::vector<double> obs(env->observation_dim());
    std::vector<double> x;
    std::vector<double> returns;
    for (int i = 0; i < episodes; ++i) {
        env->reset(env_rng);
        env->observe(obs);
        double ret = 0.0;
        for (int t = 0; t < steps; ++t) {
            int u = 0;
            if (eval) {
                mu.features(obs, i, x);
                u = eval->sample(*mu.params, x, mu_rng);
            } else {
                u = static_cast<int>(mu_rng.uniform_index(static_cast<std::size_t>(env->num_actions())));
            }
            const auto out = env->step(u, env_rng);
            env->observe(obs);
            ret += out.reward;
            if (out.done) {
                break;
            }
        }
        returns.push_back(ret);
    }
    return returns;
}

PolicyParams train_exploitation_policy(const Task& task, const LearnerConfig& agent, const AgentInit& agent_init,
                                       const LifetimeConfig& lifetime, const EpsilonSchedule& schedule, Rng rng)
{
    LifetimeRunner runner(task, agent, agent_init, lifetime, schedule, rng, false, true);
    const AdvisorPolicy uniform = AdvisorPolicy::uniform();
    const std::size_t window = std::min<std::size_t>(20, static_cast<std::size_t>(lifetime.episodes));
    PolicyParams out = runner.policy();
    double best = -std::numeric_limits<double>::infinity();
    std::size_t seen = 0;
    while (!runner.finished()) {
        runner.step(uniform);
        const auto& returns = runner.episode_returns();
        if (returns.size() == seen) {
            continue;
        }
        seen = returns.size();
        const std::size_t w = std::min(window, seen);
        const double trailing = std::accumulate(returns.end() - static_cast<std::ptrdiff_t>(w), returns.end(), 0.0)
                                / static_cast<double>(w);
        if (w == window && trailing > best) {
            best = trailing;
            out = runner.policy();
        }
    }
    const auto result = runner.take();
    if (!result.valid) {
        throw std::runtime_error("exploitation training failed: " + result.failure);
    }
    return out;
}

std::vector<double> exploitation_rollout(const PolicyParams& pi, const Task& task, int episodes, int steps,
                                         bool greedy, Rng rng)
{
    LifetimeConfig{episodes, steps}.validate();
    auto env = make_environment(task);
    if (pi.spec.input_dim != static_cast<int>(env->observation_dim()) || pi.spec.num_actions() != env->num_actions()) {
        throw std::invalid_argument("exploitation policy does not match the task's spaces");
    }
    Rng env_rng = rng.substream("env");
    Rng pi_rng = rng.substream("agent-policy");
    PolicyEvaluator eval(pi.spec);
    std::vector<double> obs(env->observation_dim());
    std::vector<double> returns;
    for (int i = 0; i < episodes; ++i) {
        env->reset(env_rng);
        env->observe(obs);
        double ret = 0.0;
        for (int t = 0; t < steps; ++t) {
            int a = 0;
            if (greedy) {
                const auto& p = eval.probabilities(pi, obs);
                a = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
            } else {
                a = eval.sample(pi, obs, pi_rng);
            }
            const auto out = env->step(a, env_rng);
            env->observe(obs);
            ret += out.reward;
            if (out.done) {
                break;
            }
        }
        returns.push_back(ret);
    }
    return returns;
}

} // namespace metaexplore
