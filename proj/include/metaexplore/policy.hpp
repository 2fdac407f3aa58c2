#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "metaexplore/rng.hpp"

namespace metaexplore {

enum class Activation { tanh };

// softmax: output_dim logits, one per action.
// factored_bernoulli: output_dim independent bits, 2^output_dim actions.
// scalar: a single linear output (value heads).
enum class HeadKind { softmax, factored_bernoulli, scalar };

const char* to_string(HeadKind head);
HeadKind head_kind_from_string(const std::string& name);

struct MlpSpec {
    int input_dim = 1;
    std::vector<int> hidden;
    int output_dim = 1;
    Activation activation = Activation::tanh;
    HeadKind head = HeadKind::softmax;
    double init_scale = 1.0;
    // Extra factor on the output layer's initial weights; small values start
    // the policy near uniform.
    double output_init_scale = 1.0;

    void validate() const;
    std::size_t parameter_count() const;
    int num_actions() const;

    friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

// Flat parameter vector bound to an MlpSpec. Layer l stores its weight matrix
// (out x in, row-major) followed by its bias vector.
struct PolicyParams {
    MlpSpec spec;
    std::vector<double> values;

    static PolicyParams zeros(const MlpSpec& spec);
    // Weights uniform in [-init_scale, init_scale] / sqrt(fan_in), biases 0.
    static PolicyParams random(const MlpSpec& spec, Rng& rng);

    void validate() const;

    friend bool operator==(const PolicyParams&, const PolicyParams&) = default;
};

struct ActionDistribution {
    std::vector<double> probs;
};

// Forward/backward pass with reusable scratch buffers. Not thread-safe; each
// worker owns its own evaluator.
class MlpEvaluator {
public:
    explicit MlpEvaluator(const MlpSpec& spec);

    std::span<const double> forward(std::span<const double> params, std::span<const double> input);
    // grad += J^T d_output for the input of the last forward() call.
    void backward(std::span<const double> params, std::span<const double> d_output,
                  std::span<double> grad);

    const MlpSpec& spec() const { return spec_; }

private:
    MlpSpec spec_;
    std::vector<std::size_t> offsets_;
    std::vector<std::vector<double>> acts_;
    std::vector<double> delta_;
    std::vector<double> delta_prev_;
};

// Action-distribution and value-head operations on one network.
class PolicyEvaluator {
public:
    explicit PolicyEvaluator(const MlpSpec& spec);

    const std::vector<double>& probabilities(const PolicyParams& params, std::span<const double> obs);
    int sample(const PolicyParams& params, std::span<const double> obs, Rng& rng);
    double log_prob(const PolicyParams& params, std::span<const double> obs, int action);
    // grad += scale * d log pi(action | obs) / d params; returns log pi(action | obs).
    double accumulate_grad_log_prob(const PolicyParams& params, std::span<const double> obs,
                                    int action, double scale, std::span<double> grad);

    double value(const PolicyParams& params, std::span<const double> obs);
    // grad += scale * dV(obs) / d params; returns V(obs).
    double accumulate_value_grad(const PolicyParams& params, std::span<const double> obs,
                                 double scale, std::span<double> grad);

private:
    void check(const PolicyParams& params, std::span<const double> obs) const;

    MlpEvaluator mlp_;
    std::vector<double> probs_;
    std::vector<double> d_out_;
};

ActionDistribution policy_forward(const PolicyParams& params, std::span<const double> obs);
std::vector<double> grad_log_prob(const PolicyParams& params, std::span<const double> obs, int action);
double value_forward(const PolicyParams& params, std::span<const double> obs);
std::vector<double> value_gradient(const PolicyParams& params, std::span<const double> obs);

// Checkpoint document: {"format", "version", "spec", "params", "rng_label"}.
inline constexpr int kCheckpointVersion = 1;

nlohmann::json spec_to_json(const MlpSpec& spec);
MlpSpec spec_from_json(const nlohmann::json& j);
nlohmann::json checkpoint_to_json(const PolicyParams& params, const std::string& rng_label);
PolicyParams checkpoint_from_json(const nlohmann::json& j, std::string* rng_label = nullptr);
void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params,
                     const std::string& rng_label);
PolicyParams load_checkpoint(const std::filesystem::path& path, std::string* rng_label = nullptr);

} // namespace metaexplore
