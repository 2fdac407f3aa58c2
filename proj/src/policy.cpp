#include "metaexplore/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace metaexplore {

namespace {

std::vector<int> layer_sizes(const MlpSpec& spec)
{
    std::vector<int> sizes;
    sizes.reserve(spec.hidden.size() + 2);
    sizes.push_back(spec.input_dim);
    sizes.insert(sizes.end(), spec.hidden.begin(), spec.hidden.end());
    sizes.push_back(spec.output_dim);
    return sizes;
}

double sigmoid(double z)
{
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(sigmoid(z)) without overflow.
double log_sigmoid(double z)
{
    return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

void softmax(std::span<const double> logits, std::vector<double>& out)
{
    out.resize(logits.size());
    const double mx = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        total += out[i];
    }
    for (auto& v : out) {
        v /= total;
    }
}

} // namespace

const char* to_string(HeadKind head)
{
    switch (head) {
    case HeadKind::softmax: return "softmax";
    case HeadKind::factored_bernoulli: return "factored_bernoulli";
    case HeadKind::scalar: return "scalar";
    }
    return "unknown";
}

HeadKind head_kind_from_string(const std::string& name)
{
    if (name == "softmax") return HeadKind::softmax;
    if (name == "factored_bernoulli") return HeadKind::factored_bernoulli;
    if (name == "scalar") return HeadKind::scalar;
    throw std::invalid_argument("unknown head kind '" + name + "'");
}

void MlpSpec::validate() const
{
    if (input_dim <= 0 || output_dim <= 0) {
        throw std::invalid_argument("MlpSpec: dimensions must be positive");
    }
    for (int h : hidden) {
        if (h <= 0) {
            throw std::invalid_argument("MlpSpec: hidden layer sizes must be positive");
        }
    }
    if (head == HeadKind::scalar && output_dim != 1) {
        throw std::invalid_argument("MlpSpec: scalar head needs output_dim 1");
    }
    if (head == HeadKind::factored_bernoulli && output_dim > 16) {
        throw std::invalid_argument("MlpSpec: factored head supports at most 16 bits");
    }
    if (!(init_scale >= 0.0) || !(output_init_scale >= 0.0)) {
        throw std::invalid_argument("MlpSpec: init scales must be non-negative");
    }
}

std::size_t MlpSpec::parameter_count() const
{
    const auto sizes = layer_sizes(*this);
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        n += static_cast<std::size_t>(sizes[l + 1]) * (static_cast<std::size_t>(sizes[l]) + 1);
    }
    return n;
}

int MlpSpec::num_actions() const
{
    switch (head) {
    case HeadKind::softmax: return output_dim;
    case HeadKind::factored_bernoulli: return 1 << output_dim;
    case HeadKind::scalar: return 0;
    }
    return 0;
}

PolicyParams PolicyParams::zeros(const MlpSpec& spec)
{
    spec.validate();
    return {spec, std::vector<double>(spec.parameter_count(), 0.0)};
}

PolicyParams PolicyParams::random(const MlpSpec& spec, Rng& rng)
{
    PolicyParams p = zeros(spec);
    const auto sizes = layer_sizes(spec);
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const auto in = static_cast<std::size_t>(sizes[l]);
        const auto out = static_cast<std::size_t>(sizes[l + 1]);
        double bound = spec.init_scale / std::sqrt(static_cast<double>(in));
        if (l + 2 == sizes.size()) {
            bound *= spec.output_init_scale;
        }
        for (std::size_t i = 0; i < in * out; ++i) {
            p.values[off + i] = rng.uniform(-bound, bound);
        }
        off += in * out + out;
    }
    return p;
}

void PolicyParams::validate() const
{
    spec.validate();
    if (values.size() != spec.parameter_count()) {
        throw std::invalid_argument("PolicyParams: length does not match layout");
    }
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("PolicyParams: non-finite entry");
        }
    }
}

MlpEvaluator::MlpEvaluator(const MlpSpec& spec) : spec_(spec)
{
    spec_.validate();
    const auto sizes = layer_sizes(spec_);
    std::size_t off = 0;
    acts_.resize(sizes.size());
    for (std::size_t l = 0; l < sizes.size(); ++l) {
        acts_[l].resize(static_cast<std::size_t>(sizes[l]));
        if (l + 1 < sizes.size()) {
            offsets_.push_back(off);
            off += static_cast<std::size_t>(sizes[l + 1]) * (static_cast<std::size_t>(sizes[l]) + 1);
        }
    }
    const int widest = *std::max_element(sizes.begin(), sizes.end());
    delta_.resize(static_cast<std::size_t>(widest));
    delta_prev_.resize(static_cast<std::size_t>(widest));
}

std::span<const double> MlpEvaluator::forward(std::span<const double> params,
                                              std::span<const double> input)
{
    if (input.size() != acts_.front().size()) {
        throw std::invalid_argument("MLP forward: observation has dimension " +
                                    std::to_string(input.size()) + ", expected " +
                                    std::to_string(acts_.front().size()));
    }
    std::copy(input.begin(), input.end(), acts_.front().begin());
    const std::size_t layers = offsets_.size();
    for (std::size_t l = 0; l < layers; ++l) {
        const auto& a = acts_[l];
        auto& z = acts_[l + 1];
        const std::size_t in = a.size();
        const std::size_t out = z.size();
        const double* w = params.data() + offsets_[l];
        const double* b = w + in * out;
        for (std::size_t o = 0; o < out; ++o) {
            const double* row = w + o * in;
            double acc = b[o];
            for (std::size_t i = 0; i < in; ++i) {
                acc += row[i] * a[i];
            }
            z[o] = l + 1 < layers ? std::tanh(acc) : acc;
        }
    }
    return acts_.back();
}

void MlpEvaluator::backward(std::span<const double> params, std::span<const double> d_output,
                            std::span<double> grad)
{
    const std::size_t layers = offsets_.size();
    std::copy(d_output.begin(), d_output.end(), delta_.begin());
    for (std::size_t l = layers; l-- > 0;) {
        const auto& a = acts_[l];
        const std::size_t in = a.size();
        const std::size_t out = acts_[l + 1].size();
        const double* w = params.data() + offsets_[l];
        double* gw = grad.data() + offsets_[l];
        double* gb = gw + in * out;
        for (std::size_t o = 0; o < out; ++o) {
            const double d = delta_[o];
            if (d == 0.0) {
                continue;
            }
            double* grow = gw + o * in;
            for (std::size_t i = 0; i < in; ++i) {
                grow[i] += d * a[i];
            }
            gb[o] += d;
        }
        if (l == 0) {
            break;
        }
        std::fill(delta_prev_.begin(), delta_prev_.begin() + static_cast<std::ptrdiff_t>(in), 0.0);
        for (std::size_t o = 0; o < out; ++o) {
            const double d = delta_[o];
            if (d == 0.0) {
                continue;
            }
            const double* row = w + o * in;
            for (std::size_t i = 0; i < in; ++i) {
                delta_prev_[i] += row[i] * d;
            }
        }
        for (std::size_t i = 0; i < in; ++i) {
            delta_prev_[i] *= 1.0 - a[i] * a[i];
        }
        std::swap(delta_, delta_prev_);
    }
}

PolicyEvaluator::PolicyEvaluator(const MlpSpec& spec) : mlp_(spec)
{
    d_out_.resize(static_cast<std::size_t>(spec.output_dim));
}

void PolicyEvaluator::check(const PolicyParams& params, std::span<const double> obs) const
{
    if (params.values.size() != mlp_.spec().parameter_count()) {
        throw std::invalid_argument("policy parameters do not match the evaluator's layout");
    }
    if (obs.size() != static_cast<std::size_t>(mlp_.spec().input_dim)) {
        throw std::invalid_argument("observation has dimension " + std::to_string(obs.size()) +
                                    ", policy expects " + std::to_string(mlp_.spec().input_dim));
    }
}

const std::vector<double>& PolicyEvaluator::probabilities(const PolicyParams& params,
                                                          std::span<const double> obs)
{
    check(params, obs);
    const auto out = mlp_.forward(params.values, obs);
    switch (mlp_.spec().head) {
    case HeadKind::softmax:
        softmax(out, probs_);
        break;
    case HeadKind::factored_bernoulli: {
        const std::size_t bits = out.size();
        probs_.assign(std::size_t{1} << bits, 1.0);
        for (std::size_t j = 0; j < bits; ++j) {
            const double on = sigmoid(out[j]);
            const double off = sigmoid(-out[j]);
            for (std::size_t a = 0; a < probs_.size(); ++a) {
                probs_[a] *= (a >> j) & 1u ? on : off;
            }
        }
        break;
    }
    case HeadKind::scalar:
        throw std::logic_error("scalar head has no action distribution");
    }
    return probs_;
}

int PolicyEvaluator::sample(const PolicyParams& params, std::span<const double> obs, Rng& rng)
{
    if (mlp_.spec().head == HeadKind::factored_bernoulli) {
        check(params, obs);
        const auto out = mlp_.forward(params.values, obs);
        int action = 0;
        for (std::size_t j = 0; j < out.size(); ++j) {
            if (rng.uniform() < sigmoid(out[j])) {
                action |= 1 << j;
            }
        }
        return action;
    }
    return static_cast<int>(rng.categorical(probabilities(params, obs)));
}

double PolicyEvaluator::log_prob(const PolicyParams& params, std::span<const double> obs, int action)
{
    check(params, obs);
    const auto out = mlp_.forward(params.values, obs);
    if (mlp_.spec().head == HeadKind::factored_bernoulli) {
        double lp = 0.0;
        for (std::size_t j = 0; j < out.size(); ++j) {
            lp += log_sigmoid((action >> j) & 1 ? out[j] : -out[j]);
        }
        return lp;
    }
    const double mx = *std::max_element(out.begin(), out.end());
    double total = 0.0;
    for (double z : out) {
        total += std::exp(z - mx);
    }
    return out[static_cast<std::size_t>(action)] - mx - std::log(total);
}

double PolicyEvaluator::accumulate_grad_log_prob(const PolicyParams& params,
                                                 std::span<const double> obs, int action,
                                                 double scale, std::span<double> grad)
{
    const auto& spec = mlp_.spec();
    if (action < 0 || action >= spec.num_actions()) {
        throw std::invalid_argument("action outside the policy's action set");
    }
    check(params, obs);
    const auto out = mlp_.forward(params.values, obs);
    double lp = 0.0;
    if (spec.head == HeadKind::factored_bernoulli) {
        for (std::size_t j = 0; j < out.size(); ++j) {
            const bool on = (action >> j) & 1;
            lp += log_sigmoid(on ? out[j] : -out[j]);
            d_out_[j] = scale * ((on ? 1.0 : 0.0) - sigmoid(out[j]));
        }
    } else {
        softmax(out, probs_);
        for (std::size_t j = 0; j < out.size(); ++j) {
            d_out_[j] = -scale * probs_[j];
        }
        d_out_[static_cast<std::size_t>(action)] += scale;
        lp = std::log(probs_[static_cast<std::size_t>(action)]);
    }
    if (scale != 0.0) {
        mlp_.backward(params.values, d_out_, grad);
    }
    return lp;
}

double PolicyEvaluator::value(const PolicyParams& params, std::span<const double> obs)
{
    check(params, obs);
    return mlp_.forward(params.values, obs)[0];
}

double PolicyEvaluator::accumulate_value_grad(const PolicyParams& params, std::span<const double> obs,
                                              double scale, std::span<double> grad)
{
    check(params, obs);
    const double v = mlp_.forward(params.values, obs)[0];
    d_out_[0] = scale;
    if (scale != 0.0) {
        mlp_.backward(params.values, std::span<const double>(d_out_).first(1), grad);
    }
    return v;
}

ActionDistribution policy_forward(const PolicyParams& params, std::span<const double> obs)
{
    PolicyEvaluator ev(params.spec);
    return {ev.probabilities(params, obs)};
}

std::vector<double> grad_log_prob(const PolicyParams& params, std::span<const double> obs, int action)
{
    PolicyEvaluator ev(params.spec);
    std::vector<double> g(params.values.size(), 0.0);
    ev.accumulate_grad_log_prob(params, obs, action, 1.0, g);
    return g;
}

double value_forward(const PolicyParams& params, std::span<const double> obs)
{
    if (params.spec.head != HeadKind::scalar) {
        throw std::invalid_argument("value_forward needs a scalar-head network");
    }
    PolicyEvaluator ev(params.spec);
    return ev.value(params, obs);
}

std::vector<double> value_gradient(const PolicyParams& params, std::span<const double> obs)
{
    if (params.spec.head != HeadKind::scalar) {
        throw std::invalid_argument("value_gradient needs a scalar-head network");
    }
    PolicyEvaluator ev(params.spec);
    std::vector<double> g(params.values.size(), 0.0);
    ev.accumulate_value_grad(params, obs, 1.0, g);
    return g;
}

nlohmann::json spec_to_json(const MlpSpec& spec)
{
    return {{"input_dim", spec.input_dim},
            {"hidden", spec.hidden},
            {"output_dim", spec.output_dim},
            {"activation", "tanh"},
            {"head", to_string(spec.head)},
            {"init_scale", spec.init_scale},
            {"output_init_scale", spec.output_init_scale}};
}

MlpSpec spec_from_json(const nlohmann::json& j)
{
    MlpSpec spec;
    spec.input_dim = j.at("input_dim").get<int>();
    spec.hidden = j.at("hidden").get<std::vector<int>>();
    spec.output_dim = j.at("output_dim").get<int>();
    if (j.value("activation", std::string("tanh")) != "tanh") {
        throw std::invalid_argument("only tanh activations are supported");
    }
    spec.head = head_kind_from_string(j.value("head", std::string("softmax")));
    spec.init_scale = j.value("init_scale", 1.0);
    spec.output_init_scale = j.value("output_init_scale", 1.0);
    spec.validate();
    return spec;
}

nlohmann::json checkpoint_to_json(const PolicyParams& params, const std::string& rng_label)
{
    params.validate();
    return {{"format", "metaexplore-checkpoint"},
            {"version", kCheckpointVersion},
            {"spec", spec_to_json(params.spec)},
            {"params", params.values},
            {"rng_label", rng_label}};
}

PolicyParams checkpoint_from_json(const nlohmann::json& j, std::string* rng_label)
{
    if (j.value("format", std::string()) != "metaexplore-checkpoint") {
        throw std::invalid_argument("not a metaexplore checkpoint");
    }
    if (j.value("version", 0) != kCheckpointVersion) {
        throw std::invalid_argument("unsupported checkpoint version");
    }
    PolicyParams p;
    p.spec = spec_from_json(j.at("spec"));
    p.values = j.at("params").get<std::vector<double>>();
    p.validate();
    if (rng_label != nullptr) {
        *rng_label = j.value("rng_label", std::string());
    }
    return p;
}

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params,
                     const std::string& rng_label)
{
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write checkpoint " + path.string());
    }
    out << checkpoint_to_json(params, rng_label).dump(1) << '\n';
}

PolicyParams load_checkpoint(const std::filesystem::path& path, std::string* rng_label)
{
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot read checkpoint " + path.string());
    }
    return checkpoint_from_json(nlohmann::json::parse(in), rng_label);
}

} // namespace metaexplore
