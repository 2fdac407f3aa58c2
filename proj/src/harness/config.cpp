#include "metaexplore/harness/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "run_config_schema.inc"

namespace metaexplore::harness {

using nlohmann::json;

namespace {

std::string escape_pointer_token(const std::string& key)
{
    std::string out;
    for (char ch : key) {
        if (ch == '~') {
            out += "~0";
        } else if (ch == '/') {
            out += "~1";
        } else {
            out += ch;
        }
    }
    return out;
}

class LineIndexer {
public:
    LineIndexer(std::string_view text, std::map<std::string, int>& out) : s_(text), out_(out) {}

    void run()
    {
        skip_ws();
        value("", line_);
    }

private:
    void skip_ws()
    {
        while (pos_ < s_.size()) {
            const char ch = s_[pos_];
            if (ch == '\n') {
                ++line_;
            } else if (ch != ' ' && ch != '\t' && ch != '\r') {
                break;
            }
            ++pos_;
        }
    }

    std::string string_token()
    {
        std::string out;
        ++pos_;
        while (pos_ < s_.size() && s_[pos_] != '"') {
            if (s_[pos_] == '\\' && pos_ + 1 < s_.size()) {
                const char esc = s_[pos_ + 1];
                switch (esc) {
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                case 'r': out += '\r'; break;
                case 'b': out += '\b'; break;
                case 'f': out += '\f'; break;
                case 'u':
                    out += s_.substr(pos_, 6);
                    pos_ += 4;
                    break;
                default: out += esc; break;
                }
                pos_ += 2;
                continue;
            }
            out += s_[pos_++];
        }
        ++pos_;
        return out;
    }

    void value(const std::string& ptr, int line)
    {
        out_.emplace(ptr, line);
        if (pos_ >= s_.size()) {
            return;
        }
        switch (s_[pos_]) {
        case '{': object(ptr); break;
        case '[': array(ptr); break;
        case '"': string_token(); break;
        default:
            while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != '}' && s_[pos_] != ']'
                   && s_[pos_] != ' ' && s_[pos_] != '\n' && s_[pos_] != '\t' && s_[pos_] != '\r') {
                ++pos_;
            }
        }
    }

    void object(const std::string& ptr)
    {
        ++pos_;
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == '}') {
            ++pos_;
            return;
        }
        while (pos_ < s_.size()) {
            skip_ws();
            const int key_line = line_;
            const std::string key = string_token();
            skip_ws();
            ++pos_; // ':'
            skip_ws();
            value(ptr + "/" + escape_pointer_token(key), key_line);
            skip_ws();
            if (pos_ < s_.size() && s_[pos_] == ',') {
                ++pos_;
                continue;
            }
            ++pos_; // '}'
            return;
        }
    }

    void array(const std::string& ptr)
    {
        ++pos_;
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == ']') {
            ++pos_;
            return;
        }
        for (int i = 0; pos_ < s_.size(); ++i) {
            skip_ws();
            value(ptr + "/" + std::to_string(i), line_);
            skip_ws();
            if (pos_ < s_.size() && s_[pos_] == ',') {
                ++pos_;
                continue;
            }
            ++pos_; // ']'
            return;
        }
    }

    std::string_view s_;
    std::map<std::string, int>& out_;
    std::size_t pos_ = 0;
    int line_ = 1;
};

const char* type_name(const json& v)
{
    if (v.is_object()) return "object";
    if (v.is_array()) return "array";
    if (v.is_string()) return "string";
    if (v.is_boolean()) return "boolean";
    if (v.is_number_integer()) return "integer";
    if (v.is_number()) return "number";
    return "null";
}

bool has_type(const json& v, const std::string& type)
{
    if (type == "object") return v.is_object();
    if (type == "array") return v.is_array();
    if (type == "string") return v.is_string();
    if (type == "boolean") return v.is_boolean();
    if (type == "integer") return v.is_number_integer();
    if (type == "number") return v.is_number();
    if (type == "null") return v.is_null();
    return false;
}

std::string short_number(double v)
{
    std::ostringstream os;
    os << v;
    return os.str();
}

void check_node(const json& root, const json& schema, const json& v, const std::string& ptr,
                std::vector<SchemaError>& errors)
{
    if (schema.contains("$ref")) {
        const std::string ref = schema["$ref"].get<std::string>();
        if (ref.rfind("#", 0) != 0) {
            throw std::logic_error("schema: only local references are supported");
        }
        check_node(root, root.at(json::json_pointer(ref.substr(1))), v, ptr, errors);
        return;
    }
    if (schema.contains("type")) {
        const std::string type = schema["type"].get<std::string>();
        if (!has_type(v, type)) {
            errors.push_back({ptr, std::string("expected ") + type + ", found " + type_name(v)});
            return;
        }
    }
    if (schema.contains("enum")) {
        bool found = false;
        for (const auto& option : schema["enum"]) {
            found = found || option == v;
        }
        if (!found) {
            errors.push_back({ptr, "value " + v.dump() + " is not one of " + schema["enum"].dump()});
        }
    }
    if (v.is_number()) {
        const double x = v.get<double>();
        if (schema.contains("minimum") && x < schema["minimum"].get<double>()) {
            errors.push_back({ptr, "must be >= " + short_number(schema["minimum"].get<double>())});
        }
        if (schema.contains("maximum") && x > schema["maximum"].get<double>()) {
            errors.push_back({ptr, "must be <= " + short_number(schema["maximum"].get<double>())});
        }
        if (schema.contains("exclusiveMinimum") && !(x > schema["exclusiveMinimum"].get<double>())) {
            errors.push_back({ptr, "must be > " + short_number(schema["exclusiveMinimum"].get<double>())});
        }
    }
    if (v.is_object()) {
        if (schema.contains("required")) {
            for (const auto& key : schema["required"]) {
                if (!v.contains(key.get<std::string>())) {
                    errors.push_back({ptr, "missing required field '" + key.get<std::string>() + "'"});
                }
            }
        }
        const json empty = json::object();
        const json& props = schema.contains("properties") ? schema["properties"] : empty;
        const bool closed = schema.contains("additionalProperties") && schema["additionalProperties"] == false;
        for (auto it = v.begin(); it != v.end(); ++it) {
            const std::string child = ptr + "/" + escape_pointer_token(it.key());
            if (props.contains(it.key())) {
                check_node(root, props[it.key()], it.value(), child, errors);
            } else if (closed) {
                errors.push_back({child, "unknown field '" + it.key() + "'"});
            }
        }
    }
    if (v.is_array()) {
        if (schema.contains("minItems") && v.size() < schema["minItems"].get<std::size_t>()) {
            errors.push_back({ptr, "needs at least " + schema["minItems"].dump() + " items"});
        }
        if (schema.contains("maxItems") && v.size() > schema["maxItems"].get<std::size_t>()) {
            errors.push_back({ptr, "allows at most " + schema["maxItems"].dump() + " items"});
        }
        if (schema.contains("items")) {
            for (std::size_t i = 0; i < v.size(); ++i) {
                check_node(root, schema["items"], v[i], ptr + "/" + std::to_string(i), errors);
            }
        }
    }
}

int line_of_offset(const std::string& text, std::size_t offset)
{
    int line = 1;
    for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
        }
    }
    return line;
}

void apply_override(json& doc, const std::string& spec)
{
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override '" + spec + "': expected key.path=value");
    }
    const std::string path = spec.substr(0, eq);
    const std::string text = spec.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::parse_error&) {
        value = text;
    }
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) {
            throw ConfigError("override '" + spec + "': empty path segment");
        }
        if (node->is_array()) {
            std::size_t used = 0;
            std::size_t idx = 0;
            try {
                idx = std::stoul(key, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != key.size() || idx >= node->size()) {
                throw ConfigError("override '" + spec + "': bad array index '" + key + "'");
            }
            node = &(*node)[idx];
        } else {
            if (!node->is_object()) {
                *node = json::object();
            }
            node = &(*node)[key];
        }
        if (dot == std::string::npos) {
            break;
        }
        start = dot + 1;
    }
    *node = value;
}

template <class T>
T get_or(const json& obj, const char* key, T fallback)
{
    if (!obj.is_object() || !obj.contains(key)) {
        return fallback;
    }
    return obj[key].get<T>();
}

Interval get_interval(const ConfigDocument& doc, const json& obj, const std::string& ptr, const char* key,
                      Interval fallback)
{
    if (!obj.is_object() || !obj.contains(key)) {
        return fallback;
    }
    const Interval iv{obj[key][0].get<double>(), obj[key][1].get<double>()};
    if (!iv.valid()) {
        doc.fail(ptr + "/" + key, "interval must satisfy lo <= hi");
    }
    return iv;
}

NetworkConfig parse_network(const json& obj, NetworkConfig net)
{
    if (!obj.is_object()) {
        return net;
    }
    net.hidden = get_or(obj, "hidden", net.hidden);
    if (obj.contains("head")) {
        net.head = head_kind_from_string(obj["head"].get<std::string>());
    }
    net.init_scale = get_or(obj, "init_scale", net.init_scale);
    net.output_init_scale = get_or(obj, "output_init_scale", net.output_init_scale);
    return net;
}

LearnerConfig parse_learner(const ConfigDocument& doc, const json& obj, const std::string& ptr, LearnerConfig cfg)
{
    cfg.algo = learner_algo_from_string(obj["algo"].get<std::string>());
    cfg.network = parse_network(obj.value("network", json()), cfg.network);
    cfg.learning_rate = get_or(obj, "learning_rate", cfg.learning_rate);
    if (obj.contains("optimizer")) {
        cfg.optimizer = optimizer_kind_from_string(obj["optimizer"].get<std::string>());
    }
    cfg.baseline = get_or(obj, "baseline", cfg.baseline);
    if (obj.contains("ppo")) {
        const json& p = obj["ppo"];
        cfg.ppo.clip_alpha = get_or(p, "clip_alpha", cfg.ppo.clip_alpha);
        cfg.ppo.minibatch_size = get_or(p, "minibatch_size", cfg.ppo.minibatch_size);
        cfg.ppo.epochs_per_update = get_or(p, "epochs_per_update", cfg.ppo.epochs_per_update);
        cfg.ppo.value_learning_rate = get_or(p, "value_learning_rate", cfg.ppo.value_learning_rate);
        cfg.ppo.agent_buffer_len = get_or(p, "agent_buffer_len", cfg.ppo.agent_buffer_len);
        cfg.ppo.advisor_buffer_len = get_or(p, "advisor_buffer_len", cfg.ppo.advisor_buffer_len);
        cfg.ppo.value_loss_weight = get_or(p, "value_loss_weight", cfg.ppo.value_loss_weight);
        cfg.ppo.normalize_advantages = get_or(p, "normalize_advantages", cfg.ppo.normalize_advantages);
        cfg.ppo.gae.gamma = get_or(p, "gamma", cfg.ppo.gae.gamma);
        cfg.ppo.gae.lambda = get_or(p, "lambda", cfg.ppo.gae.lambda);
    }
    cfg.ppo.learning_rate = cfg.learning_rate;
    cfg.ppo.optimizer = cfg.optimizer;
    try {
        cfg.ppo.validate();
    } catch (const std::invalid_argument& e) {
        doc.fail(ptr + "/ppo", e.what());
    }
    return cfg;
}

} // namespace

std::map<std::string, int> index_json_lines(std::string_view text)
{
    std::map<std::string, int> out;
    LineIndexer(text, out).run();
    return out;
}

std::vector<SchemaError> validate_schema(const json& schema, const json& doc)
{
    std::vector<SchemaError> errors;
    check_node(schema, schema, doc, "", errors);
    return errors;
}

const json& run_config_schema()
{
    static const json schema = json::parse(kRunConfigSchema);
    return schema;
}

std::string ConfigDocument::where(const std::string& pointer) const
{
    std::string p = pointer;
    while (true) {
        const auto it = lines.find(p);
        if (it != lines.end()) {
            return source + ":" + std::to_string(it->second) + ": ";
        }
        if (p.empty()) {
            return source + ": ";
        }
        p = p.substr(0, p.rfind('/'));
    }
}

void ConfigDocument::fail(const std::string& pointer, const std::string& message) const
{
    throw ConfigError(where(pointer) + (pointer.empty() ? "/" : pointer) + ": " + message);
}

void ConfigDocument::require(const std::string& pointer) const
{
    if (json.contains(json::json_pointer(pointer))) {
        return;
    }
    const auto slash = pointer.rfind('/');
    const std::string parent = pointer.substr(0, slash);
    fail(parent, "missing required field '" + pointer.substr(slash + 1) + "'");
}

ConfigDocument load_config_text(const std::string& text, const std::string& source,
                                const std::vector<std::string>& overrides)
{
    ConfigDocument doc;
    doc.source = source;
    try {
        doc.json = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(source + ":" + std::to_string(line_of_offset(text, e.byte > 0 ? e.byte - 1 : 0))
                          + ": malformed JSON: " + e.what());
    }
    doc.lines = index_json_lines(text);
    for (const auto& o : overrides) {
        apply_override(doc.json, o);
    }
    const auto errors = validate_schema(run_config_schema(), doc.json);
    if (!errors.empty()) {
        std::string message;
        for (const auto& e : errors) {
            if (!message.empty()) {
                message += "\n";
            }
            message += doc.where(e.pointer) + (e.pointer.empty() ? "/" : e.pointer) + ": " + e.message;
        }
        throw ConfigError(message);
    }
    return doc;
}

ConfigDocument load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(path.string() + ": cannot open config file");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return load_config_text(ss.str(), path.string(), overrides);
}

RunConfig parse_run_config(const ConfigDocument& doc)
{
    const json& j = doc.json;
    RunConfig cfg;
    cfg.run_id = get_or(j, "run_id", cfg.run_id);
    cfg.seed = get_or<std::uint64_t>(j, "seed", 0);

    if (j.contains("problem")) {
        const json& p = j["problem"];
        const ClassKind kind = class_kind_from_string(p["class"].get<std::string>());
        if (kind == ClassKind::cartpole) {
            CartPoleRanges r;
            const json c = p.value("cartpole", json::object());
            r.cart_mass = get_interval(doc, c, "/problem/cartpole", "cart_mass", r.cart_mass);
            r.pole_mass = get_interval(doc, c, "/problem/cartpole", "pole_mass", r.pole_mass);
            r.pole_half_length = get_interval(doc, c, "/problem/cartpole", "pole_half_length", r.pole_half_length);
            r.force_magnitude = get_interval(doc, c, "/problem/cartpole", "force_magnitude", r.force_magnitude);
            try {
                cfg.problem = make_cartpole_class(r);
            } catch (const std::invalid_argument& e) {
                doc.fail("/problem/cartpole", e.what());
            }
        } else if (kind == ClassKind::animat) {
            AnimatRanges r;
            const json a = p.value("animat", json::object());
            r.width = get_or(a, "width", r.width);
            r.height = get_or(a, "height", r.height);
            if (a.contains("obstacles")) {
                r.min_obstacles = a["obstacles"][0].get<int>();
                r.max_obstacles = a["obstacles"][1].get<int>();
            }
            r.obstacle_size = get_interval(doc, a, "/problem/animat", "obstacle_size", r.obstacle_size);
            r.min_start_goal_distance = get_or(a, "min_start_goal_distance", r.min_start_goal_distance);
            r.goal_radius = get_or(a, "goal_radius", r.goal_radius);
            r.actuator_gain = get_or(a, "actuator_gain", r.actuator_gain);
            r.noise_std = get_or(a, "noise_std", r.noise_std);
            try {
                cfg.problem = make_animat_class(r);
            } catch (const std::invalid_argument& e) {
                doc.fail("/problem/animat", e.what());
            }
        } else {
            TabularClassSpec s;
            const json t = p.value("tabular", json::object());
            s.num_states = get_or(t, "num_states", s.num_states);
            s.num_actions = get_or(t, "num_actions", s.num_actions);
            s.num_tasks = get_or(t, "num_tasks", s.num_tasks);
            s.max_successors = get_or(t, "max_successors", s.max_successors);
            s.num_terminal = get_or(t, "num_terminal", s.num_terminal);
            const Interval rr = get_interval(doc, t, "/problem/tabular", "reward_range", {s.reward_min, s.reward_max});
            s.reward_min = rr.lo;
            s.reward_max = rr.hi;
            s.dyadic = get_or(t, "dyadic", s.dyadic);
            cfg.tabular_spec = s;
            cfg.tabular_seed = get_or<std::uint64_t>(t, "seed", 0);
            try {
                Rng rng = Rng(cfg.tabular_seed).substream("tabular-class");
                cfg.problem = make_tabular_class(s, rng);
            } catch (const std::invalid_argument& e) {
                doc.fail("/problem/tabular", e.what());
            }
        }
    }

    AdvisorRunConfig& run = cfg.advisor_run;
    run.seed = cfg.seed;
    if (j.contains("lifetime")) {
        run.lifetime = {j["lifetime"]["episodes"].get<int>(), j["lifetime"]["steps"].get<int>()};
    }
    if (j.contains("schedule")) {
        run.schedule.epsilon0 = get_or(j["schedule"], "epsilon0", run.schedule.epsilon0);
        run.schedule.decay = get_or(j["schedule"], "decay", run.schedule.decay);
    }
    if (j.contains("agent")) {
        for (const char* key : {"observe_episode_index", "credit", "horizon"}) {
            if (j["agent"].contains(key)) {
                doc.fail(std::string("/agent/") + key, "only valid in the advisor block");
            }
        }
        run.agent = parse_learner(doc, j["agent"], "/agent", run.agent);
    }
    LearnerConfig advisor_defaults;
    advisor_defaults.learning_rate = 1e-3;
    run.advisor.learner = advisor_defaults;
    if (j.contains("advisor")) {
        const json& a = j["advisor"];
        run.advisor.learner = parse_learner(doc, a, "/advisor", advisor_defaults);
        run.advisor.observe_episode_index = get_or(a, "observe_episode_index", false);
        if (a.contains("credit")) {
            run.advisor.credit = credit_mode_from_string(a["credit"].get<std::string>());
        }
        if (a.contains("horizon")) {
            run.advisor.horizon = return_horizon_from_string(a["horizon"].get<std::string>());
        }
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        run.meta_episodes = get_or(t, "meta_episodes", run.meta_episodes);
        run.n_parallel_tasks = get_or(t, "n_parallel_tasks", run.n_parallel_tasks);
        run.num_training_tasks = get_or(t, "num_training_tasks", run.num_training_tasks);
        run.checkpoint_every = get_or(t, "checkpoint_every", run.checkpoint_every);
    }
    if (j.contains("eval")) {
        const json& e = j["eval"];
        cfg.eval.n_tasks = get_or(e, "n_tasks", cfg.eval.n_tasks);
        cfg.eval.repeats = get_or(e, "repeats", cfg.eval.repeats);
        cfg.eval.task_seed_offset = get_or(e, "task_seed_offset", cfg.eval.task_seed_offset);
        cfg.eval.exploitation_episodes = get_or(e, "exploitation_episodes", cfg.eval.exploitation_episodes);
        cfg.eval.rollout_episodes = get_or(e, "rollout_episodes", cfg.eval.rollout_episodes);
        cfg.eval.rollout_steps = get_or(e, "rollout_steps", cfg.eval.rollout_steps);
        if (e.contains("exploitation_agent")) {
            for (const char* key : {"observe_episode_index", "credit", "horizon"}) {
                if (e["exploitation_agent"].contains(key)) {
                    doc.fail(std::string("/eval/exploitation_agent/") + key, "only valid in the advisor block");
                }
            }
            cfg.eval.exploitation_agent = parse_learner(doc, e["exploitation_agent"], "/eval/exploitation_agent", {});
        }
    }
    if (j.contains("table1")) {
        const json& t = j["table1"];
        cfg.table1.scale = get_or(t, "scale", cfg.table1.scale);
        cfg.table1.repeats = get_or(t, "repeats", cfg.table1.repeats);
        cfg.table1.tasks = get_or(t, "tasks", cfg.table1.tasks);
        cfg.table1.window = get_or(t, "window", cfg.table1.window);
        if (t.contains("domains")) {
            for (const auto& d : t["domains"]) {
                Table1Domain dom{d["name"].get<std::string>(), d["reinforce"].get<std::string>(),
                                 d["ppo"].get<std::string>(), {}};
                if (d.contains("window")) {
                    dom.window = d["window"].get<int>();
                }
                cfg.table1.domains.push_back(std::move(dom));
            }
        }
    }
    if (j.contains("oracle")) {
        const json& o = j["oracle"];
        cfg.oracle.lemma_configs = get_or(o, "lemma_configs", cfg.oracle.lemma_configs);
        cfg.oracle.lemma_seed = get_or(o, "lemma_seed", cfg.oracle.lemma_seed);
        cfg.oracle.exact_fixtures = get_or(o, "exact_fixtures", cfg.oracle.exact_fixtures);
        cfg.oracle.mc_lifetimes = get_or(o, "mc_lifetimes", cfg.oracle.mc_lifetimes);
        cfg.oracle.y_offset = get_or(o, "y_offset", cfg.oracle.y_offset);
    }
    cfg.oracle.seed = cfg.seed;
    if (j.contains("run")) {
        const json& r = j["run"];
        cfg.run.record_wall_time = get_or(r, "record_wall_time", cfg.run.record_wall_time);
        if (r.contains("execution")) {
            cfg.run.execution = r["execution"] == "serial" ? Execution::serial : Execution::parallel;
        }
        cfg.run.threads = get_or(r, "threads", cfg.run.threads);
    }
    run.execution = cfg.run.execution;
    cfg.oracle.execution = cfg.run.execution;

    cfg.canonical = j;
    cfg.canonical["seed"] = cfg.seed;
    return cfg;
}

EvaluationConfig evaluation_config(const RunConfig& cfg)
{
    EvaluationConfig e;
    e.lifetime = cfg.advisor_run.lifetime;
    e.schedule = cfg.advisor_run.schedule;
    e.agent = cfg.advisor_run.agent;
    e.repeats = cfg.eval.repeats;
    e.execution = cfg.run.execution;
    return e;
}

std::uint64_t config_hash(const RunConfig& cfg)
{
    return fnv1a64(cfg.canonical.dump());
}

} // namespace metaexplore::harness
