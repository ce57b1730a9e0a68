#include "chembfn/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <functional>
#include <map>
#include <sstream>
#include <type_traits>

namespace chembfn {

namespace {

std::string format_value(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

template <class T>
std::string format_value(const T& v) {
    if constexpr (std::is_same_v<T, bool>) return v ? "true" : "false";
    else if constexpr (std::is_integral_v<T>) return std::to_string(v);
    else if constexpr (std::is_same_v<T, std::string>) return v;
    else if constexpr (std::is_same_v<T, ScheduleKind> || std::is_same_v<T, PaddingStrategy> ||
                       std::is_same_v<T, TaskKind>)
        return to_string(v);
}

template <class T>
void parse_value(T& out, const std::string& text) {
    if constexpr (std::is_same_v<T, bool>) {
        if (text == "true" || text == "1" || text == "yes" || text == "on") out = true;
        else if (text == "false" || text == "0" || text == "no" || text == "off") out = false;
        else throw ConfigError("expected a boolean, got '" + text + "'");
    } else if constexpr (std::is_integral_v<T>) {
        T v{};
        auto res = std::from_chars(text.data(), text.data() + text.size(), v);
        if (res.ec != std::errc() || res.ptr != text.data() + text.size())
            throw ConfigError("expected an integer, got '" + text + "'");
        out = v;
    } else if constexpr (std::is_same_v<T, double>) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(text, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != text.size()) throw ConfigError("expected a number, got '" + text + "'");
        out = v;
    } else if constexpr (std::is_same_v<T, std::string>) {
        out = text;
    } else if constexpr (std::is_same_v<T, ScheduleKind>) {
        out = parse_schedule_kind(text);
    } else if constexpr (std::is_same_v<T, PaddingStrategy>) {
        out = parse_padding(text);
    } else if constexpr (std::is_same_v<T, TaskKind>) {
        out = parse_task(text);
    }
}

struct Field {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <class Accessor>
Field field(Accessor acc) {
    return {[acc](RunConfig& c, const std::string& v) { parse_value(acc(c), v); },
            [acc](const RunConfig& c) { return format_value(acc(const_cast<RunConfig&>(c))); }};
}

// Ordered so that to_ini() groups keys by section.
const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = {
        {"schedule.kind", field([](RunConfig& c) -> auto& { return c.schedule.kind; })},
        {"schedule.beta1", field([](RunConfig& c) -> auto& { return c.schedule.beta1; })},
        {"schedule.use_beta_max", field([](RunConfig& c) -> auto& { return c.schedule.use_beta_max; })},
        {"schedule.enforce_cap", field([](RunConfig& c) -> auto& { return c.schedule.enforce_cap; })},
        {"network.layers", field([](RunConfig& c) -> auto& { return c.network.n_layers; })},
        {"network.heads", field([](RunConfig& c) -> auto& { return c.network.n_heads; })},
        {"network.hidden", field([](RunConfig& c) -> auto& { return c.network.hidden_dim; })},
        {"network.ffn", field([](RunConfig& c) -> auto& { return c.network.ffn_dim; })},
        {"network.dropout", field([](RunConfig& c) -> auto& { return c.network.dropout; })},
        {"network.label_dim", field([](RunConfig& c) -> auto& { return c.network.label_dim; })},
        {"network.temperature", field([](RunConfig& c) -> auto& { return c.network.attention_temperature; })},
        {"training.epochs", field([](RunConfig& c) -> auto& { return c.training.epochs; })},
        {"training.max_steps", field([](RunConfig& c) -> auto& { return c.training.max_steps; })},
        {"training.batch_size", field([](RunConfig& c) -> auto& { return c.training.batch_size; })},
        {"training.lr", field([](RunConfig& c) -> auto& { return c.training.lr; })},
        {"training.warmup_steps", field([](RunConfig& c) -> auto& { return c.training.warmup_steps; })},
        {"training.warmup_start", field([](RunConfig& c) -> auto& { return c.training.warmup_start; })},
        {"training.weight_decay", field([](RunConfig& c) -> auto& { return c.training.weight_decay; })},
        {"training.clip_norm", field([](RunConfig& c) -> auto& { return c.training.clip_norm; })},
        {"training.p_uncond", field([](RunConfig& c) -> auto& { return c.training.p_uncond; })},
        {"training.seed", field([](RunConfig& c) -> auto& { return c.training.seed; })},
        {"training.checkpoint_every", field([](RunConfig& c) -> auto& { return c.training.checkpoint_every; })},
        {"sampling.steps", field([](RunConfig& c) -> auto& { return c.sampling.steps; })},
        {"sampling.n", field([](RunConfig& c) -> auto& { return c.sampling.n; })},
        {"sampling.guidance_w", field([](RunConfig& c) -> auto& { return c.sampling.guidance_w; })},
        {"sampling.seq_len", field([](RunConfig& c) -> auto& { return c.sampling.seq_len; })},
        {"sampling.seed", field([](RunConfig& c) -> auto& { return c.sampling.seed; })},
        {"data.padding", field([](RunConfig& c) -> auto& { return c.data.padding; })},
        {"data.max_len", field([](RunConfig& c) -> auto& { return c.data.max_len; })},
        {"data.label_columns", field([](RunConfig& c) -> auto& { return c.data.label_columns; })},
        {"finetune.task", field([](RunConfig& c) -> auto& { return c.finetune.task; })},
        {"finetune.epochs", field([](RunConfig& c) -> auto& { return c.finetune.epochs; })},
        {"finetune.batch_size", field([](RunConfig& c) -> auto& { return c.finetune.batch_size; })},
        {"finetune.lr", field([](RunConfig& c) -> auto& { return c.finetune.lr; })},
        {"finetune.warmup_steps", field([](RunConfig& c) -> auto& { return c.finetune.warmup_steps; })},
        {"finetune.warmup_start", field([](RunConfig& c) -> auto& { return c.finetune.warmup_start; })},
        {"finetune.head_hidden", field([](RunConfig& c) -> auto& { return c.finetune.head_hidden; })},
        {"finetune.head_dropout", field([](RunConfig& c) -> auto& { return c.finetune.head_dropout; })},
        {"finetune.dropout", field([](RunConfig& c) -> auto& { return c.finetune.dropout; })},
        {"finetune.freeze_backbone", field([](RunConfig& c) -> auto& { return c.finetune.freeze_backbone; })},
        {"finetune.patience", field([](RunConfig& c) -> auto& { return c.finetune.patience; })},
        {"finetune.decay", field([](RunConfig& c) -> auto& { return c.finetune.decay; })},
        {"finetune.lr_floor", field([](RunConfig& c) -> auto& { return c.finetune.lr_floor; })},
    };
    return table;
}

const Field& lookup(const std::string& key) {
    for (const auto& [name, f] : fields())
        if (name == key) return f;
    throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void RunConfig::set(const std::string& dotted_key, const std::string& value) {
    const Field& f = lookup(dotted_key);
    try {
        f.set(*this, value);
    } catch (const ConfigError& e) {
        throw ConfigError(dotted_key + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(dotted_key + ": " + e.what());
    }
}

std::string RunConfig::get(const std::string& dotted_key) const { return lookup(dotted_key).get(*this); }

const std::vector<std::string>& RunConfig::keys() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const auto& [name, f] : fields()) v.push_back(name);
        return v;
    }();
    return names;
}

void RunConfig::load_file(const std::string& path) {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::read_ini(path, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw ConfigError(path + ": key '" + section + "' is outside any section");
        for (const auto& [key, value] : body) set(section + "." + key, value.get_value<std::string>());
    }
}

std::string RunConfig::to_ini() const {
    std::ostringstream out;
    std::string current;
    for (const auto& [name, f] : fields()) {
        const auto dot = name.find('.');
        const std::string section = name.substr(0, dot);
        if (section != current) {
            if (!current.empty()) out << '\n';
            out << '[' << section << "]\n";
            current = section;
        }
        out << name.substr(dot + 1) << " = " << f.get(*this) << '\n';
    }
    return out.str();
}

ScheduleParams RunConfig::schedule_params() const {
    ScheduleParams p;
    p.kind = schedule.kind;
    p.k_categories = network.k_categories;
    p.beta_one = schedule.use_beta_max ? beta_one_max(network.k_categories) : schedule.beta1;
    p.enforce_beta_cap = schedule.enforce_cap;
    p.validate();
    return p;
}

void RunConfig::validate() const {
    network.validate();
    schedule_params();
    if (training.epochs < 1) throw ConfigError("training.epochs must be >= 1");
    if (training.batch_size < 1) throw ConfigError("training.batch_size must be >= 1");
    if (!(training.lr > 0.0)) throw ConfigError("training.lr must be positive");
    if (training.warmup_steps < 0) throw ConfigError("training.warmup_steps must be >= 0");
    if (!(training.clip_norm >= 0.0)) throw ConfigError("training.clip_norm must be >= 0");
    if (!(training.p_uncond >= 0.0 && training.p_uncond <= 1.0)) throw ConfigError("training.p_uncond must lie in [0, 1]");
    if (training.checkpoint_every < 1) throw ConfigError("training.checkpoint_every must be >= 1");
    if (sampling.steps < 1) throw ConfigError("sampling.steps must be >= 1");
    if (data.padding == PaddingStrategy::Global && data.max_len < 2)
        throw ConfigError("data.max_len must be set (>= 2) for global padding");
    if (finetune.epochs < 1 || finetune.batch_size < 1) throw ConfigError("finetune.epochs and batch_size must be >= 1");
    if (!(finetune.head_dropout >= 0.0 && finetune.head_dropout < 1.0))
        throw ConfigError("finetune.head_dropout must lie in [0, 1)");
}

RunConfig RunConfig::profile(const std::string& name) {
    RunConfig c;
    if (name == "desk") return c;
    if (name == "paper_scale") {
        c.network = NetworkConfig::paper_scale(c.network.k_categories);
        c.training.batch_size = 120;
        c.training.lr = 5e-5;
        c.training.warmup_steps = 1000;
        c.training.epochs = 100;
        c.sampling.steps = 1000;
        c.finetune.warmup_steps = 1000;
        return c;
    }
    throw ConfigError("unknown profile '" + name + "' (expected desk or paper_scale)");
}

}  // namespace chembfn
