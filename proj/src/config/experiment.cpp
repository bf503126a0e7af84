#include "fedmef/config/experiment.hpp"

#include "fedmef/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace fedmef::config {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
        s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
        s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos)
            break;
        start = pos + 1;
    }
    return out;
}

template <typename T> T parse_int(std::string_view s) {
    s = trim(s);
    T v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
        throw InvalidArgument("expected a non-negative integer, got '" + std::string(s) + "'");
    return v;
}

double parse_real(std::string_view s) {
    s = trim(s);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
        throw InvalidArgument("expected a number, got '" + std::string(s) + "'");
    return v;
}

bool parse_bool(std::string_view s) {
    s = trim(s);
    if (s == "true" || s == "1" || s == "yes" || s == "on")
        return true;
    if (s == "false" || s == "0" || s == "no" || s == "off")
        return false;
    throw InvalidArgument("expected true or false, got '" + std::string(s) + "'");
}

std::string fmt_real(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

template <typename T> std::string fmt_list(const std::vector<T> &v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i)
            out += ", ";
        out += std::to_string(v[i]);
    }
    return out;
}

template <typename T> std::vector<T> parse_list(std::string_view s) {
    std::vector<T> out;
    if (trim(s).empty())
        return out;
    for (auto part : split(s, ','))
        out.push_back(parse_int<T>(part));
    return out;
}

nn::ShapeCHW parse_shape(std::string_view s) {
    const auto parts = split(s, 'x');
    if (parts.size() != 3)
        throw InvalidArgument("expected CxHxW, got '" + std::string(s) + "'");
    return {parse_int<std::size_t>(parts[0]), parse_int<std::size_t>(parts[1]), parse_int<std::size_t>(parts[2])};
}

struct Field {
    std::string section;
    std::string key;
    std::function<std::string(const ExperimentConfig &)> get;
    std::function<void(ExperimentConfig &, std::string_view)> set;
};

#define FIELD_SIZE(sec, name, member)                                                                               \
    Field {                                                                                                          \
        sec, name, [](const ExperimentConfig &c) { return std::to_string(c.member); },                               \
            [](ExperimentConfig &c, std::string_view v) { c.member = parse_int<std::size_t>(v); }                    \
    }
#define FIELD_REAL(sec, name, member)                                                                               \
    Field {                                                                                                          \
        sec, name, [](const ExperimentConfig &c) { return fmt_real(c.member); },                                     \
            [](ExperimentConfig &c, std::string_view v) { c.member = parse_real(v); }                                \
    }
#define FIELD_STR(sec, name, member)                                                                                \
    Field {                                                                                                          \
        sec, name, [](const ExperimentConfig &c) { return c.member; },                                               \
            [](ExperimentConfig &c, std::string_view v) { c.member = std::string(trim(v)); }                         \
    }

const std::vector<Field> &fields() {
    static const std::vector<Field> table = {
        Field{"experiment", "variant", [](const ExperimentConfig &c) { return std::string(fl::variant_name(c.variant)); },
              [](ExperimentConfig &c, std::string_view v) {
                  const auto parsed = fl::parse_variant(trim(v));
                  if (!parsed)
                      throw InvalidArgument("unknown variant '" + std::string(trim(v)) + "'");
                  c.variant = *parsed;
              }},
        Field{"experiment", "seeds", [](const ExperimentConfig &c) { return fmt_list(c.seeds); },
              [](ExperimentConfig &c, std::string_view v) { c.seeds = parse_list<std::uint64_t>(v); }},
        FIELD_STR("experiment", "output_dir", output_dir),

        FIELD_STR("model", "architecture", architecture),
        Field{"model", "input",
              [](const ExperimentConfig &c) {
                  return std::to_string(c.input.c) + "x" + std::to_string(c.input.h) + "x" + std::to_string(c.input.w);
              },
              [](ExperimentConfig &c, std::string_view v) { c.input = parse_shape(v); }},
        FIELD_REAL("model", "gamma", gamma),
        Field{"model", "prune_exclude", [](const ExperimentConfig &c) { return fmt_list(c.prune_exclude); },
              [](ExperimentConfig &c, std::string_view v) { c.prune_exclude = parse_list<std::size_t>(v); }},

        FIELD_STR("data", "source", source),
        FIELD_STR("data", "train_csv", train_csv),
        FIELD_STR("data", "test_csv", test_csv),
        FIELD_STR("data", "value_range", value_range),
        FIELD_SIZE("data", "classes", classes),
        FIELD_SIZE("data", "train_per_class", train_per_class),
        FIELD_SIZE("data", "test_per_class", test_per_class),
        FIELD_REAL("data", "noise", noise),

        FIELD_SIZE("federation", "clients", clients),
        FIELD_SIZE("federation", "clients_per_round", clients_per_round),
        FIELD_REAL("federation", "alpha", alpha),
        FIELD_SIZE("federation", "rounds", rounds),
        FIELD_SIZE("federation", "local_epochs", local_epochs),
        FIELD_SIZE("federation", "adjust_period", adjust_period),
        FIELD_SIZE("federation", "adjust_stop", adjust_stop),
        FIELD_SIZE("federation", "batch_size", batch_size),
        Field{"federation", "parallel_clients",
              [](const ExperimentConfig &c) { return std::string(c.parallel_clients ? "true" : "false"); },
              [](ExperimentConfig &c, std::string_view v) { c.parallel_clients = parse_bool(v); }},

        FIELD_REAL("training", "lr0", lr0),
        FIELD_REAL("training", "lr_decay", lr_decay),

        FIELD_REAL("sparsity", "mask", mask_sparsity),
        FIELD_REAL("sparsity", "activation", activation_sparsity),
        Field{"sparsity", "value_bits", [](const ExperimentConfig &c) { return std::to_string(c.value_bits); },
              [](ExperimentConfig &c, std::string_view v) { c.value_bits = parse_int<unsigned>(v); }},

        FIELD_REAL("extrusion", "lambda", lambda),
        Field{"extrusion", "penalty",
              [](const ExperimentConfig &c) { return std::string(c.penalty == bae::Penalty::L2 ? "l2" : "l1"); },
              [](ExperimentConfig &c, std::string_view v) {
                  v = trim(v);
                  if (v == "l2" || v == "L2")
                      c.penalty = bae::Penalty::L2;
                  else if (v == "l1" || v == "L1")
                      c.penalty = bae::Penalty::L1;
                  else
                      throw InvalidArgument("penalty must be l2 or l1");
              }},
    };
    return table;
}

} // namespace

ExperimentConfig parse_config(std::string_view text) {
    ExperimentConfig cfg;
    std::set<std::string> sections;
    for (const auto &f : fields())
        sections.insert(f.section);
    std::set<std::string> seen;
    std::string section;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t end = std::min(text.find('\n', start), text.size());
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        const std::size_t comment = line.find('#');
        if (comment != std::string_view::npos)
            line = line.substr(0, comment);
        line = trim(line);
        if (line.empty())
            continue;
        const std::string where = "config line " + std::to_string(line_no) + ": ";
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError(where + "unterminated section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            if (!sections.count(section))
                throw ConfigError(where + "unknown section [" + section + "]");
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError(where + "expected key = value");
        const std::string key(trim(line.substr(0, eq)));
        const std::string_view value = trim(line.substr(eq + 1));
        if (section.empty())
            throw ConfigError(where + "key '" + key + "' outside any section");
        const auto it = std::find_if(fields().begin(), fields().end(),
                                     [&](const Field &f) { return f.section == section && f.key == key; });
        if (it == fields().end())
            throw ConfigError(where + "unknown key '" + key + "' in [" + section + "]");
        if (!seen.insert(section + "." + key).second)
            throw ConfigError(where + "duplicate key '" + key + "'");
        try {
            it->set(cfg, value);
        } catch (const std::invalid_argument &e) {
            throw ConfigError(where + key + ": " + e.what());
        }
    }
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig &cfg) {
    std::string out;
    std::string section;
    for (const auto &f : fields()) {
        if (f.section != section) {
            if (!section.empty())
                out += "\n";
            section = f.section;
            out += "[" + section + "]\n";
        }
        out += f.key + " = " + f.get(cfg) + "\n";
    }
    return out;
}

namespace {

std::size_t parse_count(std::string_view s, const std::string &token) {
    try {
        return parse_int<std::size_t>(s);
    } catch (const std::invalid_argument &) {
        throw ConfigError("layer '" + token + "': bad argument '" + std::string(s) + "'");
    }
}

std::vector<nn::LayerSpec> parse_layer_list(std::string_view text, bool nsconv, double gamma) {
    std::vector<nn::LayerSpec> layers;
    std::string norm(text);
    std::replace(norm.begin(), norm.end(), ';', ' ');
    std::istringstream in(norm);
    std::string token;
    // Arguments may contain spaces after commas; glue tokens until parentheses balance.
    std::vector<std::string> tokens;
    while (in >> token) {
        if (!tokens.empty() && std::count(tokens.back().begin(), tokens.back().end(), '(') >
                                   std::count(tokens.back().begin(), tokens.back().end(), ')'))
            tokens.back() += token;
        else
            tokens.push_back(token);
    }
    for (const auto &tok : tokens) {
        const std::size_t open = tok.find('(');
        const std::string name = tok.substr(0, open);
        std::vector<std::size_t> args;
        if (open != std::string::npos) {
            if (tok.back() != ')')
                throw ConfigError("layer '" + tok + "': missing ')'");
            const std::string_view inner = std::string_view(tok).substr(open + 1, tok.size() - open - 2);
            for (auto a : split(inner, ','))
                args.push_back(parse_count(a, tok));
        }
        auto want = [&](std::size_t lo, std::size_t hi) {
            if (args.size() < lo || args.size() > hi)
                throw ConfigError("layer '" + tok + "': wrong number of arguments");
        };
        if (name == "conv") {
            want(3, 5);
            layers.push_back(nn::LayerSpec::conv(args[0], args[1], args[2], args.size() > 3 ? args[3] : 1,
                                                 args.size() > 4 ? args[4] : 0, nsconv, gamma));
        } else if (name == "relu") {
            want(0, 0);
            layers.push_back(nn::LayerSpec::relu());
        } else if (name == "pool" || name == "avgpool") {
            want(1, 1);
            layers.push_back(nn::LayerSpec::avg_pool(args[0]));
        } else if (name == "flatten") {
            want(0, 0);
            layers.push_back(nn::LayerSpec::flatten());
        } else if (name == "linear") {
            want(2, 2);
            layers.push_back(nn::LayerSpec::linear(args[0], args[1]));
        } else {
            throw ConfigError("unknown layer '" + tok + "'");
        }
    }
    if (layers.empty())
        throw ConfigError("empty layer list");
    return layers;
}

} // namespace

std::vector<nn::LayerSpec> desk_layers(nn::ShapeCHW input, std::size_t classes, bool nsconv, double gamma) {
    using nn::LayerSpec;
    return {LayerSpec::conv(input.c, 10, 3, 1, 1, nsconv, gamma),
            LayerSpec::relu(),
            LayerSpec::avg_pool(2),
            LayerSpec::conv(10, 20, 3, 1, 1, nsconv, gamma),
            LayerSpec::relu(),
            LayerSpec::avg_pool(2),
            LayerSpec::flatten(),
            LayerSpec::linear(20 * (input.h / 4) * (input.w / 4), classes)};
}

std::vector<nn::LayerSpec> build_layers(const ExperimentConfig &cfg, bool nsconv) {
    if (cfg.architecture == "desk")
        return desk_layers(cfg.input, cfg.classes, nsconv, cfg.gamma);
    if (cfg.architecture == "resnet18")
        throw ConfigError("architecture 'resnet18' is available for cost reporting only");
    return parse_layer_list(cfg.architecture, nsconv, cfg.gamma);
}

void validate(const ExperimentConfig &c) {
    std::vector<std::string> problems;
    auto check = [&](bool ok, const std::string &msg) {
        if (!ok)
            problems.push_back(msg);
    };
    check(!c.seeds.empty(), "experiment.seeds must list at least one seed");
    check(!c.output_dir.empty(), "experiment.output_dir must not be empty");
    check(c.gamma > 0.0, "model.gamma must be positive");
    check(c.input.count() > 0, "model.input must have nonzero dimensions");

    check(c.source == "synth" || c.source == "csv", "data.source must be synth or csv");
    if (c.source == "synth") {
        check(c.classes >= 2, "data.classes must be at least 2");
        check(c.train_per_class >= 1 && c.test_per_class >= 1, "data per-class counts must be positive");
        check(c.noise >= 0.0, "data.noise must be non-negative");
        check(c.clients <= c.classes * c.train_per_class, "federation.clients exceeds the training set size");
    } else {
        check(!c.train_csv.empty() && !c.test_csv.empty(), "data.train_csv and data.test_csv are required");
        check(c.classes >= 2, "data.classes must be at least 2");
    }
    check(c.value_range == "auto" || c.value_range == "unit" || c.value_range == "byte",
          "data.value_range must be auto, unit or byte");

    check(c.clients >= 1, "federation.clients must be at least 1");
    check(c.clients_per_round <= c.clients, "federation.clients_per_round exceeds federation.clients");
    check(c.alpha > 0.0, "federation.alpha must be positive");
    check(c.rounds >= 1, "federation.rounds must be at least 1");
    check(c.local_epochs >= 1, "federation.local_epochs must be at least 1");
    check(c.adjust_period >= 1, "federation.adjust_period must be at least 1");
    check(c.adjust_stop <= c.rounds, "federation.adjust_stop exceeds federation.rounds");
    check(c.adjust_stop >= 1, "federation.adjust_stop must be at least 1");
    check(c.batch_size >= 1, "federation.batch_size must be at least 1");

    check(c.lr0 > 0.0, "training.lr0 must be positive");
    check(c.lr_decay > 0.0 && c.lr_decay <= 1.0, "training.lr_decay must lie in (0, 1]");

    check(c.mask_sparsity >= 0.0 && c.mask_sparsity < 1.0, "sparsity.mask must lie in [0, 1)");
    check(c.activation_sparsity >= 0.0 && c.activation_sparsity < 1.0, "sparsity.activation must lie in [0, 1)");
    check(c.value_bits == 32 || c.value_bits == 64, "sparsity.value_bits must be 32 or 64");
    check(c.lambda >= 0.0, "extrusion.lambda must be non-negative");

    if (c.architecture != "resnet18") {
        try {
            const auto layers = build_layers(c, true);
            nn::infer_shapes(layers, c.input);
            std::size_t weighted = 0;
            for (const auto &l : layers)
                weighted += l.has_weights() ? 1 : 0;
            for (auto i : c.prune_exclude)
                check(i < weighted, "model.prune_exclude index " + std::to_string(i) + " out of range");
            const auto &last = layers.back();
            check(last.kind == nn::LayerKind::Linear && last.out_features == c.classes,
                  "model: the last layer must be linear with data.classes outputs");
        } catch (const std::exception &e) {
            problems.push_back(std::string("model.architecture: ") + e.what());
        }
    }
    if (!problems.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto &p : problems)
            msg += "\n  - " + p;
        throw ConfigError(msg);
    }
}

std::filesystem::path output_root(const ExperimentConfig &cfg) {
    const char *env = std::getenv("FEDMEF_OUTPUT_ROOT");
    const std::filesystem::path root = (env && *env) ? std::filesystem::path(env) : std::filesystem::current_path();
    const std::filesystem::path dir(cfg.output_dir);
    return dir.is_absolute() ? dir : root / dir;
}

} // namespace fedmef::config
