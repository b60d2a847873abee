#include "lreid/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "lreid/errors.hpp"
#include "lreid/textio.hpp"

namespace lreid {

int ExperimentConfig::casp_epochs() const {
    return static_cast<int>(std::lround(120.0 * epoch_scale));
}

int ExperimentConfig::akfp_epochs() const {
    return static_cast<int>(std::lround(60.0 * epoch_scale));
}

ModelSettings ExperimentConfig::model_settings() const {
    ModelSettings ms;
    ms.lambda = lambda;
    ms.margin = margin;
    ms.beta_s = beta_s;
    ms.state_ce_weight = state_ce_weight;
    ms.share_base_prompts = share_base_prompts;
    ms.reset_prototypes_per_task = reset_prototypes;
    ms.variant = variant;
    return ms;
}

std::string ExperimentConfig::order_label() const {
    if (sequence.empty()) return "order" + std::to_string(order);
    std::string label = "seq";
    for (const auto& name : sequence) label += "-" + name;
    return label;
}

std::string ExperimentConfig::canonical_echo() const {
    std::ostringstream os;
    os << "schema_version = " << kConfigSchemaVersion << "\n";
    os << "seed = " << seed << "\n";
    if (sequence.empty()) {
        os << "order = " << order << "\n";
    } else {
        os << "sequence = ";
        for (std::size_t i = 0; i < sequence.size(); ++i) os << (i ? "," : "") << sequence[i];
        os << "\n";
    }
    os << "variant = " << to_string(variant) << "\n";
    os << "epoch_scale = " << format_double(epoch_scale) << "\n";
    os << "lambda = " << format_double(lambda) << "\n";
    os << "beta_s = " << format_double(beta_s) << "\n";
    os << "margin = " << format_double(margin) << "\n";
    os << "batch_p = " << batch_p << "\n";
    os << "batch_k = " << batch_k << "\n";
    os << "cycles = " << cycles << "\n";
    os << "state_ce_weight = " << format_double(state_ce_weight) << "\n";
    os << "share_base_prompts = " << (share_base_prompts ? "true" : "false") << "\n";
    os << "reset_prototypes = " << (reset_prototypes ? "true" : "false") << "\n";
    os << "eval_heldout = " << (eval_heldout ? "true" : "false") << "\n";
    os << "casp_lr = " << format_double(casp_lr) << "\n";
    os << "akfp_lr = " << format_double(akfp_lr) << "\n";
    os << "weight_decay = " << format_double(weight_decay) << "\n";
    os << "out_dir = " << out_dir << "\n";
    return os.str();
}

std::uint64_t fnv1a_hash(const std::string& bytes) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

std::uint64_t ExperimentConfig::content_hash() const {
    return fnv1a_hash(canonical_echo());
}

std::string ExperimentConfig::hash_hex() const {
    return lreid::hash_hex(content_hash());
}

namespace {

struct FieldErrors {
    std::vector<std::string> items;
    void add(const std::string& field, const std::string& why) { items.push_back(field + ": " + why); }
    void raise_if_any() const {
        if (items.empty()) return;
        std::string msg = "invalid config (" + std::to_string(items.size()) + " problem" +
                          (items.size() > 1 ? "s" : "") + "):";
        for (const auto& item : items) msg += "\n  - " + item;
        throw ConfigError(msg);
    }
};

bool parse_bool(const std::string& v, bool& out) {
    if (v == "true" || v == "1") {
        out = true;
        return true;
    }
    if (v == "false" || v == "0") {
        out = false;
        return true;
    }
    return false;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

} // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    FieldErrors errors;
    bool saw_schema = false;
    bool saw_order = false, saw_sequence = false;

    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos) {
            errors.add("line " + std::to_string(lineno), "expected 'key = value', got '" + stripped + "'");
            continue;
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));

        auto want_double = [&](double& slot, bool (*ok)(double), const char* constraint) {
            try {
                const double v = parse_double(value);
                if (!ok(v)) {
                    errors.add(key, std::string("value ") + value + " violates " + constraint);
                    return;
                }
                slot = v;
            } catch (const NumericError&) {
                errors.add(key, "not a number: '" + value + "'");
            }
        };
        auto want_int = [&](int& slot, bool (*ok)(int), const char* constraint) {
            try {
                std::size_t used = 0;
                const int v = std::stoi(value, &used);
                if (used != value.size()) throw std::invalid_argument(value);
                if (!ok(v)) {
                    errors.add(key, std::string("value ") + value + " violates " + constraint);
                    return;
                }
                slot = v;
            } catch (const std::exception&) {
                errors.add(key, "not an integer: '" + value + "'");
            }
        };
        auto want_bool = [&](bool& slot) {
            if (!parse_bool(value, slot)) errors.add(key, "expected true/false, got '" + value + "'");
        };

        if (key == "schema_version") {
            saw_schema = true;
            int v = 0;
            want_int(v, [](int x) { return x > 0; }, "> 0");
            if (v != 0 && v != kConfigSchemaVersion)
                errors.add(key, "unsupported schema version " + value + " (this build reads " +
                                    std::to_string(kConfigSchemaVersion) + ")");
        } else if (key == "seed") {
            try {
                std::size_t used = 0;
                cfg.seed = std::stoull(value, &used);
                if (used != value.size()) throw std::invalid_argument(value);
            } catch (const std::exception&) {
                errors.add(key, "not a 64-bit unsigned integer: '" + value + "'");
            }
        } else if (key == "order") {
            saw_order = true;
            want_int(cfg.order, [](int x) { return x >= 1 && x <= 6; }, "range [1, 6]");
        } else if (key == "sequence") {
            saw_sequence = true;
            cfg.sequence.clear();
            std::istringstream ss(value);
            std::string item;
            while (std::getline(ss, item, ',')) {
                const std::string name = trim(item);
                if (!name.empty()) cfg.sequence.push_back(name);
            }
            if (cfg.sequence.empty()) errors.add(key, "expected a comma-separated list of domain names");
        } else if (key == "variant") {
            try {
                cfg.variant = variant_from_string(value);
            } catch (const ConfigError& e) {
                errors.add(key, e.what());
            }
        } else if (key == "epoch_scale") {
            want_double(cfg.epoch_scale, [](double x) { return x >= 0.0; }, ">= 0");
        } else if (key == "lambda") {
            want_double(cfg.lambda, [](double x) { return x >= 0.0; }, ">= 0");
        } else if (key == "beta_s") {
            want_double(cfg.beta_s, [](double x) { return x > 0.0 && x <= 1.0; }, "(0, 1]");
        } else if (key == "margin") {
            want_double(cfg.margin, [](double x) { return x >= 0.0; }, ">= 0");
        } else if (key == "batch_p") {
            want_int(cfg.batch_p, [](int x) { return x >= 2; }, ">= 2");
        } else if (key == "batch_k") {
            want_int(cfg.batch_k, [](int x) { return x >= 1; }, ">= 1");
        } else if (key == "cycles") {
            want_int(cfg.cycles, [](int x) { return x >= 1; }, ">= 1");
        } else if (key == "state_ce_weight") {
            want_double(cfg.state_ce_weight, [](double x) { return x >= 0.0; }, ">= 0");
        } else if (key == "share_base_prompts") {
            want_bool(cfg.share_base_prompts);
        } else if (key == "reset_prototypes") {
            want_bool(cfg.reset_prototypes);
        } else if (key == "eval_heldout") {
            want_bool(cfg.eval_heldout);
        } else if (key == "casp_lr") {
            want_double(cfg.casp_lr, [](double x) { return x > 0.0; }, "> 0");
        } else if (key == "akfp_lr") {
            want_double(cfg.akfp_lr, [](double x) { return x > 0.0; }, "> 0");
        } else if (key == "weight_decay") {
            want_double(cfg.weight_decay, [](double x) { return x >= 0.0; }, ">= 0");
        } else if (key == "out_dir") {
            if (value.empty())
                errors.add(key, "must not be empty");
            else
                cfg.out_dir = value;
        } else {
            errors.add(key, "unknown key");
        }
    }
    if (!saw_schema) errors.add("schema_version", "missing (required, current version is " +
                                                      std::to_string(kConfigSchemaVersion) + ")");
    if (saw_order && saw_sequence)
        errors.add("order", "mutually exclusive with 'sequence'; give exactly one");
    errors.raise_if_any();
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

} // namespace lreid
