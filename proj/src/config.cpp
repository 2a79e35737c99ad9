#include "cfaa/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cfaa::config {

const std::vector<KeySpec>& schema() {
    static const std::vector<KeySpec> keys = {
        {"out_dir", ValueType::Text, "out"},
        {"source_ratings", ValueType::Text, ""},
        {"target_ratings", ValueType::Text, ""},
        {"source_user_reviews", ValueType::Text, ""},
        {"source_item_reviews", ValueType::Text, ""},
        {"target_user_reviews", ValueType::Text, ""},
        {"target_item_reviews", ValueType::Text, ""},
        {"featurize_input", ValueType::Text, ""},
        {"checkpoint", ValueType::Text, ""},
        {"seed", ValueType::Int, "1"},
        {"arm", ValueType::Text, "full"},
        {"embed_dim", ValueType::Int, "16"},
        {"id_dim", ValueType::Int, "16"},
        {"hist_dim", ValueType::Int, "16"},
        {"review_dim", ValueType::Int, "0"},
        {"fusion_hidden", ValueType::Int, "16"},
        {"head_hidden", ValueType::Int, "16"},
        {"nonlinearity", ValueType::Text, "tanh"},
        {"batch_size", ValueType::Int, "128"},
        {"epochs", ValueType::Int, "3"},
        {"learning_rate", ValueType::Real, "0.001"},
        {"adam_beta1", ValueType::Real, "0.9"},
        {"adam_beta2", ValueType::Real, "0.999"},
        {"adam_eps", ValueType::Real, "1e-8"},
        {"lambda_O", ValueType::Real, "0.5"},
        {"lambda_A", ValueType::Real, "0.8"},
        {"alpha", ValueType::Real, "0.1"},
        {"nu", ValueType::Real, "0.1"},
        {"epsilon", ValueType::Real, "0"},
        {"K", ValueType::Int, "0"},
        {"rating_threshold", ValueType::Real, "4"},
        {"min_records", ValueType::Int, "30"},
        {"target_keep_fraction", ValueType::Real, "1"},
        {"eval_negatives", ValueType::Int, "99"},
        {"top_k", ValueType::Int, "10"},
        {"probe_folds", ValueType::Int, "5"},
        {"synth_users", ValueType::Int, "2000"},
        {"synth_items", ValueType::Int, "500"},
        {"synth_latent_dim", ValueType::Int, "16"},
        {"synth_angle", ValueType::Real, "1.0471975511965976"},
        {"synth_translation", ValueType::Real, "1"},
        {"synth_threshold", ValueType::Real, "0.55"},
        {"synth_sparsity", ValueType::Real, "0.02"},
        {"synth_review_noise", ValueType::Real, "0.1"},
    };
    return keys;
}

namespace {

const KeySpec* find_key(const std::string& key) {
    for (const KeySpec& k : schema()) {
        if (key == k.name) {
            return &k;
        }
    }
    return nullptr;
}

void check_typed(const KeySpec& spec, const std::string& value) {
    const char* s = value.c_str();
    char* end = nullptr;
    switch (spec.type) {
    case ValueType::Int: {
        std::strtol(s, &end, 10);
        if (end == s || *end != '\0') {
            throw std::invalid_argument("config key '" + std::string(spec.name) +
                                        "' expects an integer, got '" + value + "'");
        }
        break;
    }
    case ValueType::Real: {
        const double v = std::strtod(s, &end);
        if (end == s || *end != '\0' || !std::isfinite(v)) {
            throw std::invalid_argument("config key '" + std::string(spec.name) +
                                        "' expects a real number, got '" + value + "'");
        }
        break;
    }
    case ValueType::Text:
        break;
    }
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) {
        return "";
    }
    std::size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

} // namespace

RunConfig RunConfig::defaults() {
    RunConfig c;
    for (const KeySpec& k : schema()) {
        c.values_[k.name] = k.default_value;
    }
    return c;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    const KeySpec* spec = find_key(key);
    if (!spec) {
        throw std::invalid_argument("unknown config key '" + key + "'");
    }
    check_typed(*spec, value);
    values_[key] = value;
    explicit_.insert(key);
}

void RunConfig::apply_text(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') {
            continue;
        }
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                        ": expected key = value");
        }
        set(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
    }
}

void RunConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("config: cannot open " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    apply_text(ss.str(), path);
}

bool RunConfig::is_known(const std::string& key) const { return find_key(key) != nullptr; }

long RunConfig::get_int(const std::string& key) const {
    const KeySpec* spec = find_key(key);
    if (!spec || spec->type != ValueType::Int) {
        throw std::invalid_argument("config: '" + key + "' is not an integer key");
    }
    return std::strtol(values_.at(key).c_str(), nullptr, 10);
}

double RunConfig::get_real(const std::string& key) const {
    const KeySpec* spec = find_key(key);
    if (!spec || spec->type != ValueType::Real) {
        throw std::invalid_argument("config: '" + key + "' is not a real key");
    }
    return std::strtod(values_.at(key).c_str(), nullptr);
}

const std::string& RunConfig::get_text(const std::string& key) const {
    const KeySpec* spec = find_key(key);
    if (!spec || spec->type != ValueType::Text) {
        throw std::invalid_argument("config: '" + key + "' is not a text key");
    }
    return values_.at(key);
}

const std::string& RunConfig::raw_value(const std::string& key) const {
    if (!find_key(key)) {
        throw std::invalid_argument("unknown config key '" + key + "'");
    }
    return values_.at(key);
}

std::string RunConfig::resolved_text() const {
    std::string out;
    for (const KeySpec& k : schema()) {
        out += k.name;
        out += " = ";
        out += values_.at(k.name);
        out += '\n';
    }
    return out;
}

void RunConfig::validate() const {
    const std::string& arm = get_text("arm");
    if (arm != "base" && arm != "v" && arm != "h" && arm != "full") {
        throw std::invalid_argument("config: arm must be one of base, v, h, full (got '" +
                                    arm + "')");
    }
    if (get_text("nonlinearity") != "tanh") {
        throw std::invalid_argument("config: only the tanh nonlinearity is supported");
    }
    if (get_int("batch_size") < 1 || get_int("epochs") < 1) {
        throw std::invalid_argument("config: batch_size and epochs must be positive");
    }
    if (get_real("lambda_O") < 0.0 || get_real("lambda_A") < 0.0) {
        throw std::invalid_argument("config: loss weights must be nonnegative");
    }
    if (get_real("alpha") <= 0.0 || get_real("nu") <= 0.0) {
        throw std::invalid_argument("config: alpha and nu must be positive");
    }
    const double keep = get_real("target_keep_fraction");
    if (keep < 0.0 || keep > 1.0) {
        throw std::invalid_argument("config: target_keep_fraction must lie in [0, 1]");
    }
}

} // namespace cfaa::config
